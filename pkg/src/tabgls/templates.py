"""Fixed instruction templates for alignment data and the reasoning stages.

These strings are contract text: the stage prompts are compared byte-for-byte
against golden files in the test suite, so do not reflow, trim, or "fix"
whitespace here (several lines intentionally end with a space).

Slots use ``{name}`` markers filled by plain string replacement, never
``str.format``, so braces and quotes inside substituted values pass through
verbatim.
"""

from __future__ import annotations

GSE_PROMPT = (
    "You are given a table image and a question.\n"
    "Your task is to analyze the layout and headers of the table to locate the information \n"
    "needed to answer the given question. \n"
    "\n"
    "Please output in the following JSON format:\n"
    "{\n"
    '    "thought": "Briefly explain your reasoning on which columns/rows are needed.",\n'
    '    "target_columns": ["List the exact column headers required"],\n'
    '    "target_rows": ["List the target row labels required"] or "Describe the condition \n'
    "    to filter rows (e.g., 'Year is 2023 or 2024')\",\n"
    "}\n"
    "\n"
    "Question: \n"
    "{question}"
)

SSE_PROMPT = (
    "You are given a table image, a question and a reasoning plan with target rows and \n"
    "columns.\n"
    "First, evaluate whether the given reasoning plan is correct and sufficient for \n"
    "answering the question. If the plan is incorrect or incomplete, revise it to obtain\n"
    "a correct reasoning plan.\n"
    "Then, based on the correct reasoning plan, extract the sub-table that is necessary to \n"
    "answer the question.\n"
    "\n"
    "Output strictly in the following format:\n"
    'Plan Evaluation: "brief explanation of your judgment"\n'
    "Sub-table:\n"
    "Row m Column n: [Content]\n"
    "...\n"
    "\n"
    "Reasoning Plan:\n"
    "{reasoning_plan}\n"
    "\n"
    "Question: \n"
    "{question}"
)

EGR_PROMPT = (
    "You are given a table image, a question and a sub-table.\n"
    "First, let's think step by step based on the given information.\n"
    'Then provide the final concise answer in the JSON format {"answer": "<YOUR \n'
    'ANSWER>"}.\n'
    "\n"
    "Output in the following format:\n"
    'Reasoning: "think step by step to answer the question"\n'
    '{"answer": "<YOUR ANSWER>"}\n'
    "\n"
    "Sub-table:\n"
    "{subtable}\n"
    "\n"
    "Question: \n"
    "{question}"
)

# Answer-format suffixes appended to the raw question for the single-call modes.
DIRECT_ANSWER_SUFFIX = (
    'Provide the answer in the JSON format {"answer": "<YOUR ANSWER>"} '
    "directly without any other explanation."
)
CHAIN_OF_THOUGHT_SUFFIX = (
    'Think step by step and output the final answer in the JSON format {"answer": "<YOUR ANSWER>"}'
)

# Instruction suffix for structure-alignment samples; {placeholder} is the
# anonymization token (default "[table content]").
STRUCTURE_SUFFIX_TEMPLATE = (
    "Replace all the table contents with '{placeholder}', keeping the table structure intact."
)

_GLOBAL_FORMAT_TAIL = (
    "\nThe table has [m] rows and [n] columns."
    "\nRow 1 Column 1: [Content]"
    "\nRow 1 Column 2: [Content]"
    "\n..."
    "\nRow m Column n: [Content]\n"
)

GLOBAL_INSTRUCTION_TEMPLATES = tuple(
    "<image>\n" + lead + _GLOBAL_FORMAT_TAIL
    for lead in (
        "Describe the table shown in the image in the following format.",
        "Describe the structure and content of the table in the image, "
        "listing each cell's information in the specified format.",
        "Provide a thorough description of the table depicted in the image, "
        "including its dimensions and the content of each cell, following the format below.",
        "Examine the table in the image and produce a comprehensive description "
        "that includes the number of rows and columns, as well as the content of "
        "each cell, formatted as shown.",
        "Transform the table shown in the image into a detailed textual format, "
        "specifying the number of rows and columns, along with the content of "
        "each cell as illustrated below.",
        "Convert the table displayed in the image into a detailed text "
        "description, adhering to the format provided below.",
        "Generate a structured textual representation of the table in the image, "
        "detailing each cell's content in the specified format.",
        "Analyze the table in the image and output a detailed textual description "
        "listing every cell in the following format.",
        "Read the table content from the image and reconstruct its structure in "
        "text form as shown below.",
        "Provide a detailed description of the table in the image, including the "
        "number of rows and columns, as well as the content of each cell, "
        "following the format below.",
    )
)

LOCAL_INSTRUCTION_TEMPLATES = (
    "What is the exact value located at Row {R} and Column {C}?",
    "Retrieve the content of the cell at coordinate Row {R}, Column {C}.",
    "Perform a lookup for the data point at index Row {R}, Column {C}.",
    "Identify the specific data found in cell Row {R}, Column {C}.",
    "State the information present at Row index {R} and Column index {C}.",
    "Read the exact data from the cell defined by Row {R} and Column {C}.",
    "Query the table for the value at the coordinate (Row {R}, Column {C}).",
    "In the grid, what is present at the intersection of Row {R} and Column {C}?",
    "Return the single data point located at Row {R}, Column {C}.",
    "Content of the cell with indices Row {R}, Column {C}.",
)


def fill(template: str, **slots: str) -> str:
    """Substitute ``{name}`` slots by literal replacement (no escaping)."""
    out = template
    for name, value in slots.items():
        out = out.replace("{" + name + "}", value)
    return out
