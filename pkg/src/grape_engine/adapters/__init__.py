"""
Input and output adapters.

Problem-file reader (TOML to ControlProblem) and the CSV result writer.
"""

from .problem_file import build_problem, resolve_state
from .result_writer import ResultWriter, read_table

__all__ = [
    "ResultWriter",
    "build_problem",
    "read_table",
    "resolve_state",
]
