"""Shape inference for a small term-transformation language.

Programs with algebraic data types, sets, pattern matching, bottom-up visits
and solve loops are interpreted over regular tree grammars to infer the
shapes of their success, fail and error results.
"""
from .ainterp import Analyzer, analyze_function
from .concrete import Interpreter, run_function
from .parser import parse_program, parse_refinement, parse_shape_term, parse_shapes

__all__ = [
    "Analyzer", "Interpreter", "analyze_function", "parse_program", "parse_refinement",
    "parse_shape_term", "parse_shapes", "run_function",
]
__version__ = "0.1.0"
