"""Metropolis-Hastings inference over partial worlds of relational models with unknown objects."""

from .values import NULL, FuncAppVar, GuaranteedObject, Identifier, NonGuaranteedObject, NumberVar
from .model import Model, evaluate_dependency, evaluate_term, sample_dependency, var_log_factor
from .parser import ParseError, ParseErrors, format_model, load_model, parse_model, parse_term

__all__ = [
    "NULL", "FuncAppVar", "GuaranteedObject", "Identifier", "NonGuaranteedObject", "NumberVar",
    "Model", "evaluate_dependency", "evaluate_term", "sample_dependency", "var_log_factor",
    "ParseError", "ParseErrors", "format_model", "load_model", "parse_model", "parse_term",
]

__version__ = "0.1.0"
