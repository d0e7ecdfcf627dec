"""Typed expression DSL for behavioral models.

Programs maintain action-indexed state tensors (rank 0-3, every axis of size
3) updated once per observed round, and a policy expression producing three
logits for the next move.  Programs are validated, interpretable,
differentiable in their parameters, serializable to a canonical text form,
and measurable with Halstead complexity metrics.
"""

from .ast import (
    BinOp,
    Const,
    CounterMap,
    Decay,
    Diagnostic,
    Ema,
    Expr,
    Input,
    OneHot,
    Param,
    ProgramAST,
    ProgramValidationError,
    SoftmaxScale,
    StateDecl,
    StateSlice,
    SumAxis,
    check_valid,
    expr_rank,
    validate,
)
from .builtins import builtins, get_builtin
from .halstead import HalsteadReport, halstead
from .interpreter import DslModel, DslState, initial_prediction, interpret_step
from .parser import ParseError, parse, serialize

__all__ = [
    "BinOp",
    "Const",
    "CounterMap",
    "Decay",
    "Diagnostic",
    "DslModel",
    "DslState",
    "Ema",
    "Expr",
    "HalsteadReport",
    "Input",
    "OneHot",
    "Param",
    "ParseError",
    "ProgramAST",
    "ProgramValidationError",
    "SoftmaxScale",
    "StateDecl",
    "StateSlice",
    "SumAxis",
    "builtins",
    "check_valid",
    "expr_rank",
    "get_builtin",
    "halstead",
    "initial_prediction",
    "interpret_step",
    "parse",
    "serialize",
    "validate",
]
