"""Halstead complexity of DSL programs.

Counting scheme: interior expression nodes are operators (each node kind is
one distinct operator; parameter box transforms count as an operator
application); leaves are operands identified by spelling -- constants by
their printed value, parameters as ``p<k>``, inputs and index tokens by
name, state names as themselves, sum axes by their digit.  Each state
declaration contributes one ``state`` operator plus operands for its name,
init value, and address tokens.

With zero operators (a constants-only program) difficulty and effort are
defined as 0.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

from .ast import (
    BinOp,
    Const,
    CounterMap,
    Decay,
    Ema,
    Expr,
    Input,
    OneHot,
    Param,
    ProgramAST,
    SoftmaxScale,
    StateSlice,
    SumAxis,
)


@dataclass(frozen=True)
class HalsteadReport:
    eta1: int  # distinct operators
    eta2: int  # distinct operands
    N1: int  # total operators
    N2: int  # total operands
    volume: float
    difficulty: float
    effort: float

    @classmethod
    def from_counts(cls, eta1: int, eta2: int, N1: int, N2: int) -> "HalsteadReport":
        vocab = eta1 + eta2
        volume = (N1 + N2) * math.log2(vocab) if vocab > 0 else 0.0
        difficulty = (eta1 / 2.0) * (N2 / eta2) if eta1 > 0 and eta2 > 0 else 0.0
        return cls(eta1, eta2, N1, N2, volume, difficulty, difficulty * volume)


class _Counts:
    def __init__(self):
        self.operators: Counter[str] = Counter()
        self.operands: Counter[str] = Counter()

    def operator(self, kind: str) -> None:
        self.operators[kind] += 1

    def operand(self, spelling: str) -> None:
        self.operands[spelling] += 1


def _count_expr(expr: Expr, c: _Counts) -> None:
    if isinstance(expr, Const):
        c.operand(repr(expr.value))
    elif isinstance(expr, Param):
        if expr.transform != "none":
            c.operator(expr.transform)
        c.operand(f"p{expr.index}")
    elif isinstance(expr, Input):
        c.operand(expr.name)
    elif isinstance(expr, StateSlice):
        c.operator("slice")
        c.operand(expr.state)
        for tok in expr.index:
            c.operand(tok)
    elif isinstance(expr, BinOp):
        c.operator(expr.op)
        _count_expr(expr.left, c)
        _count_expr(expr.right, c)
    elif isinstance(expr, Ema):
        c.operator("ema")
        _count_expr(expr.old, c)
        _count_expr(expr.new, c)
        _count_expr(expr.rate, c)
    elif isinstance(expr, Decay):
        c.operator("decay")
        _count_expr(expr.value, c)
        _count_expr(expr.rate, c)
    elif isinstance(expr, CounterMap):
        c.operator("counter")
        _count_expr(expr.arg, c)
    elif isinstance(expr, OneHot):
        c.operator("onehot")
        c.operand(expr.which)
    elif isinstance(expr, SoftmaxScale):
        c.operator("softmax")
        _count_expr(expr.arg, c)
        _count_expr(expr.temp, c)
    elif isinstance(expr, SumAxis):
        c.operator("sum")
        _count_expr(expr.arg, c)
        c.operand(str(expr.axis))
    else:
        raise TypeError(f"unknown expression node {type(expr).__name__}")


def halstead(program: ProgramAST) -> HalsteadReport:
    c = _Counts()
    for decl in program.states:
        c.operator("state")
        c.operand(decl.name)
        c.operand(repr(decl.init))
        for tok in decl.address:
            c.operand(tok)
        _count_expr(decl.update, c)
    _count_expr(program.policy, c)
    return HalsteadReport.from_counts(
        eta1=len(c.operators),
        eta2=len(c.operands),
        N1=sum(c.operators.values()),
        N2=sum(c.operands.values()),
    )
