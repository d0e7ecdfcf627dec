"""Compilation of validated programs into flat instruction tapes.

The interpreter kernels are generic: one compiled kernel executes any
program, driven by integer instruction arrays.  Each emitted instruction
writes one register; registers are fixed 27-slot float buffers (the largest
tensor is 3x3x3) with a per-register active size.

Two compile-time reductions keep the per-round instruction count low:
constants and parameter transforms are hoisted into a prologue segment run
once per kernel call (they depend only on theta), and repeated
subexpressions are shared within a segment.  Sharing never crosses segment
boundaries other than the prologue: update segments can be skipped during
warmup, and state reads change meaning once updates commit.

Segment layout: one instruction range per state update, then the policy,
then the prologue.  Each segment carries a bitmask of the bindings it
touches so the kernels can skip updates (and fall back to uniform policy
output) while a referenced action is still undefined.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

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
    check_valid,
    expr_rank,
)

# opcodes
OP_CONST = 0
OP_PARAM = 1
OP_INPUT_A = 2
OP_INPUT_AOPP = 3
OP_INPUT_R = 4
OP_INPUT_CF = 5
OP_ONEHOT_A = 6
OP_ONEHOT_AOPP = 7
OP_READ = 8
OP_ADD = 9
OP_SUB = 10
OP_MUL = 11
OP_DIV = 12
OP_EMA = 13
OP_DECAY = 14
OP_COUNTER = 15
OP_SOFTMAX = 16
OP_SUM = 17

# index tokens
TOK_A = 0
TOK_AOPP = 1
TOK_PREV_A = 2
TOK_PREV_AOPP = 3
TOK_FREE = 4

_TOKEN_CODE = {"a": TOK_A, "a_opp": TOK_AOPP, "prev_a": TOK_PREV_A, "prev_a_opp": TOK_PREV_AOPP, "free": TOK_FREE}

# binding-requirement bits
NEED_A = 1
NEED_AOPP = 2
NEED_PREV_A = 4
NEED_PREV_AOPP = 8
NEED_R = 16

_TOKEN_NEED = {TOK_A: NEED_A, TOK_AOPP: NEED_AOPP, TOK_PREV_A: NEED_PREV_A, TOK_PREV_AOPP: NEED_PREV_AOPP, TOK_FREE: 0}
_TRANSFORM_CODE = {"none": 0, "sigmoid": 1, "softplus": 2}
_BINOP_CODE = {"add": OP_ADD, "sub": OP_SUB, "mul": OP_MUL, "div": OP_DIV}


@dataclass
class Tape:
    """Flat executable form of one program."""

    program: ProgramAST
    param_count: int
    n_states: int
    total_size: int  # summed flat size of all state tensors
    policy_reg: int
    policy_size: int
    arrays: tuple  # see layout comment below, passed straight to the kernels

    def initial_state_values(self) -> np.ndarray:
        vals = np.empty(self.total_size, dtype=np.float64)
        offsets, sizes = self.arrays[10], self.arrays[11]
        inits = self.arrays[15]
        for s in range(self.n_states):
            vals[offsets[s] : offsets[s] + sizes[s]] = inits[s]
        return vals


# arrays tuple layout (kernel argument); S = number of states, segments are
# indexed 0..S-1 (updates), S (policy), S+1 (prologue):
#  0 codes        int64[n]
#  1 arg1         int64[n]
#  2 arg2         int64[n]
#  3 arg3         int64[n]
#  4 ispec        int64[n, 3]
#  5 reg_size     int64[n]
#  6 consts       float64[k]
#  7 seg_start    int64[S+2]
#  8 seg_end      int64[S+2]
#  9 seg_needs    int64[S+2]
# 10 state_offset int64[S]
# 11 state_size   int64[S]
# 12 state_rank   int64[S]
# 13 state_addr   int64[S, 3]
# 14 state_result int64[S]
# 15 state_init   float64[S]


def _collect_static(expr: Expr, order: list[Expr], seen: set) -> None:
    """Constants and parameter reads in first-encounter order."""
    if isinstance(expr, (Const, Param)):
        if expr not in seen:
            seen.add(expr)
            order.append(expr)
        return
    if isinstance(expr, BinOp):
        _collect_static(expr.left, order, seen)
        _collect_static(expr.right, order, seen)
    elif isinstance(expr, Ema):
        _collect_static(expr.old, order, seen)
        _collect_static(expr.new, order, seen)
        _collect_static(expr.rate, order, seen)
    elif isinstance(expr, Decay):
        _collect_static(expr.value, order, seen)
        _collect_static(expr.rate, order, seen)
    elif isinstance(expr, (CounterMap, SumAxis)):
        _collect_static(expr.arg, order, seen)
    elif isinstance(expr, SoftmaxScale):
        _collect_static(expr.arg, order, seen)
        _collect_static(expr.temp, order, seen)


class _Builder:
    def __init__(self, program: ProgramAST):
        self.program = program
        self.state_ranks = {d.name: len(d.shape) for d in program.states}
        self.state_ids = {d.name: i for i, d in enumerate(program.states)}
        self.codes: list[int] = []
        self.arg1: list[int] = []
        self.arg2: list[int] = []
        self.arg3: list[int] = []
        self.ispec: list[list[int]] = []
        self.reg_size: list[int] = []
        self.consts: list[float] = []
        self.needs = 0
        self.static_regs: dict[Expr, int] = {}
        self.segment_regs: dict[Expr, int] = {}

    def emit(self, code: int, size: int, a1: int = -1, a2: int = -1, a3: int = -1, spec: list[int] | None = None) -> int:
        reg = len(self.codes)
        self.codes.append(code)
        self.arg1.append(a1)
        self.arg2.append(a2)
        self.arg3.append(a3)
        self.ispec.append(spec if spec is not None else [-1, -1, -1])
        self.reg_size.append(size)
        return reg

    def emit_static(self, expr: Expr) -> int:
        if isinstance(expr, Const):
            self.consts.append(float(expr.value))
            reg = self.emit(OP_CONST, 1, len(self.consts) - 1)
        else:
            reg = self.emit(OP_PARAM, 1, expr.index, _TRANSFORM_CODE[expr.transform])
        self.static_regs[expr] = reg
        return reg

    def compile_expr(self, expr: Expr) -> int:
        if expr in self.static_regs:
            return self.static_regs[expr]
        if expr in self.segment_regs:
            return self.segment_regs[expr]
        reg = self._compile_fresh(expr)
        self.segment_regs[expr] = reg
        return reg

    def _compile_fresh(self, expr: Expr) -> int:
        rank = expr_rank(expr, self.state_ranks)
        size = 3**rank
        if isinstance(expr, Input):
            if expr.name == "a":
                self.needs |= NEED_A
                return self.emit(OP_INPUT_A, 1)
            if expr.name == "a_opp":
                self.needs |= NEED_AOPP
                return self.emit(OP_INPUT_AOPP, 1)
            if expr.name == "r":
                self.needs |= NEED_R
                return self.emit(OP_INPUT_R, 1)
            self.needs |= NEED_AOPP
            return self.emit(OP_INPUT_CF, 3)
        if isinstance(expr, OneHot):
            if expr.which == "a":
                self.needs |= NEED_A
                return self.emit(OP_ONEHOT_A, 3)
            self.needs |= NEED_AOPP
            return self.emit(OP_ONEHOT_AOPP, 3)
        if isinstance(expr, StateSlice):
            spec = [-1, -1, -1]
            for i, tok in enumerate(expr.index):
                code = _TOKEN_CODE[tok]
                spec[i] = code
                self.needs |= _TOKEN_NEED[code]
            return self.emit(OP_READ, size, self.state_ids[expr.state], spec=spec)
        if isinstance(expr, BinOp):
            left = self.compile_expr(expr.left)
            right = self.compile_expr(expr.right)
            return self.emit(_BINOP_CODE[expr.op], size, left, right)
        if isinstance(expr, Ema):
            old = self.compile_expr(expr.old)
            new = self.compile_expr(expr.new)
            rate = self.compile_expr(expr.rate)
            return self.emit(OP_EMA, size, old, new, rate)
        if isinstance(expr, Decay):
            value = self.compile_expr(expr.value)
            rate = self.compile_expr(expr.rate)
            return self.emit(OP_DECAY, size, value, rate)
        if isinstance(expr, CounterMap):
            return self.emit(OP_COUNTER, 3, self.compile_expr(expr.arg))
        if isinstance(expr, SoftmaxScale):
            arg = self.compile_expr(expr.arg)
            temp = self.compile_expr(expr.temp)
            return self.emit(OP_SOFTMAX, 3, arg, temp)
        if isinstance(expr, SumAxis):
            arg = self.compile_expr(expr.arg)
            in_rank = expr_rank(expr.arg, self.state_ranks)
            # stride of the reduced axis within the flattened input
            stride = 3 ** (in_rank - 1 - expr.axis)
            return self.emit(OP_SUM, size, arg, stride)
        raise TypeError(f"unexpected node in segment body: {type(expr).__name__}")


@lru_cache(maxsize=512)
def compile_program(program: ProgramAST) -> Tape:
    check_valid(program)
    b = _Builder(program)
    S = len(program.states)

    seg_start = np.zeros(S + 2, dtype=np.int64)
    seg_end = np.zeros(S + 2, dtype=np.int64)
    seg_needs = np.zeros(S + 2, dtype=np.int64)
    state_offset = np.zeros(S, dtype=np.int64)
    state_size = np.zeros(S, dtype=np.int64)
    state_rank = np.zeros(S, dtype=np.int64)
    state_addr = np.full((S, 3), -1, dtype=np.int64)
    state_result = np.zeros(S, dtype=np.int64)
    state_init = np.zeros(S, dtype=np.float64)

    offset = 0
    for s, decl in enumerate(program.states):
        state_offset[s] = offset
        state_size[s] = 3 ** len(decl.shape)
        state_rank[s] = len(decl.shape)
        state_init[s] = decl.init
        offset += state_size[s]
        for i, tok in enumerate(decl.address):
            state_addr[s, i] = _TOKEN_CODE[tok]

    # prologue: theta-only instructions, shared by every segment
    static_order: list[Expr] = []
    seen: set = set()
    for decl in program.states:
        _collect_static(decl.update, static_order, seen)
    _collect_static(program.policy, static_order, seen)
    for node in static_order:
        b.emit_static(node)
    seg_start[S + 1] = 0
    seg_end[S + 1] = len(b.codes)
    seg_needs[S + 1] = 0

    for s, decl in enumerate(program.states):
        b.needs = 0
        b.segment_regs = {}
        for tok in decl.address:
            b.needs |= _TOKEN_NEED[_TOKEN_CODE[tok]]
        seg_start[s] = len(b.codes)
        state_result[s] = b.compile_expr(decl.update)
        seg_end[s] = len(b.codes)
        seg_needs[s] = b.needs

    b.needs = 0
    b.segment_regs = {}
    seg_start[S] = len(b.codes)
    policy_reg = b.compile_expr(program.policy)
    seg_end[S] = len(b.codes)
    seg_needs[S] = b.needs

    arrays = (
        np.asarray(b.codes, dtype=np.int64),
        np.asarray(b.arg1, dtype=np.int64),
        np.asarray(b.arg2, dtype=np.int64),
        np.asarray(b.arg3, dtype=np.int64),
        np.asarray(b.ispec, dtype=np.int64).reshape(len(b.codes), 3),
        np.asarray(b.reg_size, dtype=np.int64),
        np.asarray(b.consts if b.consts else [0.0], dtype=np.float64),
        seg_start,
        seg_end,
        seg_needs,
        state_offset,
        state_size,
        state_rank,
        state_addr,
        state_result,
        state_init,
    )
    return Tape(
        program=program,
        param_count=program.param_count,
        n_states=S,
        total_size=int(offset),
        policy_reg=int(policy_reg),
        policy_size=int(b.reg_size[policy_reg]),
        arrays=arrays,
    )
