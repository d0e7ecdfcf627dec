"""AST node types, rank inference, and validation for the model DSL.

Tensors in the DSL are indexed exclusively by actions: every axis has size 3,
so a node's shape is fully determined by its rank (0 to 3).  Index tokens
bind axes to the observed actions of the current or previous round, or leave
them free:

    a / a_opp           ego and opponent action of the round being processed
    prev_a / prev_a_opp the round before it
    free                axis left open (contributes to the result rank)

A state declaration addresses the slice to be rewritten each round with the
same token vocabulary; its update expression evaluates to the new slice
value, reading the pre-update tensors.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

MAX_PARAMS = 10
MAX_RANK = 3

INDEX_TOKENS = ("a", "a_opp", "prev_a", "prev_a_opp", "free")
INPUT_NAMES = ("a", "a_opp", "r", "cf_rewards")
TRANSFORMS = ("none", "sigmoid", "softplus")
BINOPS = ("add", "sub", "mul", "div")


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Param:
    index: int
    transform: str = "none"  # none | sigmoid (0,1) | softplus (>0)


@dataclass(frozen=True)
class Input:
    name: str  # a | a_opp | r | cf_rewards


@dataclass(frozen=True)
class StateSlice:
    state: str
    index: tuple[str, ...]


@dataclass(frozen=True)
class BinOp:
    op: str  # add | sub | mul | div (div is guarded: x / (|y| + 1e-8))
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Ema:
    old: "Expr"
    new: "Expr"
    rate: "Expr"  # (1-rate)*old + rate*new


@dataclass(frozen=True)
class Decay:
    value: "Expr"
    rate: "Expr"  # rate*value


@dataclass(frozen=True)
class CounterMap:
    arg: "Expr"  # out[k] = arg[(k-1) mod 3]: value of countering each forecast entry


@dataclass(frozen=True)
class OneHot:
    which: str  # a | a_opp


@dataclass(frozen=True)
class SoftmaxScale:
    arg: "Expr"
    temp: "Expr"  # softmax(temp * arg)


@dataclass(frozen=True)
class SumAxis:
    arg: "Expr"
    axis: int


Expr = Union[Const, Param, Input, StateSlice, BinOp, Ema, Decay, CounterMap, OneHot, SoftmaxScale, SumAxis]


@dataclass(frozen=True)
class StateDecl:
    name: str
    shape: tuple[int, ...]  # each entry 3, rank 0..3
    init: float
    address: tuple[str, ...]  # one token per axis; the slice rewritten each round
    update: Expr  # new value of the addressed slice


@dataclass(frozen=True)
class ProgramAST:
    name: str
    param_count: int
    states: tuple[StateDecl, ...]
    policy: Expr  # rank 1 (three logits) or rank 0 (broadcast to equal logits)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class ProgramValidationError(ValueError):
    def __init__(self, program_name: str, diagnostics: list[Diagnostic]):
        self.diagnostics = diagnostics
        lines = "; ".join(str(d) for d in diagnostics)
        super().__init__(f"invalid program {program_name!r}: {lines}")


class _RankError(Exception):
    def __init__(self, diag: Diagnostic):
        self.diag = diag


def expr_rank(expr: Expr, state_ranks: dict[str, int]) -> int:
    """Rank of an expression; raises _RankError wrapped into diagnostics by validate."""
    if isinstance(expr, Const):
        return 0
    if isinstance(expr, Param):
        return 0
    if isinstance(expr, Input):
        return 1 if expr.name == "cf_rewards" else 0
    if isinstance(expr, OneHot):
        return 1
    if isinstance(expr, StateSlice):
        if expr.state not in state_ranks:
            raise _RankError(Diagnostic("unbound-state", f"slice references undeclared state {expr.state!r}"))
        rank = state_ranks[expr.state]
        if len(expr.index) != rank:
            raise _RankError(
                Diagnostic(
                    "index-rank",
                    f"state {expr.state!r} has rank {rank} but slice supplies {len(expr.index)} indices",
                )
            )
        return sum(1 for tok in expr.index if tok == "free")
    if isinstance(expr, BinOp):
        lr = expr_rank(expr.left, state_ranks)
        rr = expr_rank(expr.right, state_ranks)
        if lr != rr and 0 not in (lr, rr):
            raise _RankError(Diagnostic("shape", f"{expr.op}: rank {lr} vs rank {rr} (only scalars broadcast)"))
        return max(lr, rr)
    if isinstance(expr, Ema):
        orank = expr_rank(expr.old, state_ranks)
        nrank = expr_rank(expr.new, state_ranks)
        rrank = expr_rank(expr.rate, state_ranks)
        if rrank != 0:
            raise _RankError(Diagnostic("shape", "ema rate must be scalar"))
        if orank != nrank and 0 not in (orank, nrank):
            raise _RankError(Diagnostic("shape", f"ema: rank {orank} vs rank {nrank}"))
        return max(orank, nrank)
    if isinstance(expr, Decay):
        if expr_rank(expr.rate, state_ranks) != 0:
            raise _RankError(Diagnostic("shape", "decay rate must be scalar"))
        return expr_rank(expr.value, state_ranks)
    if isinstance(expr, CounterMap):
        if expr_rank(expr.arg, state_ranks) != 1:
            raise _RankError(Diagnostic("shape", "counter expects a rank-1 argument"))
        return 1
    if isinstance(expr, SoftmaxScale):
        if expr_rank(expr.arg, state_ranks) != 1:
            raise _RankError(Diagnostic("shape", "softmax expects a rank-1 argument"))
        if expr_rank(expr.temp, state_ranks) != 0:
            raise _RankError(Diagnostic("shape", "softmax temperature must be scalar"))
        return 1
    if isinstance(expr, SumAxis):
        rank = expr_rank(expr.arg, state_ranks)
        if rank < 1:
            raise _RankError(Diagnostic("shape", "sum applied to a scalar"))
        if not 0 <= expr.axis < rank:
            raise _RankError(Diagnostic("shape", f"sum axis {expr.axis} out of range for rank {rank}"))
        return rank - 1
    raise TypeError(f"unknown expression node {type(expr).__name__}")


def _walk(expr: Expr):
    yield expr
    if isinstance(expr, BinOp):
        yield from _walk(expr.left)
        yield from _walk(expr.right)
    elif isinstance(expr, Ema):
        yield from _walk(expr.old)
        yield from _walk(expr.new)
        yield from _walk(expr.rate)
    elif isinstance(expr, Decay):
        yield from _walk(expr.value)
        yield from _walk(expr.rate)
    elif isinstance(expr, (CounterMap, SumAxis, SoftmaxScale)):
        yield from _walk(expr.arg)
        if isinstance(expr, SoftmaxScale):
            yield from _walk(expr.temp)


def walk_exprs(program: ProgramAST):
    """All expression nodes in declaration order (state updates, then policy)."""
    for decl in program.states:
        yield from _walk(decl.update)
    yield from _walk(program.policy)


def validate(program: ProgramAST) -> list[Diagnostic]:
    """Full structural check; an empty list means the program is well-formed."""
    diags: list[Diagnostic] = []
    if program.param_count > MAX_PARAMS:
        diags.append(Diagnostic("param-budget", f"param budget exceeded: {program.param_count} > {MAX_PARAMS}"))
    if program.param_count < 0:
        diags.append(Diagnostic("param-budget", "param_count must be non-negative"))

    state_ranks: dict[str, int] = {}
    for decl in program.states:
        if decl.name in state_ranks:
            diags.append(Diagnostic("duplicate-state", f"state {decl.name!r} declared twice"))
        if len(decl.shape) > MAX_RANK:
            diags.append(Diagnostic("rank", f"state {decl.name!r} exceeds rank {MAX_RANK}"))
        if any(dim != 3 for dim in decl.shape):
            diags.append(Diagnostic("shape", f"state {decl.name!r}: every axis must have size 3"))
        if len(decl.address) != len(decl.shape):
            diags.append(
                Diagnostic("index-rank", f"state {decl.name!r}: address has {len(decl.address)} entries for rank {len(decl.shape)}")
            )
        state_ranks[decl.name] = len(decl.shape)

    def check_tokens(tokens: tuple[str, ...], where: str) -> None:
        for tok in tokens:
            if tok not in INDEX_TOKENS:
                diags.append(Diagnostic("index-token", f"{where}: unknown index token {tok!r}"))

    def check_expr(expr: Expr, where: str) -> int | None:
        for node in _walk(expr):
            if isinstance(node, Param):
                if not 0 <= node.index < program.param_count:
                    diags.append(Diagnostic("param-index", f"{where}: parameter {node.index} out of range"))
                if node.transform not in TRANSFORMS:
                    diags.append(Diagnostic("transform", f"{where}: unknown transform {node.transform!r}"))
            elif isinstance(node, Input) and node.name not in INPUT_NAMES:
                diags.append(Diagnostic("input", f"{where}: unknown input {node.name!r}"))
            elif isinstance(node, OneHot) and node.which not in ("a", "a_opp"):
                diags.append(Diagnostic("input", f"{where}: onehot takes a or a_opp"))
            elif isinstance(node, BinOp) and node.op not in BINOPS:
                diags.append(Diagnostic("operator", f"{where}: unknown operator {node.op!r}"))
            elif isinstance(node, Const) and not _finite(node.value):
                diags.append(Diagnostic("constant", f"{where}: non-finite constant"))
            elif isinstance(node, StateSlice):
                check_tokens(node.index, where)
        try:
            return expr_rank(expr, state_ranks)
        except _RankError as exc:
            diags.append(Diagnostic(exc.diag.code, f"{where}: {exc.diag.message}"))
            return None

    for decl in program.states:
        check_tokens(decl.address, f"state {decl.name!r} address")
        n_free = sum(1 for tok in decl.address if tok == "free")
        rank = check_expr(decl.update, f"state {decl.name!r} update")
        if rank is not None and rank not in (0, n_free):
            diags.append(
                Diagnostic(
                    "shape",
                    f"state {decl.name!r}: update has rank {rank} but the addressed slice has rank {n_free}",
                )
            )
        if not _finite(decl.init):
            diags.append(Diagnostic("constant", f"state {decl.name!r}: non-finite init"))

    rank = check_expr(program.policy, "policy")
    if rank is not None and rank not in (0, 1):
        diags.append(Diagnostic("shape", f"policy must have rank 0 or 1, got {rank}"))
    return diags


def _finite(x: float) -> bool:
    return x == x and x not in (float("inf"), float("-inf"))


def check_valid(program: ProgramAST) -> ProgramAST:
    diags = validate(program)
    if diags:
        raise ProgramValidationError(program.name, diags)
    return program
