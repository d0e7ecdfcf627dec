"""Hypothesis generators for random (always valid) DSL programs."""

from __future__ import annotations

from hypothesis import strategies as st

from rpslab.dsl.ast import (
    BinOp,
    Const,
    CounterMap,
    Decay,
    Ema,
    Input,
    OneHot,
    Param,
    ProgramAST,
    SoftmaxScale,
    StateDecl,
    StateSlice,
    SumAxis,
)

INDEX_BOUND = ("a", "a_opp", "prev_a", "prev_a_opp")

finite_floats = st.floats(min_value=-5, max_value=5, allow_nan=False, allow_infinity=False)


@st.composite
def state_decls(draw, name: str):
    rank = draw(st.integers(min_value=0, max_value=3))
    n_free = draw(st.integers(min_value=0, max_value=rank))
    tokens = ["free"] * n_free + [draw(st.sampled_from(INDEX_BOUND)) for _ in range(rank - n_free)]
    draw(st.randoms()).shuffle(tokens)
    return rank, tuple(tokens), draw(finite_floats)


@st.composite
def exprs(draw, rank: int, state_ranks: dict[str, int], param_count: int, depth: int = 3):
    """An expression of exactly the requested rank."""
    leaf_opts = []
    if rank == 0:
        leaf_opts += ["const", "param", "input_scalar"]
    if rank == 1:
        leaf_opts += ["onehot", "cf"]
    slice_states = [
        (name, r) for name, r in state_ranks.items() if r >= rank
    ]
    if slice_states:
        leaf_opts.append("slice")

    interior_opts = []
    if depth > 0:
        interior_opts += ["binop", "ema", "decay"]
        if rank == 1:
            interior_opts += ["counter", "softmax"]
        if rank >= 1 and any(r >= rank + 1 for r in state_ranks.values()):
            interior_opts.append("sum")
        if rank == 0 and any(r >= 1 for r in state_ranks.values()):
            interior_opts.append("sum")

    kind = draw(st.sampled_from(leaf_opts + interior_opts if interior_opts else leaf_opts))
    if kind == "const":
        return Const(draw(finite_floats))
    if kind == "param":
        return Param(draw(st.integers(0, param_count - 1)), draw(st.sampled_from(["none", "sigmoid", "softplus"])))
    if kind == "input_scalar":
        return Input(draw(st.sampled_from(["a", "a_opp", "r"])))
    if kind == "onehot":
        return OneHot(draw(st.sampled_from(["a", "a_opp"])))
    if kind == "cf":
        return Input("cf_rewards")
    if kind == "slice":
        name, srank = draw(st.sampled_from(slice_states))
        n_bound = srank - rank
        tokens = ["free"] * rank + [draw(st.sampled_from(INDEX_BOUND)) for _ in range(n_bound)]
        draw(st.randoms()).shuffle(tokens)
        return StateSlice(name, tuple(tokens))
    if kind == "binop":
        op = draw(st.sampled_from(["add", "sub", "mul", "div"]))
        lrank = draw(st.sampled_from([0, rank]))
        rrank = rank if lrank == 0 else draw(st.sampled_from([0, rank]))
        left = draw(exprs(lrank, state_ranks, param_count, depth - 1))
        right = draw(exprs(rrank, state_ranks, param_count, depth - 1))
        return BinOp(op, left, right)
    if kind == "ema":
        old = draw(exprs(rank, state_ranks, param_count, depth - 1))
        new = draw(exprs(draw(st.sampled_from([0, rank])), state_ranks, param_count, depth - 1))
        rate = draw(exprs(0, state_ranks, param_count, depth - 1))
        return Ema(old, new, rate)
    if kind == "decay":
        return Decay(draw(exprs(rank, state_ranks, param_count, depth - 1)), draw(exprs(0, state_ranks, param_count, depth - 1)))
    if kind == "counter":
        return CounterMap(draw(exprs(1, state_ranks, param_count, depth - 1)))
    if kind == "softmax":
        return SoftmaxScale(draw(exprs(1, state_ranks, param_count, depth - 1)), draw(exprs(0, state_ranks, param_count, depth - 1)))
    if kind == "sum":
        arg = draw(exprs(rank + 1, state_ranks, param_count, depth - 1))
        return SumAxis(arg, draw(st.integers(0, rank)))
    raise AssertionError(kind)


@st.composite
def programs(draw):
    n_states = draw(st.integers(min_value=0, max_value=3))
    param_count = draw(st.integers(min_value=1, max_value=6))
    decls = []
    state_ranks: dict[str, int] = {}
    metas = []
    for i in range(n_states):
        name = f"s{i}"
        rank, address, init = draw(state_decls(name))
        state_ranks[name] = rank
        metas.append((name, rank, address, init))
    for name, rank, address, init in metas:
        n_free = sum(1 for t in address if t == "free")
        urank = draw(st.sampled_from([0, n_free]))
        update = draw(exprs(urank, state_ranks, param_count, depth=2))
        decls.append(StateDecl(name=name, shape=(3,) * rank, init=init, address=address, update=update))
    policy = draw(exprs(draw(st.integers(0, 1)), state_ranks, param_count, depth=3))
    return ProgramAST(name=draw(st.sampled_from(["prog", "model_x", "candidate7"])), param_count=param_count, states=tuple(decls), policy=policy)
