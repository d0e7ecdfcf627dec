"""Multi-objective program search over the behavioral-model DSL.

The outer loop evolves program structure (a pluggable mutator proposes
children of frontier-biased parents); the inner loop fits each candidate's
parameters by maximum likelihood, scoring the trade-off pair

    (two-fold CV normalized likelihood on the training split,  -Halstead effort).

The archive is append-only and deduplicated by canonical-serialization hash;
the Pareto frontier is maintained incrementally and checked against a
brute-force dominance oracle in the tests.  Simplest-but-best selection
filters the frontier by held-out evaluation scores computed after search.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dsl.ast import (
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
    StateDecl,
    StateSlice,
    SumAxis,
    MAX_PARAMS,
    validate,
)
from .dsl.builtins import get_builtin
from .dsl.halstead import halstead
from .dsl.interpreter import DslModel, program_id
from .dsl.parser import parse, serialize
from .evaluation import twofold_cv
from .fitting import FitConfig, FitError, fit_config_for_search


@dataclass(frozen=True)
class Candidate:
    program: ProgramAST
    train_score: float
    effort: float
    lineage: tuple[str, str]  # (parent id, mutation tag)
    id: str

    def dominates(self, other: "Candidate") -> bool:
        ge = self.train_score >= other.train_score and self.effort <= other.effort
        strict = self.train_score > other.train_score or self.effort < other.effort
        return ge and strict


@dataclass(frozen=True)
class SearchConfig:
    budget: int = 100
    parents_per_step: int = 1
    inspirations: int = 2
    mutator: str = "rule"  # rule | external
    epsilon: float = 0.005
    seed: int = 0
    frontier_bias: float = 0.7  # parent sampled from frontier vs whole archive
    fit: FitConfig | None = None  # defaults to the lighter search settings
    max_proposal_factor: int = 30  # bound on proposals per accepted candidate
    jobs: int = 1  # candidates scored concurrently per wave; part of the reproducibility key

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be > 0")

    def fit_config(self) -> FitConfig:
        return self.fit if self.fit is not None else fit_config_for_search(self.seed)


@dataclass
class Archive:
    seed: int
    candidates: dict[str, Candidate] = field(default_factory=dict)
    frontier_ids: list[str] = field(default_factory=list)
    generation: int = 0
    diagnostics: dict = field(default_factory=lambda: {"proposals": 0, "duplicates": 0, "invalid": 0, "fit_failures": 0, "external_failures": 0})

    def __len__(self) -> int:
        return len(self.candidates)

    def insert(self, cand: Candidate) -> bool:
        """Add a candidate (id-deduplicated); keep the frontier cache exact."""
        if cand.id in self.candidates:
            return False
        self.candidates[cand.id] = cand
        dominated = [fid for fid in self.frontier_ids if cand.dominates(self.candidates[fid])]
        if any(self.candidates[fid].dominates(cand) for fid in self.frontier_ids):
            return True
        for fid in dominated:
            self.frontier_ids.remove(fid)
        self.frontier_ids.append(cand.id)
        return True

    def frontier(self) -> list[Candidate]:
        cands = [self.candidates[fid] for fid in self.frontier_ids]
        return sorted(cands, key=lambda c: (-c.train_score, c.effort, c.id))

    def ordered(self) -> list[Candidate]:
        return list(self.candidates.values())


def pareto_frontier(archive: Archive) -> list[Candidate]:
    if not archive.candidates:
        raise ValueError("empty archive")
    return archive.frontier()


def brute_force_frontier(candidates: list[Candidate]) -> list[Candidate]:
    """O(n^2) dominance oracle used to verify the incremental frontier."""
    out = [c for c in candidates if not any(o.dominates(c) for o in candidates)]
    return sorted(out, key=lambda c: (-c.train_score, c.effort, c.id))


class SbbError(RuntimeError):
    def __init__(self, gap: float):
        self.gap = gap
        super().__init__(f"no frontier candidate within epsilon of the best evaluation score (gap {gap:.6f})")


def sbb(archive: Archive, eval_scores: dict[str, float], epsilon: float) -> Candidate:
    """Simplest frontier program within epsilon of the best evaluation score."""
    if not eval_scores:
        raise ValueError("no evaluation scores supplied")
    gmax = max(eval_scores.values())
    frontier = archive.frontier()
    eligible = [c for c in frontier if c.id in eval_scores and eval_scores[c.id] > gmax - epsilon]
    if not eligible:
        scored = [eval_scores[c.id] for c in frontier if c.id in eval_scores]
        gap = gmax - max(scored) if scored else float("inf")
        raise SbbError(gap)
    return min(eligible, key=lambda c: (c.effort, c.id))


# --- expression surgery helpers --------------------------------------------

def _map_exprs(expr: Expr, fn) -> Expr:
    """Bottom-up rebuild; ``fn`` may replace any node."""
    if isinstance(expr, BinOp):
        expr = BinOp(expr.op, _map_exprs(expr.left, fn), _map_exprs(expr.right, fn))
    elif isinstance(expr, Ema):
        expr = Ema(_map_exprs(expr.old, fn), _map_exprs(expr.new, fn), _map_exprs(expr.rate, fn))
    elif isinstance(expr, Decay):
        expr = Decay(_map_exprs(expr.value, fn), _map_exprs(expr.rate, fn))
    elif isinstance(expr, CounterMap):
        expr = CounterMap(_map_exprs(expr.arg, fn))
    elif isinstance(expr, SoftmaxScale):
        expr = SoftmaxScale(_map_exprs(expr.arg, fn), _map_exprs(expr.temp, fn))
    elif isinstance(expr, SumAxis):
        expr = SumAxis(_map_exprs(expr.arg, fn), expr.axis)
    return fn(expr)


def _collect(expr: Expr, pred) -> list[Expr]:
    found = []

    def visit(node):
        if pred(node):
            found.append(node)
        return node

    _map_exprs(expr, visit)
    return found


def _used_params(program: ProgramAST) -> list[int]:
    used = set()
    for decl in program.states:
        for node in _collect(decl.update, lambda n: isinstance(n, Param)):
            used.add(node.index)
    for node in _collect(program.policy, lambda n: isinstance(n, Param)):
        used.add(node.index)
    return sorted(used)


def compact_params(program: ProgramAST) -> ProgramAST:
    """Renumber parameters densely and shrink the budget to what is used."""
    used = _used_params(program)
    remap = {old: new for new, old in enumerate(used)}

    def fix(node):
        if isinstance(node, Param):
            return Param(remap[node.index], node.transform)
        return node

    states = tuple(replace(d, update=_map_exprs(d.update, fix)) for d in program.states)
    return ProgramAST(program.name, len(used), states, _map_exprs(program.policy, fix))


def _fresh_state_name(program: ProgramAST, base: str) -> str:
    names = {d.name for d in program.states}
    if base not in names:
        return base
    i = 2
    while f"{base}{i}" in names:
        i += 1
    return f"{base}{i}"


def _rebuild(program: ProgramAST, states=None, policy=None, param_count=None) -> ProgramAST:
    return ProgramAST(
        name=program.name,
        param_count=program.param_count if param_count is None else param_count,
        states=program.states if states is None else tuple(states),
        policy=program.policy if policy is None else policy,
    )


# --- the mutation catalog ---------------------------------------------------

def _mut_add_q_vector(program: ProgramAST, insp, rng) -> ProgramAST | None:
    """Add a rank-1 reward-average table and its policy term."""
    if program.param_count + 2 > MAX_PARAMS:
        return None
    name = _fresh_state_name(program, "qv")
    p_rate, p_w = program.param_count, program.param_count + 1
    decl = StateDecl(
        name=name, shape=(3,), init=0.0, address=("a",),
        update=Ema(StateSlice(name, ("a",)), Input("r"), Param(p_rate, "sigmoid")),
    )
    policy = BinOp("add", program.policy, BinOp("mul", Param(p_w), StateSlice(name, ("free",))))
    return _rebuild(program, states=list(program.states) + [decl], policy=policy, param_count=program.param_count + 2)


def _mut_add_opp_model(program: ProgramAST, insp, rng) -> ProgramAST | None:
    """Add an opponent move counter and a countering policy term.

    The counter is optionally conditioned on one previous-round feature
    (opponent's or own last move), the recurring structure of discovered
    opponent models.
    """
    if program.param_count + 2 > MAX_PARAMS:
        return None
    name = _fresh_state_name(program, "om")
    p_decay, p_w = program.param_count, program.param_count + 1
    context = [((), ()), (("prev_a_opp",), ("a_opp",)), (("prev_a",), ("a",))][rng.integers(3)]
    addr_ctx, read_ctx = context
    addr = addr_ctx + ("free",)
    row = StateSlice(name, addr)
    decl = StateDecl(
        name=name, shape=(3,) * len(addr), init=0.0, address=addr,
        update=BinOp("add", Decay(row, Param(p_decay, "sigmoid")), OneHot("a_opp")),
    )
    read = StateSlice(name, read_ctx + ("free",))
    forecast = BinOp("div", read, SumAxis(read, 0))
    policy = BinOp("add", program.policy, BinOp("mul", Param(p_w), CounterMap(forecast)))
    return _rebuild(program, states=list(program.states) + [decl], policy=policy, param_count=program.param_count + 2)


_RANK_PAIRS = ((("prev_a_opp", "a_opp")), (("prev_a", "a")))


def _retoken_state_slices(program: ProgramAST, state_name: str, pos: int, update_tok: str | None, policy_tok: str | None) -> ProgramAST:
    """Insert (or with tok None delete) an index token in every slice of one state."""

    def fixer(tok):
        def fix(node):
            if isinstance(node, StateSlice) and node.state == state_name:
                idx = list(node.index)
                if tok is None:
                    del idx[pos]
                else:
                    idx.insert(pos, tok)
                return StateSlice(state_name, tuple(idx))
            return node

        return fix

    states = tuple(replace(d, update=_map_exprs(d.update, fixer(update_tok))) for d in program.states)
    policy = _map_exprs(program.policy, fixer(policy_tok))
    return _rebuild(program, states=states, policy=policy)


def _mut_raise_rank(program: ProgramAST, insp, rng) -> ProgramAST | None:
    """Condition one state tensor on an extra previous-round feature."""
    grow = [d for d in program.states if len(d.shape) < 3]
    if not grow:
        return None
    decl = grow[rng.integers(len(grow))]
    upd_tok, pol_tok = _RANK_PAIRS[rng.integers(len(_RANK_PAIRS))]
    pos = int(rng.integers(len(decl.shape) + 1))
    out = _retoken_state_slices(program, decl.name, pos, upd_tok, pol_tok)
    states = []
    for d in out.states:
        if d.name == decl.name:
            addr = list(d.address)
            addr.insert(pos, upd_tok)
            states.append(replace(d, shape=d.shape + (3,), address=tuple(addr)))
        else:
            states.append(d)
    return _rebuild(out, states=states)


def _mut_lower_rank(program: ProgramAST, insp, rng) -> ProgramAST | None:
    """Drop one bound conditioning axis from a state tensor."""
    options = []
    for d in program.states:
        for pos, tok in enumerate(d.address):
            if tok == "free":
                continue
            reads = []
            for dd in program.states:
                reads += _collect(dd.update, lambda n: isinstance(n, StateSlice) and n.state == d.name)
            reads += _collect(program.policy, lambda n: isinstance(n, StateSlice) and n.state == d.name)
            if all(r.index[pos] != "free" for r in reads):
                options.append((d.name, pos))
    if not options:
        return None
    name, pos = options[rng.integers(len(options))]
    out = _retoken_state_slices(program, name, pos, None, None)
    states = []
    for d in out.states:
        if d.name == name:
            addr = list(d.address)
            del addr[pos]
            states.append(replace(d, shape=d.shape[:-1], address=tuple(addr)))
        else:
            states.append(d)
    return _rebuild(out, states=states)


def _stickiness_terms(policy: Expr) -> list[Expr]:
    return _collect(policy, lambda n: isinstance(n, BinOp) and n.op == "mul" and isinstance(n.right, OneHot) and isinstance(n.left, Param))


def _mut_toggle_stickiness(program: ProgramAST, insp, rng) -> ProgramAST | None:
    terms = _stickiness_terms(program.policy)
    if terms:
        victim = terms[rng.integers(len(terms))]

        def drop(node):
            if isinstance(node, BinOp) and node.op == "add":
                if node.left == victim:
                    return node.right
                if node.right == victim:
                    return node.left
            return node

        policy = _map_exprs(program.policy, drop)
        if policy == program.policy:
            return None
        return _rebuild(program, policy=policy)
    if program.param_count + 1 > MAX_PARAMS:
        return None
    policy = BinOp("add", program.policy, BinOp("mul", Param(program.param_count), OneHot("a")))
    return _rebuild(program, policy=policy, param_count=program.param_count + 1)


_SWAPS = {"a": "a_opp", "a_opp": "a", "prev_a": "prev_a_opp", "prev_a_opp": "prev_a"}


def _mut_swap_index(program: ProgramAST, insp, rng) -> ProgramAST | None:
    """Swap one bound index token (self vs opponent) somewhere in the program."""
    spots = []
    for si, d in enumerate(program.states):
        for node in _collect(d.update, lambda n: isinstance(n, (StateSlice, OneHot))):
            spots.append(("state", si, node))
    for node in _collect(program.policy, lambda n: isinstance(n, (StateSlice, OneHot))):
        spots.append(("policy", -1, node))
    rng.shuffle(spots)
    for where, si, node in spots:
        if isinstance(node, OneHot):
            new_node = OneHot(_SWAPS[node.which])
        else:
            positions = [i for i, tok in enumerate(node.index) if tok in _SWAPS]
            if not positions:
                continue
            pos = positions[rng.integers(len(positions))]
            idx = list(node.index)
            idx[pos] = _SWAPS[idx[pos]]
            new_node = StateSlice(node.state, tuple(idx))

        replaced = {"done": False}

        def swap_once(n):
            if n == node and not replaced["done"]:
                replaced["done"] = True
                return new_node
            return n

        if where == "policy":
            return _rebuild(program, policy=_map_exprs(program.policy, swap_once))
        states = list(program.states)
        states[si] = replace(states[si], update=_map_exprs(states[si].update, swap_once))
        return _rebuild(program, states=states)
    return None


_OP_SWAP = {"add": "sub", "sub": "add", "mul": "div", "div": "mul"}


def _mut_change_operator(program: ProgramAST, insp, rng) -> ProgramAST | None:
    targets = []
    for si, d in enumerate(program.states):
        for node in _collect(d.update, lambda n: isinstance(n, BinOp)):
            targets.append(("state", si, node))
    for node in _collect(program.policy, lambda n: isinstance(n, BinOp)):
        targets.append(("policy", -1, node))
    if not targets:
        return None
    where, si, node = targets[rng.integers(len(targets))]
    new_node = BinOp(_OP_SWAP[node.op], node.left, node.right)
    replaced = {"done": False}

    def change_once(n):
        if n == node and not replaced["done"]:
            replaced["done"] = True
            return new_node
        return n

    if where == "policy":
        return _rebuild(program, policy=_map_exprs(program.policy, change_once))
    states = list(program.states)
    states[si] = replace(states[si], update=_map_exprs(states[si].update, change_once))
    return _rebuild(program, states=states)


def _mut_toggle_ema(program: ProgramAST, insp, rng) -> ProgramAST | None:
    """Wrap a state update in reward-rate smoothing, or unwrap one."""
    if not program.states:
        return None
    si = int(rng.integers(len(program.states)))
    decl = program.states[si]
    states = list(program.states)
    if isinstance(decl.update, Ema):
        states[si] = replace(decl, update=decl.update.new)
        return _rebuild(program, states=states)
    if program.param_count + 1 > MAX_PARAMS:
        return None
    old = StateSlice(decl.name, decl.address)
    states[si] = replace(decl, update=Ema(old, decl.update, Param(program.param_count, "sigmoid")))
    return _rebuild(program, states=states, param_count=program.param_count + 1)


def _subtrees(expr: Expr) -> list[Expr]:
    return _collect(expr, lambda n: True)


def _mut_graft(program: ProgramAST, insp, rng) -> ProgramAST | None:
    """Crossover: add a weighted policy subexpression from an inspiration.

    Only subtrees whose state references already exist in the parent (with
    matching ranks) are eligible.
    """
    from .dsl.ast import _RankError, expr_rank

    donors = [p for p in insp if p is not None]
    if not donors:
        return None
    donor = donors[rng.integers(len(donors))]
    own_ranks = {d.name: len(d.shape) for d in program.states}
    pool = []
    for sub in _subtrees(donor.policy):
        if isinstance(sub, (Const, Param)):
            continue
        refs = {n.state for n in _collect(sub, lambda n: isinstance(n, StateSlice))}
        if not refs <= set(own_ranks):
            continue
        try:
            if expr_rank(sub, own_ranks) > 1:
                continue
        except _RankError:
            continue
        pool.append(sub)
    if not pool:
        return None
    graft = pool[rng.integers(len(pool))]
    # bring donor parameters into this program's space
    donor_params = sorted({n.index for n in _collect(graft, lambda n: isinstance(n, Param))})
    need = len(donor_params) + 1
    if program.param_count + need > MAX_PARAMS:
        return None
    remap = {old: program.param_count + i for i, old in enumerate(donor_params)}

    def fix(node):
        if isinstance(node, Param):
            return Param(remap[node.index], node.transform)
        return node

    graft = _map_exprs(graft, fix)
    weight = Param(program.param_count + len(donor_params))
    policy = BinOp("add", program.policy, BinOp("mul", weight, graft))
    return _rebuild(program, policy=policy, param_count=program.param_count + need)


def _mut_perturb_const(program: ProgramAST, insp, rng) -> ProgramAST | None:
    consts = []
    for d in program.states:
        consts += _collect(d.update, lambda n: isinstance(n, Const))
    consts += _collect(program.policy, lambda n: isinstance(n, Const))
    if not consts:
        return None
    victim = consts[rng.integers(len(consts))]
    value = victim.value * float(rng.uniform(0.5, 2.0)) if victim.value != 0 else float(rng.uniform(-1.0, 1.0))
    replaced = {"done": False}

    def change_once(n):
        if n == victim and not replaced["done"]:
            replaced["done"] = True
            return Const(value)
        return n

    states = tuple(replace(d, update=_map_exprs(d.update, change_once)) for d in program.states)
    policy = _map_exprs(program.policy, change_once)
    return _rebuild(program, states=states, policy=policy)


def _mut_drop_state(program: ProgramAST, insp, rng) -> ProgramAST | None:
    if not program.states:
        return None
    si = int(rng.integers(len(program.states)))
    victim = program.states[si].name

    def zero(node):
        if isinstance(node, StateSlice) and node.state == victim:
            return Const(0.0)
        return node

    states = tuple(replace(d, update=_map_exprs(d.update, zero)) for i, d in enumerate(program.states) if i != si)
    policy = _map_exprs(program.policy, zero)
    return _rebuild(program, states=states, policy=policy)


MUTATIONS = {
    "add_q_vector": _mut_add_q_vector,
    "add_opp_model": _mut_add_opp_model,
    "raise_rank": _mut_raise_rank,
    "lower_rank": _mut_lower_rank,
    "toggle_stickiness": _mut_toggle_stickiness,
    "swap_index": _mut_swap_index,
    "change_operator": _mut_change_operator,
    "toggle_ema": _mut_toggle_ema,
    "graft": _mut_graft,
    "perturb_const": _mut_perturb_const,
    "drop_state": _mut_drop_state,
}

# structural moves dominate; cosmetic tweaks fill in the rest
_MUTATION_WEIGHTS = {
    "add_q_vector": 2.0,
    "add_opp_model": 2.0,
    "raise_rank": 2.0,
    "lower_rank": 1.0,
    "toggle_stickiness": 1.5,
    "swap_index": 1.0,
    "change_operator": 0.5,
    "toggle_ema": 1.0,
    "graft": 1.5,
    "perturb_const": 0.5,
    "drop_state": 0.5,
}


class RuleMutator:
    """Weighted draw from the mutation catalog; always yields a valid program."""

    def __init__(self):
        self.names = list(MUTATIONS)
        weights = np.array([_MUTATION_WEIGHTS[n] for n in self.names])
        self.weights = weights / weights.sum()

    def __call__(self, parent: ProgramAST, inspirations: list[ProgramAST], rng: np.random.Generator) -> tuple[ProgramAST, str]:
        for _ in range(10):
            name = self.names[rng.choice(len(self.names), p=self.weights)]
            child = MUTATIONS[name](parent, inspirations, rng)
            if child is None:
                continue
            child = compact_params(child)
            if validate(child):
                continue
            return child, name
        # give up gracefully: clone with one nudged constant
        child = _mut_perturb_const(parent, inspirations, rng)
        if child is not None:
            child = compact_params(child)
            if not validate(child):
                return child, "perturb_const"
        policy = BinOp("add", parent.policy, Const(float(rng.uniform(-0.01, 0.01))))
        child = compact_params(_rebuild(parent, policy=policy))
        return child, "jitter"


def rule_mutator(parent: ProgramAST, inspirations: list[ProgramAST], rng: np.random.Generator) -> ProgramAST:
    """Public single-shot rule mutation (see :class:`RuleMutator`)."""
    child, _ = RuleMutator()(parent, inspirations, rng)
    return child


@dataclass(frozen=True)
class EndpointConfig:
    base_url: str
    credential_env: str | None = None
    timeout: float = 60.0


_EXTERNAL_PROMPT = """You are improving small behavioral-model programs for iterated
rock-paper-scissors written in an s-expression DSL.

Grammar:
  (program NAME (params N) STATE* (policy EXPR))
  STATE: (state NAME (shape 3...) (init X) (at TOKEN...) (update EXPR))
  EXPR: (const X) | (param K [sigmoid|softplus]) | (input a|a_opp|r|cf_rewards)
        | (slice STATE TOKEN...) | (add E E) | (sub E E) | (mul E E) | (div E E)
        | (ema OLD NEW RATE) | (decay VALUE RATE) | (counter E) | (onehot a|a_opp)
        | (softmax E TEMP) | (sum E AXIS)
  TOKEN: a | a_opp | prev_a | prev_a_opp | free
Programs may use at most 10 parameters. The policy must produce 3 logits.

Parent program (score {parent_score}):
{parent}

Other programs and scores:
{inspirations}

Propose one modified program that predicts the data better or is simpler.
Reply with the program s-expression only.
"""


class ExternalMutator:
    """Chat-completion-backed mutation with rule-mutator fallback.

    Wire format: POST {"prompt": text} -> {"text": reply}.  Any transport,
    parse, or validation failure falls back to the rule mutator and is
    counted by the caller via the ``fallbacks`` counter.
    """

    def __init__(self, cfg: EndpointConfig, scores: dict[str, float] | None = None):
        self.cfg = cfg
        self.scores = scores or {}
        self.fallback = RuleMutator()
        self.fallbacks = 0

    def _complete(self, prompt: str) -> str:
        import os

        import requests

        headers = {}
        if self.cfg.credential_env:
            credential = os.environ.get(self.cfg.credential_env)
            if credential:
                headers["Authorization"] = f"Bearer {credential}"
        resp = requests.post(self.cfg.base_url, json={"prompt": prompt}, headers=headers, timeout=self.cfg.timeout)
        resp.raise_for_status()
        return resp.json()["text"]

    def __call__(self, parent: ProgramAST, inspirations: list[ProgramAST], rng: np.random.Generator) -> tuple[ProgramAST, str]:
        prompt = _EXTERNAL_PROMPT.format(
            parent_score=self.scores.get(program_id(parent), "unknown"),
            parent=serialize(parent),
            inspirations="\n".join(
                f"; score {self.scores.get(program_id(p), 'unknown')}\n{serialize(p)}" for p in inspirations
            )
            or "(none)",
        )
        try:
            reply = self._complete(prompt)
            raw = parse(reply)
            diags = validate(raw)  # the declared budget must hold as replied
            if not diags:
                child = compact_params(raw)
                diags = validate(child)
            if diags:
                raise ValueError(f"invalid program from endpoint: {diags[0]}")
            return child, "external"
        except Exception:
            self.fallbacks += 1
            child, tag = self.fallback(parent, inspirations, rng)
            return child, f"external_fallback:{tag}"


def external_mutator(
    parent_text: str,
    inspiration_texts: list[str],
    scores: dict[str, float],
    endpoint: EndpointConfig,
    rng: np.random.Generator | None = None,
) -> ProgramAST:
    """One external-endpoint mutation from serialized inputs (with fallback)."""
    parent = parse(parent_text)
    inspirations = [parse(t) for t in inspiration_texts]
    mut = ExternalMutator(endpoint, scores)
    child, _ = mut(parent, inspirations, rng or np.random.default_rng(0))
    return child


# --- the search loop --------------------------------------------------------

def evolve(train_set, cfg: SearchConfig, mutator=None) -> Archive:
    """Bilevel search: mutate program structure, fit parameters, keep everything."""
    if not train_set:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    fold_seed = int(np.random.SeedSequence(cfg.seed).generate_state(1)[0] % (2**31))
    fit_cfg = cfg.fit_config()

    if mutator is None:
        mutator = RuleMutator() if cfg.mutator == "rule" else ExternalMutator(EndpointConfig(base_url=""))

    archive = Archive(seed=cfg.seed)

    def score(program: ProgramAST) -> float:
        return twofold_cv(DslModel(program), train_set, fit_cfg, seed=fold_seed).normalized_likelihood

    root = get_builtin("nash")
    archive.insert(Candidate(program=root, train_score=score(root), effort=halstead(root).effort, lineage=("", "init"), id=program_id(root)))

    max_proposals = cfg.budget * cfg.max_proposal_factor

    def propose() -> tuple | None:
        """One mutation draw; None when it was invalid or a duplicate."""
        archive.diagnostics["proposals"] += 1
        pool = archive.frontier() if rng.random() < cfg.frontier_bias else archive.ordered()
        parent = pool[rng.integers(len(pool))]
        everyone = archive.ordered()
        k = min(cfg.inspirations, len(everyone))
        insp_idx = rng.choice(len(everyone), size=k, replace=False) if k else []
        inspirations = [everyone[i].program for i in insp_idx]

        if isinstance(mutator, ExternalMutator):
            mutator.scores = {c.id: c.train_score for c in everyone}
            before = mutator.fallbacks
            child, tag = mutator(parent.program, inspirations, rng)
            archive.diagnostics["external_failures"] += mutator.fallbacks - before
        else:
            child, tag = mutator(parent.program, inspirations, rng)

        if validate(child):
            archive.diagnostics["invalid"] += 1
            return None
        cid = program_id(child)
        if cid in archive.candidates:
            archive.diagnostics["duplicates"] += 1
            return None
        return parent.id, tag, child, cid

    def settle(entry, train_score_or_exc) -> None:
        parent_id, tag, child, cid = entry
        if isinstance(train_score_or_exc, Exception):
            archive.diagnostics["fit_failures"] += 1
            return
        archive.insert(Candidate(program=child, train_score=train_score_or_exc, effort=halstead(child).effort, lineage=(parent_id, tag), id=cid))

    def safe_score(program: ProgramAST):
        try:
            return score(program)
        except (FitError, ValueError) as exc:
            return exc

    while len(archive) < cfg.budget and archive.diagnostics["proposals"] < max_proposals:
        archive.generation += 1
        # proposals are drawn sequentially from one rng; scoring may fan out
        wave: list[tuple] = []
        wave_ids: set[str] = set()
        while (
            len(wave) < max(1, cfg.jobs)
            and len(archive) + len(wave) < cfg.budget
            and archive.diagnostics["proposals"] < max_proposals
        ):
            entry = propose()
            if entry is None:
                if not wave:
                    break  # re-check loop conditions between failed draws
                continue
            if entry[3] in wave_ids:
                archive.diagnostics["duplicates"] += 1
                continue
            wave_ids.add(entry[3])
            wave.append(entry)
        if not wave:
            continue
        if cfg.jobs > 1 and len(wave) > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                results = list(pool.map(lambda e: safe_score(e[2]), wave))
        else:
            results = [safe_score(e[2]) for e in wave]
        for entry, outcome in zip(wave, results):  # insertion follows submission order
            settle(entry, outcome)
    return archive


# --- persistence -------------------------------------------------------------

def save_archive(archive: Archive, path: str | Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for idx, cand in enumerate(archive.ordered()):
            fh.write(
                json.dumps(
                    {
                        "index": idx,
                        "id": cand.id,
                        "program": serialize(cand.program),
                        "train_score": cand.train_score,
                        "effort": cand.effort,
                        "parent": cand.lineage[0],
                        "mutation": cand.lineage[1],
                    },
                    sort_keys=True,
                )
                + "\n"
            )


def load_archive(path: str | Path, seed: int = 0) -> Archive:
    archive = Archive(seed=seed)
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        program = parse(obj["program"])
        archive.insert(
            Candidate(
                program=program,
                train_score=float(obj["train_score"]),
                effort=float(obj["effort"]),
                lineage=(obj.get("parent", ""), obj.get("mutation", "")),
                id=obj["id"],
            )
        )
    return archive
