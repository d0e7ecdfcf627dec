"""Text format for DSL programs: s-expressions with a canonical printer.

Grammar (``;`` starts a comment running to end of line)::

    program := (program NAME (params N) state* (policy EXPR))
    state   := (state NAME (shape DIM*) (init FLOAT) (at TOKEN*) (update EXPR))
    EXPR    := (const FLOAT) | (param N [sigmoid|softplus]) | (input NAME)
             | (slice STATE TOKEN*) | (add E E) | (sub E E) | (mul E E)
             | (div E E) | (ema OLD NEW RATE) | (decay VALUE RATE)
             | (counter E) | (onehot a|a_opp) | (softmax E TEMP) | (sum E AXIS)

``serialize`` emits the canonical form: one state per block, two-space
indentation, floats printed with ``repr``.  ``parse(serialize(p)) == p`` for
every valid program.
"""

from __future__ import annotations

from .ast import (
    BINOPS,
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
)


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        self.line = line
        self.col = col
        super().__init__(f"{message} (line {line}, column {col})")


class _Token:
    __slots__ = ("text", "line", "col")

    def __init__(self, text: str, line: int, col: int):
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    i = 0
    n = len(text)
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
        elif ch in " \t\r":
            col += 1
            i += 1
        elif ch == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif ch in "()":
            tokens.append(_Token(ch, line, col))
            col += 1
            i += 1
        else:
            start = i
            start_col = col
            while i < n and text[i] not in " \t\r\n();":
                i += 1
                col += 1
            tokens.append(_Token(text[start:i], line, start_col))
    return tokens


class _Reader:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def next(self, expect: str | None = None) -> _Token:
        tok = self.peek()
        if tok is None:
            last = self.tokens[-1] if self.tokens else _Token("", 1, 1)
            raise ParseError("unexpected end of input", last.line, last.col)
        self.pos += 1
        if expect is not None and tok.text != expect:
            raise ParseError(f"expected {expect!r}, found {tok.text!r}", tok.line, tok.col)
        return tok

    def read_form(self):
        """A form is an atom token or a list of forms."""
        tok = self.next()
        if tok.text == "(":
            items = []
            while True:
                nxt = self.peek()
                if nxt is None:
                    raise ParseError("unclosed parenthesis", tok.line, tok.col)
                if nxt.text == ")":
                    self.next()
                    return items, tok
                items.append(self.read_form())
        if tok.text == ")":
            raise ParseError("unexpected ')'", tok.line, tok.col)
        return tok, tok


def _atom(form, what: str) -> _Token:
    node, anchor = form
    if isinstance(node, list):
        raise ParseError(f"expected {what}, found a list", anchor.line, anchor.col)
    return node


def _list(form, what: str):
    node, anchor = form
    if not isinstance(node, list):
        raise ParseError(f"expected {what}", anchor.line, anchor.col)
    return node, anchor


def _float(tok: _Token) -> float:
    try:
        return float(tok.text)
    except ValueError:
        raise ParseError(f"malformed number {tok.text!r}", tok.line, tok.col) from None


def _int(tok: _Token) -> int:
    try:
        return int(tok.text)
    except ValueError:
        raise ParseError(f"malformed integer {tok.text!r}", tok.line, tok.col) from None


def _head(items, anchor, what: str) -> str:
    if not items:
        raise ParseError(f"empty form where {what} expected", anchor.line, anchor.col)
    return _atom(items[0], f"{what} keyword").text


def _parse_expr(form) -> Expr:
    items, anchor = _list(form, "an expression")
    head = _head(items, anchor, "expression")
    args = items[1:]

    def arity(n: int) -> None:
        if len(args) != n:
            raise ParseError(f"{head} takes {n} argument(s), got {len(args)}", anchor.line, anchor.col)

    if head == "const":
        arity(1)
        return Const(_float(_atom(args[0], "a number")))
    if head == "param":
        if len(args) not in (1, 2):
            raise ParseError("param takes an index and an optional transform", anchor.line, anchor.col)
        transform = "none"
        if len(args) == 2:
            transform = _atom(args[1], "a transform").text
        return Param(_int(_atom(args[0], "an index")), transform)
    if head == "input":
        arity(1)
        return Input(_atom(args[0], "an input name").text)
    if head == "slice":
        if not args:
            raise ParseError("slice needs a state name", anchor.line, anchor.col)
        name = _atom(args[0], "a state name").text
        index = tuple(_atom(a, "an index token").text for a in args[1:])
        return StateSlice(name, index)
    if head in BINOPS:
        arity(2)
        return BinOp(head, _parse_expr(args[0]), _parse_expr(args[1]))
    if head == "ema":
        arity(3)
        return Ema(_parse_expr(args[0]), _parse_expr(args[1]), _parse_expr(args[2]))
    if head == "decay":
        arity(2)
        return Decay(_parse_expr(args[0]), _parse_expr(args[1]))
    if head == "counter":
        arity(1)
        return CounterMap(_parse_expr(args[0]))
    if head == "onehot":
        arity(1)
        return OneHot(_atom(args[0], "a or a_opp").text)
    if head == "softmax":
        arity(2)
        return SoftmaxScale(_parse_expr(args[0]), _parse_expr(args[1]))
    if head == "sum":
        arity(2)
        return SumAxis(_parse_expr(args[0]), _int(_atom(args[1], "an axis")))
    raise ParseError(f"unknown expression head {head!r}", anchor.line, anchor.col)


def _parse_state(items, anchor) -> StateDecl:
    if len(items) != 6:
        raise ParseError("state takes (state NAME (shape ...) (init X) (at ...) (update E))", anchor.line, anchor.col)
    name = _atom(items[1], "a state name").text
    shape_items, shape_anchor = _list(items[2], "(shape ...)")
    if _head(shape_items, shape_anchor, "shape") != "shape":
        raise ParseError("expected (shape ...)", shape_anchor.line, shape_anchor.col)
    shape = tuple(_int(_atom(s, "a dimension")) for s in shape_items[1:])
    init_items, init_anchor = _list(items[3], "(init X)")
    if _head(init_items, init_anchor, "init") != "init" or len(init_items) != 2:
        raise ParseError("expected (init X)", init_anchor.line, init_anchor.col)
    init = _float(_atom(init_items[1], "a number"))
    at_items, at_anchor = _list(items[4], "(at ...)")
    if _head(at_items, at_anchor, "at") != "at":
        raise ParseError("expected (at ...)", at_anchor.line, at_anchor.col)
    address = tuple(_atom(t, "an index token").text for t in at_items[1:])
    upd_items, upd_anchor = _list(items[5], "(update E)")
    if _head(upd_items, upd_anchor, "update") != "update" or len(upd_items) != 2:
        raise ParseError("expected (update EXPR)", upd_anchor.line, upd_anchor.col)
    return StateDecl(name=name, shape=shape, init=init, address=address, update=_parse_expr(upd_items[1]))


def parse(text: str) -> ProgramAST:
    reader = _Reader(_tokenize(text))
    form = reader.read_form()
    trailing = reader.peek()
    if trailing is not None:
        raise ParseError("trailing input after program", trailing.line, trailing.col)
    items, anchor = _list(form, "(program ...)")
    if _head(items, anchor, "program") != "program" or len(items) < 3:
        raise ParseError("expected (program NAME (params N) ... (policy E))", anchor.line, anchor.col)
    name = _atom(items[1], "a program name").text
    params_items, params_anchor = _list(items[2], "(params N)")
    if _head(params_items, params_anchor, "params") != "params" or len(params_items) != 2:
        raise ParseError("expected (params N)", params_anchor.line, params_anchor.col)
    param_count = _int(_atom(params_items[1], "a count"))

    states: list[StateDecl] = []
    policy: Expr | None = None
    for form in items[3:]:
        sub_items, sub_anchor = _list(form, "a state or policy form")
        head = _head(sub_items, sub_anchor, "state or policy")
        if head == "state":
            if policy is not None:
                raise ParseError("states must precede the policy", sub_anchor.line, sub_anchor.col)
            states.append(_parse_state(sub_items, sub_anchor))
        elif head == "policy":
            if len(sub_items) != 2:
                raise ParseError("expected (policy EXPR)", sub_anchor.line, sub_anchor.col)
            if policy is not None:
                raise ParseError("duplicate policy", sub_anchor.line, sub_anchor.col)
            policy = _parse_expr(sub_items[1])
        else:
            raise ParseError(f"unexpected form {head!r}", sub_anchor.line, sub_anchor.col)
    if policy is None:
        raise ParseError("program has no policy", anchor.line, anchor.col)
    return ProgramAST(name=name, param_count=param_count, states=tuple(states), policy=policy)


# --- canonical printer ---------------------------------------------------

def _fmt_expr(expr: Expr) -> str:
    if isinstance(expr, Const):
        return f"(const {expr.value!r})"
    if isinstance(expr, Param):
        if expr.transform == "none":
            return f"(param {expr.index})"
        return f"(param {expr.index} {expr.transform})"
    if isinstance(expr, Input):
        return f"(input {expr.name})"
    if isinstance(expr, StateSlice):
        toks = "".join(f" {t}" for t in expr.index)
        return f"(slice {expr.state}{toks})"
    if isinstance(expr, BinOp):
        return f"({expr.op} {_fmt_expr(expr.left)} {_fmt_expr(expr.right)})"
    if isinstance(expr, Ema):
        return f"(ema {_fmt_expr(expr.old)} {_fmt_expr(expr.new)} {_fmt_expr(expr.rate)})"
    if isinstance(expr, Decay):
        return f"(decay {_fmt_expr(expr.value)} {_fmt_expr(expr.rate)})"
    if isinstance(expr, CounterMap):
        return f"(counter {_fmt_expr(expr.arg)})"
    if isinstance(expr, OneHot):
        return f"(onehot {expr.which})"
    if isinstance(expr, SoftmaxScale):
        return f"(softmax {_fmt_expr(expr.arg)} {_fmt_expr(expr.temp)})"
    if isinstance(expr, SumAxis):
        return f"(sum {_fmt_expr(expr.arg)} {expr.axis})"
    raise TypeError(f"unknown expression node {type(expr).__name__}")


def serialize(program: ProgramAST) -> str:
    lines = [f"(program {program.name}", f"  (params {program.param_count})"]
    for decl in program.states:
        shape = "".join(f" {d}" for d in decl.shape)
        addr = "".join(f" {t}" for t in decl.address)
        lines.append(f"  (state {decl.name} (shape{shape}) (init {decl.init!r}) (at{addr})")
        lines.append(f"    (update {_fmt_expr(decl.update)}))")
    lines.append(f"  (policy {_fmt_expr(program.policy)}))")
    return "\n".join(lines) + "\n"
