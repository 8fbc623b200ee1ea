"""A small total expression language for scenario files.

Grammar (EBNF)::

    expr    = term { ("+" | "-") term } ;
    term    = unary { ("*" | "/") unary } ;
    unary   = "-" unary | power ;
    power   = primary [ "^" unary ] ;            (* right associative *)
    primary = NUMBER | IDENT | IDENT "(" [ expr { "," expr } ] ")" | "(" expr ")" ;
    NUMBER  = digits [ "." digits ] [ ("e" | "E") [ "+" | "-" ] digits ]
            | "." digits [ exponent ] ;
    IDENT   = letter { letter | digit | "_" } ;

Builtins: exp, log, sin, cos, abs, min, max, sqrt, pow, sign and
``select(c, a, b)`` which yields ``a`` when ``c >= 0`` and ``b`` otherwise.
Both branches of ``select`` are evaluated.

Evaluation works on floats and on numpy arrays (elementwise).  Domain
violations raise instead of producing NaN.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Union

import numpy as np

__all__ = [
    "Num", "Var", "Neg", "BinOp", "Call", "Expr",
    "ExprError", "ExprSyntaxError", "ExprEvalError", "UnboundVariableError",
    "ExprDomainError",
    "parse", "evaluate", "free_vars", "to_source", "compile_expr", "BUILTINS",
]


class ExprError(Exception):
    """Base class for expression errors."""


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int, expected: frozenset[str] = frozenset()):
        self.offset = offset
        self.expected = expected
        detail = f" (expected one of: {', '.join(sorted(expected))})" if expected else ""
        super().__init__(f"{message} at offset {offset}{detail}")


class ExprEvalError(ExprError):
    pass


class UnboundVariableError(ExprEvalError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"unbound variable {name!r}")


class ExprDomainError(ExprEvalError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple


Expr = Union[Num, Var, Neg, BinOp, Call]

# name -> allowed arities
BUILTINS: dict[str, tuple[int, ...]] = {
    "exp": (1,), "log": (1,), "sin": (1,), "cos": (1,), "abs": (1,),
    "sqrt": (1,), "sign": (1,), "pow": (2,), "select": (3,),
    "min": tuple(range(1, 65)), "max": tuple(range(1, 65)),
}

# ---------------------------------------------------------------- lexer

_PUNCT = {"+", "-", "*", "/", "^", "(", ")", ","}


@dataclass(frozen=True)
class _Tok:
    kind: str  # "num", "ident", punct char, or "end"
    text: str
    offset: int


def _digits(data: bytes, j: int) -> int:
    while j < len(data) and 48 <= data[j] <= 57:
        j += 1
    return j


def _lex(src: str) -> list[_Tok]:
    data = src.encode("utf-8")
    toks: list[_Tok] = []
    i, n = 0, len(data)
    while i < n:
        # bytes >= 128 map to "\0" so they fall through to the error branch
        c = chr(data[i]) if data[i] < 128 else "\0"
        if c in " \t\r\n":
            i += 1
        elif c in _PUNCT:
            toks.append(_Tok(c, c, i))
            i += 1
        elif c.isdigit() or (c == "." and i + 1 < n and 48 <= data[i + 1] <= 57):
            j = _digits(data, i)
            if j < n and data[j] == 46:  # "."
                j = _digits(data, j + 1)
            if j < n and data[j] in (69, 101):  # "E", "e"
                k = j + 1
                if k < n and data[k] in (43, 45):
                    k += 1
                if k < n and 48 <= data[k] <= 57:
                    k = _digits(data, k)
                    j = k
                else:
                    raise ExprSyntaxError("malformed exponent", k, frozenset({"digit"}))
            toks.append(_Tok("num", data[i:j].decode(), i))
            i = j
        elif c.isalpha() or c == "_":
            j = i
            while j < n and data[j] < 128 and (chr(data[j]).isalnum() or data[j] == 95):
                j += 1
            toks.append(_Tok("ident", data[i:j].decode(), i))
            i = j
        else:
            raise ExprSyntaxError(f"unexpected character {c!r}", i,
                                  frozenset({"number", "identifier", "(", "-"}))
    toks.append(_Tok("end", "", n))
    return toks


# ---------------------------------------------------------------- parser

_OPERAND_START = frozenset({"number", "identifier", "(", "-"})


class _Parser:
    def __init__(self, src: str):
        self.toks = _lex(src)
        self.pos = 0

    @property
    def tok(self) -> _Tok:
        return self.toks[self.pos]

    def take(self) -> _Tok:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def expect(self, kind: str) -> _Tok:
        if self.tok.kind != kind:
            self.fail(frozenset({kind}))
        return self.take()

    def fail(self, expected: frozenset[str]):
        t = self.tok
        what = "end of input" if t.kind == "end" else repr(t.text)
        raise ExprSyntaxError(f"unexpected {what}", t.offset, expected)

    def parse(self) -> Expr:
        e = self.expr()
        if self.tok.kind != "end":
            self.fail(frozenset({"+", "-", "*", "/", "^", "end of input"}))
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.tok.kind in ("+", "-"):
            op = self.take().kind
            e = BinOp(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.tok.kind in ("*", "/"):
            op = self.take().kind
            e = BinOp(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.tok.kind == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.primary()
        if self.tok.kind == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Expr:
        t = self.tok
        if t.kind == "num":
            self.take()
            return Num(float(t.text))
        if t.kind == "(":
            self.take()
            e = self.expr()
            self.expect(")")
            return e
        if t.kind == "ident":
            self.take()
            if self.tok.kind != "(":
                return Var(t.text)
            if t.text not in BUILTINS:
                raise ExprSyntaxError(f"unknown function {t.text!r}", t.offset,
                                      frozenset(BUILTINS))
            self.take()
            args = []
            if self.tok.kind != ")":
                args.append(self.expr())
                while self.tok.kind == ",":
                    self.take()
                    args.append(self.expr())
            if self.tok.kind != ")":
                self.fail(frozenset({",", ")"}))
            self.take()
            if len(args) not in BUILTINS[t.text]:
                raise ExprSyntaxError(
                    f"wrong number of arguments for {t.text!r}: {len(args)}", t.offset)
            return Call(t.text, tuple(args))
        self.fail(_OPERAND_START)


def parse(src: str) -> Expr:
    """Parse ``src`` into an expression tree."""
    parser = _Parser(src)
    try:
        return parser.parse()
    except RecursionError:
        raise ExprSyntaxError("expression nested too deeply", parser.tok.offset) from None


# ---------------------------------------------------------------- printing

def to_source(e: Expr) -> str:
    """Fully parenthesised source text; ``parse(to_source(e)) == e``."""
    if isinstance(e, Num):
        v = e.value
        if not np.isfinite(v):
            raise ExprError(f"cannot print non-finite literal {v!r}")
        text = repr(float(v))
        return f"(-{text[1:]})" if text.startswith("-") else text
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Neg):
        return f"(-{to_source(e.operand)})"
    if isinstance(e, BinOp):
        return f"({to_source(e.left)} {e.op} {to_source(e.right)})"
    if isinstance(e, Call):
        return f"{e.func}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


def free_vars(e: Expr) -> frozenset[str]:
    if isinstance(e, Num):
        return frozenset()
    if isinstance(e, Var):
        return frozenset({e.name})
    if isinstance(e, Neg):
        return free_vars(e.operand)
    if isinstance(e, BinOp):
        return free_vars(e.left) | free_vars(e.right)
    return frozenset().union(*(free_vars(a) for a in e.args))


# ---------------------------------------------------------------- evaluation

def _check(cond, message: str):
    if np.any(cond):
        raise ExprDomainError(message)


def _log(x):
    _check(np.asarray(x) <= 0, "log of non-positive value")
    return np.log(x)


def _sqrt(x):
    _check(np.asarray(x) < 0, "sqrt of negative value")
    return np.sqrt(x)


def _div(a, b):
    _check(np.asarray(b) == 0, "division by zero")
    return np.divide(a, b)


def _pow(a, b):
    a_arr, b_arr = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    _check((a_arr < 0) & (b_arr != np.round(b_arr)), "fractional power of negative value")
    _check((a_arr == 0) & (b_arr < 0), "division by zero")
    with np.errstate(over="ignore"):
        return np.power(a_arr, b_arr) if (a_arr.ndim or b_arr.ndim) else float(a_arr ** b_arr)


def _scalarize(x):
    return float(x) if np.ndim(x) == 0 else x


_FUNCS: dict[str, Callable] = {
    "exp": lambda x: np.exp(x),
    "log": _log,
    "sin": np.sin,
    "cos": np.cos,
    "abs": np.abs,
    "sqrt": _sqrt,
    "sign": np.sign,
    "pow": _pow,
    "min": lambda *a: a[0] if len(a) == 1 else np.minimum.reduce(np.broadcast_arrays(*a)),
    "max": lambda *a: a[0] if len(a) == 1 else np.maximum.reduce(np.broadcast_arrays(*a)),
    "select": lambda c, a, b: np.where(np.asarray(c) >= 0, a, b),
}

_BINOPS: dict[str, Callable] = {
    "+": np.add, "-": np.subtract, "*": np.multiply, "/": _div, "^": _pow,
}


def compile_expr(e: Expr) -> Callable[[Mapping[str, object]], object]:
    """Turn a tree into a closure ``env -> value`` (avoids re-walking the tree)."""
    if isinstance(e, Num):
        v = float(e.value)
        return lambda env: v
    if isinstance(e, Var):
        name = e.name

        def var(env):
            try:
                return env[name]
            except KeyError:
                raise UnboundVariableError(name) from None
        return var
    if isinstance(e, Neg):
        inner = compile_expr(e.operand)
        return lambda env: np.negative(inner(env))
    if isinstance(e, BinOp):
        fn, lhs, rhs = _BINOPS[e.op], compile_expr(e.left), compile_expr(e.right)
        return lambda env: fn(lhs(env), rhs(env))
    if isinstance(e, Call):
        fn = _FUNCS[e.func]
        args = [compile_expr(a) for a in e.args]
        return lambda env: fn(*(a(env) for a in args))
    raise TypeError(f"not an expression: {e!r}")


def evaluate(e: Expr | str, env: Mapping[str, object] | None = None):
    """Evaluate an expression (tree or source text) under ``env``."""
    if isinstance(e, str):
        e = parse(e)
    with np.errstate(over="ignore", invalid="ignore"):
        return _scalarize(compile_expr(e)(env or {}))
