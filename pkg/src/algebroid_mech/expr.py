"""Scalar expressions in named variables with exact forward-mode derivatives.

Expressions are parsed once into an immutable tree and compiled into a tree of
closures.  The same compiled closures evaluate plain floats, numpy arrays
(vectorized over a batch of points) and :class:`Jet` objects, which carry a
value together with exact first and second derivatives along a set of seed
directions (multi-direction hyper-dual numbers).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "ExprError",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "ExprDomainError",
    "Jet",
    "Expression",
    "parse",
    "evaluate",
    "eval_jet2",
    "FUNCTIONS",
]


class ExprError(ValueError):
    pass


class ExprSyntaxError(ExprError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte {offset}")
        self.offset = offset


class UnknownIdentifierError(ExprError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"unknown identifier {name!r} at byte {offset}")
        self.name = name
        self.offset = offset


class ExprDomainError(ExprError, ArithmeticError):
    pass


# --------------------------------------------------------------------------
# Jets
# --------------------------------------------------------------------------


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., :, None] * b[..., None, :]


class Jet:
    """Value, gradient and Hessian along ``k`` seed directions.

    ``v`` has the batch shape, ``g`` the batch shape plus ``(k,)`` and ``h``
    the batch shape plus ``(k, k)``.  ``h`` is ``None`` for first-order jets.
    Arithmetic is exact second-order dual arithmetic, so derivatives carry no
    truncation error.
    """

    __slots__ = ("v", "g", "h")

    def __init__(self, v, g, h=None):
        self.v = v
        self.g = g
        self.h = h

    @classmethod
    def variable(cls, value, seed, order: int = 2) -> "Jet":
        value = np.asarray(value, dtype=float)
        seed = np.asarray(seed, dtype=float)
        g = np.broadcast_to(seed, value.shape + seed.shape[-1:]).copy()
        h = np.zeros(g.shape + g.shape[-1:]) if order >= 2 else None
        return cls(value, g, h)

    # -- helpers -----------------------------------------------------------
    def _unary(self, f0, f1, f2) -> "Jet":
        g = f1[..., None] * self.g
        if self.h is None:
            return Jet(f0, g)
        h = f1[..., None, None] * self.h + f2[..., None, None] * _outer(self.g, self.g)
        return Jet(f0, g, h)

    def _scale(self, c) -> "Jet":
        if isinstance(c, float):
            return Jet(self.v * c, self.g * c, None if self.h is None else self.h * c)
        c = np.asarray(c, dtype=float)
        h = None if self.h is None else self.h * c[..., None, None]
        return Jet(self.v * c, self.g * c[..., None], h)

    # -- arithmetic --------------------------------------------------------
    def __neg__(self) -> "Jet":
        return Jet(-self.v, -self.g, None if self.h is None else -self.h)

    def __add__(self, other) -> "Jet":
        if isinstance(other, Jet):
            h = None if self.h is None or other.h is None else self.h + other.h
            return Jet(self.v + other.v, self.g + other.g, h)
        return Jet(self.v + other, self.g, self.h)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        if isinstance(other, Jet):
            h = None if self.h is None or other.h is None else self.h - other.h
            return Jet(self.v - other.v, self.g - other.g, h)
        return Jet(self.v - other, self.g, self.h)

    def __rsub__(self, other) -> "Jet":
        return (-self) + other

    def __mul__(self, other) -> "Jet":
        if not isinstance(other, Jet):
            return self._scale(other)
        a, b = self, other
        v = a.v * b.v
        g = a.v[..., None] * b.g + b.v[..., None] * a.g
        if a.h is None or b.h is None:
            return Jet(v, g)
        h = (
            a.v[..., None, None] * b.h
            + b.v[..., None, None] * a.h
            + _outer(a.g, b.g)
            + _outer(b.g, a.g)
        )
        return Jet(v, g, h)

    __rmul__ = __mul__

    def reciprocal(self) -> "Jet":
        x = self.v
        if np.any(x == 0):
            raise ExprDomainError("division by zero")
        r = 1.0 / x
        return self._unary(r, -r * r, 2.0 * r * r * r)

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return self * other.reciprocal()
        if np.any(np.asarray(other) == 0):
            raise ExprDomainError("division by zero")
        if isinstance(other, float):
            return self._scale(1.0 / other)
        return self._scale(1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other) -> "Jet":
        return self.reciprocal() * other

    def powi(self, n: int) -> "Jet":
        x = self.v
        if n == 0:
            z = np.zeros_like(self.g)
            return Jet(np.ones_like(x), z, None if self.h is None else _outer(z, z))
        if n < 0 and np.any(x == 0):
            raise ExprDomainError("division by zero")
        f0 = x**n
        f1 = n * x ** (n - 1)
        f2 = n * (n - 1) * x ** (n - 2) if n != 1 else np.zeros_like(x)
        return self._unary(f0, f1, f2)

    def powr(self, c: float) -> "Jet":
        x = self.v
        if np.any(x <= 0):
            raise ExprDomainError("non-integer power of a non-positive base")
        return self._unary(x**c, c * x ** (c - 1), c * (c - 1) * x ** (c - 2))

    def sin(self) -> "Jet":
        s, c = np.sin(self.v), np.cos(self.v)
        return self._unary(s, c, -s)

    def cos(self) -> "Jet":
        s, c = np.sin(self.v), np.cos(self.v)
        return self._unary(c, -s, -c)

    def tan(self) -> "Jet":
        c = np.cos(self.v)
        if np.any(c == 0):
            raise ExprDomainError("tan pole")
        t = np.tan(self.v)
        sec2 = 1.0 + t * t
        return self._unary(t, sec2, 2.0 * t * sec2)

    def exp(self) -> "Jet":
        e = np.exp(self.v)
        return self._unary(e, e, e)

    def log(self) -> "Jet":
        x = self.v
        if np.any(x <= 0):
            raise ExprDomainError("log of a non-positive number")
        r = 1.0 / x
        return self._unary(np.log(x), r, -r * r)

    def sqrt(self) -> "Jet":
        x = self.v
        if np.any(x <= 0):
            raise ExprDomainError("sqrt derivative undefined at non-positive argument")
        s = np.sqrt(x)
        return self._unary(s, 0.5 / s, -0.25 / (s * x))

    def abs(self) -> "Jet":
        x = self.v
        sgn = np.sign(x)
        return self._unary(np.abs(x), sgn, np.zeros_like(x))


# --------------------------------------------------------------------------
# Function table (floats, arrays and jets)
# --------------------------------------------------------------------------


def _isarr(x) -> bool:
    return isinstance(x, np.ndarray)


def _f_sin(x):
    if isinstance(x, Jet):
        return x.sin()
    return np.sin(x) if _isarr(x) else math.sin(x)


def _f_cos(x):
    if isinstance(x, Jet):
        return x.cos()
    return np.cos(x) if _isarr(x) else math.cos(x)


def _f_tan(x):
    if isinstance(x, Jet):
        return x.tan()
    return np.tan(x) if _isarr(x) else math.tan(x)


def _f_exp(x):
    if isinstance(x, Jet):
        return x.exp()
    return np.exp(x) if _isarr(x) else math.exp(x)


def _f_log(x):
    if isinstance(x, Jet):
        return x.log()
    if np.any(np.asarray(x) <= 0):
        raise ExprDomainError("log of a non-positive number")
    return np.log(x) if _isarr(x) else math.log(x)


def _f_sqrt(x):
    if isinstance(x, Jet):
        return x.sqrt()
    if np.any(np.asarray(x) < 0):
        raise ExprDomainError("sqrt of a negative number")
    return np.sqrt(x) if _isarr(x) else math.sqrt(x)


def _f_abs(x):
    if isinstance(x, Jet):
        return x.abs()
    return np.abs(x) if _isarr(x) else abs(x)


FUNCTIONS: dict[str, Callable] = {
    "sin": _f_sin,
    "cos": _f_cos,
    "tan": _f_tan,
    "exp": _f_exp,
    "log": _f_log,
    "sqrt": _f_sqrt,
    "abs": _f_abs,
}


def _div(a, b):
    if isinstance(a, Jet) or isinstance(b, Jet):
        return a / b
    if np.any(np.asarray(b) == 0):
        raise ExprDomainError("division by zero")
    return a / b


def _pow_int(a, n: int):
    if isinstance(a, Jet):
        return a.powi(n)
    if n < 0 and np.any(np.asarray(a) == 0):
        raise ExprDomainError("division by zero")
    if _isarr(a):
        return a**n
    return float(a) ** n


def _pow_real(a, c: float):
    if isinstance(a, Jet):
        return a.powr(c)
    if np.any(np.asarray(a) < 0):
        raise ExprDomainError("non-integer power of a negative base")
    return a**c


def _pow_general(a, b):
    # a^b = exp(b log a); requires a > 0
    return _f_exp(b * _f_log(a))


# --------------------------------------------------------------------------
# Syntax tree
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    index: int
    name: str


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Num | Var | Neg | BinOp | Call


def _is_constant(node: Node) -> bool:
    if isinstance(node, Num):
        return True
    if isinstance(node, Var):
        return False
    if isinstance(node, (Neg, Call)):
        return _is_constant(node.arg)
    return _is_constant(node.left) and _is_constant(node.right)


def _fmt(node: Node) -> str:
    if isinstance(node, Num):
        return repr(float(node.value))
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Neg):
        return f"(-{_fmt(node.arg)})"
    if isinstance(node, Call):
        return f"{node.fn}({_fmt(node.arg)})"
    return f"({_fmt(node.left)} {node.op} {_fmt(node.right)})"


def _compile(node: Node) -> Callable:
    if isinstance(node, Num):
        c = float(node.value)
        return lambda env: c
    if isinstance(node, Var):
        i = node.index
        return lambda env: env[i]
    if isinstance(node, Neg):
        f = _compile(node.arg)
        return lambda env: -f(env)
    if isinstance(node, Call):
        fn = FUNCTIONS[node.fn]
        f = _compile(node.arg)
        return lambda env: fn(f(env))
    left, right, op = _compile(node.left), _compile(node.right), node.op
    if op == "+":
        return lambda env: left(env) + right(env)
    if op == "-":
        return lambda env: left(env) - right(env)
    if op == "*":
        return lambda env: left(env) * right(env)
    if op == "/":
        return lambda env: _div(left(env), right(env))
    # power
    if _is_constant(node.right):
        c = float(_compile(node.right)([]))
        if c == int(c) and abs(c) <= 64:
            n = int(c)
            return lambda env: _pow_int(left(env), n)
        return lambda env: _pow_real(left(env), c)
    return lambda env: _pow_general(left(env), right(env))


def _substitute(node: Node, mapping: Sequence[Node]) -> Node:
    if isinstance(node, Num):
        return node
    if isinstance(node, Var):
        return mapping[node.index]
    if isinstance(node, Neg):
        return Neg(_substitute(node.arg, mapping))
    if isinstance(node, Call):
        return Call(node.fn, _substitute(node.arg, mapping))
    return BinOp(node.op, _substitute(node.left, mapping), _substitute(node.right, mapping))


def _collect_vars(node: Node, out: set[int]) -> None:
    if isinstance(node, Var):
        out.add(node.index)
    elif isinstance(node, (Neg, Call)):
        _collect_vars(node.arg, out)
    elif isinstance(node, BinOp):
        _collect_vars(node.left, out)
        _collect_vars(node.right, out)


class Expression:
    """A parsed scalar expression over an ordered tuple of variable names."""

    __slots__ = ("root", "variables", "_fn", "_const", "_used")

    def __init__(self, root: Node, variables: Sequence[str]):
        self.root = root
        self.variables = tuple(variables)
        self._fn = _compile(root)
        self._const = _is_constant(root)
        used: set[int] = set()
        _collect_vars(root, used)
        self._used = frozenset(used)

    def __repr__(self) -> str:
        return f"Expression({self.to_string()!r}, vars={list(self.variables)})"

    def to_string(self) -> str:
        return _fmt(self.root)

    @property
    def is_constant(self) -> bool:
        return self._const

    def used_indices(self) -> frozenset[int]:
        return self._used

    def _check_len(self, size: int) -> None:
        if size != len(self.variables):
            raise ValueError(
                f"point has {size} components, expression declares {len(self.variables)} variables"
            )

    def __call__(self, point) -> float | np.ndarray:
        """Evaluate at ``point`` (length-k) or at a batch of points (shape (..., k))."""
        if isinstance(point, np.ndarray) and point.ndim > 1:
            self._check_len(point.shape[-1])
            env = [point[..., i] for i in range(point.shape[-1])]
            out = self._fn(env)
            if self._const or not isinstance(out, np.ndarray):
                out = np.full(point.shape[:-1], float(out))
            _finite(out)
            return out
        env = [float(v) for v in point]
        self._check_len(len(env))
        out = float(self._fn(env))
        _finite(out)
        return out

    def jet(self, env: Sequence) -> Jet | float:
        """Evaluate with a caller-supplied environment (floats, arrays or jets)."""
        return self._fn(env)

    def substitute(self, mapping: Sequence["Expression"]) -> "Expression":
        """Replace each variable by an expression; result is over the mapping's variables."""
        if len(mapping) != len(self.variables):
            raise ValueError("substitution needs one expression per variable")
        new_vars = mapping[0].variables if mapping else ()
        for e in mapping:
            if e.variables != new_vars:
                raise ValueError("substituted expressions must share one variable list")
        return Expression(_substitute(self.root, [e.root for e in mapping]), new_vars)


def _finite(out) -> None:
    if not np.all(np.isfinite(out)):
        raise ExprDomainError("non-finite result")


# --------------------------------------------------------------------------
# Parser
# --------------------------------------------------------------------------


def _tokenize(source: str):
    raw = source.encode("utf-8")
    tokens = []
    i = 0
    while i < len(raw):
        ch = chr(raw[i])
        if ch.isspace():
            i += 1
            continue
        if ch.isdigit() or (ch == "." and i + 1 < len(raw) and chr(raw[i + 1]).isdigit()):
            j = i
            while j < len(raw) and (chr(raw[j]).isdigit() or chr(raw[j]) == "."):
                j += 1
            if j < len(raw) and chr(raw[j]) in "eE":
                k = j + 1
                if k < len(raw) and chr(raw[k]) in "+-":
                    k += 1
                if k < len(raw) and chr(raw[k]).isdigit():
                    j = k
                    while j < len(raw) and chr(raw[j]).isdigit():
                        j += 1
            text = raw[i:j].decode()
            try:
                value = float(text)
            except ValueError:
                raise ExprSyntaxError(f"malformed number {text!r}", i) from None
            tokens.append(("num", value, i))
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(raw) and (chr(raw[j]).isalnum() or chr(raw[j]) == "_"):
                j += 1
            tokens.append(("id", raw[i:j].decode(), i))
            i = j
            continue
        if ch in "+-*/^()":
            tokens.append((ch, ch, i))
            i += 1
            continue
        raise ExprSyntaxError(f"unexpected character {raw[i:i + 1]!r}", i)
    tokens.append(("end", None, len(raw)))
    return tokens


class _Parser:
    def __init__(self, source: str, variables: Sequence[str]):
        self.tokens = _tokenize(source)
        self.pos = 0
        self.vars = {name: k for k, name in enumerate(variables)}

    def peek(self):
        return self.tokens[self.pos]

    def take(self):
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, kind: str):
        tok = self.take()
        if tok[0] != kind:
            raise ExprSyntaxError(f"expected {kind!r}", tok[2])
        return tok

    def parse(self) -> Node:
        node = self.additive()
        tok = self.peek()
        if tok[0] != "end":
            raise ExprSyntaxError(f"unexpected token {tok[1]!r}", tok[2])
        return node

    def additive(self) -> Node:
        node = self.multiplicative()
        while self.peek()[0] in ("+", "-"):
            op = self.take()[0]
            node = BinOp(op, node, self.multiplicative())
        return node

    def multiplicative(self) -> Node:
        node = self.unary()
        while self.peek()[0] in ("*", "/"):
            op = self.take()[0]
            node = BinOp(op, node, self.unary())
        return node

    def unary(self) -> Node:
        if self.peek()[0] == "-":
            self.take()
            return Neg(self.unary())
        if self.peek()[0] == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Node:
        base = self.primary()
        if self.peek()[0] == "^":
            self.take()
            # right-associative; the exponent may carry its own sign
            return BinOp("^", base, self.unary())
        return base

    def primary(self) -> Node:
        kind, value, offset = self.take()
        if kind == "num":
            return Num(value)
        if kind == "(":
            node = self.additive()
            self.expect(")")
            return node
        if kind == "id":
            if self.peek()[0] == "(":
                if value not in FUNCTIONS:
                    raise UnknownIdentifierError(value, offset)
                self.take()
                arg = self.additive()
                self.expect(")")
                return Call(value, arg)
            if value not in self.vars:
                if value in FUNCTIONS:
                    raise ExprSyntaxError(f"expected '(' after function {value!r}", self.peek()[2])
                raise UnknownIdentifierError(value, offset)
            return Var(self.vars[value], value)
        if kind == "end":
            raise ExprSyntaxError("unexpected end of input", offset)
        raise ExprSyntaxError(f"unexpected token {value!r}", offset)


def parse(source: str, variables: Sequence[str]) -> Expression:
    """Parse ``source`` into an :class:`Expression` over ``variables``."""
    variables = tuple(variables)
    if len(set(variables)) != len(variables):
        raise ValueError("variable names must be distinct")
    for name in variables:
        if name in FUNCTIONS:
            raise ValueError(f"variable name {name!r} shadows a function")
    return Expression(_Parser(source, variables).parse(), variables)


def evaluate(e: Expression, point: Sequence[float]) -> float:
    return e(point)


def eval_jet2(
    e: Expression,
    point: Sequence[float],
    dir1: Sequence[float],
    dir2: Sequence[float],
) -> tuple[float, float, float, float]:
    """Value, D_dir1 e, D_dir2 e and D_dir1 D_dir2 e at ``point``, all exact."""
    k = len(e.variables)
    if not (len(point) == len(dir1) == len(dir2) == k):
        raise ValueError("point and directions must match the declared variables")
    seeds = np.column_stack([np.asarray(dir1, float), np.asarray(dir2, float)])
    env = [Jet.variable(point[i], seeds[i]) for i in range(k)]
    out = e.jet(env)
    if not isinstance(out, Jet):
        return float(out), 0.0, 0.0, 0.0
    vals = (float(out.v), float(out.g[0]), float(out.g[1]), float(out.h[0, 1]))
    _finite(np.array(vals))
    return vals


def jet_batch(e: Expression, points: np.ndarray, seeds: np.ndarray, order: int = 2) -> Jet:
    """Jet of ``e`` at a batch of points (P, k) along seed directions (k, d).

    Returns a :class:`Jet` with ``v`` (P,), ``g`` (P, d) and ``h`` (P, d, d).
    Constant expressions come back with zero derivative arrays.
    """
    points = np.asarray(points, dtype=float)
    seeds = np.asarray(seeds, dtype=float)
    P, k = points.shape
    d = seeds.shape[1]
    zero_h = np.zeros((P, d, d)) if order >= 2 else None
    env: list = [None] * k
    # jets are never mutated in place, so variables may share the zero Hessian
    for i in e.used_indices():
        g = np.empty((P, d))
        g[:] = seeds[i]
        env[i] = Jet(points[:, i], g, zero_h)
    out = e.jet(env)
    if not isinstance(out, Jet):
        v = np.full(P, float(out))
        h = np.zeros((P, d, d)) if order >= 2 else None
        out = Jet(v, np.zeros((P, d)), h)
    _finite(out.v)
    _finite(out.g)
    if out.h is not None:
        _finite(out.h)
    return out
