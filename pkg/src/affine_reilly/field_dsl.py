"""Scalar expression language over chart coordinates.

Expressions are parsed into an interned expression tree and differentiated
symbolically, so every derivative used by the geometry code is exact.
Evaluation is vectorized over arrays of points.

Grammar::

    expr     := term (("+" | "-") term)*
    term     := unary (("*" | "/") unary)*
    unary    := ("-" | "+") unary | power
    power    := atom ("^" exponent)?
    exponent := ["-" | "+"] INT | "(" ["-" | "+"] INT ")"
    atom     := NUMBER | "pi" | COORD | FUNC "(" expr ")" | "(" expr ")"
    COORD    := "x" INT            (1-based, at most the field dimension)
    FUNC     := exp | log | sin | cos | sinh | cosh | tanh | sqrt

``-x1^2`` parses as ``-(x1^2)``; exponents are integer literals only.
"""

from __future__ import annotations

import itertools
import math
import re
import threading
from typing import Callable, Iterable, Sequence

import numpy as np

MAX_ORDER = 3

FUNCTIONS = ("exp", "log", "sin", "cos", "sinh", "cosh", "tanh", "sqrt")


class DSLError(ValueError):
    """Base class for expression-language errors."""


class ParseError(DSLError):
    """Syntax error; ``offset`` is the byte offset into the UTF-8 source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset


class UnknownIdentifier(ParseError):
    pass


class CoordinateOutOfRange(ParseError):
    pass


class DomainError(DSLError, ArithmeticError):
    """Evaluation left the admissible set (log of nonpositive, division by zero...)."""


class DerivativeOrderError(DSLError):
    pass


# ---------------------------------------------------------------------------
# Expression nodes
# ---------------------------------------------------------------------------

_intern_lock = threading.Lock()
_intern_table: dict[tuple, "Expr"] = {}


class Expr:
    """Immutable, interned expression node.

    Structurally identical expressions are the same object, so identity
    doubles as equality and memoization by ``id`` is sound.
    """

    __slots__ = ("op", "args", "_key", "__weakref__")

    op: str
    args: tuple

    def __new__(cls, op: str, args: tuple):
        key = (op,) + tuple(id(a) if isinstance(a, Expr) else a for a in args)
        with _intern_lock:
            node = _intern_table.get(key)
            if node is None:
                node = object.__new__(cls)
                object.__setattr__(node, "op", op)
                object.__setattr__(node, "args", args)
                object.__setattr__(node, "_key", key)
                _intern_table[key] = node
        return node

    def __setattr__(self, name, value):
        raise AttributeError("Expr is immutable")

    def __reduce__(self):
        return (Expr, (self.op, self.args))

    # arithmetic sugar so library code can build expressions directly
    def __add__(self, other):
        return add(self, as_expr(other))

    def __radd__(self, other):
        return add(as_expr(other), self)

    def __sub__(self, other):
        return sub(self, as_expr(other))

    def __rsub__(self, other):
        return sub(as_expr(other), self)

    def __mul__(self, other):
        return mul(self, as_expr(other))

    def __rmul__(self, other):
        return mul(as_expr(other), self)

    def __truediv__(self, other):
        return div(self, as_expr(other))

    def __rtruediv__(self, other):
        return div(as_expr(other), self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, k):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        return power(self, int(k))

    def __repr__(self):
        return f"Expr({to_source(self)!r})"

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def value(self) -> float:
        if self.op != "const":
            raise ValueError("not a constant")
        return self.args[0]


def const(c: float) -> Expr:
    c = float(c)
    if c == 0.0:
        c = 0.0  # fold -0.0
    return Expr("const", (c,))


def var(k: int) -> Expr:
    """Coordinate x_{k+1} (``k`` is 0-based)."""
    return Expr("var", (int(k),))


ZERO = const(0.0)
ONE = const(1.0)


def as_expr(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, Field):
        return x.expr
    if isinstance(x, (int, float, np.integer, np.floating)):
        return const(x)
    raise TypeError(f"cannot convert {type(x).__name__} to Expr")


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if a is ZERO:
        return b
    if b is ZERO:
        return a
    if b.op == "neg":
        return sub(a, b.args[0])
    return Expr("add", (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if b is ZERO:
        return a
    if a is ZERO:
        return neg(b)
    if a is b:
        return ZERO
    if b.op == "neg":
        return add(a, b.args[0])
    return Expr("sub", (a, b))


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.value)
    if a.op == "neg":
        return a.args[0]
    return Expr("neg", (a,))


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if a is ZERO or b is ZERO:
        return ZERO
    if a is ONE:
        return b
    if b is ONE:
        return a
    if a.is_const and a.value == -1.0:
        return neg(b)
    if b.is_const and b.value == -1.0:
        return neg(a)
    if a.op == "neg" and b.op == "neg":
        return mul(a.args[0], b.args[0])
    if a.op == "neg":
        return neg(mul(a.args[0], b))
    if b.op == "neg":
        return neg(mul(a, b.args[0]))
    if b.is_const and not a.is_const:
        a, b = b, a
    return Expr("mul", (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if b is ONE:
        return a
    if a is ZERO:
        # b is still checked at evaluation time only through the full tree;
        # 0/b folds to 0 which is the mathematically correct value where b != 0
        return ZERO
    if a.is_const and b.is_const and b.value != 0.0:
        return const(a.value / b.value)
    if b.is_const and b.value != 0.0:
        return mul(const(1.0 / b.value), a)
    return Expr("div", (a, b))


def power(a: Expr, k: int) -> Expr:
    k = int(k)
    if k == 0:
        return ONE
    if k == 1:
        return a
    if a.is_const and (a.value != 0.0 or k > 0):
        return const(a.value ** k)
    if a.op == "pow":
        return power(a.args[0], a.args[1] * k)
    return Expr("pow", (a, k))


def call(name: str, a: Expr) -> Expr:
    if name not in FUNCTIONS:
        raise ValueError(f"unknown function {name!r}")
    if a.is_const:
        try:
            return const(_SCALAR_FUNCS[name](a.value))
        except (ValueError, OverflowError):
            pass  # leave unevaluated; evaluation reports the domain error
    return Expr(name, (a,))


_SCALAR_FUNCS: dict[str, Callable[[float], float]] = {
    "exp": math.exp,
    "log": math.log,
    "sin": math.sin,
    "cos": math.cos,
    "sinh": math.sinh,
    "cosh": math.cosh,
    "tanh": math.tanh,
    "sqrt": math.sqrt,
}


def exp(a) -> Expr:
    return call("exp", as_expr(a))


def log(a) -> Expr:
    return call("log", as_expr(a))


def sin(a) -> Expr:
    return call("sin", as_expr(a))


def cos(a) -> Expr:
    return call("cos", as_expr(a))


def sqrt(a) -> Expr:
    return call("sqrt", as_expr(a))


# ---------------------------------------------------------------------------
# Differentiation
# ---------------------------------------------------------------------------

_diff_lock = threading.Lock()
_diff_cache: dict[tuple[int, int], Expr] = {}


def diff(e: Expr, k: int) -> Expr:
    """Exact partial derivative of ``e`` with respect to coordinate ``k`` (0-based)."""
    key = (id(e), k)
    with _diff_lock:
        hit = _diff_cache.get(key)
    if hit is not None:
        return hit
    d = _diff(e, k)
    with _diff_lock:
        _diff_cache[key] = d
    return d


def _diff(e: Expr, k: int) -> Expr:
    op = e.op
    if op == "const":
        return ZERO
    if op == "var":
        return ONE if e.args[0] == k else ZERO
    if op == "add":
        return add(diff(e.args[0], k), diff(e.args[1], k))
    if op == "sub":
        return sub(diff(e.args[0], k), diff(e.args[1], k))
    if op == "neg":
        return neg(diff(e.args[0], k))
    if op == "mul":
        a, b = e.args
        return add(mul(diff(a, k), b), mul(a, diff(b, k)))
    if op == "div":
        a, b = e.args
        da, db = diff(a, k), diff(b, k)
        return sub(div(da, b), div(mul(a, db), power(b, 2)))
    if op == "pow":
        a, n = e.args
        return mul(mul(const(n), power(a, n - 1)), diff(a, k))
    (a,) = e.args
    da = diff(a, k)
    if da is ZERO:
        return ZERO
    if op == "exp":
        outer = e
    elif op == "log":
        return div(da, a)
    elif op == "sin":
        outer = cos(a)
    elif op == "cos":
        outer = neg(sin(a))
    elif op == "sinh":
        outer = call("cosh", a)
    elif op == "cosh":
        outer = call("sinh", a)
    elif op == "tanh":
        outer = sub(ONE, power(e, 2))
    elif op == "sqrt":
        return div(da, mul(const(2.0), e))
    else:  # pragma: no cover - node constructors reject anything else
        raise AssertionError(op)
    return mul(outer, da)


def substitute(e: Expr, mapping: dict[int, Expr]) -> Expr:
    """Replace coordinate ``k`` by ``mapping[k]``; unmapped coordinates stay."""
    memo: dict[int, Expr] = {}

    def walk(node: Expr) -> Expr:
        hit = memo.get(id(node))
        if hit is not None:
            return hit
        op = node.op
        if op == "const":
            out = node
        elif op == "var":
            out = mapping.get(node.args[0], node)
        elif op == "pow":
            out = power(walk(node.args[0]), node.args[1])
        elif op in ("add", "sub", "mul", "div"):
            a, b = (walk(x) for x in node.args)
            out = {"add": add, "sub": sub, "mul": mul, "div": div}[op](a, b)
        elif op == "neg":
            out = neg(walk(node.args[0]))
        else:
            out = call(op, walk(node.args[0]))
        memo[id(node)] = out
        return out

    return walk(e)


def max_var(e: Expr) -> int:
    """Largest 0-based coordinate index referenced, or -1."""
    seen: set[int] = set()
    best = -1
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if node.op == "var":
            best = max(best, node.args[0])
        else:
            stack.extend(a for a in node.args if isinstance(a, Expr))
    return best


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------

_BINARY = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def _evaluate(e: Expr, coords: Sequence[np.ndarray], memo: dict) -> np.ndarray:
    hit = memo.get(id(e))
    if hit is not None:
        return hit
    op = e.op
    if op == "const":
        out = np.float64(e.args[0])
    elif op == "var":
        out = coords[e.args[0]]
    elif op in _BINARY:
        out = _BINARY[op](_evaluate(e.args[0], coords, memo), _evaluate(e.args[1], coords, memo))
    elif op == "div":
        num = _evaluate(e.args[0], coords, memo)
        den = _evaluate(e.args[1], coords, memo)
        if np.any(den == 0.0):
            raise DomainError(f"division by zero in {to_source(e)}")
        out = num / den
    elif op == "neg":
        out = -_evaluate(e.args[0], coords, memo)
    elif op == "pow":
        base = _evaluate(e.args[0], coords, memo)
        n = e.args[1]
        if n < 0:
            if np.any(base == 0.0):
                raise DomainError(f"zero raised to negative power in {to_source(e)}")
            out = 1.0 / base ** (-n)
        else:
            out = base ** n
    else:
        a = _evaluate(e.args[0], coords, memo)
        if op == "log":
            if np.any(a <= 0.0):
                raise DomainError(f"log of nonpositive value in {to_source(e)}")
            out = np.log(a)
        elif op == "sqrt":
            if np.any(a < 0.0):
                raise DomainError(f"sqrt of negative value in {to_source(e)}")
            out = np.sqrt(a)
        else:
            with np.errstate(over="raise"):
                try:
                    out = getattr(np, op)(a)
                except FloatingPointError as exc:
                    raise DomainError(f"overflow in {to_source(e)}") from exc
    memo[id(e)] = out
    return out


def evaluate_many(exprs: Iterable[Expr], points: np.ndarray) -> list[np.ndarray]:
    """Evaluate several expressions at ``points`` (shape (N, n)) sharing subtrees."""
    pts = np.asarray(points, dtype=float)
    coords = [pts[:, k] for k in range(pts.shape[1])]
    memo: dict = {}
    n = pts.shape[0]
    out = []
    for e in exprs:
        v = _evaluate(e, coords, memo)
        out.append(np.broadcast_to(np.asarray(v, dtype=float), (n,)))
    return out


# ---------------------------------------------------------------------------
# Printing
# ---------------------------------------------------------------------------

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}


def to_source(e: Expr) -> str:
    """Render an expression in the input grammar; ``parse`` inverts it."""
    op = e.op
    if op == "const":
        v = e.args[0]
        if v == math.pi:
            return "pi"
        s = repr(float(v))
        return f"({s})" if v < 0 else s
    if op == "var":
        return f"x{e.args[0] + 1}"
    if op in ("add", "sub", "mul", "div"):
        a, b = e.args
        p = _PREC[op]
        sa = _wrap(a, p, right=False)
        sb = _wrap(b, p, right=True)
        sym = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}[op]
        return f"{sa}{sym}{sb}"
    if op == "neg":
        return f"-{_wrap(e.args[0], _PREC['neg'], right=True)}"
    if op == "pow":
        a, n = e.args
        base = to_source(a)
        if _PREC.get(a.op, 5) <= _PREC["pow"] or (a.is_const and a.value < 0):
            base = f"({base})"
        return f"{base}^{n}" if n >= 0 else f"{base}^({n})"
    return f"{op}({to_source(e.args[0])})"


def _wrap(e: Expr, parent: int, right: bool) -> str:
    s = to_source(e)
    p = _PREC.get(e.op, 5)
    if p < parent or (right and p == parent):
        return f"({s})"
    return s


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    data = src
    while True:
        while pos < len(data) and data[pos].isspace():
            pos += 1
        if pos >= len(data):
            break
        m = _TOKEN_RE.match(data, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {data[pos]!r}", _byte_offset(src, pos))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), _byte_offset(src, start)))
        pos = m.end()
    tokens.append(("end", "", _byte_offset(src, len(src))))
    return tokens


def _byte_offset(src: str, char_pos: int) -> int:
    return len(src[:char_pos].encode("utf-8"))


class _Parser:
    def __init__(self, src: str, dim: int):
        self.tokens = _tokenize(src)
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, text: str):
        kind, val, off = self.take()
        if val != text:
            found = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {text!r}, found {found}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            _, val, _ = self.take()
            rhs = self.term()
            e = add(e, rhs) if val == "+" else sub(e, rhs)
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            _, val, _ = self.take()
            rhs = self.unary()
            e = mul(e, rhs) if val == "*" else div(e, rhs)
        return e

    def unary(self) -> Expr:
        kind, val, _ = self.peek()
        if kind == "op" and val in ("-", "+"):
            self.take()
            inner = self.unary()
            return neg(inner) if val == "-" else inner
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, val, _ = self.peek()
        if kind == "op" and val == "^":
            self.take()
            return power(base, self.exponent())
        return base

    def exponent(self) -> int:
        kind, val, off = self.peek()
        paren = kind == "op" and val == "("
        if paren:
            self.take()
        sign = 1
        kind, val, off = self.peek()
        if kind == "op" and val in ("-", "+"):
            self.take()
            sign = -1 if val == "-" else 1
        kind, val, off = self.take()
        if kind != "num" or not val.isdigit():
            raise ParseError("exponent must be an integer literal", off)
        if paren:
            self.expect(")")
        return sign * int(val)

    def atom(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return const(float(val))
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        if kind == "id":
            if val == "pi":
                return const(math.pi)
            m = re.fullmatch(r"x([0-9]+)", val)
            if m:
                k = int(m.group(1))
                if not 1 <= k <= self.dim:
                    raise CoordinateOutOfRange(
                        f"coordinate {val} out of range for dimension {self.dim}", off
                    )
                return var(k - 1)
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return call(val, arg)
            raise UnknownIdentifier(f"unknown identifier {val!r}", off)
        found = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {found}", off)


# ---------------------------------------------------------------------------
# Field
# ---------------------------------------------------------------------------


def _canonical(multi_index: Sequence[int]) -> tuple[int, ...]:
    return tuple(sorted(int(i) for i in multi_index))


class Field:
    """A scalar function of ``dim`` chart coordinates with exact derivatives.

    Derivatives are built lazily and cached under a lock; the cache key is
    the sorted multi-index, so mixed partials are shared.
    """

    __slots__ = ("expr", "dim", "_cache", "_lock")

    def __init__(self, expr: Expr, dim: int):
        if dim < 1:
            raise ValueError("dimension must be positive")
        expr = as_expr(expr)
        if max_var(expr) >= dim:
            raise ValueError(f"expression uses x{max_var(expr) + 1} but dim={dim}")
        self.expr = expr
        self.dim = int(dim)
        self._cache: dict[tuple[int, ...], Expr] = {(): expr}
        self._lock = threading.Lock()

    def __repr__(self):
        return f"Field({to_source(self.expr)!r}, dim={self.dim})"

    def __str__(self):
        return to_source(self.expr)

    def __reduce__(self):
        return (parse, (to_source(self.expr), self.dim))

    def derivative_expr(self, multi_index: Sequence[int]) -> Expr:
        key = _canonical(multi_index)
        with self._lock:
            hit = self._cache.get(key)
        if hit is not None:
            return hit
        for k in key:
            if not 0 <= k < self.dim:
                raise IndexError(f"coordinate index {k} out of range")
        parent = self.derivative_expr(key[:-1])
        d = diff(parent, key[-1])
        with self._lock:
            self._cache[key] = d
        return d

    def derivative(self, multi_index: Sequence[int]) -> "Field":
        """Field of the partial derivative along ``multi_index`` (0-based, length <= 3)."""
        if len(multi_index) > MAX_ORDER:
            raise DerivativeOrderError(
                f"derivative order {len(multi_index)} exceeds {MAX_ORDER}"
            )
        return Field(self.derivative_expr(multi_index), self.dim)

    def __call__(self, *point) -> float:
        if len(point) == 1 and np.ndim(point[0]) == 1:
            point = tuple(point[0])
        return self.eval(point)

    def eval(self, point: Sequence[float]) -> float:
        pt = np.asarray(point, dtype=float).reshape(1, -1)
        self._check_points(pt)
        return float(evaluate_many([self.expr], pt)[0][0])

    def eval_many(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._check_points(pts)
        return np.array(evaluate_many([self.expr], pts)[0])

    def _check_points(self, pts: np.ndarray) -> None:
        if pts.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} coordinates, got {pts.shape[1]}")

    def jet(self, points: np.ndarray, order: int = 2) -> list[np.ndarray]:
        """Value and all partial derivatives up to ``order`` at ``points``.

        Returns ``[f, df, d2f, ...]`` with shapes ``(N,)``, ``(N, n)``,
        ``(N, n, n)``, ``(N, n, n, n)``; higher slots are fully symmetric.
        """
        if order > MAX_ORDER:
            raise DerivativeOrderError(f"derivative order {order} exceeds {MAX_ORDER}")
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        self._check_points(pts)
        n = self.dim
        keys: list[tuple[int, ...]] = []
        for r in range(order + 1):
            keys.extend(itertools.combinations_with_replacement(range(n), r))
        vals = evaluate_many([self.derivative_expr(k) for k in keys], pts)
        table = dict(zip(keys, vals))
        out = [np.array(table[()])]
        for r in range(1, order + 1):
            arr = np.empty((pts.shape[0],) + (n,) * r)
            for idx in itertools.product(range(n), repeat=r):
                arr[(slice(None),) + idx] = table[_canonical(idx)]
            out.append(arr)
        return out

    def compose(self, inner: Sequence["Field"]) -> "Field":
        """``self`` evaluated at the point map ``inner`` (one Field per coordinate)."""
        if len(inner) != self.dim:
            raise ValueError("composition needs one inner field per coordinate")
        dims = {f.dim for f in inner}
        if len(dims) != 1:
            raise ValueError("inner fields must share a dimension")
        mapping = {k: f.expr for k, f in enumerate(inner)}
        return Field(substitute(self.expr, mapping), dims.pop())

    def source(self) -> str:
        return to_source(self.expr)


def parse(src: str, dim: int) -> Field:
    """Parse ``src`` into a Field of ``dim`` coordinates."""
    if isinstance(src, bytes):
        src = src.decode("utf-8")
    return Field(_Parser(str(src), dim).parse(), dim)


def parse_expr(src: str, dim: int) -> Expr:
    return _Parser(str(src), dim).parse()


def field(x, dim: int) -> Field:
    """Coerce a string, number, Expr or Field into a Field of ``dim`` coordinates."""
    if isinstance(x, Field):
        if x.dim != dim:
            raise ValueError(f"field has dim {x.dim}, expected {dim}")
        return x
    if isinstance(x, str):
        return parse(x, dim)
    return Field(as_expr(x), dim)


def derivative(f: Field, multi_index: Sequence[int]) -> Field:
    return f.derivative(multi_index)


def eval_field(f: Field, point: Sequence[float]) -> float:
    return f.eval(point)


# ---------------------------------------------------------------------------
# Finite-difference oracle
# ---------------------------------------------------------------------------

# 4th-order central stencils: offsets and weights for 1st/2nd/3rd derivatives
_STENCILS = {
    1: ((-2, -1, 1, 2), (1 / 12, -8 / 12, 8 / 12, -1 / 12)),
    2: ((-2, -1, 0, 1, 2), (-1 / 12, 16 / 12, -30 / 12, 16 / 12, -1 / 12)),
    3: ((-3, -2, -1, 1, 2, 3), (1 / 8, -1, 13 / 8, -13 / 8, 1, -1 / 8)),
}


def fd_derivative(
    f: Field, point: Sequence[float], multi_index: Sequence[int], h: float
) -> float:
    """Central finite difference of ``f`` along ``multi_index`` (nested 1-D stencils)."""
    counts: dict[int, int] = {}
    for k in multi_index:
        counts[int(k)] = counts.get(int(k), 0) + 1
    base = np.asarray(point, dtype=float)
    axes = sorted(counts)
    grids = []
    for k in axes:
        offs, wts = _STENCILS[counts[k]]
        grids.append([(k, o, w / h ** counts[k]) for o, w in zip(offs, wts)])
    samples = []
    weights = []
    for combo in itertools.product(*grids):
        p = base.copy()
        w = 1.0
        for k, o, wk in combo:
            p[k] += o * h
            w *= wk
        samples.append(p)
        weights.append(w)
    vals = f.eval_many(np.array(samples))
    return float(math.fsum(w * v for w, v in zip(weights, vals)))


def fd_check(f: Field, point: Sequence[float], order: int, h: float) -> float:
    """Largest |exact - finite difference| over all multi-indices of ``order``."""
    if not 1 <= order <= MAX_ORDER:
        raise DerivativeOrderError(f"order must be in 1..{MAX_ORDER}")
    worst = 0.0
    for idx in itertools.combinations_with_replacement(range(f.dim), order):
        exact = f.derivative(idx).eval(point)
        approx = fd_derivative(f, point, idx, h)
        worst = max(worst, abs(exact - approx))
    return worst
