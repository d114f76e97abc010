"""Hash-consed bit-vector expressions.

Every node is interned, so two structurally equal expressions are the same
Python object. Constructors fold constants eagerly, which lets the same code
path serve concrete execution (everything folds to ``const``) and symbolic
execution (terms are built for the solver).
"""
from __future__ import annotations

import weakref
from typing import Iterable, Mapping

import numpy as np

MAX_WIDTH = 64

BINARY_OPS = ("add", "sub", "mul", "and", "or", "xor", "shl", "lshr", "ashr")
COMPARE_OPS = ("ult", "slt", "eq")
OPS = BINARY_OPS + COMPARE_OPS + ("not", "ite", "sext", "zext", "extract", "const", "var")


class BvError(ValueError):
    pass


class WidthError(BvError):
    pass


class UnboundVariableError(BvError, KeyError):
    pass


def mask(width: int) -> int:
    return (1 << width) - 1


def to_signed(value: int, width: int) -> int:
    value &= mask(width)
    return value - (1 << width) if value >> (width - 1) else value


class Expr:
    """An interned bit-vector node. Compare with :func:`eq`, never ``==``."""

    __slots__ = ("op", "width", "args", "params", "_hash", "__weakref__")

    op: str
    width: int
    args: tuple["Expr", ...]
    params: tuple

    def __hash__(self):
        return self._hash

    def __repr__(self):
        if self.op == "const":
            return f"{self.params[0]:#x}:{self.width}"
        if self.op == "var":
            return f"{self.params[0]}:{self.width}"
        inner = ", ".join(repr(a) for a in self.args)
        extra = "".join(f", {p}" for p in self.params)
        return f"{self.op}({inner}{extra}):{self.width}"

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def value(self) -> int:
        if self.op != "const":
            raise BvError(f"not a constant: {self!r}")
        return self.params[0]

    @property
    def name(self) -> str:
        if self.op != "var":
            raise BvError(f"not a variable: {self!r}")
        return self.params[0]

    def _coerce(self, other) -> "Expr":
        return other if isinstance(other, Expr) else const(other, self.width)

    def __add__(self, other):
        return add(self, self._coerce(other))

    def __radd__(self, other):
        return add(self._coerce(other), self)

    def __sub__(self, other):
        return sub(self, self._coerce(other))

    def __rsub__(self, other):
        return sub(self._coerce(other), self)

    def __mul__(self, other):
        return mul(self, self._coerce(other))

    def __and__(self, other):
        return and_(self, self._coerce(other))

    def __rand__(self, other):
        return and_(self._coerce(other), self)

    def __or__(self, other):
        return or_(self, self._coerce(other))

    def __ror__(self, other):
        return or_(self._coerce(other), self)

    def __xor__(self, other):
        return xor(self, self._coerce(other))

    def __rxor__(self, other):
        return xor(self._coerce(other), self)

    def __invert__(self):
        return not_(self)

    def __lshift__(self, other):
        return shl(self, self._coerce(other))

    def __rshift__(self, other):
        return lshr(self, self._coerce(other))


_table: "weakref.WeakValueDictionary[tuple, Expr]" = weakref.WeakValueDictionary()


def _make(op: str, width: int, args: tuple = (), params: tuple = ()) -> Expr:
    key = (op, width, params, args)
    node = _table.get(key)
    if node is None:
        node = object.__new__(Expr)
        node.op, node.width, node.args, node.params = op, width, args, params
        node._hash = hash(key)
        _table[key] = node
    return node


def _check_width(width: int) -> None:
    if not isinstance(width, int) or not 1 <= width <= MAX_WIDTH:
        raise WidthError(f"bit-width must be in 1..{MAX_WIDTH}, got {width!r}")


def apply_op(op: str, width: int, params: tuple, values: list[int], widths: list[int]) -> int:
    """Concrete semantics of one node; shared by folding and :func:`eval_expr`."""
    m = mask(width)
    if op == "add":
        return (values[0] + values[1]) & m
    if op == "sub":
        return (values[0] - values[1]) & m
    if op == "mul":
        return (values[0] * values[1]) & m
    if op == "and":
        return values[0] & values[1]
    if op == "or":
        return values[0] | values[1]
    if op == "xor":
        return values[0] ^ values[1]
    if op == "not":
        return ~values[0] & m
    if op == "shl":
        return (values[0] << values[1]) & m if values[1] < width else 0
    if op == "lshr":
        return values[0] >> values[1] if values[1] < width else 0
    if op == "ashr":
        amount = min(values[1], width - 1)
        return (to_signed(values[0], width) >> amount) & m
    if op == "ult":
        return int(values[0] < values[1])
    if op == "slt":
        return int(to_signed(values[0], widths[0]) < to_signed(values[1], widths[1]))
    if op == "eq":
        return int(values[0] == values[1])
    if op == "ite":
        return values[1] if values[0] else values[2]
    if op == "zext":
        return values[0]
    if op == "sext":
        return to_signed(values[0], widths[0]) & m
    if op == "extract":
        hi, lo = params
        return (values[0] >> lo) & mask(hi - lo + 1)
    raise BvError(f"unsupported operator {op!r}")


def _fold(op: str, width: int, args: tuple, params: tuple = ()) -> Expr:
    if all(a.op == "const" for a in args):
        values = [a.params[0] for a in args]
        return const(apply_op(op, width, params, values, [a.width for a in args]), width)
    return _make(op, width, args, params)


def const(value: int, width: int) -> Expr:
    _check_width(width)
    return _make("const", width, (), (value & mask(width),))


def var(name: str, width: int) -> Expr:
    _check_width(width)
    return _make("var", width, (), (name,))


def _binary(op: str, a: Expr, b: Expr) -> Expr:
    if a.width != b.width:
        raise WidthError(f"{op}: operand widths differ ({a.width} vs {b.width})")
    return _fold(op, a.width, (a, b))


def add(a: Expr, b: Expr) -> Expr:
    if b.is_const and b.value == 0:
        return a
    if a.is_const and a.value == 0:
        return b
    return _binary("add", a, b)


def sub(a: Expr, b: Expr) -> Expr:
    if b.is_const and b.value == 0:
        return a
    return _binary("sub", a, b)


def mul(a: Expr, b: Expr) -> Expr:
    # x * sext(y) == x * zext(y) - (msb(y) ? x << w : 0): a narrower multiplier for solvers
    for x, y in ((a, b), (b, a)):
        if y.op == "sext" and x.width == y.width and not x.is_const and not y.is_const:
            narrow = y.args[0]
            w = narrow.width
            product = mul(x, zext(narrow, y.width))
            msb = extract(narrow, w - 1, w - 1)
            return sub(product, ite(msb, shl(x, const(w, y.width)), const(0, y.width)))
    return _binary("mul", a, b)


def and_(a: Expr, b: Expr) -> Expr:
    for x, y in ((a, b), (b, a)):
        if x.is_const and x.width == y.width:
            if x.value == 0:
                return x
            if x.value == mask(x.width):
                return y
    return _binary("and", a, b)


def or_(a: Expr, b: Expr) -> Expr:
    for x, y in ((a, b), (b, a)):
        if x.is_const and x.width == y.width:
            if x.value == 0:
                return y
            if x.value == mask(x.width):
                return x
    return _binary("or", a, b)


def xor(a: Expr, b: Expr) -> Expr:
    if b.is_const and b.value == 0:
        return a
    if a.is_const and a.value == 0:
        return b
    return _binary("xor", a, b)


def shl(a: Expr, b: Expr) -> Expr:
    return _binary("shl", a, b)


def lshr(a: Expr, b: Expr) -> Expr:
    return _binary("lshr", a, b)


def ashr(a: Expr, b: Expr) -> Expr:
    return _binary("ashr", a, b)


def not_(a: Expr) -> Expr:
    if a.op == "not":
        return a.args[0]
    return _fold("not", a.width, (a,))


def _compare(op: str, a: Expr, b: Expr) -> Expr:
    if a.width != b.width:
        raise WidthError(f"{op}: operand widths differ ({a.width} vs {b.width})")
    if a is b:
        return const(int(op == "eq"), 1)
    return _fold(op, 1, (a, b))


def ult(a: Expr, b: Expr) -> Expr:
    return _compare("ult", a, b)


def slt(a: Expr, b: Expr) -> Expr:
    return _compare("slt", a, b)


def eq(a: Expr, b: Expr) -> Expr:
    return _compare("eq", a, b)


def ite(cond: Expr, then: Expr, other: Expr) -> Expr:
    if cond.width != 1:
        raise WidthError("ite condition must be 1 bit wide")
    if then.width != other.width:
        raise WidthError(f"ite: branch widths differ ({then.width} vs {other.width})")
    if cond.is_const:
        return then if cond.value else other
    if then is other:
        return then
    return _make("ite", then.width, (cond, then, other))


def sext(a: Expr, width: int) -> Expr:
    _check_width(width)
    if width < a.width:
        raise WidthError(f"sign-extend target {width} narrower than source {a.width}")
    if width == a.width:
        return a
    if a.op == "sext":
        return sext(a.args[0], width)
    return _fold("sext", width, (a,))


def zext(a: Expr, width: int) -> Expr:
    _check_width(width)
    if width < a.width:
        raise WidthError(f"zero-extend target {width} narrower than source {a.width}")
    if width == a.width:
        return a
    return _fold("zext", width, (a,))


def extract(a: Expr, hi: int, lo: int) -> Expr:
    if not 0 <= lo <= hi < a.width:
        raise WidthError(f"extract [{hi}:{lo}] out of range for width {a.width}")
    if lo == 0 and hi == a.width - 1:
        return a
    return _fold("extract", hi - lo + 1, (a,), (hi, lo))


# 1-bit boolean helpers

TRUE = const(1, 1)
FALSE = const(0, 1)


def all_of(terms: Iterable[Expr]) -> Expr:
    out = TRUE
    for t in terms:
        out = and_(out, t)
    return out


def any_of(terms: Iterable[Expr]) -> Expr:
    out = FALSE
    for t in terms:
        out = or_(out, t)
    return out


def implies(a: Expr, b: Expr) -> Expr:
    return or_(not_(a), b)


def ne(a: Expr, b: Expr) -> Expr:
    return not_(eq(a, b))


def uge(a: Expr, b: Expr) -> Expr:
    return not_(ult(a, b))


def postorder(roots: Iterable[Expr]) -> list[Expr]:
    """Distinct nodes reachable from ``roots``, children before parents."""
    seen: set[int] = set()
    order: list[Expr] = []
    for root in roots:
        if id(root) in seen:
            continue
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for child in reversed(node.args):
                if id(child) not in seen:
                    stack.append((child, False))
    return order


def variables(*roots: Expr) -> dict[str, int]:
    """Map of variable name to width for every variable under ``roots``."""
    found: dict[str, int] = {}
    for node in postorder(roots):
        if node.op == "var":
            name = node.params[0]
            if found.setdefault(name, node.width) != node.width:
                raise WidthError(f"variable {name!r} used at two widths")
    return found


def eval_expr(expr: Expr, env: Mapping[str, int]) -> int:
    """Evaluate ``expr`` with every variable bound by ``env``."""
    values: dict[int, int] = {}
    for node in postorder([expr]):
        if node.op == "const":
            values[id(node)] = node.params[0]
        elif node.op == "var":
            name = node.params[0]
            if name not in env:
                raise UnboundVariableError(name)
            value = env[name]
            if not 0 <= value <= mask(node.width):
                raise WidthError(f"value {value:#x} for {name!r} does not fit {node.width} bits")
            values[id(node)] = value
        else:
            values[id(node)] = apply_op(
                node.op, node.width, node.params,
                [values[id(a)] for a in node.args], [a.width for a in node.args],
            )
    return values[id(expr)]


def _signed_vec(v: np.ndarray, width: int) -> np.ndarray:
    if width == 64:
        return v.view(np.int64)
    sign = np.uint64(1 << (width - 1))
    return (v ^ sign).astype(np.int64) - np.int64(1 << (width - 1))


def _apply_vec(op: str, width: int, params: tuple, v: list[np.ndarray], widths: list[int]) -> np.ndarray:
    m = np.uint64(mask(width))
    if op in ("add", "sub", "mul"):
        with np.errstate(over="ignore"):
            raw = v[0] + v[1] if op == "add" else v[0] - v[1] if op == "sub" else v[0] * v[1]
        return raw & m
    if op == "and":
        return v[0] & v[1]
    if op == "or":
        return v[0] | v[1]
    if op == "xor":
        return v[0] ^ v[1]
    if op == "not":
        return ~v[0] & m
    if op in ("shl", "lshr", "ashr"):
        wide = v[1] >= np.uint64(width)
        amount = np.minimum(v[1], np.uint64(width - 1))
        if op == "shl":
            return np.where(wide, np.uint64(0), (v[0] << amount) & m)
        if op == "lshr":
            return np.where(wide, np.uint64(0), v[0] >> amount)
        return (_signed_vec(v[0], width) >> amount.astype(np.int64)).astype(np.uint64) & m
    if op == "ult":
        return (v[0] < v[1]).astype(np.uint64)
    if op == "slt":
        return (_signed_vec(v[0], widths[0]) < _signed_vec(v[1], widths[1])).astype(np.uint64)
    if op == "eq":
        return (v[0] == v[1]).astype(np.uint64)
    if op == "ite":
        return np.where(v[0] != 0, v[1], v[2])
    if op == "zext":
        return v[0]
    if op == "sext":
        return _signed_vec(v[0], widths[0]).astype(np.uint64) & m
    if op == "extract":
        hi, lo = params
        return (v[0] >> np.uint64(lo)) & np.uint64(mask(hi - lo + 1))
    raise BvError(f"unsupported operator {op!r}")


def eval_batch(expr: Expr, env: Mapping[str, np.ndarray], size: int | None = None) -> np.ndarray:
    """Vectorized :func:`eval_expr`: every variable is bound to a ``uint64`` array of length ``size``.

    ``size`` defaults to the length of the bound arrays (1 when there are none).
    """
    arrays = {k: np.asarray(a, dtype=np.uint64) for k, a in env.items()}
    n = size if size is not None else len(next(iter(arrays.values()))) if arrays else 1
    values: dict[int, np.ndarray] = {}
    for node in postorder([expr]):
        if node.op == "const":
            values[id(node)] = np.full(n, node.params[0], dtype=np.uint64)
        elif node.op == "var":
            name = node.params[0]
            if name not in arrays:
                raise UnboundVariableError(name)
            a = arrays[name]
            if len(a) != n or np.any(a > np.uint64(mask(node.width))):
                raise WidthError(f"values for {name!r} must be {n} items of {node.width} bits")
            values[id(node)] = a
        else:
            values[id(node)] = _apply_vec(node.op, node.width, node.params,
                                          [values[id(a)] for a in node.args], [a.width for a in node.args])
    return values[id(expr)]


def substitute(expr: Expr, mapping: Mapping[str, Expr]) -> Expr:
    """Replace variables by expressions, re-folding on the way up."""
    out: dict[int, Expr] = {}
    for node in postorder([expr]):
        if node.op == "var":
            repl = mapping.get(node.params[0], node)
            if repl.width != node.width:
                raise WidthError(f"substitution for {node.params[0]!r} has width {repl.width}, expected {node.width}")
            out[id(node)] = repl
        elif node.op == "const":
            out[id(node)] = node
        else:
            out[id(node)] = rebuild(node, [out[id(a)] for a in node.args])
    return out[id(expr)]


_BUILDERS = {
    "add": add, "sub": sub, "mul": mul, "and": and_, "or": or_, "xor": xor,
    "shl": shl, "lshr": lshr, "ashr": ashr, "ult": ult, "slt": slt, "eq": eq,
}


def rebuild(node: Expr, args: list[Expr]) -> Expr:
    op = node.op
    if op in _BUILDERS:
        return _BUILDERS[op](*args)
    if op == "not":
        return not_(args[0])
    if op == "ite":
        return ite(*args)
    if op == "sext":
        return sext(args[0], node.width)
    if op == "zext":
        return zext(args[0], node.width)
    if op == "extract":
        return extract(args[0], *node.params)
    raise BvError(f"cannot rebuild {op!r}")


def select(index: Expr, items: list[Expr]) -> Expr:
    """``items[index]`` as an ite chain; out-of-range indices yield the last item."""
    out = items[-1]
    for i in range(len(items) - 2, -1, -1):
        out = ite(eq(index, const(i, index.width)), items[i], out)
    return out
