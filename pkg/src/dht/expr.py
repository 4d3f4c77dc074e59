"""Immutable expression trees over mesh sequences, time and parameters.

Leaves are constants (exact ``Fraction`` or ``float``), named parameters,
the time symbol ``t`` and indexed sequence symbols such as ``q1[+1]``
(component 1 of ``q`` one mesh point ahead).  Interior nodes are n-ary
sums and products, powers, ``ln`` and ``exp``.  Negation and quotients are
spelled with products and ``-1`` powers.

Every node hashes once and compares structurally, so trees can be used as
dictionary keys by the normalizer and shared freely between threads.
"""
from __future__ import annotations

import math
from fractions import Fraction
from numbers import Rational
from typing import Callable, Iterable, Mapping

SEQUENCE_BASES = ("q", "p", "lam", "u")
DEFAULT_WINDOW = 2


class DomainError(ArithmeticError):
    """Numeric evaluation left the domain of ``ln``, a root or a quotient."""


class UnboundSymbolError(KeyError):
    pass


def _as_number(value):
    if isinstance(value, bool):
        raise TypeError("booleans are not expression constants")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, Rational):
        return Fraction(value)
    if isinstance(value, float):
        return value
    raise TypeError(f"cannot build a constant from {value!r}")


class Expr:
    __slots__ = ("_hash",)

    def __init_subclass__(cls, **kw):
        super().__init_subclass__(**kw)
        # defining __eq__ would otherwise drop the cached hash
        cls.__hash__ = Expr.__hash__

    # arithmetic sugar; results are raw (unnormalized) trees
    def __add__(self, other):
        return Add((self, wrap(other)))

    def __radd__(self, other):
        return Add((wrap(other), self))

    def __sub__(self, other):
        return Add((self, -wrap(other)))

    def __rsub__(self, other):
        return Add((wrap(other), -self))

    def __mul__(self, other):
        return Mul((self, wrap(other)))

    def __rmul__(self, other):
        return Mul((wrap(other), self))

    def __truediv__(self, other):
        return Mul((self, Pow(wrap(other), MINUS_ONE)))

    def __rtruediv__(self, other):
        return Mul((wrap(other), Pow(self, MINUS_ONE)))

    def __pow__(self, other):
        return Pow(self, wrap(other))

    def __rpow__(self, other):
        return Pow(wrap(other), self)

    def __neg__(self):
        return Mul((MINUS_ONE, self))

    def __hash__(self):
        return self._hash

    def __repr__(self):
        from .printing import to_text

        return f"Expr({to_text(self)!r})"

    def __str__(self):
        from .printing import to_text

        return to_text(self)

    @property
    def children(self) -> tuple:
        return ()

    def rebuild(self, children):
        return self


class Const(Expr):
    __slots__ = ("value",)

    def __init__(self, value):
        value = _as_number(value)
        self.value = value
        self._hash = hash(("const", value))

    def __eq__(self, other):
        return (
            type(other) is Const
            and type(self.value) is type(other.value)
            and self.value == other.value
        )

    @property
    def is_exact(self) -> bool:
        return isinstance(self.value, Fraction)


class Symbol(Expr):
    """Base for leaves that are looked up in a point."""

    __slots__ = ()

    @property
    def name(self) -> str:
        raise NotImplementedError


class Param(Symbol):
    __slots__ = ("_name",)

    def __init__(self, name: str):
        self._name = name
        self._hash = hash(("param", name))

    @property
    def name(self) -> str:
        return self._name

    def __eq__(self, other):
        return type(other) is Param and other._name == self._name


class Time(Symbol):
    __slots__ = ()

    def __init__(self):
        self._hash = hash(("time",))

    @property
    def name(self) -> str:
        return "t"

    def __eq__(self, other):
        return type(other) is Time


class Seq(Symbol):
    """Sequence value ``base^index`` at mesh offset ``shift`` from ``t``."""

    __slots__ = ("base", "index", "shift")

    def __init__(self, base: str, index: int, shift: int = 0):
        if base not in SEQUENCE_BASES:
            raise ValueError(f"unknown sequence base {base!r}")
        if index < 1:
            raise ValueError("component indices start at 1")
        self.base = base
        self.index = int(index)
        self.shift = int(shift)
        self._hash = hash(("seq", base, self.index, self.shift))

    @property
    def name(self) -> str:
        return f"{self.base}{self.index}[{_fmt_shift(self.shift)}]"

    def shifted(self, k: int) -> "Seq":
        return Seq(self.base, self.index, self.shift + k)

    def __eq__(self, other):
        return (
            type(other) is Seq
            and other.base == self.base
            and other.index == self.index
            and other.shift == self.shift
        )


def _fmt_shift(k: int) -> str:
    return f"+{k}" if k > 0 else str(k)


class Add(Expr):
    __slots__ = ("args",)

    def __init__(self, args: Iterable[Expr]):
        self.args = tuple(args)
        self._hash = hash(("add", self.args))

    @property
    def children(self):
        return self.args

    def rebuild(self, children):
        return Add(children)

    def __eq__(self, other):
        return type(other) is Add and self._hash == other._hash and self.args == other.args


class Mul(Expr):
    __slots__ = ("args",)

    def __init__(self, args: Iterable[Expr]):
        self.args = tuple(args)
        self._hash = hash(("mul", self.args))

    @property
    def children(self):
        return self.args

    def rebuild(self, children):
        return Mul(children)

    def __eq__(self, other):
        return type(other) is Mul and self._hash == other._hash and self.args == other.args


class Pow(Expr):
    __slots__ = ("base", "exponent")

    def __init__(self, base: Expr, exponent: Expr):
        self.base = base
        self.exponent = exponent
        self._hash = hash(("pow", base, exponent))

    @property
    def children(self):
        return (self.base, self.exponent)

    def rebuild(self, children):
        return Pow(*children)

    def __eq__(self, other):
        return (
            type(other) is Pow
            and self._hash == other._hash
            and self.base == other.base
            and self.exponent == other.exponent
        )


class Ln(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg
        self._hash = hash(("ln", arg))

    @property
    def children(self):
        return (self.arg,)

    def rebuild(self, children):
        return Ln(children[0])

    def __eq__(self, other):
        return type(other) is Ln and self._hash == other._hash and self.arg == other.arg


class Exp(Expr):
    __slots__ = ("arg",)

    def __init__(self, arg: Expr):
        self.arg = arg
        self._hash = hash(("exp", arg))

    @property
    def children(self):
        return (self.arg,)

    def rebuild(self, children):
        return Exp(children[0])

    def __eq__(self, other):
        return type(other) is Exp and self._hash == other._hash and self.arg == other.arg


ZERO = Const(0)
ONE = Const(1)
MINUS_ONE = Const(-1)
T = Time()
H = Param("h")
BETA = Param("beta")


def wrap(value) -> Expr:
    if isinstance(value, Expr):
        return value
    return Const(value)


def q(i: int, k: int = 0) -> Seq:
    return Seq("q", i, k)


def p(i: int, k: int = 0) -> Seq:
    return Seq("p", i, k)


def lam(i: int, k: int = 0) -> Seq:
    return Seq("lam", i, k)


def u(i: int, k: int = 0) -> Seq:
    return Seq("u", i, k)


def ln(e) -> Expr:
    return Ln(wrap(e))


def exp(e) -> Expr:
    return Exp(wrap(e))


def add(*terms) -> Expr:
    terms = [wrap(x) for x in terms]
    if not terms:
        return ZERO
    return terms[0] if len(terms) == 1 else Add(terms)


def mul(*factors) -> Expr:
    factors = [wrap(x) for x in factors]
    if not factors:
        return ONE
    return factors[0] if len(factors) == 1 else Mul(factors)


# ---------------------------------------------------------------------------
# traversal


def walk(e: Expr):
    stack = [e]
    while stack:
        node = stack.pop()
        yield node
        stack.extend(node.children)


def symbols(e: Expr) -> frozenset:
    return frozenset(n for n in walk(e) if isinstance(n, Symbol))


def sequence_symbols(e: Expr) -> frozenset:
    return frozenset(n for n in walk(e) if isinstance(n, Seq))


def has_float(e: Expr) -> bool:
    return any(isinstance(n, Const) and not n.is_exact for n in walk(e))


def map_leaves(e: Expr, fn: Callable[[Expr], Expr]) -> Expr:
    """Rebuild ``e`` bottom-up with every leaf replaced by ``fn(leaf)``."""
    memo: dict = {}

    def go(node):
        hit = memo.get(node)
        if hit is not None:
            return hit
        if node.children:
            kids = tuple(go(c) for c in node.children)
            out = node if kids == node.children else node.rebuild(kids)
        else:
            out = fn(node)
        memo[node] = out
        return out

    return go(e)


def substitute_raw(e: Expr, bindings: Mapping[Expr, Expr]) -> Expr:
    """Simultaneous replacement of symbols, without normalizing."""
    if not bindings:
        return e
    bindings = {k: wrap(v) for k, v in bindings.items()}
    return map_leaves(e, lambda leaf: bindings.get(leaf, leaf))


def substitute(e: Expr, bindings: Mapping[Expr, Expr]) -> Expr:
    from .normalize import normalize

    return normalize(substitute_raw(e, bindings))


# ---------------------------------------------------------------------------
# differentiation


def diff(e: Expr, s: Symbol) -> Expr:
    """Exact partial derivative with respect to one symbol, normalized.

    Sequence symbols at different shifts are independent variables, so
    ``diff(q1[+1], q1[0])`` is zero.
    """
    from .normalize import normalize

    return normalize(diff_raw(e, s))


def diff_raw(e: Expr, s: Symbol) -> Expr:
    memo: dict = {}
    return _d(e, s, memo)


def _depends(e: Expr, s: Symbol) -> bool:
    return any(n == s for n in walk(e))


def _d(e: Expr, s: Symbol, memo: dict) -> Expr:
    hit = memo.get(e)
    if hit is not None:
        return hit
    if isinstance(e, Symbol):
        out = ONE if e == s else ZERO
    elif isinstance(e, Const):
        out = ZERO
    elif not _depends(e, s):
        out = ZERO
    elif isinstance(e, Add):
        out = Add(tuple(_d(a, s, memo) for a in e.args))
    elif isinstance(e, Mul):
        terms = []
        for i, a in enumerate(e.args):
            da = _d(a, s, memo)
            if da == ZERO:
                continue
            terms.append(Mul(e.args[:i] + (da,) + e.args[i + 1 :]))
        out = Add(tuple(terms)) if terms else ZERO
    elif isinstance(e, Pow):
        b, x = e.base, e.exponent
        if isinstance(x, Const) or not _depends(x, s):
            out = Mul((x, Pow(b, Add((x, MINUS_ONE))), _d(b, s, memo)))
        else:
            # b^x = exp(x ln b)
            out = Mul((e, _d(Mul((x, Ln(b))), s, memo)))
    elif isinstance(e, Ln):
        out = Mul((Pow(e.arg, MINUS_ONE), _d(e.arg, s, memo)))
    elif isinstance(e, Exp):
        out = Mul((e, _d(e.arg, s, memo)))
    else:  # pragma: no cover
        raise TypeError(type(e))
    memo[e] = out
    return out


# ---------------------------------------------------------------------------
# numeric evaluation


def _ln(x):
    if x <= 0:
        raise DomainError(f"ln of non-positive value {x!r}")
    return math.log(x)


def _exp(x):
    try:
        return math.exp(x)
    except OverflowError as err:
        raise DomainError(f"exp overflow at {x!r}") from err


def _pow(b, x):
    try:
        if b == 0 and x < 0:
            raise DomainError("division by zero")
        if b < 0 and x != int(x):
            raise DomainError(f"non-integer power {x!r} of negative base {b!r}")
        out = b**x
    except OverflowError as err:
        raise DomainError("power overflow") from err
    except ZeroDivisionError as err:
        raise DomainError("division by zero") from err
    if isinstance(out, complex):  # pragma: no cover - guarded above
        raise DomainError("complex power")
    return out


def _point_lookup(point: Mapping) -> Callable[[Symbol], float]:
    def look(sym):
        try:
            return point[sym]
        except KeyError:
            pass
        try:
            return point[sym.name]
        except KeyError:
            raise UnboundSymbolError(f"no value for symbol {sym.name}") from None

    return look


def evaluate(e: Expr, point: Mapping) -> float:
    """Evaluate ``e`` at ``point`` (keys are symbols or their printed names).

    Raises :class:`UnboundSymbolError` when a symbol has no value and
    :class:`DomainError` outside the domain of ``ln``, roots or quotients.
    """
    look = _point_lookup(point)
    memo: dict = {}

    def go(node):
        hit = memo.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            out = float(node.value)
        elif isinstance(node, Symbol):
            out = float(look(node))
        elif isinstance(node, Add):
            out = math.fsum(go(a) for a in node.args)
        elif isinstance(node, Mul):
            out = 1.0
            for a in node.args:
                out *= go(a)
        elif isinstance(node, Pow):
            x = node.exponent
            if isinstance(x, Const) and isinstance(x.value, Fraction) and x.value.denominator == 1:
                out = _pow(go(node.base), int(x.value))
            else:
                out = _pow(go(node.base), go(x))
        elif isinstance(node, Ln):
            out = _ln(go(node.arg))
        elif isinstance(node, Exp):
            out = _exp(go(node.arg))
        else:  # pragma: no cover
            raise TypeError(type(node))
        memo[node] = out
        return out

    return go(e)


def compile_exprs(exprs: Iterable[Expr], args: Iterable[Symbol]):
    """Compile expressions into one Python function of positional floats.

    The returned function maps ``(*values_of_args)`` to a tuple of floats.
    Symbols not listed in ``args`` must not occur.
    """
    exprs = list(exprs)
    args = list(args)
    names = {a: f"a{i}" for i, a in enumerate(args)}
    lines = []
    cache: dict = {}
    counter = [0]

    def emit(node):
        hit = cache.get(node)
        if hit is not None:
            return hit
        if isinstance(node, Const):
            code = repr(float(node.value))
        elif isinstance(node, Symbol):
            try:
                code = names[node]
            except KeyError:
                raise UnboundSymbolError(f"no argument slot for {node.name}") from None
        elif isinstance(node, Add):
            code = "(" + " + ".join(emit(a) for a in node.args) + ")"
        elif isinstance(node, Mul):
            code = "(" + " * ".join(emit(a) for a in node.args) + ")"
        elif isinstance(node, Pow):
            x = node.exponent
            if isinstance(x, Const) and isinstance(x.value, Fraction) and x.value.denominator == 1:
                code = f"_pow({emit(node.base)}, {int(x.value)})"
            else:
                code = f"_pow({emit(node.base)}, {emit(x)})"
        elif isinstance(node, Ln):
            code = f"_ln({emit(node.arg)})"
        elif isinstance(node, Exp):
            code = f"_exp({emit(node.arg)})"
        else:  # pragma: no cover
            raise TypeError(type(node))
        if node.children:
            var = f"v{counter[0]}"
            counter[0] += 1
            lines.append(f"    {var} = {code}")
            code = var
        cache[node] = code
        return code

    outs = [emit(e) for e in exprs]
    src = "def _f({}):\n{}\n    return ({},)\n".format(
        ", ".join(names[a] for a in args),
        "\n".join(lines) if lines else "    pass",
        ", ".join(outs),
    )
    namespace = {"_ln": _ln, "_exp": _exp, "_pow": _pow}
    exec(compile(src, "<dht-compiled>", "exec"), namespace)
    return namespace["_f"]
