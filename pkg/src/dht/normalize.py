"""Canonical form for expression trees.

A normalized tree is a sum of monomials ``c * a1^e1 * ... * ak^ek`` where
``c`` is a rational (or float) coefficient, the ``ai`` are atoms and the
exponents are nonzero rationals.  Atoms are

* symbols (parameters, ``t``, sequence symbols);
* ``ln(x)`` with ``x`` normalized, never ``ln(1)`` or ``ln(exp(y))``;
* a single ``exp(y)`` per monomial, with every ``c*ln(x)`` summand of ``y``
  (``c`` rational) pulled out as ``x^c``;
* primitive multi-term sums raised to a non positive-integer exponent
  (the opaque denominators of the rational fragment);
* irrational roots of rational constants.

Polynomials and Laurent polynomials in the atoms therefore have a unique
normal form, so ``normalize(a - b) == 0`` decides equality on that
fragment.  Anything else falls back on numeric sampling in
:func:`equivalent`.
"""
from __future__ import annotations

import math
import random
from fractions import Fraction
from functools import lru_cache, reduce
from typing import Dict, Mapping, Tuple

from .expr import (
    BETA,
    H,
    ZERO,
    Add,
    Const,
    DomainError,
    Exp,
    Expr,
    Ln,
    Mul,
    Param,
    Pow,
    Seq,
    Symbol,
    Time,
    evaluate,
    symbols,
)

Mono = Tuple[Tuple[Expr, Fraction], ...]
Poly = Dict[Mono, object]

_BASE_ORDER = {"q": 0, "p": 1, "lam": 2, "u": 3}


# ---------------------------------------------------------------------------
# atom ordering


@lru_cache(maxsize=None)
def atom_key(a: Expr) -> tuple:
    if isinstance(a, Param):
        return (0, a.name)
    if isinstance(a, Time):
        return (1,)
    if isinstance(a, Seq):
        return (2, _BASE_ORDER[a.base], a.index, a.shift)
    from .printing import to_text

    if isinstance(a, Const):
        return (3, to_text(a))
    if isinstance(a, Ln):
        return (4, to_text(a.arg))
    if isinstance(a, Exp):
        return (5, to_text(a.arg))
    return (6, to_text(a))


def mono_key(m: Mono) -> tuple:
    return tuple((atom_key(a), e) for a, e in m)


def _sorted_mono(d: Mapping[Expr, Fraction]) -> Mono:
    return tuple(sorted(((a, e) for a, e in d.items() if e != 0), key=lambda ae: atom_key(ae[0])))


# ---------------------------------------------------------------------------
# polynomial arithmetic


def _exact(c) -> bool:
    return isinstance(c, (int, Fraction))


def _padd(acc: Poly, other: Poly, scale=1) -> None:
    for m, c in other.items():
        v = acc.get(m, 0) + c * scale
        if v == 0:
            acc.pop(m, None)
        else:
            acc[m] = v


def poly_add(*polys: Poly) -> Poly:
    out: Poly = {}
    for pl in polys:
        _padd(out, pl)
    return out


def poly_scale(pl: Poly, c) -> Poly:
    if c == 0:
        return {}
    return {m: v * c for m, v in pl.items()}


def _mono_times(m1: Mono, m2: Mono) -> Poly:
    if not m1:
        return {m2: 1}
    if not m2:
        return {m1: 1}
    d: Dict[Expr, Fraction] = dict(m1)
    for a, e in m2:
        d[a] = d.get(a, 0) + e
    return _fix_mono(d)


def poly_mul(a: Poly, b: Poly) -> Poly:
    out: Poly = {}
    if len(a) > len(b):
        a, b = b, a
    for m1, c1 in a.items():
        for m2, c2 in b.items():
            prod = _mono_times(m1, m2)
            if len(prod) == 1:
                ((m, c),) = prod.items()
                v = out.get(m, 0) + c * c1 * c2
                if v == 0:
                    out.pop(m, None)
                else:
                    out[m] = v
            else:
                _padd(out, prod, c1 * c2)
    return out


def _const(c) -> Poly:
    return {(): c} if c != 0 else {}


def _atom(a: Expr, e=Fraction(1)) -> Poly:
    return {((a, Fraction(e)),): 1}


def _fix_mono(d: Dict[Expr, Fraction]) -> Poly:
    """Restore the monomial invariants after exponents were combined."""
    d = {a: e for a, e in d.items() if e != 0}
    result: Poly = {(): 1}
    plain: Dict[Expr, Fraction] = {}
    exps = []
    for a, e in d.items():
        if isinstance(a, Exp):
            exps.append((a, e))
        elif isinstance(a, Const):
            result = poly_mul(result, _const_power(a.value, e))
        elif _is_poly_atom(a) and e.denominator == 1 and e > 0:
            result = poly_mul(result, _int_power(_to_poly(a), int(e)))
        else:
            plain[a] = e
    if len(exps) == 1 and exps[0][1] == 1:
        plain[exps[0][0]] = Fraction(1)
    elif exps:
        arg = poly_add(*(poly_scale(_to_poly(a.arg), e) for a, e in exps))
        result = poly_mul(result, _exp_poly(arg))
    if not plain:
        return result
    base = _sorted_mono(plain)
    if result == {(): 1}:
        return {base: 1}
    return poly_mul(result, {base: 1})


def _is_poly_atom(a: Expr) -> bool:
    return isinstance(a, Add)


def _int_power(pl: Poly, n: int) -> Poly:
    if n == 0:
        return {(): 1}
    if n < 0:
        return _negative_power(pl, n)
    out: Poly = {(): 1}
    base = pl
    while n:
        if n & 1:
            out = poly_mul(out, base)
        n >>= 1
        if n:
            base = poly_mul(base, base)
    return out


def _const_power(c, e: Fraction) -> Poly:
    if e.denominator == 1:
        if c == 0 and e < 0:
            raise DomainError("division by zero in normalization")
        return _const(Fraction(c) ** int(e) if _exact(c) else c ** int(e))
    if isinstance(c, float):
        if c < 0:
            return _atom(Const(c), e)
        return _const(c ** float(e))
    if c > 0:
        root = _exact_root(c, e.denominator)
        if root is not None:
            return _const(root ** e.numerator)
    # keep irrational roots as atoms, with the integer part of e split off
    whole = e.numerator // e.denominator
    frac = e - whole
    out = _atom(Const(c), frac)
    if whole:
        out = poly_scale(out, c**whole)
    return out


def _exact_root(c: Fraction, k: int):
    def iroot(n: int):
        if n.bit_length() > 1000:
            return None
        r = round(n ** (1.0 / k))
        for cand in (r - 1, r, r + 1):
            if cand >= 0 and cand**k == n:
                return cand
        return None

    num, den = iroot(c.numerator), iroot(c.denominator)
    if num is None or den is None:
        return None
    return Fraction(num, den)


def _content(pl: Poly):
    """Split ``pl`` as ``coeff * mono * primitive`` for multi-term ``pl``."""
    items = sorted(pl.items(), key=lambda mc: mono_key(mc[0]))
    lead = items[0][1]
    coeffs = [c for _, c in items]
    if all(_exact(c) for c in coeffs):
        coeffs = [Fraction(c) for c in coeffs]
        num = reduce(math.gcd, (c.numerator for c in coeffs))
        den = reduce(lambda x, y: x * y // math.gcd(x, y), (c.denominator for c in coeffs))
        content = Fraction(num, den)
        if lead < 0:
            content = -content
    else:
        content = lead
    # common monomial factor over integer exponents
    dms = [dict(m) for m, _ in items]
    atoms = {a for dm in dms for a in dm if isinstance(a, (Symbol, Ln))}
    common = {a: min(dm.get(a, Fraction(0)) for dm in dms) for a in atoms}
    common = {a: e for a, e in common.items() if e != 0}
    prim: Poly = {}
    for m, c in items:
        dm = dict(m)
        for a, e in common.items():
            dm[a] = dm.get(a, Fraction(0)) - e
        prim[_sorted_mono(dm)] = c / content
    return content, common, prim


def _negative_power(pl: Poly, e: Fraction) -> Poly:
    return _rational_power(pl, Fraction(e))


def _rational_power(pl: Poly, e: Fraction) -> Poly:
    if not pl:
        if e > 0:
            return {}
        raise DomainError("zero raised to a non-positive power")
    if e.denominator == 1 and e >= 0:
        return _int_power(pl, int(e))
    if len(pl) == 1:
        ((m, c),) = pl.items()
        out = _const_power(c, e)
        d: Dict[Expr, Fraction] = {}
        for a, x in m:
            d[a] = x * e
        return poly_mul(out, _fix_mono(d))
    content, common, prim = _content(pl)
    out = _const_power(content, e)
    out = poly_mul(out, _fix_mono({a: x * e for a, x in common.items()}))
    if len(prim) == 1:
        ((m, c),) = prim.items()
        return poly_mul(out, poly_mul(_const_power(c, e), _fix_mono({a: x * e for a, x in m})))
    return poly_mul(out, _atom(_from_poly(prim), e))


def _exp_poly(arg: Poly) -> Poly:
    """``exp`` of a polynomial, pulling ``c*ln(x)`` summands out as powers."""
    out: Poly = {(): 1}
    rest: Poly = {}
    for m, c in arg.items():
        if len(m) == 1 and isinstance(m[0][0], Ln) and m[0][1] == 1 and _exact(c):
            out = poly_mul(out, _rational_power(_to_poly(m[0][0].arg), Fraction(c)))
        else:
            rest[m] = c
    if not rest:
        return out
    if len(rest) == 1 and () in rest and not _exact(rest[()]):
        return poly_scale(out, math.exp(rest[()]))
    return poly_mul(out, _atom(Exp(_from_poly(rest))))


def _ln_poly(arg: Poly) -> Poly:
    if not arg:
        raise DomainError("ln(0)")
    if arg == {(): 1}:
        return {}
    if len(arg) == 1:
        ((m, c),) = arg.items()
        if c == 1 and len(m) == 1 and isinstance(m[0][0], Exp) and m[0][1] == 1:
            return _to_poly(m[0][0].arg)
        if not m and isinstance(c, float):
            if c <= 0:
                raise DomainError("ln of non-positive constant")
            return _const(math.log(c))
    return _atom(Ln(_from_poly(arg)))


# ---------------------------------------------------------------------------
# conversion


@lru_cache(maxsize=200_000)
def _to_poly_cached(e: Expr) -> tuple:
    return tuple(_to_poly_uncached(e).items())


def _to_poly(e: Expr) -> Poly:
    return dict(_to_poly_cached(e))


def to_poly(e: Expr) -> Poly:
    """Polynomial dictionary ``{monomial: coefficient}`` of ``e``."""
    return _to_poly(e)


def _to_poly_uncached(e: Expr) -> Poly:
    if isinstance(e, Const):
        return _const(e.value)
    if isinstance(e, Symbol):
        return _atom(e)
    if isinstance(e, Add):
        out: Poly = {}
        for a in e.args:
            _padd(out, _to_poly(a))
        return out
    if isinstance(e, Mul):
        out = {(): 1}
        for a in e.args:
            out = poly_mul(out, _to_poly(a))
            if not out:
                return out
        return out
    if isinstance(e, Pow):
        x = _to_poly(e.exponent)
        if not x:
            return {(): 1}
        if len(x) == 1 and () in x and _exact(x[()]):
            return _rational_power(_to_poly(e.base), Fraction(x[()]))
        base = _to_poly(e.base)
        if not base:
            raise DomainError("zero raised to a symbolic power")
        return _exp_poly(poly_mul(x, _ln_poly(base)))
    if isinstance(e, Ln):
        return _ln_poly(_to_poly(e.arg))
    if isinstance(e, Exp):
        return _exp_poly(_to_poly(e.arg))
    raise TypeError(type(e))  # pragma: no cover


def _term_expr(m: Mono, c) -> Expr:
    factors = []
    for a, x in m:
        factors.append(a if x == 1 else Pow(a, Const(x)))
    if c != 1 or not factors:
        factors.insert(0, Const(c))
    return factors[0] if len(factors) == 1 else Mul(tuple(factors))


def _from_poly(pl: Poly) -> Expr:
    if not pl:
        return ZERO
    terms = [_term_expr(m, c) for m, c in sorted(pl.items(), key=lambda mc: mono_key(mc[0]))]
    return terms[0] if len(terms) == 1 else Add(tuple(terms))


def from_poly(pl: Poly) -> Expr:
    return _from_poly(pl)


@lru_cache(maxsize=200_000)
def normalize(e: Expr) -> Expr:
    """Canonical form of ``e``; idempotent."""
    return _from_poly(_to_poly(e))


def is_zero(e: Expr) -> bool:
    return not _to_poly(e)


def coefficient_split(e: Expr, s: Symbol):
    """Write ``e`` as a dict ``{exponent: coefficient Expr}`` in ``s``.

    Returns ``None`` if ``s`` occurs inside a composite atom (``ln``,
    ``exp`` or an opaque denominator), where no such split exists.
    """
    out: Dict[Fraction, Poly] = {}
    for m, c in _to_poly(e).items():
        k = Fraction(0)
        rest = []
        for a, x in m:
            if a == s:
                k = x
            else:
                if s in symbols(a):
                    return None
                rest.append((a, x))
        out.setdefault(k, {})[tuple(rest)] = c
    return {k: _from_poly(v) for k, v in out.items()}


# ---------------------------------------------------------------------------
# equivalence


SAMPLE_BOX = {
    "default": (0.1, 2.0),
    "beta": (0.0, 1.0),
    "h": (0.01, 1.0),
}
DEFAULT_SEED = 20240607


def sample_value(sym: Symbol, rng: random.Random) -> float:
    if sym == BETA:
        lo, hi = SAMPLE_BOX["beta"]
        x = rng.uniform(lo, hi)
        return x if x > 0 else 0.5
    if sym == H:
        return rng.uniform(*SAMPLE_BOX["h"])
    return rng.uniform(*SAMPLE_BOX["default"])


def equivalent(a: Expr, b: Expr, samples: int = 100, tol: float = 1e-9, seed: int = DEFAULT_SEED,
               retries: int = 20) -> bool:
    """Decide ``a == b`` symbolically, or numerically on a seeded box.

    Symbolic zero of ``normalize(a - b)`` short-circuits sampling.  The
    numeric box draws sequence symbols, ``t`` and model constants from
    ``U[0.1, 2]``, ``beta`` from ``U(0, 1)`` and ``h`` from ``U(0.01, 1)``.
    Points where either side leaves its domain are redrawn, at most
    ``retries * samples`` times in total.
    """
    if samples < 1 or tol <= 0:
        raise ValueError("need samples >= 1 and tol > 0")
    diff = Add((a, Mul((Const(-1), b))))
    if is_zero(diff):
        return True
    syms = sorted(symbols(a) | symbols(b), key=atom_key)
    rng = random.Random(seed)
    good = 0
    attempts = 0
    while good < samples:
        attempts += 1
        if attempts > retries * samples:
            raise DomainError(
                f"could not find {samples} admissible sample points in {attempts - 1} draws"
            )
        point = {s: sample_value(s, rng) for s in syms}
        try:
            va = evaluate(a, point)
            vb = evaluate(b, point)
        except DomainError:
            continue
        if not (math.isfinite(va) and math.isfinite(vb)):
            continue
        if abs(va - vb) > tol * (1 + abs(va)):
            return False
        good += 1
    return True
