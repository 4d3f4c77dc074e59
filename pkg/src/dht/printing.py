"""Text form of expressions, in the syntax accepted by :func:`dht.parse`."""
from __future__ import annotations

from fractions import Fraction

from .expr import Add, Const, Exp, Expr, Ln, Mul, Pow, Symbol

_ADD, _MUL, _POW, _ATOM = 1, 2, 3, 4


def _fmt_number(v) -> str:
    if isinstance(v, Fraction):
        return str(v.numerator) if v.denominator == 1 else f"{v.numerator}/{v.denominator}"
    return repr(float(v))


def _prec(e: Expr) -> int:
    if isinstance(e, Add):
        return _ADD
    if isinstance(e, Mul):
        return _MUL
    if isinstance(e, Pow):
        return _MUL if _is_reciprocal(e) else _POW
    if isinstance(e, Const):
        v = e.value
        if v < 0:
            return _ADD
        if isinstance(v, Fraction) and v.denominator != 1:
            return _MUL
        return _ATOM
    if isinstance(e, Exp) and _as_power(e) is not None:
        return _POW
    return _ATOM


def _is_reciprocal(e: Expr) -> bool:
    x = e.exponent
    return isinstance(x, Const) and x.value < 0


def _as_power(e: Exp):
    """Recognize ``exp(x*ln(b))`` so it can print as ``b^(x)``."""
    arg = e.arg
    if not isinstance(arg, Mul):
        return None
    logs = [a for a in arg.args if isinstance(a, Ln)]
    if len(logs) != 1:
        return None
    rest = [a for a in arg.args if a is not logs[0]]
    exponent = rest[0] if len(rest) == 1 else Mul(tuple(rest))
    return logs[0].arg, exponent


def to_text(e: Expr) -> str:
    return _p(e, top=True)


def _wrap(e: Expr, min_prec: int) -> str:
    s = _p(e)
    return f"({s})" if _prec(e) < min_prec else s


def _p(e: Expr, top: bool = False) -> str:
    if isinstance(e, Const):
        return _fmt_number(e.value)
    if isinstance(e, Symbol):
        return e.name
    if isinstance(e, Add):
        return _p_add(e, top)
    if isinstance(e, Mul):
        return _p_mul(e.args)
    if isinstance(e, Pow):
        if _is_reciprocal(e):
            return _p_mul((e,))
        return _p_pow(e.base, e.exponent)
    if isinstance(e, Ln):
        return f"ln({_p(e.arg)})"
    if isinstance(e, Exp):
        as_pow = _as_power(e)
        if as_pow is not None:
            return _p_pow(*as_pow)
        return f"exp({_p(e.arg)})"
    raise TypeError(type(e))  # pragma: no cover


def _p_add(e: Add, top: bool) -> str:
    plus, minus = (" + ", " - ") if top else ("+", "-")
    if not e.args:
        return "0"
    out = _p(e.args[0])
    for a in e.args[1:]:
        s = _p(a)
        if s.startswith("-"):
            out += minus + s[1:]
        else:
            out += plus + s
    return out


def _p_pow(base: Expr, exponent: Expr) -> str:
    b = _wrap(base, _ATOM)
    if isinstance(exponent, Const):
        v = exponent.value
        if isinstance(v, Fraction) and v.denominator == 1 and v >= 0:
            return f"{b}^{v.numerator}"
        return f"{b}^({_fmt_number(v)})"
    x = _p(exponent)
    return f"{b}^{x}" if _prec(exponent) >= _ATOM else f"{b}^({x})"


def _p_mul(args) -> str:
    coeff = Fraction(1)
    num, den = [], []
    for a in args:
        if isinstance(a, Const):
            coeff = coeff * a.value
        elif isinstance(a, Pow) and _is_reciprocal(a):
            v = -a.exponent.value
            den.append(a.base if v == 1 else Pow(a.base, Const(v)))
        else:
            num.append(a)
    sign = ""
    if coeff < 0:
        sign, coeff = "-", -coeff
    if isinstance(coeff, Fraction):
        if coeff.numerator != 1 or not num:
            num.insert(0, Const(coeff.numerator))
        if coeff.denominator != 1:
            den.insert(0, Const(coeff.denominator))
    elif coeff != 1 or not num:
        num.insert(0, Const(coeff))
    top = "*".join(_factor(a) for a in num)
    if not den:
        return sign + top
    if len(den) == 1:
        bottom = _wrap(den[0], _POW)
    else:
        bottom = "(" + "*".join(_wrap(a, _MUL) for a in den) + ")"
    return f"{sign}{top}/{bottom}"


def _factor(a: Expr) -> str:
    s = _p(a)
    if _prec(a) < _MUL or s.startswith("-"):
        return f"({s})"
    return s
