"""Parser for the expression syntax, e.g. ``ln(u1[0]) + beta*p1[+1]*(A*q1[0]-u1[0])``.

Sequence symbols carry an explicit mesh offset in brackets, ``^`` and
``**`` both mean power, ``ln`` and ``exp`` are the only functions.
Decimal literals are read as exact rationals (``0.95`` is ``19/20``).
"""
from __future__ import annotations

import ast
import re
from fractions import Fraction
from typing import Iterable, Optional

from .expr import (
    DEFAULT_WINDOW,
    MINUS_ONE,
    Add,
    Const,
    Exp,
    Expr,
    Ln,
    Mul,
    Param,
    Pow,
    Seq,
    Time,
)

_SEQ_NAME = re.compile(r"^(q|p|lam|λ|u)([1-9][0-9]*)$")
_FUNCS = {"ln": Ln, "exp": Exp}
RESERVED = frozenset({"t", "ln", "exp"})


class ParseError(ValueError):
    def __init__(self, message: str, text: str = "", col: Optional[int] = None):
        self.text = text
        self.col = col
        where = f" at column {col + 1}" if col is not None else ""
        super().__init__(f"{message}{where}" + (f" in {text!r}" if text else ""))


def parse(text: str, ctx=None, *, window: Optional[int] = None,
          params: Optional[Iterable[str]] = None) -> Expr:
    """Parse ``text`` into an expression tree.

    With a mesh context (or an explicit ``params`` collection) every bare
    name other than ``t`` must be a registered parameter.  Offsets outside
    ``[-window, window]`` are rejected.
    """
    if ctx is not None:
        window = ctx.window if window is None else window
        params = ctx.parameter_names if params is None else params
    window = DEFAULT_WINDOW if window is None else window
    allowed = None if params is None else frozenset(params)
    source = text.replace("^", "**")
    try:
        tree = ast.parse(source.strip(), mode="eval")
    except SyntaxError as err:
        col = (err.offset - 1) if err.offset else None
        raise ParseError(f"malformed expression: {err.msg}", text, col) from None
    return _Builder(source.strip(), text, window, allowed).build(tree.body)


def parse_symbol(name: str, window: int = DEFAULT_WINDOW):
    """Parse a single symbol name such as ``q1[+1]``, ``t`` or ``beta``."""
    e = parse(name, window=window)
    if not isinstance(e, (Seq, Param, Time)):
        raise ParseError("not a single symbol", name)
    return e


class _Builder:
    def __init__(self, source: str, text: str, window: int, allowed):
        self.source = source
        self.text = text
        self.window = window
        self.allowed = allowed

    def fail(self, node, message):
        raise ParseError(message, self.text, getattr(node, "col_offset", None))

    def build(self, node) -> Expr:
        method = getattr(self, "_" + type(node).__name__, None)
        if method is None:
            self.fail(node, f"unsupported syntax {type(node).__name__}")
        return method(node)

    def _Constant(self, node):
        v = node.value
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(node, f"unsupported constant {v!r}")
        if isinstance(v, int):
            return Const(v)
        segment = ast.get_source_segment(self.source, node)
        try:
            return Const(Fraction(segment))
        except (TypeError, ValueError):
            return Const(Fraction(repr(v)))

    def _Name(self, node):
        name = node.id
        if name == "t":
            return Time()
        if _SEQ_NAME.match(name):
            self.fail(node, f"sequence symbol {name} needs a mesh offset, e.g. {name}[0]")
        if name in _FUNCS:
            self.fail(node, f"function {name} used without an argument")
        if self.allowed is not None and name not in self.allowed:
            self.fail(node, f"unknown symbol {name!r}")
        return Param(name)

    def _Subscript(self, node):
        if not isinstance(node.value, ast.Name):
            self.fail(node, "only sequence symbols can carry an offset")
        m = _SEQ_NAME.match(node.value.id)
        if not m:
            self.fail(node, f"unknown sequence symbol {node.value.id!r}")
        base = "lam" if m.group(1) == "λ" else m.group(1)
        index = int(m.group(2))
        sl = node.slice
        if isinstance(sl, ast.Index):  # pragma: no cover - python < 3.9
            sl = sl.value
        shift = self._offset(sl)
        if abs(shift) > self.window:
            self.fail(node, f"offset {shift:+d} outside the window ±{self.window}")
        return Seq(base, index, shift)

    def _offset(self, sl) -> int:
        sign = 1
        if isinstance(sl, ast.UnaryOp) and isinstance(sl.op, (ast.UAdd, ast.USub)):
            sign = -1 if isinstance(sl.op, ast.USub) else 1
            sl = sl.operand
        if isinstance(sl, ast.Constant) and isinstance(sl.value, int) and not isinstance(sl.value, bool):
            return sign * sl.value
        self.fail(sl, "mesh offset must be an integer literal")

    def _BinOp(self, node):
        a, b = self.build(node.left), self.build(node.right)
        op = node.op
        if isinstance(op, ast.Add):
            return Add((a, b))
        if isinstance(op, ast.Sub):
            return Add((a, Mul((MINUS_ONE, b))))
        if isinstance(op, ast.Mult):
            return Mul((a, b))
        if isinstance(op, ast.Div):
            return Mul((a, Pow(b, MINUS_ONE)))
        if isinstance(op, ast.Pow):
            return Pow(a, b)
        self.fail(node, f"unsupported operator {type(op).__name__}")

    def _UnaryOp(self, node):
        x = self.build(node.operand)
        if isinstance(node.op, ast.USub):
            if isinstance(x, Const):
                return Const(-x.value)
            return Mul((MINUS_ONE, x))
        if isinstance(node.op, ast.UAdd):
            return x
        self.fail(node, f"unsupported unary operator {type(node.op).__name__}")

    def _Call(self, node):
        if not isinstance(node.func, ast.Name) or node.func.id not in _FUNCS:
            name = getattr(node.func, "id", "?")
            self.fail(node, f"unknown function {name!r} (only ln and exp)")
        if len(node.args) != 1 or node.keywords:
            self.fail(node, f"{node.func.id} takes exactly one argument")
        return _FUNCS[node.func.id](self.build(node.args[0]))
