"""A small, safe arithmetic grammar for source terms and boundary data.

Expressions may use numbers, the coordinates ``x1 .. xd`` (and ``x``, ``y``,
``z`` as aliases of the first three), ``+ - * /``, unary minus, ``**``, the
functions ``exp``, ``abs``, ``min``, ``max`` and the constants ``pi`` and
``e``. Anything else is rejected at parse time. Evaluation is vectorized over
an ``(n, d)`` array of points.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_BINOPS = {ast.Add: np.add, ast.Sub: np.subtract, ast.Mult: np.multiply, ast.Div: np.divide, ast.Pow: np.power}
_FUNCS = {"exp": (np.exp, 1, 1), "abs": (np.abs, 1, 1), "min": (np.minimum, 2, None), "max": (np.maximum, 2, None)}
_CONSTS = {"pi": math.pi, "e": math.e}
_ALIASES = {"x": 0, "y": 1, "z": 2}


class ExprError(ValueError):
    pass


def _coord_index(name: str, dim: int) -> int | None:
    if name in _ALIASES:
        idx = _ALIASES[name]
    elif name.startswith("x") and name[1:].isdigit():
        idx = int(name[1:]) - 1
    else:
        return None
    if not 0 <= idx < dim:
        raise ExprError(f"coordinate {name!r} is not available in dimension {dim}")
    return idx


def _compile(node: ast.AST, dim: int) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(node, ast.Expression):
        return _compile(node.body, dim)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(node.value, bool):
        val = float(node.value)
        return lambda x: np.full(len(x), val)
    if isinstance(node, ast.Name):
        if node.id in _CONSTS:
            val = _CONSTS[node.id]
            return lambda x: np.full(len(x), val)
        idx = _coord_index(node.id, dim)
        if idx is None:
            raise ExprError(f"unknown name {node.id!r} at column {node.col_offset + 1}")
        return lambda x: x[:, idx].astype(float)
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        inner = _compile(node.operand, dim)
        return (lambda x: -inner(x)) if isinstance(node.op, ast.USub) else inner
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _compile(node.left, dim), _compile(node.right, dim)
        return lambda x: op(left(x), right(x))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and node.func.id in _FUNCS and not node.keywords:
        fn, lo, hi = _FUNCS[node.func.id]
        n = len(node.args)
        if n < lo or (hi is not None and n > hi):
            raise ExprError(f"{node.func.id}() got {n} arguments at column {node.col_offset + 1}")
        args = [_compile(a, dim) for a in node.args]
        if n == 1:
            return lambda x: fn(args[0](x))

        def call(x):
            out = args[0](x)
            for a in args[1:]:
                out = fn(out, a(x))
            return out

        return call
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name):
        raise ExprError(f"unknown function {node.func.id!r} at column {node.col_offset + 1} "
                        f"(allowed: {', '.join(sorted(_FUNCS))})")
    raise ExprError(f"unsupported syntax {type(node).__name__} at column {getattr(node, 'col_offset', 0) + 1}")


@dataclass(frozen=True)
class Expression:
    """A parsed expression; call it with an ``(n, d)`` array of points."""

    text: str
    dimension: int
    _fn: Callable[[np.ndarray], np.ndarray]

    def __call__(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, float))
        with np.errstate(all="ignore"):
            out = np.asarray(self._fn(pts), float)
        if not np.all(np.isfinite(out)):
            raise ExprError(f"expression {self.text!r} produced non-finite values")
        return out


def parse(text: str | float | int, dimension: int) -> Expression:
    """Parse ``text`` (or a bare number) into a vectorized :class:`Expression`."""
    if isinstance(text, bool):
        raise ExprError("booleans are not expressions")
    if isinstance(text, (int, float)):
        text = repr(float(text))
    if not isinstance(text, str):
        raise ExprError(f"expected a string or number, got {type(text).__name__}")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExprError(f"syntax error in {text!r} at line {exc.lineno}, column {exc.offset}") from None
    return Expression(text, dimension, _compile(tree, dimension))
