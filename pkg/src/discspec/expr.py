"""Tiny safe expression language for rate and coefficient formulas.

Formulas are strings over one variable (``n`` for discrete models, ``x`` for
diffusions) using ``+ - * / ^``, ``exp``, ``log``, ``sqrt``, ``abs`` and
numeric literals.  They are compiled once to a closure that evaluates on numpy
arrays in double precision.
"""

from __future__ import annotations

import ast
import math
from typing import Callable

import numpy as np

from .errors import ModelError

_FUNCS = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
}
_CONSTS = {"pi": math.pi, "e": math.e}
_BINOPS = {
    ast.Add: np.add,
    ast.Sub: np.subtract,
    ast.Mult: np.multiply,
    ast.Div: np.divide,
    ast.Pow: np.power,
}


class Expr:
    """A compiled formula in a single variable."""

    def __init__(self, source: str, var: str = "n"):
        self.source = str(source)
        self.var = var
        try:
            tree = ast.parse(self.source.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ModelError(f"cannot parse expression {self.source!r}: {exc.msg}") from None
        self._fn = self._compile(tree.body)

    def _compile(self, node) -> Callable[[np.ndarray], np.ndarray]:
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            value = float(node.value)
            return lambda t: np.full(np.shape(t), value)
        if isinstance(node, ast.Name):
            if node.id == self.var:
                return lambda t: t
            if node.id in _CONSTS:
                value = _CONSTS[node.id]
                return lambda t: np.full(np.shape(t), value)
            raise ModelError(f"unknown name {node.id!r} in {self.source!r} (variable is {self.var!r})")
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            op = _BINOPS[type(node.op)]
            left, right = self._compile(node.left), self._compile(node.right)
            return lambda t: op(left(t), right(t))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            inner = self._compile(node.operand)
            if isinstance(node.op, ast.USub):
                return lambda t: -inner(t)
            return inner
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            fn = _FUNCS[node.func.id]
            arg = self._compile(node.args[0])
            return lambda t: fn(arg(t))
        raise ModelError(f"unsupported construct in expression {self.source!r}: {ast.dump(node)[:60]}")

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        with np.errstate(all="ignore"):
            return np.asarray(self._fn(t), dtype=float)

    def __repr__(self):
        return f"Expr({self.source!r}, var={self.var!r})"
