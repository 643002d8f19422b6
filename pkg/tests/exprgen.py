"""Bounded random expression trees for the symbolic-engine tests.

Arguments of ``ln``, ``sqrt`` and of denominators are wrapped as ``c + e^2``
with ``c >= 0.5`` so that generated expressions are defined everywhere, and
``exp`` only sees ``sin``/``cos`` of a subtree so values stay moderate.
"""
import numpy as np

from herglotz.symexpr import Binary, Const, Unary, Var

VARS = ("x", "y", "z")


def _positive(rng, e):
    c = Const(float(np.round(rng.uniform(0.5, 2.0), 3)))
    return Binary("add", c, Binary("pow", e, Const(2.0)))


def random_expr(rng: np.random.Generator, depth: int = 4):
    if depth == 0 or rng.random() < 0.25:
        if rng.random() < 0.6:
            return Var(VARS[rng.integers(len(VARS))])
        return Const(float(np.round(rng.uniform(0.1, 3.0), 3)))
    kind = rng.integers(10)
    sub = lambda: random_expr(rng, depth - 1)  # noqa: E731
    if kind <= 2:
        return Binary(("add", "sub", "mul")[kind], sub(), sub())
    if kind == 3:
        return Binary("div", sub(), _positive(rng, sub()))
    if kind == 4:
        return Binary("pow", sub(), Const(float(rng.integers(0, 4))))
    if kind == 5:
        return Binary("pow", _positive(rng, sub()), Const(float(np.round(rng.uniform(-1.5, 1.5), 2))))
    if kind == 6:
        return Unary(("sin", "cos")[rng.integers(2)], sub())
    if kind == 7:
        return Unary("exp", Unary(("sin", "cos")[rng.integers(2)], sub()))
    if kind == 8:
        return Unary(("ln", "sqrt")[rng.integers(2)], _positive(rng, sub()))
    return Unary("neg", sub())


def random_binding(rng: np.random.Generator) -> dict:
    return {v: float(rng.uniform(-1.5, 1.5)) for v in VARS}
