"""Problem data for the 1D parabolic source-identification problem.

    y_t = A y_xx + B y_x + X(t) y + psi(x, t),   0 <= x <= 1, 0 < t <= T
    y(x, 0) = y0(x),  y(0, t) = f0(t),  y(1, t) = f1(t),  y(x_in, t) = Q(t)

Both y and the control X are unknown.  Derivatives of the data that the
time-marching scheme consumes are supplied in closed form, never differenced.
"""

from __future__ import annotations

import ast
import math
import operator
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

__all__ = [
    "InverseProblem",
    "ExactReference",
    "Violation",
    "ExpressionError",
    "compile_expression",
    "example_one",
    "example_two",
    "validate",
    "problem_from_expressions",
    "PROBLEM_KEYS",
]

Q_EPS = 1e-12
COMPAT_TOL = 1e-10


@dataclass(frozen=True)
class InverseProblem:
    A: float
    B: float
    psi: Callable
    y0: Callable
    y0_x: Callable
    y0_xx: Callable
    f0: Callable
    f0_t: Callable
    f1: Callable
    f1_t: Callable
    Q: Callable
    Q_t: Callable
    x_in: float
    T: float
    name: str = "custom"

    def __post_init__(self):
        if not 0.0 < self.x_in < 1.0:
            raise ValueError(f"x_in must lie in (0, 1), got {self.x_in}")
        if not self.T > 0.0:
            raise ValueError(f"T must be positive, got {self.T}")

    def with_horizon(self, T: float) -> "InverseProblem":
        return replace(self, T=T)


@dataclass(frozen=True)
class ExactReference:
    y: Callable | None = None
    X: Callable | None = None

    @property
    def present(self) -> bool:
        return self.y is not None and self.X is not None


@dataclass(frozen=True)
class Violation:
    kind: str  # "compatibility" or "degenerate_Q"
    where: str
    value: float
    message: str


def example_one() -> tuple[InverseProblem, ExactReference]:
    """y = x e^t, X = 1 + t^2 on [0, 1] x [0, 1]."""
    problem = InverseProblem(
        A=1.0,
        B=2.0,
        psi=lambda x, t: -(2.0 + x * t**2) * np.exp(t),
        y0=lambda x: x,
        y0_x=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        y0_xx=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        f0=lambda t: 0.0 * t,
        f0_t=lambda t: 0.0 * t,
        f1=lambda t: np.exp(t),
        f1_t=lambda t: np.exp(t),
        Q=lambda t: np.exp(t) / 2.0,
        Q_t=lambda t: np.exp(t) / 2.0,
        x_in=0.5,
        T=1.0,
        name="example1",
    )
    exact = ExactReference(y=lambda x, t: x * np.exp(t), X=lambda t: 1.0 + t**2)
    return problem, exact


def example_two() -> tuple[InverseProblem, ExactReference]:
    """y = x sin t, X = t on [0, 1] x [0, 0.5]."""
    problem = InverseProblem(
        A=1.0,
        B=0.0,
        psi=lambda x, t: x * np.cos(t) - t * x * np.sin(t),
        y0=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        y0_x=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        y0_xx=lambda x: np.zeros_like(np.asarray(x, dtype=float)),
        f0=lambda t: 0.0 * t,
        f0_t=lambda t: 0.0 * t,
        f1=lambda t: np.sin(t),
        f1_t=lambda t: np.cos(t),
        Q=lambda t: 0.5 * np.sin(t),
        Q_t=lambda t: 0.5 * np.cos(t),
        x_in=0.5,
        T=0.5,
        name="example2",
    )
    exact = ExactReference(y=lambda x, t: x * np.sin(t), X=lambda t: t)
    return problem, exact


def validate(problem: InverseProblem, times) -> list[Violation]:
    """Compatibility at t = 0 and non-vanishing Q at every requested time."""
    out: list[Violation] = []
    checks = [
        ("y0(0) = f0(0)", problem.y0(0.0), problem.f0(0.0)),
        ("y0(1) = f1(0)", problem.y0(1.0), problem.f1(0.0)),
        (f"y0({problem.x_in}) = Q(0)", problem.y0(problem.x_in), problem.Q(0.0)),
    ]
    for where, lhs, rhs in checks:
        gap = abs(float(lhs) - float(rhs))
        if gap > COMPAT_TOL:
            out.append(Violation("compatibility", where, gap, f"{where} violated by {gap:.3e}"))
    for t in np.atleast_1d(np.asarray(times, dtype=float)):
        q = float(problem.Q(t))
        if abs(q) <= Q_EPS:
            out.append(
                Violation("degenerate_Q", f"t={t:g}", q, f"|Q({t:g})| = {abs(q):.3e} <= {Q_EPS:g}")
            )
    return out


# -- expression grammar --------------------------------------------------------
# + - * / ^ (or **), unary minus, parentheses, exp sin cos, numbers, variables.

class ExpressionError(ValueError):
    pass


_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.USub: operator.neg, ast.UAdd: operator.pos}
_FUNCS = {"exp": np.exp, "sin": np.sin, "cos": np.cos}
_CONSTS = {"pi": math.pi, "e": math.e}


def _compile_node(node: ast.AST, variables: tuple[str, ...]) -> Callable[[dict], object]:
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        if node.id in variables:
            name = node.id
            return lambda env: env[name]
        if node.id in _CONSTS:
            value = _CONSTS[node.id]
            return lambda env: value
        raise ExpressionError(f"unknown name {node.id!r} (allowed: {', '.join(variables)})")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        lhs = _compile_node(node.left, variables)
        rhs = _compile_node(node.right, variables)
        return lambda env: op(lhs(env), rhs(env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        arg = _compile_node(node.operand, variables)
        return lambda env: op(arg(env))
    if (
        isinstance(node, ast.Call)
        and isinstance(node.func, ast.Name)
        and node.func.id in _FUNCS
        and len(node.args) == 1
        and not node.keywords
    ):
        fn = _FUNCS[node.func.id]
        arg = _compile_node(node.args[0], variables)
        return lambda env: fn(arg(env))
    raise ExpressionError(f"unsupported syntax: {ast.dump(node)[:60]}")


def compile_expression(text: str, variables: tuple[str, ...] = ("x", "t")) -> Callable:
    """Compile an arithmetic expression into a vectorised function of ``variables``.

    >>> compile_expression("x*exp(t)")(2.0, 0.0)
    2.0
    """
    source = text.strip().replace("^", "**")
    if not source:
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(source, mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"malformed expression {text!r}: {exc.msg}") from None
    body = _compile_node(tree.body, variables)

    def fn(*args):
        if len(args) != len(variables):
            raise TypeError(f"expected {len(variables)} arguments, got {len(args)}")
        env = {v: np.asarray(a, dtype=float) for v, a in zip(variables, args)}
        out = body(env)
        shape = np.broadcast_shapes(*(np.shape(a) for a in env.values()))
        out = np.broadcast_to(np.asarray(out, dtype=float), shape)
        return float(out) if out.ndim == 0 else np.array(out)

    fn.__doc__ = text
    return fn


PROBLEM_KEYS = {
    "A": None,
    "B": None,
    "psi": ("x", "t"),
    "y0": ("x",),
    "y0_x": ("x",),
    "y0_xx": ("x",),
    "f0": ("t",),
    "f0_t": ("t",),
    "f1": ("t",),
    "f1_t": ("t",),
    "Q": ("t",),
    "Q_t": ("t",),
    "x_in": None,
    "exact_y": ("x", "t"),
    "exact_X": ("t",),
}
_OPTIONAL = {"exact_y", "exact_X"}


def problem_from_expressions(
    values: dict[str, str], T: float, name: str = "custom"
) -> tuple[InverseProblem, ExactReference]:
    """Build a problem from expression strings keyed as in ``PROBLEM_KEYS``."""
    missing = [key for key in PROBLEM_KEYS if key not in values and key not in _OPTIONAL]
    if missing:
        raise ExpressionError(f"custom problem is missing: {', '.join(missing)}")
    kwargs: dict[str, object] = {}
    for key, variables in PROBLEM_KEYS.items():
        if key not in values:
            continue
        if variables is None:
            kwargs[key] = float(compile_expression(values[key], ())())
        else:
            kwargs[key] = compile_expression(values[key], variables)
    exact = ExactReference(y=kwargs.pop("exact_y", None), X=kwargs.pop("exact_X", None))
    return InverseProblem(T=T, name=name, **kwargs), exact
