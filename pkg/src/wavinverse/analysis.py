"""Error norms, comparison tables and the coefficient/convergence bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .basis import BasisSpec, WaveletFamily, expand
from .problem import ExactReference
from .solver import SolveOutput, evaluate_field

__all__ = [
    "EIGHTHS",
    "ErrorReport",
    "TailSum",
    "BoundEstimate",
    "CoefficientCheck",
    "UnsupportedReportError",
    "linf_error",
    "l2_error",
    "error_report",
    "error_series",
    "coefficient_bound",
    "kappa_tail",
    "bound_estimate",
    "verify_coefficient_decay",
    "fit_growth_rate",
    "build_tables",
    "fmt",
]

EIGHTHS = tuple(np.arange(1, 8) / 8)


class UnsupportedReportError(ValueError):
    pass


def fmt(value: float, digits: int = 4) -> str:
    """Scientific notation with ``digits`` significant digits."""
    return f"{value:.{digits - 1}e}"


def _pair(exact, numeric) -> tuple[np.ndarray, np.ndarray]:
    a = np.atleast_1d(np.asarray(exact, dtype=float))
    b = np.atleast_1d(np.asarray(numeric, dtype=float))
    if a.shape != b.shape or a.size == 0:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    return a, b


def linf_error(exact, numeric) -> float:
    a, b = _pair(exact, numeric)
    return float(np.max(np.abs(a - b)))


def l2_error(exact, numeric) -> float:
    """``(1/N) * sqrt(sum diff**2)``; the 1/N sits outside the root."""
    a, b = _pair(exact, numeric)
    return float(np.sqrt(np.sum((a - b) ** 2)) / a.size)


@dataclass(frozen=True)
class ErrorReport:
    t: float
    linf: float
    l2: float
    pointwise: tuple[tuple[float, float], ...]


def error_report(output: SolveOutput, exact: ExactReference, step: int, report_x=EIGHTHS) -> ErrorReport:
    """Norms over the collocation points plus pointwise errors at ``report_x``."""
    if exact.y is None:
        raise UnsupportedReportError("no exact solution to compare against")
    t = float(output.times[step])
    Y = output.snapshots[step][0]
    y = exact.y(output.points, t)
    xs = np.asarray(report_x, dtype=float)
    pts = np.abs(exact.y(xs, t) - evaluate_field(output, step, xs))
    return ErrorReport(
        t=t,
        linf=linf_error(y, Y),
        l2=l2_error(y, Y),
        pointwise=tuple(zip(xs.tolist(), pts.tolist())),
    )


def error_series(output: SolveOutput, exact: ExactReference) -> np.ndarray:
    """Rows ``(t, linf, l2)`` at every step, norms over the collocation points."""
    if exact.y is None:
        raise UnsupportedReportError("no exact solution to compare against")
    rows = []
    for step, t in enumerate(output.times):
        Y = output.snapshots[step][0]
        y = exact.y(output.points, t)
        rows.append((t, linf_error(y, Y), l2_error(y, Y)))
    return np.array(rows)


# -- bounds ----------------------------------------------------------------------

def coefficient_bound(family, n: int, m: int, L: float) -> float:
    """Printed decay bound on ``|d_nm|`` for functions with ``|f''| <= L`` (m >= 2 only)."""
    family = WaveletFamily.parse(family)
    if m < 2:
        raise ValueError(f"coefficient bound is stated for m >= 2, got m={m}")
    if n < 1:
        raise ValueError("n must be >= 1")
    if family is WaveletFamily.TAYLOR:
        return L * math.sqrt(2 * m + 1) / (n**2.5 * (m + 1) * (m + 2) * (m + 3))
    gamma = 2.0 / math.sqrt(math.pi)
    return gamma * math.pi * L / (32 * n**2.5 * (m - 1) ** 2)


def _m_terms(family: WaveletFamily, m: np.ndarray) -> np.ndarray:
    if family is WaveletFamily.TAYLOR:
        return (2 * m + 1) / ((m + 1) ** 2 * (m + 2) ** 2 * (m + 3) ** 2)
    return 1.0 / (m - 1.0) ** 4


def _m_remainder(family: WaveletFamily, first_omitted: int) -> float:
    # integral test from first_omitted - 1 on a decreasing majorant
    K = first_omitted
    if family is WaveletFamily.TAYLOR:
        # (2m+1)/((m+1)^2 (m+2)^2 (m+3)^2) <= 2/(m+1)^5
        return 2.0 / (4.0 * K**4)
    return 1.0 / (3.0 * (K - 2.0) ** 3)


@dataclass(frozen=True)
class TailSum:
    value: float
    remainder: float  # upper bound on (true - value)


def kappa_tail(family, k: int, M: int, trunc: int = 1000) -> TailSum:
    """Square root of the doubly-infinite tail sum over ``n > 2**(k-1)``, ``m >= M``.

    Each index is summed over ``trunc`` terms; the double sum factorises, and
    the omitted part is bounded with the integral test.
    """
    family = WaveletFamily.parse(family)
    if trunc < 1000:
        raise ValueError("trunc must be at least 1000")
    if family is WaveletFamily.CHEBYSHEV and M < 2:
        raise ValueError("the Chebyshev tail needs M >= 2")
    n0 = 2 ** (k - 1) + 1
    n = np.arange(n0, n0 + trunc, dtype=float)
    m = np.arange(M, M + trunc, dtype=float)
    a = float(np.sum(n[::-1] ** -5.0))
    b = float(np.sum(_m_terms(family, m)[::-1]))
    ra = 1.0 / (4.0 * (n0 + trunc - 1.0) ** 4)
    rb = _m_remainder(family, M + trunc)
    value = math.sqrt(a * b)
    upper = math.sqrt((a + ra) * (b + rb))
    return TailSum(value, upper - value)


@dataclass(frozen=True)
class BoundEstimate:
    family: WaveletFamily
    k: int
    M: int
    L: float
    tail: float
    remainder: float
    lam: float
    kappa: float


def bound_estimate(family, k: int, M: int, L: float = 1.0, lam: float = 1.0,
                   trunc: int = 1000) -> BoundEstimate:
    """Tail value and ``kappa = lam * tail``; ``lam`` has no closed form and is supplied."""
    family = WaveletFamily.parse(family)
    ts = kappa_tail(family, k, M, trunc)
    return BoundEstimate(family, k, M, L, ts.value, ts.remainder, lam, lam * ts.value)


@dataclass(frozen=True)
class CoefficientCheck:
    passed: bool
    margins: dict[tuple[int, int], float]  # (n, m) -> bound - |d_nm|
    coefficients: np.ndarray

    @property
    def failures(self) -> list[tuple[int, int]]:
        return [key for key, margin in self.margins.items() if margin < 0]


def verify_coefficient_decay(f: Callable, L: float, spec: BasisSpec) -> CoefficientCheck:
    """Compare every ``|d_nm|`` with ``m >= 2`` against its decay bound."""
    if not L > 0:
        raise ValueError("L must be positive")
    d = expand(f, spec)
    margins = {}
    for idx in spec.indices():
        if idx.m >= 2:
            margins[(idx.n, idx.m)] = coefficient_bound(spec.family, idx.n, idx.m, L) - abs(d[idx.flat])
    return CoefficientCheck(all(v >= 0 for v in margins.values()), margins, d)


def fit_growth_rate(errors: Sequence[float], dt: float) -> float:
    """Smallest ``kappa`` with ``e_r <= e_0 + r * kappa * dt`` for every step."""
    e = np.asarray(errors, dtype=float)
    if e.size < 2:
        return 0.0
    r = np.arange(1, e.size)
    return float(max(0.0, np.max((e[1:] - e[0]) / (r * dt))))


# -- tables ------------------------------------------------------------------------

def _step_of(output: SolveOutput, t: float) -> int:
    step = int(np.argmin(np.abs(output.times - t)))
    if abs(output.times[step] - t) > 1e-9:
        raise ValueError(f"t = {t:g} is not on the time grid")
    return step


def build_tables(output: SolveOutput, exact: ExactReference, report_x=EIGHTHS, report_t=None):
    """Solution rows ``(t, x, |y - Y|)`` and control rows ``(t, X_exact, |X - X_num|)``.

    ``report_t`` defaults to ten equally spaced times ending at the final time.
    """
    if not exact.present:
        raise UnsupportedReportError("tables need an exact reference")
    T = float(output.times[-1])
    xs = np.asarray(report_x, dtype=float)
    if np.any((xs < 0) | (xs > 1)):
        raise ValueError("report_x must lie in [0, 1]")
    times = list(np.linspace(T / 10, T, 10)) if report_t is None else list(report_t)
    solution = []
    for t in times:
        step = _step_of(output, t)
        tt = float(output.times[step])
        errs = np.abs(exact.y(xs, tt) - evaluate_field(output, step, xs))
        solution.extend((tt, float(x), float(e)) for x, e in zip(xs, errs))
    control = []
    for t in times:
        step = _step_of(output, t)
        tt = float(output.times[step])
        X_exact = float(exact.X(tt))
        control.append((tt, X_exact, abs(X_exact - float(output.X_series[step]))))
    return solution, control
