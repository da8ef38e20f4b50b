"""Taylor and Chebyshev wavelet bases on [0, 1].

A basis is fixed by a family and the resolution pair (k, M).  The unit
interval is cut into ``2**(k-1)`` dyadic pieces; on piece ``n`` the family
carries ``M`` polynomials of degree ``m = 0..M-1``.  Everything here works
with the flat index ``(n - 1) * M + m`` so that a coefficient row vector
``D`` pairs with ``I(x)``, ``R(x)`` and ``S(x)`` by a plain dot product.

``R`` and ``S`` are the first and second antiderivatives of ``I`` taken from
zero, evaluated in closed form.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate

__all__ = [
    "WaveletFamily",
    "BasisSpec",
    "BasisIndex",
    "QuadratureError",
    "chebyshev_poly",
    "eval_wavelet",
    "eval_first_integral",
    "eval_second_integral",
    "basis_vectors",
    "basis_matrices",
    "collocation_points",
    "inner_products",
    "expand",
    "reconstruct",
    "taylor_gram",
]

_CLAMP_EPS = 1e-12
_QUAD_TOL = 1e-10


class QuadratureError(ArithmeticError):
    """Raised when a coefficient integral does not reach its tolerance."""

    def __init__(self, message: str, achieved: float):
        super().__init__(f"{message} (achieved error estimate {achieved:.3e})")
        self.achieved = achieved


class WaveletFamily(enum.Enum):
    TAYLOR = "taylor"
    CHEBYSHEV = "chebyshev"

    @classmethod
    def parse(cls, value: "str | WaveletFamily") -> "WaveletFamily":
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower()
        aliases = {"twm": "taylor", "cwm": "chebyshev", "chebyshevfirstkind": "chebyshev"}
        return cls(aliases.get(key, key))

    @property
    def short(self) -> str:
        return "TWM" if self is WaveletFamily.TAYLOR else "CWM"


@dataclass(frozen=True)
class BasisSpec:
    family: WaveletFamily
    k: int
    M: int
    N: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "family", WaveletFamily.parse(self.family))
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k!r}")
        if int(self.M) != self.M or self.M < 1:
            raise ValueError(f"M must be a positive integer, got {self.M!r}")
        object.__setattr__(self, "N", 2 ** (self.k - 1) * self.M)

    @property
    def pieces(self) -> int:
        """Number of dyadic subintervals, ``2**(k-1)``."""
        return 2 ** (self.k - 1)

    def indices(self) -> list["BasisIndex"]:
        return [BasisIndex.from_flat(self, i) for i in range(self.N)]


@dataclass(frozen=True)
class BasisIndex:
    n: int
    m: int
    flat: int

    @classmethod
    def of(cls, spec: BasisSpec, n: int, m: int) -> "BasisIndex":
        if not 1 <= n <= spec.pieces:
            raise IndexError(f"n={n} outside [1, {spec.pieces}]")
        if not 0 <= m < spec.M:
            raise IndexError(f"m={m} outside [0, {spec.M - 1}]")
        return cls(n, m, (n - 1) * spec.M + m)

    @classmethod
    def from_flat(cls, spec: BasisSpec, flat: int) -> "BasisIndex":
        if not 0 <= flat < spec.N:
            raise IndexError(f"flat index {flat} outside [0, {spec.N - 1}]")
        n, m = divmod(flat, spec.M)
        return cls(n + 1, m, flat)


def _check_index(spec: BasisSpec, idx: BasisIndex) -> None:
    if not (1 <= idx.n <= spec.pieces and 0 <= idx.m < spec.M):
        raise IndexError(f"index (n={idx.n}, m={idx.m}) invalid for k={spec.k}, M={spec.M}")
    if idx.flat != (idx.n - 1) * spec.M + idx.m:
        raise IndexError(f"flat index {idx.flat} inconsistent with (n={idx.n}, m={idx.m})")


def chebyshev_poly(m: int, t):
    """First-kind Chebyshev polynomial C_m(t) by the three-term recurrence.

    Arguments within 1e-12 of [-1, 1] are clamped onto it.
    """
    if m < 0:
        raise ValueError("degree must be non-negative")
    t = np.asarray(t, dtype=float)
    t = np.where((t > 1.0) & (t <= 1.0 + _CLAMP_EPS), 1.0, t)
    t = np.where((t < -1.0) & (t >= -1.0 - _CLAMP_EPS), -1.0, t)
    prev, cur = np.ones_like(t), t
    if m == 0:
        out = prev
    else:
        for _ in range(m - 1):
            prev, cur = cur, 2.0 * t * cur - prev
        out = cur
    return float(out) if out.ndim == 0 else out


def _gamma(m: int) -> float:
    return math.sqrt(2.0 / math.pi) if m == 0 else 2.0 / math.sqrt(math.pi)


def _regions(spec: BasisSpec, n: int, x: np.ndarray):
    """Boolean masks (inside, past) for piece ``n``; x == 1 belongs to the last piece."""
    lo = (n - 1) / spec.pieces
    hi = n / spec.pieces
    inside = (x >= lo) & (x < hi)
    if n == spec.pieces:
        inside |= x == hi
    past = (x >= hi) & ~inside
    return inside, past


# -- Taylor closed forms ------------------------------------------------------

def _taylor_I(spec, n, m, x):
    inside, _ = _regions(spec, n, x)
    tau = spec.pieces * x - n + 1
    val = 2.0 ** ((spec.k - 1) / 2) * math.sqrt(2 * m + 1) * tau**m
    return np.where(inside, val, 0.0)


def _taylor_P(spec, n, m, x, i):
    b = n / spec.pieces
    total = np.zeros_like(x)
    for j in range(m + 1):
        c = math.comb(m, j) * 2.0 ** ((j + 0.5) * (spec.k - 1)) * math.factorial(j)
        c *= math.sqrt(2 * m + 1) / math.factorial(j + i)
        total = total + c * (x - b) ** (j + i)
    return total


def _taylor_RS(spec, n, m, x, order):
    inside, past = _regions(spec, n, x)
    a = (n - 1) / spec.pieces
    c = 2.0 ** ((m + 0.5) * (spec.k - 1)) * math.factorial(m) * math.sqrt(2 * m + 1)
    c /= math.factorial(m + order)
    mono = c * (x - a) ** (m + order)
    return np.where(inside, mono, np.where(past, mono - _taylor_P(spec, n, m, x, order), 0.0))


# -- Chebyshev closed forms ---------------------------------------------------

def _rho(m):
    return (1 - (-1) ** (m + 1)) / (m + 1) - (1 - (-1) ** (m - 1)) / (m - 1)


def _mu(m):
    return (-1) ** (m - 1) / (m - 1) - (-1) ** (m + 1) / (m + 1)


def _cheb_I(spec, n, m, x):
    inside, _ = _regions(spec, n, x)
    theta = 2.0**spec.k * x - 2 * n + 1
    val = _gamma(m) * 2.0 ** ((spec.k - 1) / 2) * chebyshev_poly(m, np.clip(theta, -1.0, 1.0))
    return np.where(inside, val, 0.0)


def _cheb_R(spec, n, m, x):
    inside, past = _regions(spec, n, x)
    k = spec.k
    theta = np.clip(2.0**k * x - 2 * n + 1, -1.0, 1.0)
    C = lambda j: chebyshev_poly(j, theta)  # noqa: E731
    g = _gamma(m)
    if m == 0:
        mid = g * 2.0 ** (-(k - 1) / 2 - 1) * (C(1) + C(0))
        end = g * 2.0 ** (-(k - 1) / 2) * C(0)
    elif m == 1:
        mid = g * 2.0 ** (-(k - 1) / 2 - 3) * (C(2) - C(0))
        end = np.zeros_like(x)
    else:
        s = g * 2.0 ** (-(k - 1) / 2 - 2)
        mid = s * (C(m + 1) / (m + 1) - C(m - 1) / (m - 1) + _mu(m))
        end = np.full_like(x, s * _rho(m))
    return np.where(inside, mid, np.where(past, end, 0.0))


def _cheb_S(spec, n, m, x):
    inside, past = _regions(spec, n, x)
    k = spec.k
    theta = np.clip(2.0**k * x - 2 * n + 1, -1.0, 1.0)
    C = lambda j: chebyshev_poly(j, theta)  # noqa: E731
    g = _gamma(m)
    b = n / spec.pieces
    if m == 0:
        mid = g * 2.0 ** (-3 * (k - 1) / 2 - 4) * (C(2) + 4 * C(1) + 3 * C(0))
        end = g * 2.0 ** (-(k - 1) / 2) * (1 / 2**k + x - b)
    elif m == 1:
        mid = g * 2.0 ** (-3 * (k - 1) / 2 - 4) * (C(3) / 6 - 1.5 * C(1) - 4 * C(0) / 3)
        end = np.full_like(x, g * 2.0 ** (-3 * (k - 1) / 2 - 1) / -3)
    elif m == 2:
        mid = g * 2.0 ** (-3 * (k - 1) / 2 - 3) * (
            (C(4) - 1) / 24 - (C(2) - 1) / 3 - 2 / 3 * (C(1) + C(0))
        )
        end = g * 2.0 ** (-(k - 1) / 2) / -3 * (1 / 2**k + x - b)
    else:
        s = g * 2.0 ** (-3 * (k - 1) / 2 - 3)

        def sgn(j):
            return (-1) ** j

        mid = s * (
            (C(m + 2) - sgn(m + 2)) / (2 * (m + 1) * (m + 2))
            - (C(m) - sgn(m)) / (2 * (m + 1) * m)
            - (C(m) - sgn(m)) / (2 * (m - 1) * m)
            + (C(m - 2) - sgn(m - 2)) / (2 * (m - 1) * (m - 2))
            + (1 + C(1)) * _mu(m)
        )
        end = s * (
            (1 - sgn(m + 2)) / (2 * (m + 1) * (m + 2))
            - (1 - sgn(m)) / (2 * (m + 1) * m)
            - (1 - sgn(m)) / (2 * (m - 1) * m)
            + (1 - sgn(m - 2)) / (2 * (m - 1) * (m - 2))
            + 2 * _mu(m)
            + 2**k * (x - b) * _rho(m)
        )
    return np.where(inside, mid, np.where(past, end, 0.0))


def _dispatch(spec: BasisSpec, idx: BasisIndex, x, which: str):
    _check_index(spec, idx)
    xa = np.asarray(x, dtype=float)
    if spec.family is WaveletFamily.TAYLOR:
        if which == "I":
            out = _taylor_I(spec, idx.n, idx.m, xa)
        else:
            out = _taylor_RS(spec, idx.n, idx.m, xa, 1 if which == "R" else 2)
    else:
        fn = {"I": _cheb_I, "R": _cheb_R, "S": _cheb_S}[which]
        out = fn(spec, idx.n, idx.m, xa)
    return float(out) if np.ndim(out) == 0 else out


def eval_wavelet(spec: BasisSpec, idx: BasisIndex, x):
    """Wavelet ``I_nm`` at ``x`` (scalar or array)."""
    return _dispatch(spec, idx, x, "I")


def eval_first_integral(spec: BasisSpec, idx: BasisIndex, x):
    """``R_nm(x)``, the integral of ``I_nm`` over ``[0, x]``."""
    return _dispatch(spec, idx, x, "R")


def eval_second_integral(spec: BasisSpec, idx: BasisIndex, x):
    """``S_nm(x)``, the integral of ``R_nm`` over ``[0, x]``."""
    return _dispatch(spec, idx, x, "S")


def basis_matrices(spec: BasisSpec, xs) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rows ``I(x_l)``, ``R(x_l)``, ``S(x_l)`` for every point, each of shape (len(xs), N)."""
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    I = np.empty((xs.size, spec.N))
    R = np.empty_like(I)
    S = np.empty_like(I)
    for idx in spec.indices():
        I[:, idx.flat] = eval_wavelet(spec, idx, xs)
        R[:, idx.flat] = eval_first_integral(spec, idx, xs)
        S[:, idx.flat] = eval_second_integral(spec, idx, xs)
    return I, R, S


def basis_vectors(spec: BasisSpec, x: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``I(x)``, ``R(x)``, ``S(x)`` as flat N-vectors."""
    I, R, S = basis_matrices(spec, [x])
    return I[0], R[0], S[0]


def collocation_points(spec: BasisSpec) -> np.ndarray:
    """Midpoint grid ``(2l - 1) / (2N)``, l = 1..N."""
    return (2.0 * np.arange(1, spec.N + 1) - 1.0) / (2.0 * spec.N)


def _gauss_chebyshev(g: Callable[[np.ndarray], np.ndarray], nodes: int) -> float:
    j = np.arange(1, nodes + 1)
    theta = np.cos((2 * j - 1) * np.pi / (2 * nodes))
    return math.pi / nodes * float(np.sum(g(theta)))


def inner_products(f: Callable, spec: BasisSpec, tol: float = _QUAD_TOL) -> np.ndarray:
    """``<f, I_nm>`` for every index: plain L2 for Taylor, weighted for Chebyshev.

    Chebyshev products use Gauss-Chebyshev nodes on the mapped variable,
    doubled until two rules agree to ``tol``.
    """
    d = np.zeros(spec.N)
    for idx in spec.indices():
        lo = (idx.n - 1) / spec.pieces
        hi = idx.n / spec.pieces
        if spec.family is WaveletFamily.TAYLOR:
            val, err = integrate.quad(
                lambda x: f(x) * eval_wavelet(spec, idx, x), lo, hi,
                epsabs=tol, epsrel=0.0, limit=200,
            )
            if err > tol:
                raise QuadratureError(f"coefficient (n={idx.n}, m={idx.m}) did not converge", err)
        else:
            # dx = dtheta / 2**k on the support
            def g(theta, idx=idx):
                x = (theta + 2 * idx.n - 1) / 2.0**spec.k
                fx = np.array([f(xi) for xi in x], dtype=float)
                return fx * eval_wavelet(spec, idx, x) / 2.0**spec.k

            nodes = 32
            val = _gauss_chebyshev(g, nodes)
            while True:
                nodes *= 2
                finer = _gauss_chebyshev(g, nodes)
                err = abs(finer - val)
                val = finer
                if err <= tol:
                    break
                if nodes >= 2**14:
                    raise QuadratureError(
                        f"coefficient (n={idx.n}, m={idx.m}) did not converge", err
                    )
        d[idx.flat] = val
    return d


def taylor_gram(M: int) -> np.ndarray:
    """Gram matrix of the Taylor wavelets on one piece (the same on every piece)."""
    m = np.arange(M)
    return np.sqrt(np.outer(2 * m + 1, 2 * m + 1)) / (m[:, None] + m[None, :] + 1)


def expand(f: Callable, spec: BasisSpec, tol: float = _QUAD_TOL) -> np.ndarray:
    """Coefficients ``d`` with ``D . I(x)`` the best approximation of ``f``.

    Chebyshev wavelets are orthonormal under their weight, so the weighted
    inner products are already the coefficients.  Taylor wavelets are only
    normalised; their inner products are mapped through the per-piece Gram
    matrix to get the L2 projection.
    """
    d = inner_products(f, spec, tol)
    if spec.family is WaveletFamily.TAYLOR:
        G = taylor_gram(spec.M)
        d = np.linalg.solve(G, d.reshape(spec.pieces, spec.M).T).T.reshape(-1)
    return d


def reconstruct(d: np.ndarray, spec: BasisSpec, xs) -> np.ndarray:
    """Evaluate ``D . I(x)`` at the given points."""
    I, _, _ = basis_matrices(spec, xs)
    return I @ np.asarray(d, dtype=float)
