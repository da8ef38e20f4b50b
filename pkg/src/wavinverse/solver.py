"""Time-marching wavelet collocation for the field and the control parameter.

On each step ``[t_r, t_{r+1}]`` the mixed derivative ``Y_txx`` is expanded in
the wavelet basis with an unknown coefficient row ``D``.  Integrating in x
(closed-form R, S) and in t gives Y, Y_x, Y_xx in terms of ``D`` with the
Dirichlet data built in.  A step is:

1. predict ``X(t_{r+1})`` from the interior trace Q and the lagged derivatives,
2. collocate the PDE at ``t_{r+1}`` and solve the N x N system for ``D``,
3. push Y, Y_x, Y_xx forward at the collocation points and at ``x_in``.
"""

from __future__ import annotations

import enum
import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from .basis import BasisSpec, basis_matrices, collocation_points
from .problem import Q_EPS, InverseProblem

__all__ = [
    "LinearMethod",
    "SolverConfig",
    "StepState",
    "SolveOutput",
    "SolverError",
    "DegenerateDataError",
    "SingularSystemError",
    "ConvergenceError",
    "StepFailure",
    "init_state",
    "predict_control",
    "assemble",
    "linear_solve",
    "advance",
    "run",
    "evaluate_field",
]

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    pass


class DegenerateDataError(SolverError):
    def __init__(self, t: float, q: float):
        super().__init__(f"|Q(t)| = {abs(q):.3e} too small at t = {t:.6g}")
        self.t = t


class SingularSystemError(SolverError):
    pass


class ConvergenceError(SolverError):
    def __init__(self, residual: float, iterations: int):
        super().__init__(f"GMRES stalled after {iterations} iterations, residual {residual:.3e}")
        self.residual = residual
        self.iterations = iterations


class StepFailure(SolverError):
    """A step-level error annotated with where it happened."""

    def __init__(self, step: int, t: float, cause: Exception):
        super().__init__(f"step {step} (t = {t:.6g}): {cause}")
        self.step = step
        self.t = t
        self.cause = cause


class LinearMethod(enum.Enum):
    LU = "lu"
    GMRES = "gmres"


@dataclass(frozen=True)
class SolverConfig:
    basis: BasisSpec
    dt: float
    N_t: int
    linear_method: LinearMethod = LinearMethod.LU
    gmres_tol: float = 1e-12
    gmres_restart: int | None = None
    gmres_maxiter: int | None = None
    # extra predict/solve passes on the first step, using that step's own D
    bootstrap_passes: int = 1

    def __post_init__(self):
        object.__setattr__(self, "linear_method", LinearMethod(self.linear_method))
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.N_t < 1:
            raise ValueError("N_t must be at least 1")
        if self.bootstrap_passes < 0:
            raise ValueError("bootstrap_passes must be non-negative")
        if self.gmres_restart is None:
            object.__setattr__(self, "gmres_restart", self.basis.N)
        if self.gmres_maxiter is None:
            object.__setattr__(self, "gmres_maxiter", 10 * self.basis.N)

    @classmethod
    def for_horizon(cls, basis: BasisSpec, T: float, dt: float, **kw) -> "SolverConfig":
        steps = round(T / dt)
        if steps < 1 or abs(steps * dt - T) > 1e-12:
            raise ValueError(f"dt = {dt:g} does not divide T = {T:g}")
        return cls(basis=basis, dt=T / steps, N_t=steps, **kw)

    @property
    def T(self) -> float:
        return self.dt * self.N_t


@dataclass
class StepState:
    r: int
    t_r: float
    Y: np.ndarray
    Yx: np.ndarray
    Yxx: np.ndarray
    Y_in: float
    Yx_in: float
    Yxx_in: float
    D_prev: np.ndarray | None = None
    X_r: float | None = None


@dataclass
class SolveOutput:
    times: np.ndarray
    X_series: np.ndarray  # nan where X is undefined (Q(0) = 0)
    snapshots: list[tuple[np.ndarray, np.ndarray, np.ndarray]]
    D_history: list[np.ndarray]
    residuals: np.ndarray
    iterations: np.ndarray
    points: np.ndarray
    spec: BasisSpec
    problem: InverseProblem
    boundary_defect: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass(frozen=True)
class _Grid:
    """Basis rows at the collocation points and at ``x_in``."""

    x: np.ndarray
    I: np.ndarray
    R: np.ndarray
    S: np.ndarray
    I_in: np.ndarray
    R_in: np.ndarray
    S_in: np.ndarray
    S1: np.ndarray


@lru_cache(maxsize=32)
def _grid(spec: BasisSpec, x_in: float) -> _Grid:
    x = collocation_points(spec)
    I, R, S = basis_matrices(spec, np.append(x, [x_in, 1.0]))
    for a in (I, R, S):
        a.setflags(write=False)
    return _Grid(x, I[:-2], R[:-2], S[:-2], I[-2], R[-2], S[-2], S[-1])


def _q_or_raise(problem: InverseProblem, t: float) -> float:
    q = float(problem.Q(t))
    if abs(q) <= Q_EPS:
        raise DegenerateDataError(t, q)
    return q


def init_state(problem: InverseProblem, spec: BasisSpec) -> StepState:
    """Initial snapshots from ``y0`` and its derivatives; ``X_0`` when Q(0) != 0."""
    x = collocation_points(spec)
    xi = problem.x_in
    state = StepState(
        r=0,
        t_r=0.0,
        Y=np.asarray(problem.y0(x), dtype=float) * np.ones_like(x),
        Yx=np.asarray(problem.y0_x(x), dtype=float) * np.ones_like(x),
        Yxx=np.asarray(problem.y0_xx(x), dtype=float) * np.ones_like(x),
        Y_in=float(problem.y0(xi)),
        Yx_in=float(problem.y0_x(xi)),
        Yxx_in=float(problem.y0_xx(xi)),
    )
    q0 = float(problem.Q(0.0))
    if abs(q0) > Q_EPS:
        state.X_r = (
            float(problem.Q_t(0.0))
            - problem.A * state.Yxx_in
            - problem.B * state.Yx_in
            - float(problem.psi(xi, 0.0))
        ) / q0
    return state


def _control_numerator(state: StepState, problem: InverseProblem, dt: float, spec) -> float:
    yxx, yx = state.Yxx_in, state.Yx_in
    if state.D_prev is not None:
        if spec is None:
            raise ValueError("spec is required once previous coefficients exist")
        g = _grid(spec, problem.x_in)
        D = state.D_prev
        w2 = D @ g.I_in
        w1 = D @ g.R_in + float(problem.f1_t(state.t_r)) - float(problem.f0_t(state.t_r)) - D @ g.S1
        yxx = yxx + dt * w2
        yx = yx + dt * w1
    t_next = state.t_r + dt
    return (
        float(problem.Q_t(t_next))
        - problem.A * yxx
        - problem.B * yx
        - float(problem.psi(problem.x_in, t_next))
    )


def predict_control(
    state: StepState, problem: InverseProblem, dt: float, spec: BasisSpec | None = None
) -> float:
    """Control value at ``t_r + dt`` from the interior trace.

    The lagged ``Y_xx`` and ``Y_x`` at ``x_in`` are carried forward one step
    with their time derivatives from the previous coefficients; on the first
    step there are none and the correction is dropped.
    """
    q = _q_or_raise(problem, state.t_r + dt)
    return _control_numerator(state, problem, dt, spec) / q


def _guarded_control(state: StepState, problem: InverseProblem, dt: float, spec) -> float:
    # 0/0 at a vanishing trace: every X fits, keep the last value
    try:
        return predict_control(state, problem, dt, spec)
    except DegenerateDataError:
        if abs(_control_numerator(state, problem, dt, spec)) > Q_EPS:
            raise
        return state.X_r if state.X_r is not None else 0.0


def assemble(
    state: StepState, X_next: float, problem: InverseProblem, spec: BasisSpec, t_next: float
) -> tuple[np.ndarray, np.ndarray]:
    """Collocated system ``Msys @ D = b`` for the step ending at ``t_next``."""
    g = _grid(spec, problem.x_in)
    dt = t_next - state.t_r
    A, B = problem.A, problem.B
    x = g.x
    lifted = g.S - np.outer(x, g.S1)  # S(x_l) - x_l S(1), rowwise Kronecker
    Msys = lifted - A * dt * g.I - B * dt * (g.R - g.S1[None, :]) - X_next * dt * lifted

    t_r = state.t_r
    f0d = float(problem.f0(t_next)) - float(problem.f0(t_r))
    f1d = float(problem.f1(t_next)) - float(problem.f1(t_r))
    f0p = float(problem.f0_t(t_next))
    f1p = float(problem.f1_t(t_next))
    b = (
        np.asarray(problem.psi(x, t_next), dtype=float)
        - x * (f1p - f0p)
        - f0p
        + A * state.Yxx
        + B * (state.Yx + f1d - f0d)
        + X_next * (state.Y + f0d + x * (f1d - f0d))
    )
    return Msys, b


def linear_solve(Msys: np.ndarray, b: np.ndarray, cfg: SolverConfig) -> tuple[np.ndarray, float, int]:
    """Solve the step system; returns ``(D, residual_norm, iterations)``."""
    Msys = np.asarray(Msys, dtype=float)
    b = np.asarray(b, dtype=float)
    if Msys.ndim != 2 or Msys.shape[0] != Msys.shape[1] or Msys.shape[0] != b.shape[0]:
        raise ValueError(f"shape mismatch: {Msys.shape} vs {b.shape}")
    bnorm = float(np.linalg.norm(b))
    if cfg.linear_method is LinearMethod.LU:
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
                lu, piv = scipy.linalg.lu_factor(Msys, check_finite=True)
        except (ValueError, np.linalg.LinAlgError) as exc:
            raise SingularSystemError(str(exc)) from exc
        if np.any(np.abs(np.diag(lu)) <= np.finfo(float).eps * max(1.0, np.abs(Msys).max())):
            raise SingularSystemError("zero pivot in LU factorisation")
        D = scipy.linalg.lu_solve((lu, piv), b)
        iterations = 1
    else:
        count = [0]

        def tick(_):
            count[0] += 1

        D, info = scipy.sparse.linalg.gmres(
            Msys,
            b,
            rtol=cfg.gmres_tol,
            atol=0.0,
            restart=cfg.gmres_restart,
            maxiter=cfg.gmres_maxiter,
            callback=tick,
            callback_type="pr_norm",
        )
        iterations = count[0]
        if info != 0:
            raise ConvergenceError(float(np.linalg.norm(Msys @ D - b)), iterations)
    residual = float(np.linalg.norm(Msys @ D - b))
    bound = max(cfg.gmres_tol * bnorm, 1e-10)
    if not np.isfinite(residual) or residual > bound:
        if cfg.linear_method is LinearMethod.LU:
            raise SingularSystemError(f"residual {residual:.3e} exceeds {bound:.3e}")
        raise ConvergenceError(residual, iterations)
    return D, residual, iterations


def advance(
    state: StepState,
    D: np.ndarray,
    X_next: float,
    problem: InverseProblem,
    spec: BasisSpec,
    dt: float,
) -> StepState:
    """Field snapshots at ``t_r + dt`` given the solved coefficients."""
    g = _grid(spec, problem.x_in)
    t_r, t_next = state.t_r, state.t_r + dt
    f0d = float(problem.f0(t_next)) - float(problem.f0(t_r))
    f1d = float(problem.f1(t_next)) - float(problem.f1(t_r))
    slope = f1d - f0d
    x, xi = g.x, problem.x_in
    return StepState(
        r=state.r + 1,
        t_r=t_next,
        Y=dt * (g.S - np.outer(x, g.S1)) @ D + state.Y + f0d + x * slope,
        Yx=dt * (g.R - g.S1[None, :]) @ D + state.Yx + slope,
        Yxx=dt * g.I @ D + state.Yxx,
        Y_in=float(dt * (g.S_in - xi * g.S1) @ D + state.Y_in + f0d + xi * slope),
        Yx_in=float(dt * (g.R_in - g.S1) @ D + state.Yx_in + slope),
        Yxx_in=float(dt * g.I_in @ D + state.Yxx_in),
        D_prev=np.asarray(D, dtype=float).copy(),
        X_r=X_next,
    )


def run(problem: InverseProblem, cfg: SolverConfig) -> SolveOutput:
    """March from t = 0 to ``cfg.T``."""
    spec = cfg.basis
    state = init_state(problem, spec)
    times = state.t_r + cfg.dt * np.arange(cfg.N_t + 1)
    X = np.full(cfg.N_t + 1, np.nan)
    if state.X_r is not None:
        X[0] = state.X_r
    snapshots = [(state.Y.copy(), state.Yx.copy(), state.Yxx.copy())]
    D_hist: list[np.ndarray] = []
    residuals = np.zeros(cfg.N_t)
    iterations = np.zeros(cfg.N_t, dtype=int)
    defects = np.zeros(cfg.N_t)
    _, _, S_ends = basis_matrices(spec, [0.0, 1.0])
    ends_lift = S_ends - np.outer([0.0, 1.0], S_ends[1])
    cumulative = np.zeros(spec.N)
    for r in range(cfg.N_t):
        t_next = times[r + 1]
        try:
            state.t_r = times[r]
            X_next = _guarded_control(state, problem, cfg.dt, spec)
            Msys, b = assemble(state, X_next, problem, spec, t_next)
            D, res, its = linear_solve(Msys, b, cfg)
            if state.D_prev is None:
                for _ in range(cfg.bootstrap_passes):
                    X_next = _guarded_control(replace(state, D_prev=D), problem, cfg.dt, spec)
                    Msys, b = assemble(state, X_next, problem, spec, t_next)
                    D, res, more = linear_solve(Msys, b, cfg)
                    its += more
            state = advance(state, D, X_next, problem, spec, t_next - times[r])
        except (SolverError, ValueError, ArithmeticError) as exc:
            raise StepFailure(r + 1, float(t_next), exc) from exc
        state.t_r = t_next
        X[r + 1] = X_next
        snapshots.append((state.Y, state.Yx, state.Yxx))
        D_hist.append(D)
        residuals[r] = res
        iterations[r] = its
        cumulative += (t_next - times[r]) * D
        ends = _ends_Y(problem, times, r + 1, ends_lift @ cumulative)
        defects[r] = max(
            abs(ends[0] - float(problem.f0(t_next))), abs(ends[1] - float(problem.f1(t_next)))
        )
    log.debug("solve finished: %d steps, max residual %.3e", cfg.N_t, residuals.max(initial=0.0))
    return SolveOutput(
        times=times,
        X_series=X,
        snapshots=snapshots,
        D_history=D_hist,
        residuals=residuals,
        iterations=iterations,
        points=collocation_points(spec),
        spec=spec,
        problem=problem,
        boundary_defect=defects,
    )


def _ends_Y(problem, times, step, increment):
    xs = np.array([0.0, 1.0])
    f0d = float(problem.f0(times[step])) - float(problem.f0(times[0]))
    f1d = float(problem.f1(times[step])) - float(problem.f1(times[0]))
    return np.asarray(problem.y0(xs), dtype=float) + increment + f0d + xs * (f1d - f0d)


def evaluate_field_from(snapshots, D_hist, times, problem, spec, step, xs) -> np.ndarray:
    """Y(x, t_step) at arbitrary x by telescoping the per-step representation.

    Every step adds ``dt * D . (S(x) - x S(1))`` plus the linear boundary lift,
    so the field at any x is ``y0(x)`` plus the sum of those increments.
    """
    xs = np.atleast_1d(np.asarray(xs, dtype=float))
    _, _, S = basis_matrices(spec, xs)
    S1 = _grid(spec, problem.x_in).S1
    lifted = S - np.outer(xs, S1)
    Y = np.asarray(problem.y0(xs), dtype=float) * np.ones_like(xs)
    if step > 0:
        coeff = np.zeros(spec.N)
        for r in range(step):
            coeff += (times[r + 1] - times[r]) * D_hist[r]
        Y = Y + lifted @ coeff
        f0d = float(problem.f0(times[step])) - float(problem.f0(times[0]))
        f1d = float(problem.f1(times[step])) - float(problem.f1(times[0]))
        Y = Y + f0d + xs * (f1d - f0d)
    return Y


def evaluate_field(output: SolveOutput, step: int, xs) -> np.ndarray:
    """Reconstructed Y at arbitrary points for a given step of a finished solve."""
    return evaluate_field_from(
        output.snapshots, output.D_history, output.times, output.problem, output.spec, step, xs
    )
