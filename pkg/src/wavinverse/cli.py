"""Command-line driver: ``solve`` and ``compare``.

Configuration is a flat ``key = value`` file::

    problem = example1        # example1 | example2 | custom | <path to problem file>
    family  = both            # taylor | chebyshev | both
    k = 4
    M = 4
    dt = 1e-3
    t_end = 1.0
    report_x = 0.125, 0.25, 0.375
    solver = lu               # lu | gmres

With ``problem = custom`` the problem expressions (``psi``, ``y0``, ``f0``,
``Q`` and their derivatives, ``A``, ``B``, ``x_in``, optionally ``exact_y``
and ``exact_X``) sit in the same file; a path points at a separate file with
those keys.
"""

from __future__ import annotations

import argparse
import csv
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import analysis
from .basis import BasisSpec, WaveletFamily
from .problem import (
    PROBLEM_KEYS,
    ExactReference,
    ExpressionError,
    InverseProblem,
    compile_expression,
    example_one,
    example_two,
    problem_from_expressions,
    validate,
)
from .solver import LinearMethod, SolveOutput, SolverConfig, SolverError, run

log = logging.getLogger(__name__)

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2
_NUM = "{:.5e}"  # 6 significant digits


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        super().__init__(f"line {line}: {message}" if line else message)
        self.line = line


@dataclass
class RunConfig:
    problem: str = "example1"
    families: tuple[WaveletFamily, ...] = (WaveletFamily.TAYLOR,)
    k: int = 4
    M: int = 4
    dt: float = 1e-3
    t_end: float = 1.0
    report_x: tuple[float, ...] = analysis.EIGHTHS
    report_t: tuple[float, ...] = ()
    solver: LinearMethod = LinearMethod.LU
    gmres_tol: float = 1e-12
    bootstrap_passes: int = 1
    output_dir: Path = Path("results")
    problem_data: InverseProblem | None = field(default=None, repr=False)
    exact: ExactReference = field(default_factory=ExactReference, repr=False)

    @property
    def steps(self) -> int:
        return round(self.t_end / self.dt)

    def solver_config(self, family: WaveletFamily) -> SolverConfig:
        return SolverConfig(
            basis=BasisSpec(family, self.k, self.M),
            dt=self.t_end / self.steps,
            N_t=self.steps,
            linear_method=self.solver,
            gmres_tol=self.gmres_tol,
            bootstrap_passes=self.bootstrap_passes,
        )


_RUN_KEYS = {
    "problem", "family", "k", "M", "dt", "t_end", "report_x", "report_t",
    "solver", "gmres_tol", "output_dir", "bootstrap_passes",
}


def _read_pairs(source: str) -> dict[str, tuple[str, int]]:
    pairs: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(source.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {raw.strip()!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if not key or not value:
            raise ConfigError(f"empty key or value in {raw.strip()!r}", lineno)
        if key in pairs:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        pairs[key] = (value, lineno)
    return pairs


def _number(text: str, lineno: int, key: str) -> float:
    try:
        return float(compile_expression(text, ())())
    except (ExpressionError, TypeError) as exc:
        raise ConfigError(f"{key}: {exc}", lineno) from None


def _integer(text: str, lineno: int, key: str) -> int:
    value = _number(text, lineno, key)
    if value != int(value) or value < 1:
        raise ConfigError(f"{key} must be a positive integer, got {text!r}", lineno)
    return int(value)


def _number_list(text: str, lineno: int, key: str) -> tuple[float, ...]:
    return tuple(_number(item, lineno, key) for item in text.split(",") if item.strip())


def _custom_problem(pairs, t_end, name):
    values = {}
    for key in PROBLEM_KEYS:
        if key in pairs:
            values[key] = pairs[key][0]
    try:
        return problem_from_expressions(values, T=t_end, name=name)
    except ExpressionError as exc:
        # point at the offending key when we can tell which one it is
        for key in values:
            try:
                compile_expression(values[key], PROBLEM_KEYS[key] or ())
            except ExpressionError:
                raise ConfigError(f"{key}: {exc}", pairs[key][1]) from None
        raise ConfigError(str(exc)) from None
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(source: str, base_dir: Path | None = None) -> RunConfig:
    """Parse and validate a run configuration."""
    pairs = _read_pairs(source)
    problem_name = pairs.get("problem", ("example1", 0))[0]
    inline_custom = problem_name == "custom"
    for key, (_, lineno) in pairs.items():
        if key in _RUN_KEYS or (inline_custom and key in PROBLEM_KEYS):
            continue
        raise ConfigError(f"unknown key {key!r}", lineno)

    cfg = RunConfig(problem=problem_name)
    if "family" in pairs:
        value, lineno = pairs["family"]
        if value.lower() == "both":
            cfg.families = (WaveletFamily.TAYLOR, WaveletFamily.CHEBYSHEV)
        else:
            try:
                cfg.families = (WaveletFamily.parse(value),)
            except ValueError:
                raise ConfigError(f"unknown family {value!r}", lineno) from None
    for key in ("k", "M", "bootstrap_passes"):
        if key in pairs:
            value, lineno = pairs[key]
            if key == "bootstrap_passes":
                number = _number(value, lineno, key)
                if number != int(number) or number < 0:
                    raise ConfigError("bootstrap_passes must be a non-negative integer", lineno)
                cfg.bootstrap_passes = int(number)
            else:
                setattr(cfg, key, _integer(value, lineno, key))
    for key in ("dt", "gmres_tol"):
        if key in pairs:
            value, lineno = pairs[key]
            number = _number(value, lineno, key)
            if not number > 0:
                raise ConfigError(f"{key} must be positive", lineno)
            setattr(cfg, key, number)
    if "solver" in pairs:
        value, lineno = pairs["solver"]
        try:
            cfg.solver = LinearMethod(value.lower())
        except ValueError:
            raise ConfigError(f"unknown solver {value!r} (lu or gmres)", lineno) from None
    if "output_dir" in pairs:
        cfg.output_dir = Path(pairs["output_dir"][0])

    # problem first: it supplies the default horizon
    if problem_name == "example1":
        problem, exact = example_one()
    elif problem_name == "example2":
        problem, exact = example_two()
    else:
        t_guess = 1.0
        if "t_end" in pairs:
            t_guess = _number(pairs["t_end"][0], pairs["t_end"][1], "t_end")
        if inline_custom:
            problem, exact = _custom_problem(pairs, t_guess, "custom")
        else:
            path = Path(problem_name)
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            try:
                text = path.read_text(encoding="utf-8")
            except OSError as exc:
                raise ConfigError(f"cannot read problem file {path}: {exc}", pairs["problem"][1]) from None
            inner = _read_pairs(text)
            for key, (_, lineno) in inner.items():
                if key not in PROBLEM_KEYS:
                    raise ConfigError(f"{path.name}: unknown problem key {key!r}", lineno)
            problem, exact = _custom_problem(inner, t_guess, path.stem)
    cfg.t_end = problem.T
    if "t_end" in pairs:
        value, lineno = pairs["t_end"]
        cfg.t_end = _number(value, lineno, "t_end")
        if not cfg.t_end > 0:
            raise ConfigError("t_end must be positive", lineno)
    steps = round(cfg.t_end / cfg.dt)
    if steps < 1 or abs(steps * cfg.dt - cfg.t_end) > 1e-12:
        line = pairs.get("dt", (None, None))[1]
        raise ConfigError(f"dt = {cfg.dt:g} does not divide t_end = {cfg.t_end:g}", line)
    cfg.problem_data = problem.with_horizon(cfg.t_end)
    cfg.exact = exact

    if "report_x" in pairs:
        value, lineno = pairs["report_x"]
        cfg.report_x = _number_list(value, lineno, "report_x")
        if not cfg.report_x or any(not 0.0 <= x <= 1.0 for x in cfg.report_x):
            raise ConfigError("report_x must be non-empty and inside [0, 1]", lineno)
    if "report_t" in pairs:
        value, lineno = pairs["report_t"]
        cfg.report_t = _number_list(value, lineno, "report_t")
        for t in cfg.report_t:
            if not 0.0 < t <= cfg.t_end + 1e-12 or abs(round(t / cfg.dt) * cfg.dt - t) > 1e-9:
                raise ConfigError(f"report time {t:g} is not a grid time in (0, t_end]", lineno)
    else:
        cfg.report_t = tuple(cfg.t_end * np.arange(1, 11) / 10)
        cfg.report_t = tuple(cfg.dt * round(t / cfg.dt) for t in cfg.report_t)

    problems = [v for v in validate(cfg.problem_data, []) if v.kind == "compatibility"]
    if problems:
        raise ConfigError("; ".join(v.message for v in problems))
    return cfg


def load_config(path: str | Path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config(text, base_dir=path.parent)


# -- running -----------------------------------------------------------------------

@dataclass
class FamilyResult:
    family: WaveletFamily
    output: SolveOutput
    seconds: float


def solve_all(cfg: RunConfig) -> list[FamilyResult]:
    results = []
    for family in cfg.families:
        start = time.perf_counter()
        output = run(cfg.problem_data, cfg.solver_config(family))
        results.append(FamilyResult(family, output, time.perf_counter() - start))
        log.info("%s solved in %.3f s", family.short, results[-1].seconds)
    return results


def _write_csv(path: Path, header, rows) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_NUM.format(v) if isinstance(v, float) else v for v in row])


def write_outputs(cfg: RunConfig, results: list[FamilyResult], out_dir: Path) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    dt = cfg.t_end / cfg.steps
    solution_rows, control_rows, series_rows, diag_rows, x_rows = [], [], [], [], []
    for res in results:
        label = res.family.value
        out = res.output
        for t, X in zip(out.times, out.X_series):
            x_rows.append((label, float(t), float(X)))
        for step, (resid, its) in enumerate(zip(out.residuals, out.iterations), start=1):
            diag_rows.append((label, step, float(resid), int(its)))
        if cfg.exact.present:
            solution, control = analysis.build_tables(out, cfg.exact, cfg.report_x, cfg.report_t)
            solution_rows += [(label, dt, t, x, e) for t, x, e in solution]
            control_rows += [(label, dt, t, X, e) for t, X, e in control]
            series = analysis.error_series(out, cfg.exact)
            series_rows += [(label, float(t), float(a), float(b)) for t, a, b in series]
    if cfg.exact.present:
        _write_csv(out_dir / "solution_errors.csv", ("family", "dt", "t", "x", "abs_error"), solution_rows)
        _write_csv(out_dir / "control_errors.csv", ("family", "dt", "t", "exact_X", "abs_error"), control_rows)
        _write_csv(out_dir / "error_series.csv", ("family", "t", "linf", "l2"), series_rows)
    _write_csv(out_dir / "control_series.csv", ("family", "t", "X"), x_rows)
    _write_csv(out_dir / "diagnostics.csv", ("family", "step", "residual", "iterations"), diag_rows)
    with (out_dir / "timing.txt").open("w", encoding="utf-8") as fh:
        for res in results:
            fh.write(f"{res.family.value} {res.seconds:.6f}\n")


def run_command(cfg: RunConfig, out_dir: Path | None = None) -> list[FamilyResult]:
    results = solve_all(cfg)
    write_outputs(cfg, results, out_dir or cfg.output_dir)
    return results


def comparison_rows(cfg: RunConfig, results: list[FamilyResult]):
    """Rows ``(t, x, twm_error, cwm_error, ratio)`` with ratio = CWM / TWM."""
    by_family = {res.family: res.output for res in results}
    twm = analysis.build_tables(by_family[WaveletFamily.TAYLOR], cfg.exact, cfg.report_x, cfg.report_t)[0]
    cwm = analysis.build_tables(by_family[WaveletFamily.CHEBYSHEV], cfg.exact, cfg.report_x, cfg.report_t)[0]
    rows = []
    for (t, x, et), (_, _, ec) in zip(twm, cwm):
        if et == ec:
            ratio = 1.0
        elif et == 0.0:
            ratio = float("inf")
        else:
            ratio = ec / et
        rows.append((t, x, et, ec, ratio))
    return rows


def compare_command(cfg: RunConfig, out_dir: Path | None = None) -> tuple[list, str]:
    if not cfg.exact.present:
        raise ConfigError("compare needs a problem with an exact reference")
    cfg.families = (WaveletFamily.TAYLOR, WaveletFamily.CHEBYSHEV)
    results = run_command(cfg, out_dir)
    rows = comparison_rows(cfg, results)
    target = out_dir or cfg.output_dir
    _write_csv(target / "comparison.csv", ("t", "x", "twm_error", "cwm_error", "cwm_over_twm"), rows)
    ratios = np.array([r[4] for r in rows])
    summary = f"CWM/TWM error ratio: max {ratios.max():.4g}, median {np.median(ratios):.4g}"
    return rows, summary


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="wavinverse",
        description="Wavelet collocation for parabolic source-identification problems.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in (
        ("solve", "run the configured solves and write CSV tables"),
        ("compare", "run both families and tabulate CWM/TWM error ratios"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, type=Path)
        p.add_argument("--output-dir", type=Path, default=None)
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")

    try:
        cfg = load_config(args.config)
        if args.command == "compare" and not cfg.exact.present:
            raise ConfigError("compare needs a problem with an exact reference")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out_dir = args.output_dir or cfg.output_dir
    try:
        if args.command == "solve":
            run_command(cfg, out_dir)
            print(f"wrote results to {out_dir}")
        else:
            _, summary = compare_command(cfg, out_dir)
            print(summary)
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
