"""Study harness and CLI: convergence studies, stability scans, theorem
checks, and CSV/pretty reporting.

Configs are single JSON documents with strict key checking (an unnoticed
typo in a dt list would silently corrupt convergence slopes).  Runs are
deterministic for a fixed config, including the random seed, so emitted
CSV files are byte-identical across repeats.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import hashlib
import io
import json
import math
import os
import sys as _sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import BracketError, ConfigError
from .implicit import spectral_radius
from .problems import (AdrProblem, LinearDaeProblem, make_adr_system,
                       make_dae_system, make_stiff_system, stiff_exact)
from .quadrature import (ALL_SCHEME_NAMES, SchemeName, make_scheme,
                         scheme_catalog_json)
from .stability import (LinearPartition, StabilityReport,
                        fixed_point_iteration_matrix,
                        forward_euler_update_matrix,
                        sample_diagonally_dominant, scan_dt_max,
                        sdc1_update_matrix, theorem_check)
from .sweep import integrate

WORKERS_ENV = "PARTSDC_WORKERS"
CACHE_ENV = "PARTSDC_CACHE_DIR"

# forcing catalog for the DAE problem: name -> (g, exact (u1, u2) at t)
DAE_FORCINGS = {
    "cos": (math.cos, lambda t: (math.sin(t), math.cos(t))),
    "one": (lambda t: 1.0, lambda t: (t, 1.0)),
}

_CONV_PROBLEMS = ("stiff_ode", "adr", "dae")
_MODES = ("partitioned", "monolithic_be", "monolithic_fe")


@dataclass
class StudyConfig:
    problem: str
    schemes: list[str]
    dts: list[float]
    t_end: float
    mode: str = "partitioned"
    alpha: float = 1000.0
    x0: float = 1000.0
    grid_n: int = 21
    dae_forcing: str = "cos"
    ref_dt: float = 6.25e-3
    seed: int = 0
    out: str | None = None

    def validate(self) -> "StudyConfig":
        if self.problem not in _CONV_PROBLEMS:
            raise ConfigError(f"unknown problem {self.problem!r}; "
                              f"expected one of {_CONV_PROBLEMS}")
        if self.mode not in _MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if not self.schemes:
            raise ConfigError("schemes list is empty")
        try:
            self.schemes = [make_scheme(s).name.value for s in self.schemes]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"unknown scheme in {self.schemes}: {exc}")
        if not self.dts:
            raise ConfigError("dt list is empty")
        if any(b >= a for a, b in zip(self.dts, self.dts[1:])):
            raise ConfigError("dt list must be strictly decreasing")
        for dt in self.dts:
            if dt <= 0:
                raise ConfigError("dts must be positive")
            ratio = self.t_end / dt
            if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio):
                raise ConfigError(
                    f"dt={dt} does not divide t_end={self.t_end}")
        if self.dae_forcing not in DAE_FORCINGS:
            raise ConfigError(f"unknown dae_forcing {self.dae_forcing!r}")
        return self


_CONFIG_KEYS = {
    "problem", "schemes", "dts", "t_end", "mode", "alpha", "x0", "grid_n",
    "dae_forcing", "ref_dt", "seed", "out",
}


def load_study_config(source) -> StudyConfig:
    """Parse a StudyConfig from a JSON document (path, file, or dict)."""
    if isinstance(source, dict):
        doc = source
    else:
        text = Path(source).read_text() if isinstance(source, (str, Path)) \
            else source.read()
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}")
    if not isinstance(doc, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(doc) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    missing = {"problem", "schemes", "dts", "t_end"} - set(doc)
    if missing:
        raise ConfigError(f"missing config keys: {sorted(missing)}")
    return StudyConfig(**doc).validate()


def default_convergence_config() -> StudyConfig:
    """The reference study: every catalog scheme on the stiff ODE ladder."""
    return StudyConfig(
        problem="stiff_ode",
        schemes=[n.value for n in ALL_SCHEME_NAMES],
        dts=[1.0, 0.5, 0.25, 0.125, 0.0625],
        t_end=20.0,
    ).validate()


@dataclass
class ConvergenceRow:
    problem: str
    scheme: str
    dt: float
    error: float | None
    observed_order: float | None
    stable: bool


def _num_workers() -> int:
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def _cache_dir() -> Path:
    root = os.environ.get(CACHE_ENV)
    if root is None:
        root = os.environ.get("XDG_CACHE_HOME",
                              str(Path.home() / ".cache"))
        path = Path(root) / "partsdc"
    else:
        path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _adr_reference(problem: AdrProblem, t_end: float,
                   ref_dt: float) -> np.ndarray:
    """Self-reference trajectory endpoint (SDC4 at ref_dt), disk-cached."""
    key = repr((problem, t_end, ref_dt, "SDC4", 1))
    digest = hashlib.sha256(key.encode()).hexdigest()[:16]
    cache = _cache_dir() / f"adr_ref_{digest}.npy"
    if cache.exists():
        return np.load(cache)
    sys = make_adr_system(problem)
    traj = integrate(sys, make_scheme("SDC4"), sys.initial_state(),
                     0.0, t_end, ref_dt)
    if traj.diverged:
        raise RuntimeError("ADR reference run diverged")
    np.save(cache, traj.final_state.data)
    return traj.final_state.data


def _build_problem(cfg: StudyConfig):
    """(system, initial state, reference-at-t_end) for a study config."""
    if cfg.problem == "stiff_ode":
        sys = make_stiff_system(cfg.alpha, cfg.x0)
        return sys, sys.initial_state(), stiff_exact(cfg.alpha, cfg.x0,
                                                     cfg.t_end)
    if cfg.problem == "dae":
        g, exact = DAE_FORCINGS[cfg.dae_forcing]
        sys = make_dae_system(LinearDaeProblem(forcing=g))
        return sys, sys.initial_state(), np.array(exact(cfg.t_end))
    prob = AdrProblem(grid_n=cfg.grid_n)
    sys = make_adr_system(prob)
    return sys, sys.initial_state(), _adr_reference(prob, cfg.t_end,
                                                    cfg.ref_dt)


def run_convergence(cfg: StudyConfig) -> list[ConvergenceRow]:
    """One row per (scheme, dt): L-infinity error at t_end plus the
    pairwise observed order; unstable runs are flagged and the order is
    omitted for the affected pairs.
    """
    cfg.validate()
    sys, u0, reference = _build_problem(cfg)

    def cell(args):
        scheme_name, dt = args
        traj = integrate(sys, make_scheme(scheme_name), u0, 0.0,
                         cfg.t_end, dt, mode=cfg.mode)
        if traj.diverged or not np.all(np.isfinite(traj.final_state.data)):
            return scheme_name, dt, None
        return scheme_name, dt, float(
            np.max(np.abs(traj.final_state.data - reference)))

    cells = [(s, dt) for s in cfg.schemes for dt in cfg.dts]
    workers = _num_workers()
    if workers > 1:
        with concurrent.futures.ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(cell, cells))
    else:
        results = [cell(c) for c in cells]
    errors = {(s, dt): err for s, dt, err in results}

    rows = []
    for scheme_name in cfg.schemes:
        prev_err = None
        prev_dt = None
        for dt in cfg.dts:
            err = errors[(scheme_name, dt)]
            order = None
            if (err is not None and prev_err is not None
                    and err > 0 and prev_err > 0):
                order = math.log(prev_err / err) / math.log(prev_dt / dt)
            rows.append(ConvergenceRow(cfg.problem, scheme_name, dt, err,
                                       order, stable=err is not None))
            prev_err, prev_dt = err, dt
    return rows


# -- stability scans -----------------------------------------------------------

_STIFF_METHODS = ("mono_fe", "sdc1_partitioned", "fixed_point")

_SCAN_KEYS = {"problem", "methods", "schemes", "alphas", "dts", "t_end",
              "grid_n", "n", "seed", "bisect_tol", "out"}


@dataclass
class StabilityScanConfig:
    problem: str = "stiff_ode"
    methods: list[str] = field(default_factory=lambda: list(_STIFF_METHODS))
    schemes: list[str] = field(
        default_factory=lambda: [n.value for n in ALL_SCHEME_NAMES])
    alphas: list[float] = field(default_factory=lambda: [10.0, 100.0, 1000.0])
    dts: list[float] = field(
        default_factory=lambda: [0.001, 0.01, 0.1, 1.0, 2.0, 3.0])
    t_end: float = 1.0
    grid_n: int = 21
    n: int = 6
    seed: int = 0
    bisect_tol: float = 1e-8
    out: str | None = None

    def validate(self) -> "StabilityScanConfig":
        if self.problem not in ("stiff_ode", "adr", "linear_random"):
            raise ConfigError(f"unknown stability problem {self.problem!r}")
        bad = set(self.methods) - set(_STIFF_METHODS)
        if self.problem in ("stiff_ode", "linear_random") and bad:
            raise ConfigError(f"unknown methods: {sorted(bad)}")
        self.schemes = [make_scheme(s).name.value for s in self.schemes]
        return self


def load_scan_config(source) -> StabilityScanConfig:
    if isinstance(source, dict):
        doc = source
    else:
        doc = json.loads(Path(source).read_text())
    unknown = set(doc) - _SCAN_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return StabilityScanConfig(**doc).validate()


_MATRIX_BUILDERS = {
    "mono_fe": forward_euler_update_matrix,
    "sdc1_partitioned": sdc1_update_matrix,
    "fixed_point": fixed_point_iteration_matrix,
}


def _stiff_partition(alpha: float) -> LinearPartition:
    return LinearPartition(
        np.array([[0.0, 1.0], [-alpha, -alpha - 1.0]]))


def run_stability_scan(cfg: StabilityScanConfig
                       ) -> tuple[list[StabilityReport], list[dict]]:
    """Exact rho-based scan for the linear stiff problem, or a
    stability-by-simulation scan for the ADR problem.

    Returns the per-(method, alpha) reports plus flat CSV rows with the
    fixed column set method, alpha, dt, rho, stable.
    """
    cfg.validate()
    reports = []
    rows = []

    def rho_scan(part, alpha_label):
        for method in cfg.methods:
            builder = _MATRIX_BUILDERS[method]
            rhos = [spectral_radius(builder(part, dt)) for dt in cfg.dts]
            dt_max = scan_dt_max(lambda dt: builder(part, dt),
                                 dt_lo=1e-6, dt_hi=1e3, tol=cfg.bisect_tol)
            reports.append(StabilityReport(
                method=method, dt_grid=list(cfg.dts), rho_values=rhos,
                dt_max=dt_max))
            for dt, rho in zip(cfg.dts, rhos):
                rows.append({"method": method, "alpha": alpha_label,
                             "dt": dt, "rho": rho, "stable": rho < 1.0})

    if cfg.problem == "stiff_ode":
        for alpha in cfg.alphas:
            rho_scan(_stiff_partition(alpha), alpha)
        return reports, rows

    if cfg.problem == "linear_random":
        rng = np.random.default_rng(cfg.seed)
        part = LinearPartition(sample_diagonally_dominant(rng, cfg.n))
        rho_scan(part, "")
        return reports, rows

    sys = make_adr_system(AdrProblem(grid_n=cfg.grid_n))
    u0 = sys.initial_state()
    for scheme_name in cfg.schemes:
        stable_flags = []
        for dt in cfg.dts:
            traj = integrate(sys, make_scheme(scheme_name), u0, 0.0,
                             cfg.t_end, dt)
            ok = (not traj.diverged
                  and np.all(np.isfinite(traj.final_state.data)))
            stable_flags.append(ok)
            rows.append({"method": scheme_name, "alpha": "", "dt": dt,
                         "rho": "", "stable": bool(ok)})
        reports.append(StabilityReport(
            method=scheme_name, dt_grid=list(cfg.dts),
            rho_values=[], dt_max=None))
    return reports, rows


def run_theorem_check(n: int, trials: int, seed: int):
    return theorem_check(n, trials, rng_seed=seed)


# -- reporting -----------------------------------------------------------------

CSV_HEADER = "problem,scheme,dt,error,observed_order,stable"


def _fmt(value) -> str:
    if value is None or value == "":
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.10g}"
    return str(value)


def render_convergence_csv(rows: Sequence[ConvergenceRow]) -> str:
    if not rows:
        raise ValueError("no rows to report")
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(",".join(_fmt(v) for v in (
            r.problem, r.scheme, r.dt, r.error, r.observed_order, r.stable)))
    return "\n".join(lines) + "\n"


def render_convergence_pretty(rows: Sequence[ConvergenceRow]) -> str:
    if not rows:
        raise ValueError("no rows to report")
    header = ("problem", "scheme", "dt", "error", "observed_order", "stable")
    table = [header] + [
        tuple(_fmt(v) for v in (r.problem, r.scheme, r.dt, r.error,
                                r.observed_order, r.stable))
        for r in rows]
    widths = [max(len(row[c]) for row in table) for c in range(len(header))]
    out = io.StringIO()
    for row in table:
        out.write("  ".join(cell.ljust(w) for cell, w in zip(row, widths))
                  .rstrip() + "\n")
    return out.getvalue()


def render_stability_csv(rows: Sequence[dict]) -> str:
    if not rows:
        raise ValueError("no rows to report")
    lines = ["method,alpha,dt,rho,stable"]
    for r in rows:
        lines.append(",".join(_fmt(r[k]) for k in
                              ("method", "alpha", "dt", "rho", "stable")))
    return "\n".join(lines) + "\n"


def emit_report(rows: Sequence[ConvergenceRow], format: str = "csv",
                path: str | None = None) -> str:
    """Render convergence rows and write them to ``path`` or stdout."""
    if format == "csv":
        text = render_convergence_csv(rows)
    elif format == "pretty":
        text = render_convergence_pretty(rows)
    else:
        raise ValueError(f"unknown format {format!r}")
    if path is None:
        _sys.stdout.write(text)
    else:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise OSError(f"cannot write report to {path!r}: {exc}")
    return text


# -- CLI -----------------------------------------------------------------------

def _cmd_convergence(args) -> int:
    cfg = load_study_config(args.config)
    rows = run_convergence(cfg)
    out = args.out or cfg.out
    emit_report(rows, format=args.format, path=out)
    if out:
        print(f"wrote {out}")
    return 1 if any(not r.stable for r in rows) else 0


def _cmd_stability(args) -> int:
    cfg = load_scan_config(args.config)
    try:
        reports, rows = run_stability_scan(cfg)
    except BracketError as exc:
        print(f"bracket error: {exc}", file=_sys.stderr)
        return 2
    text = render_stability_csv(rows)
    out = args.out or cfg.out
    if out:
        Path(out).write_text(text)
        print(f"wrote {out}")
    else:
        _sys.stdout.write(text)
    for rep in reports:
        if rep.dt_max is not None:
            print(f"# {rep.method}: dt_max = {rep.dt_max:.10g}")
        elif not rep.rho_values:
            continue
        else:
            print(f"# {rep.method}: unconditionally stable up to 1e3")
    return 0


def _cmd_theorem(args) -> int:
    report = run_theorem_check(args.n, args.trials, args.seed)
    print(f"trials={report.trials} cases={report.cases} "
          f"max_rho={report.max_rho:.8f} "
          f"violations={len(report.violations)}")
    for v in report.violations:
        print(f"VIOLATION trial={v.trial} dt={v.dt} rho={v.rho:.8f}")
        print(np.array2string(v.matrix))
    return 0 if report.passed else 1


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="partsdc",
        description="Partitioned SDC studies: convergence, stability, "
                    "and the diagonal-dominance stability theorem.")
    parser.add_argument("--dump-schemes", action="store_true",
                        help="print the scheme catalog as JSON and exit")
    sub = parser.add_subparsers(dest="command")

    pc = sub.add_parser("convergence", help="run a convergence study")
    pc.add_argument("--config", required=True)
    pc.add_argument("--out", default=None)
    pc.add_argument("--format", choices=("csv", "pretty"), default="csv")

    ps = sub.add_parser("stability", help="run a stability scan")
    ps.add_argument("--config", required=True)
    ps.add_argument("--out", default=None)

    pt = sub.add_parser("theorem", help="random dominance theorem check")
    pt.add_argument("--n", type=int, default=10)
    pt.add_argument("--trials", type=int, default=100)
    pt.add_argument("--seed", type=int, default=42)

    args = parser.parse_args(argv)
    if args.dump_schemes:
        print(json.dumps(scheme_catalog_json(), indent=2))
        return 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "convergence":
            return _cmd_convergence(args)
        if args.command == "stability":
            return _cmd_stability(args)
        if args.command == "theorem":
            return _cmd_theorem(args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=_sys.stderr)
        return 2
    return 2


if __name__ == "__main__":
    raise SystemExit(main())
