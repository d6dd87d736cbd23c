"""Command-line runner: ``harnacklab run|list|report``.

A config is an INI file whose sections are experiment names; keys missing
from a section fall back to ``[DEFAULT]`` and then to :data:`DEFAULTS`.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import math
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SCHEMA_VERSION = 1
COLUMNS = (
    "experiment",
    "eps",
    "b0",
    "p0",
    "c",
    "N_eps",
    "osc_ratio",
    "alpha_hat",
    "theta_hat",
    "fitted_N",
    "harnack_ratio",
    "residual",
    "max_Lw",
    "max_g",
    "ok",
)
METRICS = COLUMNS[2:-1]

DEFAULTS = {
    "delta0": "0.25",
    "delta": "0.2",
    "nu": "0.5",
    "tol": "1e-6",
    "max_nx": "200000",
    "max_nt": "2000000",
    "seed": "0",
    "family": "elliptic",
    "samples": "100",
    "eps_list": "",
    "K": "8",
    "eps_start": "0.015625",
    "max_halvings": "14",
    "halfwidth": "4.0",
    "t_end": "0.3",
    "forcing": "travelling",
    "l": "4.0",
    "l0": "1.0",
    "nx": "1024",
    "steps_per_period": "512",
    "max_periods": "200",
}

EPS_DEFAULTS = {
    "elliptic-limit": "0.125, 0.0625, 0.03125, 0.015625",
    "harnack-elliptic": "0.125, 0.0625, 0.03125, 0.015625",
    "parabolic-corrector": "0.2, 0.1, 0.05",
}


class ConfigError(ValueError):
    """Malformed or inconsistent configuration."""


class ExperimentError(RuntimeError):
    """A module error with experiment and ``eps`` context attached."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Validated settings of one experiment section."""

    experiment: str
    delta0: float
    delta: float
    nu: float
    eps_list: tuple[float, ...]
    max_nx: int
    max_nt: int
    tol: float
    seed: int
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if not 0 < self.delta < 1:
            raise ConfigError("delta must lie in (0, 1)")
        if not 0 < self.delta0 <= 0.5:
            raise ConfigError("delta0 must lie in (0, 0.5]")
        if not 0 < self.nu <= 1:
            raise ConfigError("nu must lie in (0, 1]")
        if any(e <= 0 for e in self.eps_list):
            raise ConfigError("eps_list entries must be positive")
        if list(self.eps_list) != sorted(self.eps_list, reverse=True):
            raise ConfigError("eps_list must be sorted descending")

    def echo(self) -> dict:
        out = {k: getattr(self, k) for k in ("experiment", "delta0", "delta", "nu", "max_nx", "max_nt", "tol", "seed")}
        out["eps_list"] = list(self.eps_list)
        out.update(self.options)
        return out


@dataclass
class ResultRow:
    """One output line: metrics not produced by an experiment stay ``None``."""

    experiment: str
    eps: float | None
    metrics: dict
    ok: bool
    wall_time: float = 0.0
    extras: dict = field(default_factory=dict)

    def record(self) -> dict:
        rec = {"experiment": self.experiment, "eps": self.eps}
        rec.update({k: self.metrics.get(k) for k in METRICS})
        rec["ok"] = self.ok
        return rec


# experiment table -------------------------------------------------------------

EXPERIMENTS = {
    "cell": (
        "family, delta0, nu, samples, seed",
        "invariant density of the cell operator; the averaged drift has the sign of G(1)",
    ),
    "elliptic-limit": (
        "delta0, eps_list",
        "the scaled Dirichlet solutions converge to 1 away from the left end as eps -> 0",
    ),
    "harnack-elliptic": (
        "delta0, eps_list",
        "the elliptic Harnack ratio u(0)/u(-1/2) of 1 + u_eps grows without bound as eps -> 0",
    ),
    "barrier": (
        "delta0, K, eps_start, max_halvings",
        "the corrected barrier u_eps - h_K + g is a strict supersolution for small eps",
    ),
    "parabolic-corrector": (
        "delta0, nu, eps_list, halfwidth, t_end, max_nx, max_nt",
        "|u - U| <= N (eps + t) with N independent of eps, and the corrector is O(eps)",
    ),
    "periodic-solve": (
        "forcing, delta0, l, l0, nx, steps_per_period, tol, max_periods",
        "period-to-period differences contract geometrically to a time-periodic solution",
    ),
    "harnack-parabolic": (
        "delta0, delta, nu",
        "sup over C_r(Y) <= delta while sup over C_r(Y_r) >= 1 - delta: no uniform Harnack constant",
    ),
    "oscillation-parabolic": (
        "delta0, delta, nu",
        "osc over C_delta(Y) >= (1 - delta) osc over C_1(Y): no uniform Hoelder decay",
    ),
}


def list_experiments() -> str:
    """Static description table (byte-identical across runs)."""
    lines = []
    for name, (keys, claim) in EXPERIMENTS.items():
        lines.append(f"{name}\n  keys:  {keys}\n  claim: {claim}\n")
    return "\n".join(lines)


# config -----------------------------------------------------------------------


def _floats(text: str) -> tuple[float, ...]:
    parts = [p for p in text.replace(",", " ").split() if p]
    try:
        return tuple(float(p) for p in parts)
    except ValueError as err:
        raise ConfigError(f"bad number list {text!r}") from err


def load_config(path: str | Path, eps_override=None, seed_override=None) -> list[ExperimentConfig]:
    """Parse ``path`` into one :class:`ExperimentConfig` per experiment section, in file order."""
    parser = configparser.ConfigParser(defaults=DEFAULTS, interpolation=None)
    parser.optionxform = str
    if not parser.read(path, encoding="utf-8"):
        raise ConfigError(f"cannot read config {path}")
    if not parser.sections():
        raise ConfigError("config holds no experiment sections")
    out = []
    for name in parser.sections():
        sec = parser[name]
        try:
            eps = tuple(eps_override) if eps_override else _floats(sec["eps_list"] or EPS_DEFAULTS.get(name, ""))
            options = {k: sec[k] for k in sec if k not in ("delta0", "delta", "nu", "tol", "max_nx", "max_nt", "seed", "eps_list")}
            out.append(
                ExperimentConfig(
                    experiment=name,
                    delta0=sec.getfloat("delta0"),
                    delta=sec.getfloat("delta"),
                    nu=sec.getfloat("nu"),
                    eps_list=eps,
                    max_nx=sec.getint("max_nx"),
                    max_nt=sec.getint("max_nt"),
                    tol=sec.getfloat("tol"),
                    seed=seed_override if seed_override is not None else sec.getint("seed"),
                    options=options,
                )
            )
        except (KeyError, ValueError) as err:
            if isinstance(err, ConfigError):
                raise
            raise ConfigError(f"[{name}]: {err}") from err
    return out


# runners ----------------------------------------------------------------------


def _opt(cfg: ExperimentConfig, key: str, kind=float):
    return kind(cfg.options[key])


def _run_cell(cfg):
    from .elliptic_cell import (
        DriftCoeffs,
        check_sign_relation,
        flux_adjoint_residual,
        invariant_density,
        mixed_family,
        random_pair,
        travelling_coeffs,
        travelling_family,
    )
    from .elliptic_experiments import MIXED_NU
    from .periodic_fn import constant

    family = cfg.options["family"]
    if family == "elliptic":
        mf = mixed_family(cfg.delta0)
        cell = invariant_density(DriftCoeffs(mf.a, mf.b, MIXED_NU))
        metrics = {"b0": cell.b0, "c": cell.c_flux}
    elif family == "travelling":
        tf = travelling_family(cfg.delta0, cfg.nu)
        cell = invariant_density(travelling_coeffs(tf.a, tf.p, cfg.nu), p=tf.p)
        metrics = {"b0": cell.b0, "p0": cell.p0, "c": cell.b0 / cell.p0}
    elif family == "constant":
        cell = invariant_density(DriftCoeffs(constant(1.0), constant(0.0), cfg.nu))
        metrics = {"b0": cell.b0, "c": cell.c_flux}
    else:
        raise ConfigError(f"unknown family {family!r}")
    metrics["residual"] = flux_adjoint_residual(cell)
    s_b = 0 if abs(cell.b0) <= 1e-10 else np.sign(cell.b0)
    s_g = 0 if abs(cell.G_per_period) <= 1e-10 else np.sign(cell.G_per_period)
    rng = np.random.default_rng(cfg.seed)
    disagree = 0
    for _ in range(_opt(cfg, "samples", int)):
        a, b = random_pair(rng)
        disagree += not check_sign_relation(a, b)[2]
    extras = {"G1": cell.G_per_period, "sign_disagreements": disagree}
    return [ResultRow(cfg.experiment, None, metrics, bool(s_b == s_g and disagree == 0), extras=extras)]


def _run_elliptic_limit(cfg):
    from .elliptic_cell import mixed_family
    from .elliptic_experiments import solve_mixed_dirichlet

    mf = mixed_family(cfg.delta0)
    rows, prev = [], math.inf
    for eps in cfg.eps_list:
        sol = solve_mixed_dirichlet(mf.a1, mf.a2, eps)
        err = sol.sup_error(1.0, 0.1, 1.0)
        odd = float(np.max(np.abs(sol(sol.x) + sol(-sol.x))))
        rows.append(ResultRow(cfg.experiment, eps, {"residual": err}, bool(err < prev and odd <= 1e-12), extras={"oddness": odd}))
        prev = err
    if rows:
        rows[-1].ok = rows[-1].ok and rows[-1].metrics["residual"] <= 0.05
    return rows


def _run_harnack_elliptic(cfg):
    from .elliptic_cell import mixed_family
    from .harnack_metrics import counterexample_harnack_elliptic

    mf = mixed_family(cfg.delta0)
    rows, prev = [], -math.inf
    for rep in counterexample_harnack_elliptic(mf.a1, mf.a2, cfg.eps_list):
        m = {"N_eps": rep.harnack_ratio, "harnack_ratio": rep.harnack_ratio, "osc_ratio": rep.osc_ratio, "alpha_hat": rep.alpha_hat}
        rows.append(ResultRow(cfg.experiment, rep.eps, m, bool(rep.harnack_ratio > prev)))
        prev = rep.harnack_ratio
    return rows


def _run_barrier(cfg):
    from .elliptic_cell import mixed_family
    from .elliptic_experiments import barrier_search

    mf = mixed_family(cfg.delta0)
    reps = barrier_search(mf.a, mf.b, _opt(cfg, "K"), _opt(cfg, "eps_start"), _opt(cfg, "max_halvings", int))
    rows = [ResultRow(cfg.experiment, r.eps, {"max_Lw": r.max_Lw, "max_g": r.max_g}, r.ok, extras={"h_min": r.h_min, "max_Lw_fd": r.max_Lw_fd}) for r in reps]
    for r in rows[:-1]:
        r.ok = True  # coarse eps are allowed to fail; only the last one is asserted
    return rows


def _run_parabolic_corrector(cfg):
    from .elliptic_cell import travelling_family
    from .parabolic_solver import GridPolicy, bump_profile, corrector_comparison

    tf = travelling_family(cfg.delta0, cfg.nu)
    g = bump_profile(0.0, _opt(cfg, "halfwidth"))
    policy = GridPolicy(max_nx=cfg.max_nx, max_nt=cfg.max_nt)
    rows = []
    for eps in cfg.eps_list:
        rep = corrector_comparison(tf.a, tf.p, eps, g, _opt(cfg, "t_end"), cfg.nu, policy)
        m = {"b0": rep.b0, "p0": rep.p0, "c": rep.c, "fitted_N": rep.fitted_N, "residual": rep.max_corrector_gap, "max_Lw": rep.max_Lw}
        rows.append(ResultRow(cfg.experiment, eps, m, True))
    if rows:
        rows[-1].ok = rows[-1].metrics["fitted_N"] <= 2 * rows[0].metrics["fitted_N"]
    return rows


def _run_periodic(cfg):
    from .elliptic_cell import travelling_family
    from .periodic_parabolic import PeriodicBox, check_orthogonality, find_periodic_solution, travelling_periodic_coefficients

    tf = travelling_family(cfg.delta0, cfg.nu)
    box = PeriodicBox(_opt(cfg, "l"), _opt(cfg, "l0"))
    coeffs = travelling_periodic_coefficients(tf.a, tf.p, tf.v, nu=cfg.nu)
    forcing = cfg.options["forcing"]
    if forcing == "travelling":
        k = 2 * np.pi / box.l
        w = 2 * np.pi / box.l0

        def phi(t, x):
            return np.cos(w * t) * np.sin(k * x) + 0.5 * np.sin(w * t + k * x) ** 2

        kappa = check_orthogonality(phi, coeffs.v, box) / check_orthogonality(lambda t, x: np.ones(np.broadcast(t, x).shape), coeffs.v, box)
        coeffs = coeffs.with_forcing(lambda t, x: phi(t, x) - kappa)
    elif forcing != "zero":
        raise ConfigError(f"unknown forcing {forcing!r}")
    fld, trace = find_periodic_solution(
        coeffs, box, cfg.tol, _opt(cfg, "max_periods", int), _opt(cfg, "nx", int), _opt(cfg, "steps_per_period", int)
    )
    m = {"theta_hat": trace.theta_hat, "residual": fld.meta["periodicity_residual"]}
    ok = trace.converged and trace.theta_hat < 1 and fld.meta["periodicity_residual"] <= 2 * cfg.tol
    return [ResultRow(cfg.experiment, None, m, bool(ok), extras={"iterations": trace.iterations, "c_list": list(trace.c_list)})]


def _run_parabolic_counterexample(cfg):
    from .elliptic_cell import travelling_family
    from .harnack_metrics import harnack_report, heat_control, oscillation_report, select_eps

    tf = travelling_family(cfg.delta0, cfg.nu)
    run, history = select_eps(tf.a, tf.p, cfg.delta, nu=cfg.nu)
    base = {"b0": run.b0, "p0": run.p0, "c": run.c}
    if cfg.experiment == "oscillation-parabolic":
        rep = oscillation_report(run)
        m = dict(base, osc_ratio=rep.osc_ratio, residual=run.transport_error)
        return [ResultRow(cfg.experiment, run.eps, m, rep.extras["ok"], extras={"eps_history": history})]
    rep = harnack_report(run)
    m = dict(base, harnack_ratio=rep.harnack_ratio, residual=run.transport_error)
    rows = [ResultRow(cfg.experiment, run.eps, m, bool(rep.extras["ok"] and rep.extras["phase_ok"]), extras={"eps_history": history})]
    for h in history:
        ctl = heat_control(h["eps"], run.c, cfg.delta)
        rows.append(ResultRow(cfg.experiment + "/control", h["eps"], {"harnack_ratio": ctl.harnack_ratio}, bool(ctl.harnack_ratio < 4)))
    return rows


RUNNERS = {
    "cell": _run_cell,
    "elliptic-limit": _run_elliptic_limit,
    "harnack-elliptic": _run_harnack_elliptic,
    "barrier": _run_barrier,
    "parabolic-corrector": _run_parabolic_corrector,
    "periodic-solve": _run_periodic,
    "harnack-parabolic": _run_parabolic_counterexample,
    "oscillation-parabolic": _run_parabolic_counterexample,
}


def run_experiment(cfg: ExperimentConfig) -> list[ResultRow]:
    """Execute one configured experiment; module errors gain experiment context."""
    start = time.perf_counter()
    try:
        rows = RUNNERS[cfg.experiment](cfg)
    except ConfigError:
        raise
    except Exception as err:
        raise ExperimentError(f"{cfg.experiment}: {type(err).__name__}: {err}") from err
    elapsed = time.perf_counter() - start
    for r in rows:
        r.wall_time = elapsed
    return rows


# output -----------------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, str):
        return value
    return format(float(value), ".17g")


def _json_value(value):
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, float, np.integer, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else repr(v)
    if isinstance(value, dict):
        return {k: _json_value(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_value(v) for v in value]
    return value


def _from_json(value):
    if value in ("inf", "-inf", "nan"):
        return float(value)
    return value


def emit_csv(rows: list[ResultRow]) -> str:
    """CSV in :data:`COLUMNS` order, ``\\n`` line endings, 17 significant digits."""
    if not rows:
        raise ValueError("no rows to emit")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        rec = r.record()
        w.writerow([_fmt(rec[c]) for c in COLUMNS])
    return buf.getvalue()


def emit_json(rows: list[ResultRow], configs=()) -> str:
    """JSON with ``schema_version``, the config echo and one object per row."""
    if not rows:
        raise ValueError("no rows to emit")
    doc = {
        "schema_version": SCHEMA_VERSION,
        "config": [_json_value(c.echo()) for c in configs],
        "columns": list(COLUMNS),
        "rows": [dict(_json_value(r.record()), wall_time=r.wall_time, extras=_json_value(r.extras)) for r in rows],
    }
    return json.dumps(doc, indent=2, sort_keys=False) + "\n"


def parse_json(text: str) -> list[ResultRow]:
    """Inverse of :func:`emit_json` for the row payload."""
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')!r}")
    rows = []
    for rec in doc["rows"]:
        metrics = {k: _from_json(rec.get(k)) for k in METRICS if rec.get(k) is not None}
        rows.append(ResultRow(rec["experiment"], rec["eps"], metrics, rec["ok"], rec.get("wall_time", 0.0), rec.get("extras", {})))
    return rows


def emit_report(rows: list[ResultRow], fmt: str, configs=()) -> str:
    if fmt == "csv":
        return emit_csv(rows)
    if fmt == "json":
        return emit_json(rows, configs)
    raise ValueError(f"unknown format {fmt!r}")


# entry point ------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="harnacklab", description="Run the homogenization and Harnack experiments.")
    sub = ap.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the experiments of a config file")
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--eps", type=float, nargs="+", help="override eps_list of every section")
    run.add_argument("--out", type=Path, default=Path("."), help="directory for results.csv and results.json")
    run.add_argument("--seed", type=int, help="override the seed of every section")
    sub.add_parser("list", help="describe the available experiments")
    rep = sub.add_parser("report", help="re-emit a stored results.json")
    rep.add_argument("--format", choices=("csv", "json"), default="csv")
    rep.add_argument("--in", dest="src", type=Path, default=Path("."), help="directory holding results.json")
    return ap


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "list":
        sys.stdout.write(list_experiments())
        return 0
    if args.command == "report":
        path = args.src / "results.json"
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as err:
            print(f"error: {err}", file=sys.stderr)
            return 2
        rows = parse_json(text)
        sys.stdout.write(text if args.format == "json" else emit_csv(rows))
        return 0
    try:
        configs = load_config(args.config, args.eps, args.seed)
        rows = []
        for cfg in configs:
            rows.extend(run_experiment(cfg))
    except (ConfigError, ExperimentError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 2
    args.out.mkdir(parents=True, exist_ok=True)
    (args.out / "results.csv").write_text(emit_csv(rows), encoding="utf-8", newline="")
    (args.out / "results.json").write_text(emit_json(rows, configs), encoding="utf-8", newline="")
    failed = [r for r in rows if not r.ok]
    for r in failed:
        print(f"FAILED: {r.experiment} eps={_fmt(r.eps) or '-'}", file=sys.stderr)
    return 1 if failed else 0
