"""Command line interface.

Every option can also be set through an environment variable named
``SPECEST_<COMMAND>_<OPTION>``, e.g. ``SPECEST_SYNTHESIZE_TOL=1e-7``.

Exit codes: 0 success, 1 input error, 2 solver failure.
"""

import csv
import json
import math
import sys
import time
from pathlib import Path

import click
import jsonschema
import numpy as np

from . import bounds as bd
from . import covstat as cs
from . import experiments as ex
from . import monotone as mono
from . import spectratope as sp
from .conic import SolverError, SolverSettings
from .estimator import EstimationProblem, reduce_mixed, synthesize, synthesize_ubb

EXIT_OK, EXIT_INPUT, EXIT_SOLVER = 0, 1, 2


class InputError(Exception):
    pass


_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}
_set = {
    "type": "object",
    "oneOf": [
        {"required": ["maps", "T"],
         "properties": {"maps": {"type": "array", "minItems": 1}, "T": {"type": "object"}, "P": _matrix},
         "additionalProperties": False},
        {"required": ["type"],
         "properties": {"type": {"enum": ["box", "lp_ball", "ell2_ball", "parallelotope", "matrix_box",
                                          "zero"]},
                        "n": {"type": "integer", "minimum": 1}, "half_widths": {"type": "array"},
                        "p": {"type": ["number", "string"]}, "N": _matrix, "L": _matrix},
         "additionalProperties": False},
    ],
}
INSTANCE_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "properties": {
        "A": _matrix,
        "B": _matrix,
        "C": _matrix,
        "signal_set": _set,
        "noise_set": _set,
        "norm": {"type": "object", "required": ["type"],
                 "properties": {"type": {"enum": ["lp", "nuclear", "sym_nuclear", "none"]}}},
        "noise": {"type": "object", "required": ["type"],
                  "properties": {"type": {"enum": ["singleton", "dominated_by", "hull"]}}},
        "regime": {"enum": ["random", "repeated", "ubb", "mixed"]},
        "T": {"type": "integer", "minimum": 1},
        "seed": {"type": "integer", "minimum": 0},
        "experiment": {"type": "object"},
    },
    "additionalProperties": False,
}


def read_instance(path):
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InputError(f"{path}: {exc.strerror}") from exc
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: not valid JSON ({exc})") from exc
    try:
        jsonschema.validate(doc, INSTANCE_SCHEMA)
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise InputError(f"{path}: schema violation at {where}: {exc.message}") from exc
    return doc


def set_from_json(rec):
    kind = rec.get("type")
    if kind is None:
        return sp.from_record(rec)
    if kind == "box":
        return sp.box(int(rec["n"]), rec.get("half_widths"))
    if kind == "lp_ball":
        p = rec["p"]
        return sp.lp_ball(int(rec["n"]), math.inf if p in ("inf", "Infinity") else float(p))
    if kind == "ell2_ball":
        return sp.ell2_ball(int(rec["n"]))
    if kind == "parallelotope":
        return sp.parallelotope(rec["N"])
    if kind == "matrix_box":
        return sp.matrix_box(np.asarray(rec["L"], dtype=float))
    return sp.zero(int(rec["n"]))


def problem_from_json(doc):
    missing = [k for k in ("A", "B", "signal_set", "norm") if k not in doc]
    if missing:
        raise InputError(f"instance is missing {', '.join(missing)}")
    try:
        return EstimationProblem(
            np.asarray(doc["A"], dtype=float), np.asarray(doc["B"], dtype=float),
            set_from_json(doc["signal_set"]), sp.norm_from_record(doc["norm"]),
            bd.noise_from_record(doc["noise"]) if "noise" in doc else None,
            doc.get("regime", "random"), int(doc.get("T", 1)),
            set_from_json(doc["noise_set"]) if "noise_set" in doc else None)
    except (ValueError, KeyError, TypeError, mono.UnsupportedVariantError) as exc:
        raise InputError(f"invalid instance: {exc}") from exc


def _settings(tol, backend):
    return SolverSettings(gap_tol=tol, feas_tol=tol, backend=backend)


def _out_dir(out):
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _num(v):
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "nan")
    return str(v)


def write_csv(path, rows, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            w.writerow([_num(r[c]) for c in columns])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def write_json(path, doc):
    with open(path, "w") as fh:
        json.dump(_jsonable(doc), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_matrix(path, M):
    np.savetxt(path, np.atleast_2d(M), delimiter=",", fmt="%.17g")


_common = [
    click.option("--out", type=click.Path(file_okay=False), required=True, help="Output directory."),
    click.option("--seed", type=click.IntRange(min=0), default=None, help="Random seed."),
    click.option("--tol", type=click.FloatRange(min=0, min_open=True), default=1e-8, show_default=True,
                 help="Solver gap and feasibility tolerance."),
    click.option("--backend", type=click.Choice(["reference", "external"]), default="reference",
                 show_default=True, help="Conic solver backend."),
]


def common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
@click.version_option(package_name="artifact")
def cli():
    """Linear estimation with certified risk bounds over spectratopes."""


@cli.command("synthesize")
@click.option("--instance", type=click.Path(dir_okay=False), required=True, help="Instance JSON file.")
@click.option("--trials", type=click.IntRange(min=1), default=64, show_default=True,
              help="Rounding trials for the u-b-b lower bound.")
@common
def cmd_synthesize(instance, trials, out, seed, tol, backend):
    """Build the linear estimate for an instance and write H.csv and certificate.json."""
    doc = read_instance(instance)
    p = problem_from_json(doc)
    seed = int(doc.get("seed", 0)) if seed is None else seed
    settings = _settings(tol, backend)
    start = time.perf_counter()
    lower = None
    if p.regime == "ubb":
        est, cert, lower = synthesize_ubb(p, settings, trials, np.random.default_rng(seed))
    elif p.regime == "mixed":
        est, cert = synthesize(reduce_mixed(p), settings)
    else:
        est, cert = synthesize(p, settings)
    elapsed = time.perf_counter() - start
    path = _out_dir(out)
    write_matrix(path / "H.csv", est.H)
    report = {"opt": cert.opt, "regime": p.regime, "T": int(p.T), "instance_hash": p.digest(), "seed": seed,
              "diagnostics": {k: v for k, v in cert.diagnostics.items() if k != "witness"}}
    if lower is not None:
        report["lower"] = lower
        report["factor"] = ex.bound_ratio(cert.opt, lower)
    write_json(path / "certificate.json", report)
    write_json(path / "timings.json", {"synthesize_seconds": elapsed})
    click.echo(f"opt={cert.opt:.10g}")


@cli.command("quadbound")
@click.option("--instance", type=click.Path(dir_okay=False), default=None,
              help="Instance JSON file with C and signal_set.")
@click.option("--sweep", type=click.IntRange(min=1), default=None, help="Run this many random instances instead.")
@click.option("--trials", type=click.IntRange(min=1), default=64, show_default=True, help="Rounding trials.")
@common
def cmd_quadbound(instance, sweep, trials, out, seed, tol, backend):
    """Bound max x'Cx over a spectratope from above and below."""
    if (instance is None) == (sweep is None):
        raise click.UsageError("give exactly one of --instance and --sweep")
    path = _out_dir(out)
    start = time.perf_counter()
    if sweep is not None:
        seed = 0 if seed is None else seed
        rows = ex.quad_sweep(sweep, seed, trials)
        write_csv(path / "sweep.csv", rows, ["instance", "n", "size", "opt_star", "lower", "ratio", "factor"])
        write_json(path / "summary.json", {"count": sweep, "seed": seed,
                                           "max_ratio": max(r["ratio"] for r in rows)})
    else:
        doc = read_instance(instance)
        if "C" not in doc or "signal_set" not in doc:
            raise InputError("quadbound needs C and signal_set")
        seed = int(doc.get("seed", 0)) if seed is None else seed
        try:
            X = set_from_json(doc["signal_set"])
            C = np.asarray(doc["C"], dtype=float)
            if C.shape != (X.dim, X.dim):
                raise ValueError(f"C must be {X.dim}x{X.dim}")
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"invalid instance: {exc}") from exc
        report = ex.quad_report(C, X, trials, np.random.default_rng(seed), _settings(tol, backend))
        report["seed"] = seed
        write_json(path / "report.json", report)
        click.echo(f"opt_star={report['opt_star']:.10g} lower={report['lower']:.10g} ratio={report['ratio']:.6g}")
    write_json(path / "timings.json", {"seconds": time.perf_counter() - start})


def _config(path):
    if path is None:
        return {}
    doc = read_instance(path)
    return doc.get("experiment", {}) | ({"seed": doc["seed"]} if "seed" in doc else {})


@cli.command("subopt")
@click.option("--config", type=click.Path(dir_okay=False), default=None,
              help="Instance file whose experiment section supplies defaults.")
@click.option("--n", "ns", type=click.IntRange(min=2), multiple=True, help="Signal dimensions (even).")
@click.option("--replicates", type=click.IntRange(min=1), default=None, help="Replicates per dimension.")
@click.option("--family", "families", type=click.Choice(ex.DUAL_FAMILIES), multiple=True,
              help="Dual-ball families.")
@click.option("--trials", type=click.IntRange(min=1), default=64, show_default=True, help="Rounding trials.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True, help="Worker processes.")
@common
def cmd_subopt(config, ns, replicates, families, trials, jobs, out, seed, tol, backend):
    """Suboptimality factors of the u-b-b estimate on random instances."""
    cfg = _config(config)
    ns = list(ns) or cfg.get("n", [8])
    replicates = replicates or int(cfg.get("replicates", 10))
    families = list(families) or cfg.get("families", ["parallelotope"])
    seed = int(cfg.get("seed", 0)) if seed is None else seed
    if any(n % 2 for n in ns):
        raise InputError("signal dimensions must be even")
    start = time.perf_counter()
    rows = ex.subopt_experiment(ns, replicates, seed, tuple(families), trials, jobs)
    path = _out_dir(out)
    write_csv(path / "factors.csv", rows,
              ["family", "n", "replicate", "size", "opt", "lower", "relax", "factor", "theory_factor"])
    summary = ex.subopt_summary(rows) | {"seed": seed, "n": ns, "families": families, "replicates": replicates,
                                         "trials": trials}
    write_json(path / "summary.json", summary)
    write_json(path / "timings.json", {"seconds": time.perf_counter() - start, "jobs": jobs})
    click.echo(f"max factor {summary['max_factor']:.4f}; theoretical "
               f"{summary['theory_factor_range'][0]:.3f}..{summary['theory_factor_range'][1]:.3f}")


@cli.command("cov")
@click.option("--config", type=click.Path(dir_okay=False), default=None,
              help="Instance file whose experiment section supplies defaults.")
@click.option("--n", type=click.IntRange(min=1), default=None, help="Covariance size.")
@click.option("--T", "Ts", type=click.IntRange(min=1), multiple=True, help="Sample sizes.")
@click.option("--beta", "betas", type=float, multiple=True, help="Decay exponents of B_ii = i^-beta.")
@click.option("--replicates", type=click.IntRange(min=1), default=None, help="Replicates per cell.")
@click.option("--norm", type=click.Choice(cs.NORMS), default=None, help="Error norm.")
@click.option("--jobs", type=click.IntRange(min=1), default=1, show_default=True, help="Worker processes.")
@common
def cmd_cov(config, n, Ts, betas, replicates, norm, jobs, out, seed, tol, backend):
    """Covariance experiment: linear estimate against its bound and the MLE."""
    cfg = _config(config)
    n = n or int(cfg.get("n", 8))
    Ts = list(Ts) or cfg.get("T", [32, 128])
    betas = list(betas) or cfg.get("beta", [0.0, 3.0])
    replicates = replicates or int(cfg.get("replicates", 20))
    norm = norm or cfg.get("norm", "frobenius")
    if norm not in cs.NORMS:
        raise InputError(f"norm must be one of {cs.NORMS}")
    seed = int(cfg.get("seed", 0)) if seed is None else seed
    start = time.perf_counter()
    rows = ex.cov_experiment(n, Ts, betas, replicates, seed, norm, jobs)
    path = _out_dir(out)
    write_csv(path / "ratios.csv", rows,
              ["norm", "n", "T", "beta", "replicate", "opt", "linear_error", "mle_error", "ratio_opt", "ratio_mle"])
    summary = ex.cov_summary(rows) | {"seed": seed, "n": n, "norm": norm, "replicates": replicates}
    write_json(path / "summary.json", summary)
    write_json(path / "timings.json", {"seconds": time.perf_counter() - start, "jobs": jobs})
    bad = [c for c in summary["cells"] if not c["within_bound"]]
    click.echo(f"{len(summary['cells']) - len(bad)}/{len(summary['cells'])} cells within the risk bound")


@cli.command("covest")
@click.option("--samples", type=click.Path(dir_okay=False), required=True,
              help="Text file with one observation per row.")
@click.option("--norm", type=click.Choice(cs.NORMS), default="frobenius", show_default=True)
@click.option("--beta", type=float, default=0.0, show_default=True, help="Target B_ii = i^-beta.")
@common
def cmd_covest(samples, norm, beta, out, seed, tol, backend):
    """Estimate B theta B from direct samples with covariance between 0 and I."""
    try:
        eta = cs.read_samples(samples)
    except (OSError, ValueError) as exc:
        raise InputError(f"{samples}: {exc}") from exc
    n = eta.shape[1]
    B = np.diag(np.arange(1, n + 1, dtype=float) ** (-beta))
    cp = cs.CovProblem(np.eye(n), np.eye(n), 0.0, B, norm, samples=eta)
    est, cert = cs.diagonal_fast_path(cp, _settings(tol, backend))
    path = _out_dir(out)
    write_matrix(path / "linear_estimate.csv", cs.estimate_target(cp, est))
    write_matrix(path / "mle_estimate.csv", cs.mle_baseline(eta, B))
    write_json(path / "certificate.json", {"opt": cert.opt, "T": cp.T, "n": n, "norm": norm, "beta": beta})
    click.echo(f"opt={cert.opt:.10g} from T={cp.T} samples")


def main(argv=None):
    try:
        cli.main(args=argv, prog_name="specest", standalone_mode=False, auto_envvar_prefix="SPECEST")
    except click.exceptions.Abort:
        click.echo("aborted", err=True)
        sys.exit(EXIT_INPUT)
    except click.ClickException as exc:
        exc.show()
        sys.exit(EXIT_INPUT)
    except InputError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(EXIT_INPUT)
    except (SolverError, ArithmeticError) as exc:
        click.echo(f"solver failure: {exc}", err=True)
        sys.exit(EXIT_SOLVER)
    sys.exit(EXIT_OK)


if __name__ == "__main__":
    main()
