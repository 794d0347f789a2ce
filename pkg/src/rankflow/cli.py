"""Command-line front end: ``approximate``, ``classify``, ``verify``, ``generate``.

Exit codes
----------
0  success
1  bad input, degenerate spectrum where one is not allowed, or a run that did
   not converge
2  converged, but to an equilibrium other than the truncated SVD
3  ``verify`` observed an objective increase along an accepted step
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .equilibria import enumerate_equilibria, match_to_equilibrium
from .errors import DegeneracyError, RankflowError
from .flow import FlowProblem, objective
from .integrator import (
    FlowConfig,
    Status,
    integrate,
    integrate_with_factors,
    random_start,
)
from .svd import (
    _distinct_positive,
    generate_with_spectrum,
    has_distinct_positive_singular_values,
    random_spectrum,
    svd,
    svd_truncate,
)

log = logging.getLogger("rankflow")

SCHEMA_VERSION = 1
EXIT_OK, EXIT_ERROR, EXIT_NONOPTIMAL, EXIT_LYAPUNOV = 0, 1, 2, 3
REL_GAP = 1e-8


# ---------------------------------------------------------------- matrix I/O


def read_matrix(path) -> np.ndarray:
    """Read a CSV matrix; blank lines and ``#`` lines (e.g. ``# rows cols``) are skipped."""
    rows = []
    with open(path, newline="") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                rows.append([float(tok) for tok in line.split(",")])
            except ValueError:
                raise ValueError(f"{path}:{lineno}: not a row of numbers") from None
    if not rows:
        raise ValueError(f"{path}: no matrix rows")
    if len({len(r) for r in rows}) != 1:
        raise ValueError(f"{path}: rows have different lengths")
    A = np.array(rows)
    if not np.all(np.isfinite(A)):
        raise ValueError(f"{path}: non-finite entries")
    return A


def format_matrix(A: np.ndarray) -> str:
    buf = io.StringIO()
    buf.write(f"# {A.shape[0]} {A.shape[1]}\n")
    for row in A:
        buf.write(",".join(format(float(x), ".17g") for x in row))
        buf.write("\n")
    return buf.getvalue()


def write_matrix(path, A: np.ndarray) -> None:
    Path(path).write_text(format_matrix(A))


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, (set, frozenset)):
        return sorted(obj)
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def dump_json(data, path=None) -> None:
    text = json.dumps(data, indent=2, default=_jsonable) + "\n"
    if path is None or str(path) == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


# ---------------------------------------------------------------- helpers


def _config_from_args(args) -> FlowConfig:
    fields = {}
    if args.config:
        fields.update(json.loads(Path(args.config).read_text()))
    for name in ("grad_tol", "max_steps", "retraction_period", "record_every", "local_tol"):
        value = getattr(args, name, None)
        if value is not None:
            fields[name] = value
    known = {f.name for f in dataclasses.fields(FlowConfig)}
    unknown = set(fields) - known
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return FlowConfig(**fields)


def _spectrum_summary(sigma: np.ndarray, k: int) -> dict:
    return {
        "sigma": [float(s) for s in sigma],
        "distinct_positive": _distinct_positive(sigma, REL_GAP),
        "tail_objective": 0.5 * float(np.sum(sigma[k:] ** 2)),
    }


def _write_trajectory(path, traj, oracle) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "f", "grad_norm", "numerical_rank", "dist_to_oracle"])
        for s in traj.samples:
            dist = float(np.linalg.norm(s.X - oracle))
            w.writerow([format(s.t, ".17g"), format(s.f, ".17g"), format(s.grad_norm, ".17g"),
                        s.numerical_rank, format(dist, ".17g")])


def _dump_states(path, traj) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        for s in traj.samples:
            w.writerow([format(s.t, ".17g")] + [format(float(x), ".17g") for x in s.X.ravel()])


# ---------------------------------------------------------------- commands


def cmd_approximate(args) -> int:
    A = read_matrix(args.input)
    m, n = A.shape
    k = args.rank
    if not 1 <= k <= min(m, n):
        raise ValueError(f"--rank must lie in [1, {min(m, n)}] for a {m}x{n} matrix")
    cfg = _config_from_args(args)
    rng = np.random.default_rng(args.seed)

    spectrum = svd(A)
    generic = has_distinct_positive_singular_values(A, REL_GAP)
    if not generic:
        log.warning("singular values are not distinct and positive; equilibrium matching disabled")
    trunc = svd_truncate(A, k, full=True)
    oracle = trunc.matrix
    normA = float(np.linalg.norm(A))

    t0 = time.perf_counter()
    if trunc.degenerate and args.init is None:
        # rank(A) <= k: A itself is the answer and nothing needs integrating
        X = A.copy()
        traj = None
        status = Status.CONVERGED
    else:
        X0 = read_matrix(args.init) if args.init else random_start(A, k, rng)
        if X0.shape != A.shape:
            raise ValueError(f"--init has shape {X0.shape}, expected {A.shape}")
        traj = integrate(FlowProblem(A, k), X0, cfg)
        X = traj.final.X
        status = traj.status
    wall = time.perf_counter() - t0

    dist = float(np.linalg.norm(X - oracle))
    gap = objective(A, X) - objective(A, oracle)
    matched = None
    if generic and status is Status.CONVERGED:
        rep = match_to_equilibrium(spectrum, X, max(args.tol, 1e-6) * max(normA, 1.0), k)
        if rep is not None:
            matched = {
                "support": sorted(rep.support),
                "verdict": rep.verdict,
                "witness": None if rep.witness is None else dataclasses.asdict(rep.witness),
            }
    optimal = dist <= args.tol * max(normA, 1.0)

    report = {
        "schema_version": SCHEMA_VERSION,
        "command": "approximate",
        "problem": {"m": m, "n": n, "k": k, "spectrum": _spectrum_summary(spectrum.sigma, k),
                    "degenerate_rank": trunc.degenerate},
        "config": dataclasses.asdict(cfg.resolved(A)),
        "trajectory": {
            "steps": 0 if traj is None else traj.steps,
            "final_t": 0.0 if traj is None else traj.final.t,
            "final_f": objective(A, X),
            "final_grad_norm": 0.0 if traj is None else traj.final.grad_norm,
            "status": status.value,
            "rejected_error": 0 if traj is None else traj.rejected_error,
            "rejected_lyapunov": 0 if traj is None else traj.rejected_lyapunov,
        },
        "equilibrium": matched,
        "oracle": {"distance": dist, "objective_gap": gap, "optimal": optimal},
        "seed": args.seed,
    }
    if not args.no_timestamp:
        report["wall_time_s"] = wall
        report["timestamp"] = datetime.now(timezone.utc).isoformat()

    if args.output:
        write_matrix(args.output, X)
    if args.trajectory and traj is not None:
        _write_trajectory(args.trajectory, traj, oracle)
    if args.dump_states and traj is not None:
        _dump_states(args.dump_states, traj)
    dump_json(report, args.report)

    if status is not Status.CONVERGED:
        log.error("integration ended with status %s", status.value)
        return EXIT_ERROR
    if not optimal:
        log.warning("converged to a non-optimal point (distance %.3g to the truncated SVD)", dist)
        return EXIT_NONOPTIMAL
    return EXIT_OK


def cmd_classify(args) -> int:
    A = read_matrix(args.input)
    k = args.rank
    if not 1 <= k <= min(A.shape):
        raise ValueError(f"--rank must lie in [1, {min(A.shape)}]")
    spectrum = svd(A)
    reports = enumerate_equilibria(spectrum, k)
    stable = [r for r in reports if r.verdict == "stable"]
    out = {
        "schema_version": SCHEMA_VERSION,
        "command": "classify",
        "problem": {"m": A.shape[0], "n": A.shape[1], "k": k,
                    "spectrum": _spectrum_summary(spectrum.sigma, k)},
        "equilibria": [r.as_dict() for r in reports],
        "stable_count": len(stable),
    }
    dump_json(out, args.output)
    if len(stable) != 1:
        log.error("expected exactly one stable equilibrium, found %d", len(stable))
        return EXIT_ERROR
    return EXIT_OK


def _verify_trial(job) -> dict:
    m, n, k, starts, seed_seq, start_at_unstable, tol = job
    rng = np.random.default_rng(seed_seq)
    sigma = random_spectrum(min(m, n), rng)
    A = generate_with_spectrum(m, n, sigma, int(rng.integers(2**63)))
    spectrum = svd(A)
    oracle = svd_truncate(A, k)
    problem = FlowProblem(A, k)
    normA = float(np.linalg.norm(A))

    def run(X0):
        traj = integrate(problem, X0)
        X = traj.final.X
        rep = None
        if traj.status is Status.CONVERGED:
            rep = match_to_equilibrium(spectrum, X, 1e-6 * normA, k)
        return {
            "status": traj.status.value,
            "steps": traj.steps,
            "stable": rep is not None and rep.verdict == "stable",
            "optimal": float(np.linalg.norm(X - oracle)) <= tol * normA,
            "lyapunov_violations": traj.lyapunov_increases(1e-12),
            "rank_drift": traj.status is Status.RANK_DRIFT_DETECTED
            or any(s.numerical_rank != k for s in traj.samples),
        }

    runs = []
    first = None
    for _ in range(starts):
        X0 = random_start(A, k, rng)
        first = X0 if first is None else first
        runs.append(run(X0))

    cert = integrate_with_factors(problem, first, None, 0.5)
    cert_rel = cert.residual / float(np.linalg.norm(first)) if cert.conclusive else None

    engineered = []
    if start_at_unstable:
        for rep in enumerate_equilibria(spectrum, k):
            if rep.verdict == "unstable":
                r = run(spectrum.u @ rep.matrix() @ spectrum.v.T)
                r["support"] = sorted(rep.support)
                engineered.append(r)
                break
    return {"sigma": sigma.tolist(), "runs": runs, "certificate": cert_rel,
            "engineered": engineered}


def cmd_verify(args) -> int:
    if args.trials < 1 or args.starts < 1:
        raise ValueError("--trials and --starts must be >= 1")
    if not 1 <= args.rank <= min(args.m, args.n):
        raise ValueError("--rank out of range")
    seqs = np.random.SeedSequence(args.seed).spawn(args.trials)
    jobs = [(args.m, args.n, args.rank, args.starts, s, args.start_at_unstable, args.tol)
            for s in seqs]
    t0 = time.perf_counter()
    if args.jobs and args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_verify_trial, jobs))
    else:
        results = [_verify_trial(j) for j in jobs]
    wall = time.perf_counter() - t0

    runs = [r for res in results for r in res["runs"]]
    eng = [r for res in results for r in res["engineered"]]
    certs = [res["certificate"] for res in results if res["certificate"] is not None]
    statuses: dict[str, int] = {}
    for r in runs:
        statuses[r["status"]] = statuses.get(r["status"], 0) + 1
    all_runs = runs + eng
    stats = {
        "schema_version": SCHEMA_VERSION,
        "command": "verify",
        "settings": {"m": args.m, "n": args.n, "k": args.rank, "trials": args.trials,
                     "starts": args.starts, "seed": args.seed, "tol": args.tol,
                     "start_at_unstable": args.start_at_unstable},
        "random_starts": len(runs),
        "random_stable_fraction": sum(r["stable"] for r in runs) / len(runs),
        "stable_fraction": sum(r["stable"] for r in all_runs) / len(all_runs),
        "optimal_fraction": sum(r["optimal"] for r in all_runs) / len(all_runs),
        "status_counts": statuses,
        "lyapunov_violations": sum(r["lyapunov_violations"] for r in all_runs),
        "rank_drift_events": sum(r["rank_drift"] for r in all_runs),
        "certificate_residual_max": max(certs) if certs else None,
        "certificate_inconclusive": len(results) - len(certs),
        "engineered_starts": len(eng),
        "engineered_reported_nonoptimal": sum((not r["optimal"]) for r in eng),
        "engineered": [{"support": r["support"], "status": r["status"], "optimal": r["optimal"]}
                       for r in eng],
        "mean_steps": float(np.mean([r["steps"] for r in runs])),
    }
    if not args.no_timestamp:
        stats["wall_time_s"] = wall
        stats["timestamp"] = datetime.now(timezone.utc).isoformat()
    dump_json(stats, args.output)
    if stats["lyapunov_violations"]:
        return EXIT_LYAPUNOV
    return EXIT_OK


def _parse_sigma(text: str) -> list[float]:
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"bad --sigma value {text!r}") from None


def cmd_generate(args) -> int:
    sigma = _parse_sigma(args.sigma)
    A = generate_with_spectrum(args.m, args.n, sigma, args.seed)
    if args.output:
        write_matrix(args.output, A)
    else:
        sys.stdout.write(format_matrix(A))
    return EXIT_OK


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rankflow", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("approximate", help="best rank-k approximation by integrating the flow")
    a.add_argument("--input", required=True)
    a.add_argument("--rank", type=int, required=True)
    a.add_argument("--tol", type=float, default=1e-6,
                   help="optimality tolerance on ||X - svd_truncate(A)|| relative to max(||A||, 1)")
    a.add_argument("--config", help="JSON file with FlowConfig fields")
    a.add_argument("--init", help="CSV initial condition (default: random rank-k start)")
    a.add_argument("--trajectory", help="write sample CSV here")
    a.add_argument("--dump-states", help="write every recorded state (t, row-major entries)")
    a.add_argument("--output", help="write the approximation CSV here")
    a.add_argument("--report", default="-", help="JSON report path (default stdout)")
    a.add_argument("--seed", type=int, default=42)
    a.add_argument("--grad-tol", dest="grad_tol", type=float)
    a.add_argument("--max-steps", dest="max_steps", type=int)
    a.add_argument("--retraction-period", dest="retraction_period", type=int)
    a.add_argument("--record-every", dest="record_every", type=int)
    a.add_argument("--local-tol", dest="local_tol", type=float)
    a.add_argument("--no-timestamp", action="store_true")
    a.set_defaults(func=cmd_approximate)

    c = sub.add_parser("classify", help="enumerate and classify all rank-k equilibria")
    c.add_argument("--input", required=True)
    c.add_argument("--rank", type=int, required=True)
    c.add_argument("--output", default="-")
    c.set_defaults(func=cmd_classify)

    v = sub.add_parser("verify", help="randomized end-to-end property run")
    v.add_argument("--m", type=int, default=8)
    v.add_argument("--n", type=int, default=5)
    v.add_argument("--rank", type=int, default=2)
    v.add_argument("--trials", type=int, default=50)
    v.add_argument("--starts", type=int, default=1, help="random starts per problem")
    v.add_argument("--seed", type=int, default=42)
    v.add_argument("--jobs", type=int, default=1)
    v.add_argument("--tol", type=float, default=1e-6)
    v.add_argument("--start-at-unstable", action="store_true",
                   help="add one start placed exactly on an unstable equilibrium per problem")
    v.add_argument("--output", default="-")
    v.add_argument("--no-timestamp", action="store_true")
    v.set_defaults(func=cmd_verify)

    g = sub.add_parser("generate", help="random matrix with prescribed singular values")
    g.add_argument("--m", type=int, required=True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--sigma", required=True, help="comma-separated, descending")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--output")
    g.set_defaults(func=cmd_generate)
    return p


def _setup_logging() -> None:
    level = os.environ.get("RANKFLOW_LOG", "warn").upper()
    level = {"WARN": "WARNING"}.get(level, level)
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except DegeneracyError as exc:
        log.error("degenerate spectrum: %s", exc)
        return EXIT_ERROR
    except (RankflowError, ValueError, OSError) as exc:
        log.error("%s", exc)
        return EXIT_ERROR
