"""Command-line front end.

Exit codes: 0 success, 2 usage or precondition failure, 3 numerical
degeneracy, 4 file IO. Covariances are the biased (1/n) estimates.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .errors import DegeneracyError, SmogError
from .estimator import estimate_spherical_plugin, learn_gmm_common, match_and_score
from .ica import angular_errors, ica_estimate, rademacher_sources
from .io import SampleFileError, read_samples, write_samples
from .model import MixtureModel, SampleSet, sample, validate_model
from .multiview import random_rotation
from .seeding import derive_seed, entropy_seed, make_rng
from .statcheck import mc_anticoncentration, mc_tail_chi2, mc_tail_cubes

EXIT_OK, EXIT_USAGE, EXIT_DEGENERATE, EXIT_IO = 0, 2, 3, 4
SWEEP_FIELDS = ["n", "seed", "max_rel", "wall_time", "error"]


class UsageError(SmogError):
    pass


def _dump(obj, out=None):
    text = json.dumps(obj, indent=2) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _seed(args) -> int:
    if args.seed is None:
        args.seed = entropy_seed()
        print(f"seed: {args.seed}", file=sys.stderr)
    return args.seed


def _positive(name, value):
    if value is None or value < 1:
        raise UsageError(f"--{name} must be a positive integer")


def _parse_matrix(text: str) -> np.ndarray:
    """``"a,b;c,d"`` -> columns (a,b) and (c,d), i.e. a d x k matrix."""
    cols = [[float(v) for v in col.split(",")] for col in text.split(";")]
    if len({len(c) for c in cols}) != 1:
        raise UsageError("all mean columns need the same length")
    return np.array(cols).T


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",")])


def _model_from_args(args, seed: int) -> MixtureModel:
    if args.model:
        try:
            return MixtureModel.load(args.model)
        except OSError as exc:
            raise SampleFileError(f"cannot read model {args.model}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"model file is not valid JSON: {exc}") from exc
    if args.means is not None:
        A = _parse_matrix(args.means)
    else:
        _positive("d", args.d)
        _positive("k", args.k)
        A = args.mean_scale * make_rng(seed, "generate", "means").standard_normal((args.d, args.k))
    d, k = A.shape
    if args.d is not None and args.d != d or args.k is not None and args.k != k:
        raise UsageError("--means shape disagrees with --d/--k")
    w = _parse_floats(args.weights) if args.weights else np.full(k, 1.0 / k)
    if args.variances:
        var = _parse_floats(args.variances)
    else:
        var = np.full(k, args.sigma**2)
    return MixtureModel(w, A, var)


def _add_model_args(p):
    p.add_argument("--model", help="model JSON file (overrides the inline flags)")
    p.add_argument("--d", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--sigma", type=float, default=1.0, help="common standard deviation")
    p.add_argument("--variances", help="comma-separated per-component variances")
    p.add_argument("--weights", help="comma-separated mixing weights (default uniform)")
    p.add_argument("--means", help='mean columns, e.g. "1,0;0,1" (default random)')
    p.add_argument("--mean-scale", type=float, default=2.0)


def cmd_generate(args) -> int:
    seed = _seed(args)
    _positive("n", args.n)
    model = _model_from_args(args, seed)
    diag = validate_model(model)
    _dump({"seed": seed, **diag})
    if not diag["rank_ok"]:
        print(
            f"error: non-degeneracy fails: sigma_k[M2]={diag['sigma_k_M2']:.3e}, "
            f"w_min={diag['w_min']:.3e}",
            file=sys.stderr,
        )
        return EXIT_USAGE
    data = sample(model, args.n, seed)
    out = args.out or ("samples.bin" if args.n > 100_000 and args.format != "csv" else "samples.csv")
    write_samples(out, data.X, args.format)
    model.save(args.model_out)
    return EXIT_OK


def _estimate(data: SampleSet, k: int, mode: str, delta: float, seed: int, n_trials=None):
    if not 1 <= k <= data.d:
        raise UsageError(f"need 1 <= k <= d (k={k}, d={data.d})")
    if mode == "common":
        return learn_gmm_common(data, k, delta, seed, n_trials)
    return estimate_spherical_plugin(data, k, seed)


def cmd_estimate(args) -> int:
    seed = _seed(args)
    data = read_samples(args.samples)
    report = _estimate(data, args.k, args.mode, args.delta, seed, args.trials)
    out = report.to_dict()
    out.update({"mode": args.mode, "seed": seed})
    _dump(out, args.out)
    return EXIT_OK


def _load_json(path):
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise SampleFileError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path} is not valid JSON: {exc}") from exc


def cmd_eval(args) -> int:
    est = _load_json(args.estimate)
    truth = MixtureModel.from_dict(_load_json(args.truth))
    try:
        means = np.array(est["means"], dtype=float).T
    except (KeyError, ValueError) as exc:
        raise UsageError(f"malformed estimate file: {exc}") from exc
    if means.shape != truth.means.shape:
        raise UsageError(f"estimate is {means.shape}, truth is {truth.means.shape}")
    _dump(match_and_score(means, truth), args.out)
    return EXIT_OK


def _sweep_cell(job):
    model_dict, n, s, root, delta, timing = job
    model = MixtureModel.from_dict(model_dict)
    cell_seed = derive_seed(root, "sweep", n, s)
    t0 = time.perf_counter()
    try:
        data = sample(model, n, cell_seed)
        report = learn_gmm_common(data, model.k, delta, cell_seed)
        max_rel, err = match_and_score(report.means_hat, model)["max_rel"], ""
    except SmogError as exc:
        max_rel, err = float("nan"), f"{_exit_code(exc)}:{type(exc).__name__}"
    wall = time.perf_counter() - t0
    return {
        "n": n,
        "seed": s,
        "max_rel": repr(max_rel),
        "wall_time": f"{wall:.6f}" if timing else "",
        "error": err,
    }


def sweep_summary(rows) -> dict:
    by_n = {}
    for r in rows:
        v = float(r["max_rel"])
        if math.isfinite(v):
            by_n.setdefault(int(r["n"]), []).append(v)
    ns = sorted(by_n)
    med = [float(np.median(by_n[n])) for n in ns]
    slope = None
    if len(ns) >= 2 and all(m > 0 for m in med):
        slope = float(np.polyfit(np.log(ns), np.log(med), 1)[0])
    return {
        "n": ns,
        "median_max_rel": med,
        "loglog_slope": slope,
        "strictly_decreasing": bool(all(b < a for a, b in zip(med, med[1:]))),
    }


def _workers(args) -> int:
    cap = int(os.environ.get("SMOG_THREADS", "0") or 0)
    w = args.workers or cap or 1
    return max(1, min(w, cap) if cap else w)


def cmd_sweep(args) -> int:
    seed = _seed(args)
    model = _model_from_args(args, seed)
    if not validate_model(model)["rank_ok"]:
        raise DegeneracyError("sweep model violates non-degeneracy")
    grid = [int(float(v)) for v in args.n_grid.split(",")]
    if any(n < 2 * model.k for n in grid) or args.seeds < 1:
        raise UsageError("every n must be >= 2k and --seeds >= 1")
    out = Path(args.out)
    rows, done = [], set()
    if out.exists() and args.resume:
        with open(out, newline="") as fh:
            rows = list(csv.DictReader(fh))
        done = {(int(r["n"]), int(r["seed"])) for r in rows}
    jobs = [
        (model.to_dict(), n, s, seed, args.delta, not args.no_timing)
        for n in grid
        for s in range(args.seeds)
        if (n, s) not in done
    ]
    fresh = not (out.exists() and args.resume)
    with open(out, "w" if fresh else "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_FIELDS)
        if fresh:
            writer.writeheader()
        nw = _workers(args)
        if nw > 1:
            with ProcessPoolExecutor(max_workers=nw) as pool:
                results = pool.map(_sweep_cell, jobs)
                for row in results:
                    writer.writerow(row)
                    rows.append(row)
        else:
            for job in jobs:
                row = _sweep_cell(job)
                writer.writerow(row)
                fh.flush()
                rows.append(row)
    _dump(sweep_summary(rows))
    return EXIT_OK


def cmd_ica_demo(args) -> int:
    seed = _seed(args)
    _positive("k", args.k)
    _positive("n", args.n)
    A = random_rotation(args.k, derive_seed(seed, "ica-demo", "mixing"))
    X = rademacher_sources(args.n, args.k, seed) @ A.T
    if args.noise > 0:
        X = X + args.noise * make_rng(seed, "ica", "noise").standard_normal(X.shape)
    res = ica_estimate(SampleSet(X), seed)
    perm, ang = angular_errors(res["columns"], A)
    _dump(
        {
            "seed": seed,
            "k": args.k,
            "n": args.n,
            "noise": args.noise,
            "mixing": A.T.tolist(),
            "columns": res["columns"].T.tolist(),
            "eigenvalues": res["eigenvalues"].tolist(),
            "permutation": perm.tolist(),
            "angular_errors": ang.tolist(),
            "max_angular_error": float(ang.max()),
            "draws": res["attempts"],
        }
    )
    return EXIT_OK


def _separation_set(p: int) -> np.ndarray:
    eye = np.eye(p)
    diffs = [eye[i] - eye[j] for i in range(p) for j in range(i + 1, p)]
    return np.column_stack([eye] + diffs) if diffs else eye


def cmd_statcheck(args) -> int:
    seed = _seed(args)
    if args.check == "chi2":
        res = mc_tail_chi2(args.m, args.delta, args.trials, seed)
    elif args.check == "cubes":
        res = mc_tail_cubes(args.m, args.delta, args.trials, seed)
    else:
        X = np.eye(args.p)
        if args.random_x:
            X = make_rng(seed, "statcheck", "X").standard_normal((args.p, args.p))
        res = mc_anticoncentration(X, _separation_set(args.p), args.delta, args.trials, seed)
    out = res.to_dict()
    out.update({"check": args.check, "seed": seed, "within_bound": res.violation_rate <= res.bound_delta})
    _dump(out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="smog", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="sample a synthetic mixture")
    _add_model_args(g)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int)
    g.add_argument("--out", help="sample file (default samples.csv / samples.bin)")
    g.add_argument("--model-out", default="model.json")
    g.add_argument("--format", choices=["auto", "csv", "bin"], default="auto")
    g.set_defaults(func=cmd_generate)

    e = sub.add_parser("estimate", help="estimate mixture parameters from samples")
    e.add_argument("--samples", required=True)
    e.add_argument("--k", type=int, required=True)
    e.add_argument("--mode", choices=["common", "distinct-variance"], default="common")
    e.add_argument("--delta", type=float, default=0.01)
    e.add_argument("--trials", type=int, help="override ceil(log2(1/delta))")
    e.add_argument("--seed", type=int)
    e.add_argument("--out")
    e.set_defaults(func=cmd_estimate)

    v = sub.add_parser("eval", help="score an estimate against the true model")
    v.add_argument("--estimate", required=True)
    v.add_argument("--truth", required=True)
    v.add_argument("--out")
    v.set_defaults(func=cmd_eval)

    s = sub.add_parser("sweep", help="error vs sample size over many seeds")
    _add_model_args(s)
    s.add_argument("--n-grid", default="1000,3000,10000,30000,100000,300000,1000000")
    s.add_argument("--seeds", type=int, default=20)
    s.add_argument("--delta", type=float, default=0.01)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", default="sweep.csv")
    s.add_argument("--resume", action="store_true", help="skip cells already in --out")
    s.add_argument("--no-timing", action="store_true", help="leave wall_time empty")
    s.add_argument("--workers", type=int, help="worker processes (capped by SMOG_THREADS)")
    s.set_defaults(func=cmd_sweep)

    i = sub.add_parser("ica-demo", help="recover a random rotation from Rademacher sources")
    i.add_argument("--k", type=int, default=3)
    i.add_argument("--n", type=int, default=1_000_000)
    i.add_argument("--noise", type=float, default=0.0, help="isotropic Gaussian noise std")
    i.add_argument("--seed", type=int)
    i.set_defaults(func=cmd_ica_demo)

    c = sub.add_parser("statcheck", help="Monte Carlo tail-bound checks")
    csub = c.add_subparsers(dest="check", required=True)
    for name in ("chi2", "cubes"):
        cc = csub.add_parser(name)
        cc.add_argument("--m", type=int, default=10)
    ca = csub.add_parser("anticonc")
    ca.add_argument("--p", type=int, default=3)
    ca.add_argument("--random-x", action="store_true")
    for cc in csub.choices.values():
        cc.add_argument("--delta", type=float, default=0.01)
        cc.add_argument("--trials", type=int, default=10_000)
        cc.add_argument("--seed", type=int)
    c.set_defaults(func=cmd_statcheck)
    return p


def _exit_code(exc: BaseException) -> int:
    if isinstance(exc, (SampleFileError, OSError)):
        return EXIT_IO
    if isinstance(exc, DegeneracyError):
        return EXIT_DEGENERATE
    return EXIT_USAGE


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SmogError, OSError) as exc:
        code = _exit_code(exc)
        if isinstance(exc, DegeneracyError) and getattr(exc, "sigma_k", None) is not None:
            print(f"error: {exc} (sigma_k[M2_hat]={exc.sigma_k:.3e})", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
