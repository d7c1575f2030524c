"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest

from smog.cli import main
from smog.estimator import (
    estimate_spherical,
    gamma_threshold,
    learn_gmm_common,
    learn_gmm_halves,
    match_and_score,
    match_columns,
    run_trials,
    whitening_from_matrix,
)
from smog.ica import (
    angular_errors,
    cumulant_f,
    cumulant_hessian,
    ica_estimate,
    ica_estimate_exact,
    normalize_columns,
    rademacher_exact_sampleset,
    rademacher_sources,
)
from smog.model import MixtureModel, SampleSet, moment_matched_sampleset, population_moments, sample
from smog.moments import WhitenedTensor
from smog.multiview import coherence, coherence_bound, partition_and_check, random_rotation
from smog.seeding import derive_seed, make_rng
from smog.statcheck import mc_anticoncentration, mc_tail_chi2, mc_tail_cubes

from conftest import random_model_family


@pytest.fixture
def report(capsys):
    def emit(num, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {num}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


def max_param_error(rep, m):
    perm = match_columns(rep.means_hat, m.means)
    errs = [
        np.abs(rep.means_hat[:, perm] - m.means).max(),
        np.abs(rep.weights_hat[perm] - m.weights).max(),
    ]
    s2 = rep.sigma2_hat
    if isinstance(s2, np.ndarray):
        errs.append(np.abs(s2[perm] - m.variances).max())
    else:
        errs.append(abs(s2 - m.variances[0]))
    return float(max(errs))


def column_distance(est, truth):
    perm, _ = angular_errors(est, truth)
    E, T = normalize_columns(est)[:, perm], normalize_columns(truth)
    E = E * np.sign(np.sum(E * T, axis=0))
    return float(np.linalg.norm(E - T, axis=0).max())


def test_criterion_01_exact_moment_oracle(report):
    models = random_model_family(seed=101, count=60)
    t0 = time.perf_counter()
    worst = max(max_param_error(estimate_spherical(population_moments(m), seed=i), m) for i, m in enumerate(models))
    elapsed = time.perf_counter() - t0
    report(1, worst <= 1e-8 and elapsed < 10,
           f"{len(models)} models, worst abs error {worst:.2e} (<= 1e-8), {elapsed:.2f}s (< 10s)")


def test_criterion_02_learn_gmm_on_exact_moments(report):
    # The algorithm targets a common variance, so the family uses one sigma^2 per model.
    models = random_model_family(seed=102, count=60, common=True)
    worst, worst_white = 0.0, 0.0
    for i, m in enumerate(models):
        exact = moment_matched_sampleset(m)
        rep = learn_gmm_halves(exact.relabel("first"), exact.relabel("second"), m.k, seed=i)
        worst = max(worst, max_param_error(rep, m))
        M2 = population_moments(m).M2
        W = whitening_from_matrix(M2, m.k).W_hat
        worst_white = max(worst_white, np.abs(W.T @ M2 @ W - np.eye(m.k)).max())
    report(2, worst <= 1e-8 and worst_white <= 1e-10,
           f"{len(models)} models, worst parameter error {worst:.2e} (<= 1e-8), "
           f"whitening identity error {worst_white:.2e} (<= 1e-10)")


def test_criterion_03_rate_sweep(report, tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    t0 = time.perf_counter()
    rc = main([
        "sweep", "--d", "5", "--k", "3", "--means", "3,0,0,0,0;0,3,0,0,0;0,0,3,0,0",
        "--weights", "0.3,0.3,0.4", "--sigma", "1",
        "--n-grid", "1000,3000,10000,30000,100000,300000,1000000",
        "--seeds", "20", "--seed", "0", "--no-timing",
    ])
    elapsed = time.perf_counter() - t0
    summary = json.loads(capsys.readouterr().out)
    slope = summary["loglog_slope"]
    ok = rc == 0 and summary["strictly_decreasing"] and -0.65 <= slope <= -0.35 and elapsed < 300
    meds = ", ".join(f"{v:.4f}" for v in summary["median_max_rel"])
    report(3, ok, f"medians [{meds}] strictly decreasing={summary['strictly_decreasing']}, "
                  f"slope {slope:.3f} in [-0.65, -0.35], {elapsed:.1f}s")


def test_criterion_04_error_unit_benchmark(report):
    m = MixtureModel.common([0.5, 0.5], np.eye(2), 0.01)
    good = 0
    for s in range(100):
        rep = learn_gmm_common(sample(m, 200_000, s), 2, delta=0.01, seed=s)
        good += match_and_score(rep.means_hat, m)["max_rel"] <= 0.05
    report(4, good >= 95, f"max_rel <= 0.05 in {good}/100 seeds (need >= 95)")


def test_criterion_05_random_separation(report):
    rng = np.random.default_rng(105)
    lines, ok = [], True
    for k in (2, 3, 5):
        weight_sets = {"uniform": np.full(k, 1 / k), "random": 1 + rng.random(k), "skewed": np.arange(1.0, k + 1) ** 2}
        for name, w in weight_sets.items():
            w = w / w.sum()
            A = rng.standard_normal((k + 2, k))
            pm = population_moments(MixtureModel(w, A, np.ones(k)))
            W = whitening_from_matrix(pm.M2, k).W_hat
            trials, _ = run_trials(WhitenedTensor(pm.M3_contracted(W)), 2000, seed=k)
            freq = np.mean([t.min_gap > gamma_threshold(k, w.max()) for t in trials])
            ok &= freq >= 0.45
            lines.append(f"k={k}/{name}: {freq:.3f}")
    report(5, ok, "frequency of min gap > gamma (need >= 0.45): " + ", ".join(lines))


def test_criterion_06_ica(report):
    good, worst = 0, 0.0
    for s in range(100):
        A = random_rotation(3, derive_seed(s, "acceptance", "mixing"))
        X = rademacher_sources(1_000_000, 3, s) @ A.T
        _, ang = angular_errors(ica_estimate(SampleSet(X), seed=s)["columns"], A)
        good += ang.max() <= 0.1
        worst = max(worst, ang.max())
    exact_err = 0.0
    for s in range(20):
        A = random_rotation(3, derive_seed(s, "acceptance", "exact"))
        exact_err = max(
            exact_err,
            column_distance(ica_estimate_exact(A, np.full(3, -2.0), seed=s)["columns"], A),
            column_distance(ica_estimate(rademacher_exact_sampleset(A), seed=s)["columns"], A),
        )
    report(6, good >= 90 and exact_err <= 1e-8,
           f"within 0.1 rad in {good}/100 seeds (need >= 90, worst {worst:.4f} rad); "
           f"exact-moment column error {exact_err:.2e} (<= 1e-8)")


def test_criterion_07_hessian_finite_differences(report):
    k, n, h = 3, 200_000, 1e-3
    A = random_rotation(k, 7) @ np.diag([1.0, 1.5, 0.7])
    X = rademacher_sources(n, k, 7) @ A.T + 0.3 * make_rng(7, "noise").standard_normal((n, k))
    data = SampleSet(X)
    E = np.eye(k)
    worst = 0.0
    for t in range(20):
        eta = make_rng(7, "eta", t).standard_normal(k)
        H = cumulant_hessian(data, eta).H
        fd = np.empty((k, k))
        for i in range(k):
            for j in range(k):
                fd[i, j] = (
                    cumulant_f(data, eta + h * E[i] + h * E[j])
                    - cumulant_f(data, eta + h * E[i] - h * E[j])
                    - cumulant_f(data, eta - h * E[i] + h * E[j])
                    + cumulant_f(data, eta - h * E[i] - h * E[j])
                ) / (4 * h * h)
        worst = max(worst, float(np.max(np.abs(fd - H) / np.abs(H))))
    report(7, worst <= 1e-3, f"20 random eta, worst entrywise relative gap {worst:.2e} (<= 1e-3)")


def test_criterion_08_coherence_and_partition(report):
    d, k, eta = 60, 4, 0.01
    A = np.random.default_rng(108).standard_normal((d, k))
    bound = coherence_bound(d, k, eta)
    held = sum(coherence(random_rotation(d, s) @ A) <= bound for s in range(1000))

    full, sv_ok = 0, 0
    for s in range(200):
        B = random_rotation(d, 5000 + s)[:, :k]
        out = partition_and_check(B, s)
        full += out["all_full_rank"]
        sv_ok += out["all_full_rank"] and min(out["sigma_k_per_group"]) >= math.sqrt(0.5 / 3)

    # singular-value guarantee where its coherence hypothesis actually holds
    dd, kk, eps, delta = 4000, 2, 0.5, 0.1
    C, _ = np.linalg.qr(np.random.default_rng(109).standard_normal((dd, kk)))
    limit = (eps**2 / 6) / math.log(3 * kk / delta)
    sk = np.linalg.svd(C, compute_uv=False)[kk - 1]
    bound_ok = 0
    for s in range(200):
        out = partition_and_check(C, s)
        bound_ok += out["all_full_rank"] and min(out["sigma_k_per_group"]) >= math.sqrt((1 - eps) / 3) * sk
    ok = held >= 990 and full >= 180 and coherence(C) <= limit and bound_ok >= 180
    report(8, ok,
           f"coherence bound held in {held}/1000 (need >= 990); full rank in {full}/200 at d=60,k=4 "
           f"(need >= 180; sigma_k bound there {sv_ok}/200, outside its hypothesis); "
           f"d=4000,k=2 coherence {coherence(C):.4f} <= {limit:.4f}, sigma_k bound in {bound_ok}/200")


TAIL_DELTAS = (0.5, 0.1, 0.01)
TAIL_M = (1, 10, 100)
ANTICONC_P = (2, 3, 5)


def test_criterion_09_tail_bounds(report):
    trials = 10_000
    worst_margin, failures, count = -np.inf, [], 0

    def check(name, res):
        nonlocal worst_margin, count
        count += 1
        limit = res.bound_delta + 3 * math.sqrt(res.bound_delta / trials)
        worst_margin = max(worst_margin, res.violation_rate - limit)
        if res.violation_rate > limit:
            failures.append(f"{name} rate {res.violation_rate:.4f} > {limit:.4f}")

    for delta in TAIL_DELTAS:
        for m in TAIL_M:
            check(f"chi2 m={m} delta={delta}", mc_tail_chi2(m, delta, trials, seed=m))
            check(f"cubes m={m} delta={delta}", mc_tail_cubes(m, delta, trials, seed=m))
        for p in ANTICONC_P:
            eye = np.eye(p)
            Q = np.column_stack([eye] + [eye[i] - eye[j] for i in range(p) for j in range(i + 1, p)])
            X = make_rng(p, "acceptance", "X").standard_normal((p, p))
            check(f"anticonc p={p} X=I delta={delta}", mc_anticoncentration(eye, Q, delta, trials, seed=p))
            check(f"anticonc p={p} X=rand delta={delta}", mc_anticoncentration(X, Q, delta, trials, seed=p))
    report(9, not failures,
           f"{count} (check, m/p, delta) cells at {trials} trials; worst rate minus limit {worst_margin:+.4f}"
           + ("; " + "; ".join(failures) if failures else ""))


CLI_COMMANDS = [
    ["generate", "--d", "3", "--k", "2", "--n", "5000", "--sigma", "0.5", "--seed", "7"],
    ["generate", "--d", "3", "--k", "2", "--n", "200000", "--sigma", "0.5", "--seed", "7",
     "--out", "big.bin", "--model-out", "big.json"],
    ["estimate", "--samples", "samples.csv", "--k", "2", "--seed", "3", "--out", "est.json"],
    ["estimate", "--samples", "big.bin", "--k", "2", "--mode", "distinct-variance", "--seed", "3",
     "--out", "est_dv.json"],
    ["eval", "--estimate", "est.json", "--truth", "model.json", "--out", "score.json"],
    ["sweep", "--d", "3", "--k", "2", "--n-grid", "1000,4000", "--seeds", "3", "--seed", "5", "--no-timing"],
    ["ica-demo", "--k", "3", "--n", "100000", "--noise", "0.1", "--seed", "2"],
    ["statcheck", "chi2", "--m", "10", "--delta", "0.01", "--trials", "2000", "--seed", "1"],
    ["statcheck", "cubes", "--m", "10", "--delta", "0.05", "--trials", "2000", "--seed", "1"],
    ["statcheck", "anticonc", "--p", "3", "--random-x", "--delta", "0.1", "--trials", "2000", "--seed", "1"],
]
CLI_FILES = ["samples.csv", "model.json", "big.bin", "big.json", "est.json", "est_dv.json", "score.json", "sweep.csv"]


def _cli_run(workdir, monkeypatch, capsys):
    monkeypatch.chdir(workdir)
    outputs = []
    for argv in CLI_COMMANDS:
        rc = main(argv)
        outputs.append((rc, capsys.readouterr().out))
    files = {name: (workdir / name).read_bytes() for name in CLI_FILES}
    return outputs, files


def test_criterion_10_cli_determinism(report, tmp_path, monkeypatch, capsys):
    runs = []
    for label in ("a", "b"):
        workdir = tmp_path / label
        workdir.mkdir()
        runs.append(_cli_run(workdir, monkeypatch, capsys))
    (out_a, files_a), (out_b, files_b) = runs
    codes = [rc for rc, _ in out_a]
    differing = [" ".join(CLI_COMMANDS[i][:2]) for i in range(len(CLI_COMMANDS)) if out_a[i] != out_b[i]]
    differing += [f for f in CLI_FILES if files_a[f] != files_b[f]]
    ok = all(rc == 0 for rc in codes) and not differing
    report(10, ok, f"{len(CLI_COMMANDS)} commands run twice, exit codes {codes}, "
                   f"{len(CLI_FILES)} output files; differing: {differing or 'none'}")
