"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; every tolerance is pinned here.
"""

import itertools
import math
import time

import numpy as np
import pytest

from sparselink.certificates import NoiseSpec, certify_basic, certify_coherence, tail_check, tau_condition_holds
from sparselink.corrupted import CorruptionSpec, composed_tail, smooth_link
from sparselink.design import CoherenceStats, DesignMatrix, DomainSpec, coherence_stats
from sparselink.estimators import EstimationProblem, FitOptions, fit, objective
from sparselink.harness import (
    ExperimentConfig,
    brute_force_fit,
    generate_design,
    run_coverage,
    run_scaling,
    _rng,
)
from sparselink.links import (
    exp_link,
    gaussian_link,
    identity_link,
    logistic_link,
    poisson_link,
    poly_link,
)


def _report(num, name, ok, elapsed, limit, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"ACCEPTANCE {num:2d} {status}: {name} [{elapsed:.1f}s < {limit:.0f}s] {detail}")
    assert ok, f"criterion {num} failed: {detail}"
    assert elapsed < limit, f"criterion {num} exceeded runtime: {elapsed:.1f}s >= {limit}s"


# ---------------------------------------------------------------------------


def test_criterion_01_closed_form_solver():
    t0 = time.perf_counter()
    worst = 0.0
    for seed in range(100):
        rng = _rng(seed, 0)
        X = generate_design("orthogonal", 40, 10, rng)
        y = rng.standard_normal(40)
        c_r = 0.8
        prob = EstimationProblem(
            X=X, y=y, link=identity_link(), domain=DomainSpec(), c_r=c_r, kind="lse"
        )
        res = fit(prob)
        # orthogonal columns with ||V_j||^2 = n decouple the coordinates
        closed = np.sign(X.entries.T @ y) * np.maximum(
            np.abs(X.entries.T @ y) - c_r / 2.0, 0.0
        ) / 40.0
        worst = max(worst, float(np.max(np.abs(res.beta_hat - closed))))
    elapsed = time.perf_counter() - t0
    _report(1, "closed-form soft-threshold agreement", worst <= 1e-8, elapsed, 5.0,
            f"max deviation {worst:.2e} over 100 seeds")


# ---------------------------------------------------------------------------


def _oracle_two_stage(prob, spacing=1e-3):
    """Coarse full-box scan, then a fine grid around the coarse argmin with
    an interior safeguard (expand and redo if the argmin touches the box)."""
    coarse = brute_force_fit(prob, {"lo": -2.0, "hi": 2.0, "spacing": 0.05})
    assert np.all(np.abs(coarse) < 2.0 - 0.05), "coarse argmin hit the box edge"
    half = 0.064 if prob.X.p == 3 else 0.12
    for _ in range(4):
        fine = brute_force_fit(
            prob, {"lo": coarse - half, "hi": coarse + half, "spacing": spacing}
        )
        if np.all(np.abs(fine - coarse) < half - 2 * spacing):
            return fine
        half *= 2.0
    raise AssertionError("oracle refinement did not localize")


def test_criterion_02_oracle_equivalence():
    t0 = time.perf_counter()
    worst_lse = worst_mle = 0.0
    for i in range(50):
        rng = _rng(1000 + i, 0)
        p = [1, 2, 3][i % 3]
        n = 10
        X = generate_design("orthogonal", n, p, rng)
        beta = np.zeros(p)
        beta[int(rng.integers(0, p))] = 0.4

        y = X.entries @ beta + rng.uniform(-0.2, 0.2, size=n)
        prob = EstimationProblem(
            X=X, y=y, link=identity_link(), domain=DomainSpec(), c_r=0.4, kind="lse"
        )
        res = fit(prob)
        oracle = _oracle_two_stage(prob)
        worst_lse = max(worst_lse, float(np.max(np.abs(res.beta_hat - oracle))))

        mu = 1.0 / (1.0 + np.exp(-X.entries @ (beta * 1.25)))
        yb = (rng.random(n) < mu).astype(float)
        prob2 = EstimationProblem(
            X=X, y=yb, link=logistic_link(), domain=DomainSpec(), c_r=0.5, kind="mle"
        )
        res2 = fit(prob2)
        oracle2 = _oracle_two_stage(prob2)
        worst_mle = max(worst_mle, float(np.max(np.abs(res2.beta_hat - oracle2))))
    elapsed = time.perf_counter() - t0
    ok = worst_lse <= 2e-3 and worst_mle <= 2e-3
    _report(2, "grid-oracle equivalence (50 LSE + 50 MLE)", ok, elapsed, 60.0,
            f"max dev lse {worst_lse:.2e}, mle {worst_mle:.2e}")


# ---------------------------------------------------------------------------


def test_criterion_03_inequality_zero_violations():
    t0 = time.perf_counter()
    configs = [
        (
            {
                "design": {"kind": "orthogonal", "n": 100, "p": 20},
                "beta": {"s": 3, "magnitude": 0.5},
                "noise": {"kind": "uniform", "sigma": 0.5},
                "model": {"kind": "identity"},
                "certificate": {"proposition": "coherence", "q": 0.05},
                "replicates": 480,
                "seed": 301,
            },
            480,
        ),
        (
            {
                "design": {"kind": "rademacher", "n": 50, "p": 10},
                "beta": {"s": 1, "magnitude": 0.3},
                "noise": {"kind": "logistic-bernoulli-residual"},
                "model": {"kind": "logistic"},
                "domain": {"interval": [-1.0, 1.0], "support_cap": 1},
                "certificate": {"proposition": "basic", "q": 0.05, "c0": 2.0},
                "replicates": 400,
                "seed": 302,
            },
            400,
        ),
        (
            {
                "design": {"kind": "orthogonal", "n": 30, "p": 4},
                "beta": {"s": 1, "magnitude": 0.3},
                "noise": {"kind": "uniform", "sigma": 0.2},
                "model": {"kind": "exp", "interval": [-0.8, 0.8]},
                "domain": {"interval": [-0.8, 0.8]},
                "certificate": {"proposition": "coherence", "q": 0.05},
                "fit": {"multi_start": 2},
                "replicates": 120,
                "seed": 303,
            },
            120,
        ),
    ]
    total = 0
    dominant = 0
    violations = 0
    for cfg_dict, expected in configs:
        rep = run_coverage(ExperimentConfig.from_dict(cfg_dict))
        assert rep.replicates == expected
        total += rep.replicates
        for r in rep.records:
            if r.objective_vs_truth:
                dominant += 1
                if not r.ineq_holds:
                    violations += 1
    elapsed = time.perf_counter() - t0
    ok = total >= 1000 and violations == 0 and dominant > 0
    _report(3, "optimality inequality zero violations", ok, elapsed, 600.0,
            f"{total} replicates, {dominant} with objective <= truth, {violations} violations")


# ---------------------------------------------------------------------------


def test_criterion_04_coverage_basic_route():
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict(
        {
            "design": {"kind": "rademacher", "n": 200, "p": 50},
            "beta": {"s": 2, "magnitude": 0.35},
            "noise": {"kind": "logistic-bernoulli-residual"},
            "model": {"kind": "logistic"},
            "domain": {"interval": [-1.0, 1.0], "support_cap": 2},
            "certificate": {"proposition": "basic", "q": 0.05, "c0": 2.0},
            "replicates": 200,
            "seed": 20260401,
        }
    )
    rep = run_coverage(cfg)
    elapsed = time.perf_counter() - t0
    ok = rep.passes and rep.target == pytest.approx(0.9)
    _report(4, "coverage, logistic MLE (c_r = 2 c1 sqrt(n) route)", ok, elapsed, 600.0,
            f"coverage {rep.coverage:.3f} vs target {rep.target:.2f}, p={rep.pvalue:.3g}")


def test_criterion_05_coverage_coherence_route():
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict(
        {
            "design": {"kind": "orthogonal", "n": 200, "p": 50},
            "beta": {"s": 2, "magnitude": 0.5},
            "noise": {"kind": "uniform", "sigma": 0.5},
            "model": {"kind": "identity"},
            "certificate": {"proposition": "coherence", "q": 0.05, "c0": 2.0},
            "replicates": 200,
            "seed": 20260402,
        }
    )
    rep = run_coverage(cfg)
    elapsed = time.perf_counter() - t0
    # tau defaults to min(1, max feasible tau / 2)
    ok = rep.passes and rep.certificate.tau == 1.0
    _report(5, "coverage, bounded-noise LSE (tau route)", ok, elapsed, 600.0,
            f"coverage {rep.coverage:.3f} vs target {rep.target:.2f}, tau={rep.certificate.tau}")


# ---------------------------------------------------------------------------


def test_criterion_06_scaling():
    t0 = time.perf_counter()
    cfg = ExperimentConfig.from_dict(
        {
            "design": {"kind": "orthogonal", "n": 100, "p": 50},
            "beta": {"s": 3, "magnitude": 0.5},
            "noise": {"kind": "uniform", "sigma": 0.5},
            "model": {"kind": "identity"},
            "certificate": {"proposition": "coherence", "q": 0.05},
            "seed": 20260403,
            "scaling": {"n_grid": [100, 200, 400, 800], "replicates": 50},
        }
    )
    rep = run_scaling(cfg)
    elapsed = time.perf_counter() - t0
    ok = (
        rep.slope is not None
        and -0.65 <= rep.slope <= -0.35
        and rep.ratio_s is not None
        and 1.2 <= rep.ratio_s <= 1.7
    )
    _report(6, "error scaling in n and s", ok, elapsed, 900.0,
            f"slope {rep.slope:.3f} (want [-0.65,-0.35]), sqrt(s) ratio {rep.ratio_s:.3f} (want [1.2,1.7])")


# ---------------------------------------------------------------------------


def test_criterion_07_constant_plugins():
    t0 = time.perf_counter()
    cert = certify_basic(c1=0.5, c2=2.0, n=100, s=1, q=0.05)
    ok = cert.c_r == 10.0 and cert.kappa_r == 1.0

    st = CoherenceStats(mu=0.0, a=1.0, b=1.0)
    cert2 = certify_coherence(c1=1.0, c3=1.0, stats=st, s=1, tau=1.0, n=100, q=0.05)
    exact = 9.0 * math.sqrt(11.0)
    ok = ok and cert2.c_r == pytest.approx(40.0, rel=1e-15)
    ok = ok and abs(cert2.kappa_r - exact) <= 1e-12 * exact

    ok = ok and tau_condition_holds(CoherenceStats(mu=0.01, a=1.0, b=1.0), s=2, tau=1.0)
    ok = ok and not tau_condition_holds(CoherenceStats(mu=0.2, a=1.0, b=1.0), s=3, tau=1.0)
    elapsed = time.perf_counter() - t0
    _report(7, "constant plug-ins exact", bool(ok), elapsed, 5.0,
            f"c_r={cert.c_r}, kappa_r={cert.kappa_r}; coherence kappa={cert2.kappa_r:.12f}")


# ---------------------------------------------------------------------------


def test_criterion_08_derivatives_and_smoothing():
    t0 = time.perf_counter()
    ok = True
    detail = []

    rng = np.random.default_rng(42)
    for link in (logistic_link(), gaussian_link(), poisson_link((-3.0, 3.0))):
        lo, hi = max(link.valid_interval[0], -3.0), min(link.valid_interval[1], 3.0)
        ts = rng.uniform(lo + 0.01, hi - 0.01, size=100)
        h = 1e-5
        fd1 = (link.lam(ts + h) - link.lam(ts - h)) / (2 * h)
        fd2 = (link.lam1(ts + h) - link.lam1(ts - h)) / (2 * h)
        e1 = np.max(np.abs(fd1 - link.lam1(ts)) / (1.0 + np.abs(link.lam1(ts))))
        e2 = np.max(np.abs(fd2 - link.lam2(ts)) / (1.0 + np.abs(link.lam2(ts))))
        ok = ok and e1 <= 1e-6 and e2 <= 1e-6

    square = poly_link([0.0, 0.0, 1.0], interval=(-1.0, 1.0))
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5)
    sl = smooth_link(square, spec)
    zs = np.linspace(-1.0, 1.0, 101)
    dev = float(np.max(np.abs(sl.g(zs) - (zs**2 + 0.03))))
    ok = ok and dev <= 1e-9
    detail.append(f"smooth dev {dev:.1e}")

    sup_f, sigma, c_eps = 1.0, 0.5, 2.0
    spec2 = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5, sup_f=sup_f)
    folded = composed_tail(NoiseSpec(sigma=sigma, c_eps=c_eps, kind="uniform"), spec2)
    t = np.linspace(0.0, 10.0 * folded.sigma, 1001)
    two_term = 2.0 * np.exp(-(t**2) / (8.0 * sup_f**2)) + c_eps * np.exp(-(t**2) / (8.0 * sigma**2))
    dom = np.all(two_term <= folded.c_eps * np.exp(-(t**2) / (2.0 * folded.sigma**2)) + 1e-15)
    ok = ok and bool(dom)
    detail.append(f"dominance {'holds' if dom else 'fails'}")

    elapsed = time.perf_counter() - t0
    _report(8, "derivative and smoothing checks", bool(ok), elapsed, 30.0, "; ".join(detail))


# ---------------------------------------------------------------------------


def test_criterion_09_gamma_soundness():
    t0 = time.perf_counter()
    counterexamples = 0
    checked = 0
    for seed in range(50):
        X = generate_design("gaussian", 40, 8, seed)
        st = coherence_stats(X)
        G = X.entries.T @ X.entries / 40.0
        for m in (2, 3, 4):
            gamma = st.a - (m - 1) * st.b * st.mu
            if gamma <= 0:
                continue
            checked += 1
            worst = min(
                np.linalg.eigvalsh(G[np.ix_(S, S)])[0]
                for S in itertools.combinations(range(8), m)
            )
            if worst < gamma - 1e-10:
                counterexamples += 1
    elapsed = time.perf_counter() - t0
    ok = counterexamples == 0 and checked >= 50
    _report(9, "gamma(m) bounds restricted singular values", ok, elapsed, 300.0,
            f"{checked} (design, m) pairs, {counterexamples} counterexamples")


# ---------------------------------------------------------------------------


def test_criterion_10_tail_condition():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    n, draws = 20, 100_000
    dirs = [np.eye(n)[i] for i in range(4)] + [np.ones(n) / math.sqrt(n)]
    while len(dirs) < 12:
        dirs.append(rng.standard_normal(n))
    dirs = np.asarray(dirs)

    ok = True
    detail = []
    for kind in ("rademacher", "uniform"):
        spec = NoiseSpec(sigma=1.0, kind=kind)
        if kind == "rademacher":
            samples = 2.0 * rng.integers(0, 2, size=(draws, n)) - 1.0
        else:
            samples = rng.uniform(-1.0, 1.0, size=(draws, n))
        rep = tail_check(spec, samples, dirs)
        ok = ok and not rep.flagged
        detail.append(f"{kind}: {'clean' if not rep.flagged else 'flagged'}")

        lying = NoiseSpec(sigma=0.5, kind=kind)
        rep_bad = tail_check(lying, samples, dirs)
        ok = ok and rep_bad.flagged
        detail.append(f"{kind}@sigma/2: {'flagged' if rep_bad.flagged else 'missed'}")
    elapsed = time.perf_counter() - t0
    _report(10, "empirical tail condition", bool(ok), elapsed, 120.0, "; ".join(detail))
