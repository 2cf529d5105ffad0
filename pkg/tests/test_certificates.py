import math

import numpy as np
import pytest

from sparselink.certificates import (
    AnalyticC1Params,
    CertificateError,
    CertFlags,
    BoundCertificate,
    NoiseSpec,
    c1_analytic_bounded,
    c1_analytic_general,
    c1_exp_family,
    c2_from_coherence,
    c3_curvature,
    certify_basic,
    certify_coherence,
    lambda_p,
    max_feasible_tau,
    select_tau,
    tail_check,
    tau_condition_holds,
)
from sparselink.design import CoherenceStats, DesignMatrix
from sparselink.links import (
    LinkDomainError,
    exp_link,
    gaussian_link,
    identity_link,
    logistic_link,
    poisson_link,
    poly_link,
)


def _design_with_max_col_norm(n, target, p=100, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, p))
    A *= target / np.abs(np.linalg.norm(A, axis=0)).max()
    return DesignMatrix(A)


def test_c1_exp_family_value():
    X = _design_with_max_col_norm(100, 10.0)
    noise = NoiseSpec(sigma=0.5, kind="uniform")
    c1 = c1_exp_family(noise, X, q=0.01)
    expect = 0.5 * math.sqrt(math.log(100 / 0.01) / 200.0) * 10.0
    assert c1 == pytest.approx(expect, rel=1e-12)
    assert c1 == pytest.approx(1.0730, abs=2e-4)


def test_c1_exp_family_limits():
    X = _design_with_max_col_norm(100, 10.0)
    assert c1_exp_family(NoiseSpec(sigma=0.0, kind="uniform"), X, 0.01) == 0.0
    X2 = _design_with_max_col_norm(100, 20.0)
    c_a = c1_exp_family(NoiseSpec(sigma=0.5, kind="uniform"), X, 0.01)
    c_b = c1_exp_family(NoiseSpec(sigma=0.5, kind="uniform"), X2, 0.01)
    assert c_b == pytest.approx(2.0 * c_a, rel=1e-9)
    with pytest.raises(ValueError):
        c1_exp_family(NoiseSpec(sigma=0.5, kind="uniform"), X, q=1.5)


def test_c1_analytic_bounded_identity_single_term():
    X = _design_with_max_col_norm(64, 9.0, p=20, seed=1)
    noise = NoiseSpec(sigma=0.7, kind="uniform")
    params = AnalyticC1Params(q=0.05, variant="bounded-disc", theta=0.5)
    c1 = c1_analytic_bounded(identity_link(), X, params, noise)
    lam = lambda_p(20, 0.05)
    expect = 0.7 * math.sqrt(2 * lam) * 64 ** (-0.5) * 9.0
    assert c1 == pytest.approx(expect, rel=1e-12)


def test_c1_analytic_bounded_poly_two_terms():
    X = _design_with_max_col_norm(64, 9.0, p=20, seed=1)
    noise = NoiseSpec(sigma=0.7, kind="uniform")
    link = poly_link([0.0, 2.0, -3.0], interval=(-1.0, 1.0))
    params = AnalyticC1Params(q=0.05, variant="bounded-disc", theta=0.5, r_c=1.0)
    c1, details = c1_analytic_bounded(link, X, params, noise, details=True)
    lam = lambda_p(20, 0.05)
    m1 = 64 ** (-0.5) * float(X.col_l2.max())
    m2 = 64 ** (-0.25) * float(X.col_l2k(2).max())
    t1 = 1.0 * 2.0 / 1.0 * 1.0 * m1
    t2 = math.sqrt(2.0) * 6.0 / 1.0 * 0.5 * m2
    assert c1 == pytest.approx(0.7 * math.sqrt(2 * lam) * (t1 + t2), rel=1e-12)
    assert details["terms_used"] == 2 and details["tail_bound"] == 0.0

    bigger = c1_analytic_bounded(
        link, X, AnalyticC1Params(q=0.05, variant="bounded-disc", theta=0.8, r_c=1.0), noise
    )
    assert bigger > c1


def test_c1_analytic_bounded_sigma_zero_and_divergence():
    X = _design_with_max_col_norm(16, 4.0, p=5, seed=2)
    link = poly_link([0.0, 1.0, 1.0], interval=(-1.0, 1.0))
    params = AnalyticC1Params(q=0.1, variant="bounded-disc", theta=0.5, r_c=1.0)
    assert c1_analytic_bounded(link, X, params, NoiseSpec(sigma=0.0, kind="uniform")) == 0.0

    from sparselink.links import logistic_analytic_link

    la = logistic_analytic_link(1.0, 1.0)
    bad = AnalyticC1Params(q=0.1, variant="bounded-disc", theta=0.999999, r_c=2 * math.pi)
    with pytest.raises(CertificateError, match="diverges"):
        c1_analytic_bounded(la, X, bad, NoiseSpec(sigma=0.5, kind="uniform"))


def test_c1_analytic_bounded_exp_tail_certified():
    X = _design_with_max_col_norm(25, 5.0, p=8, seed=3)
    noise = NoiseSpec(sigma=0.4, kind="uniform")
    link = exp_link((-1.0, 1.0))
    params = AnalyticC1Params(q=0.05, variant="bounded-disc", theta=0.5, r_c=1.0)
    c1, details = c1_analytic_bounded(link, X, params, noise, details=True)
    # truncated sum is a lower bound; the certified value adds the tail
    lam = lambda_p(8, 0.05)
    partial = sum(
        math.sqrt(k) / math.factorial(k - 1) * 0.5 ** (k - 1)
        * 25 ** (-1 / (2 * k)) * float(X.col_l2k(k).max())
        for k in range(1, details["terms_used"] + 1)
    )
    assert c1 >= 0.4 * math.sqrt(2 * lam) * partial
    assert details["tail_bound"] <= 1e-9 * c1


def test_c1_analytic_general_identity():
    X = _design_with_max_col_norm(64, 9.0, p=20, seed=4)
    noise = NoiseSpec(sigma=0.7, kind="uniform")
    params = AnalyticC1Params(q=0.05, variant="general", r_c1=0.5, delta_D=1.0)
    c1, details = c1_analytic_general(identity_link(), X, params, noise, details=True)
    lam = lambda_p(20, 0.05)
    Q = 4.0 * 1.0 / 0.5 + 1.0
    expect = (
        math.sqrt(2.0) * 0.7 * math.sqrt(2 * 20 * math.log(20 * Q) + lam)
        * 64 ** (-0.5) * 9.0
    )
    assert c1 == pytest.approx(expect, rel=1e-12)
    assert details["Q"] == pytest.approx(Q)


def test_c1_analytic_general_monotone_in_delta_and_p():
    X = _design_with_max_col_norm(64, 9.0, p=20, seed=5)
    noise = NoiseSpec(sigma=0.7, kind="uniform")
    link = exp_link((-1.0, 1.0))

    def value(delta, XX):
        p = AnalyticC1Params(q=0.05, variant="general", r_c1=0.25, delta_D=delta)
        return c1_analytic_general(link, XX, p, noise)

    assert value(2.0, X) >= value(0.5, X) >= value(0.0, X) > 0
    # duplicated columns double p while keeping every column norm
    X2 = DesignMatrix(np.hstack([X.entries, X.entries]))
    assert value(1.0, X2) >= value(1.0, X)


def test_c1_analytic_general_needs_delta():
    X = _design_with_max_col_norm(16, 4.0, p=5, seed=6)
    params = AnalyticC1Params(q=0.05, variant="general", r_c1=0.25, delta_D=None)
    with pytest.raises(CertificateError, match="delta"):
        c1_analytic_general(exp_link((-1, 1)), X, params, NoiseSpec(sigma=0.5, kind="uniform"))


def test_c3_values():
    assert c3_curvature(gaussian_link(), (-4.0, 4.0)) == pytest.approx(0.5)
    c3 = c3_curvature(logistic_link(), (-2.0, 2.0))
    assert c3 == pytest.approx(0.5 / (2 * math.cosh(1.0)) ** 2, rel=1e-12)
    assert c3 == pytest.approx(0.052497, abs=1e-6)
    assert c3_curvature(identity_link(), (-1.0, 1.0)) == pytest.approx(1.0)


def test_c3_degenerate_errors():
    cubic = poly_link([0.0, 0.0, 0.0, 1.0], interval=(-1.0, 1.0))
    with pytest.raises(CertificateError, match="H3"):
        c3_curvature(cubic, (-1.0, 1.0))
    with pytest.raises(CertificateError, match="H3"):
        c3_curvature(logistic_link(), (-math.inf, math.inf))
    with pytest.raises(LinkDomainError, match="poisson"):
        c3_curvature(poisson_link(), (0.0, math.inf))


def test_c2_from_coherence():
    assert c2_from_coherence(0.5, CoherenceStats(mu=0.0, a=0.7, b=1.3), m=9) == pytest.approx(0.35)
    st = CoherenceStats(mu=0.05, a=1.0, b=1.0)
    assert c2_from_coherence(1.0, st, m=5) == pytest.approx(0.8)
    st2 = CoherenceStats(mu=0.3, a=1.0, b=1.0)
    assert c2_from_coherence(1.0, st2, m=5) is None


def test_certify_basic_examples():
    cert = certify_basic(c1=0.5, c2=2.0, n=100, s=4, q=0.05)
    assert cert.c_r == 10.0
    assert cert.kappa_r == 1.0
    assert cert.confidence == pytest.approx(0.9)
    cert2 = certify_basic(c1=0.7, c2=0.7, n=100, s=4, q=0.05)
    assert cert2.kappa_r == pytest.approx(4.0)
    cert3 = certify_basic(c1=0.5, c2=2.0, n=400, s=4, q=0.05)
    assert cert3.radius() == pytest.approx(0.1)


def test_certify_coherence_example():
    st = CoherenceStats(mu=0.0, a=1.0, b=1.0)
    cert = certify_coherence(c1=1.0, c3=1.0, stats=st, s=2, tau=1.0, n=100, q=0.05)
    assert cert.c_r == pytest.approx(40.0, rel=1e-15)
    assert cert.kappa_r == pytest.approx(9.0 * math.sqrt(11.0), rel=1e-12)
    assert cert.flags.eq_t_holds and cert.flags.basic_feasible


def test_tau_condition_arithmetic():
    st = CoherenceStats(mu=0.01, a=1.0, b=1.0)
    assert tau_condition_holds(st, s=2, tau=1.0)  # 1.01 > 0.28
    st2 = CoherenceStats(mu=0.2, a=1.0, b=1.0)
    assert not tau_condition_holds(st2, s=3, tau=1.0)  # 1.2 < 8.4


def test_certify_coherence_infeasible_has_no_kappa():
    st = CoherenceStats(mu=0.2, a=1.0, b=1.0)
    cert = certify_coherence(c1=1.0, c3=1.0, stats=st, s=3, tau=1.0, n=100, q=0.05)
    assert cert.flags.eq_t_holds is False
    assert cert.kappa_r is None and cert.c_r is None and not cert.feasible
    with pytest.raises(Exception):
        cert.radius()


def test_certify_coherence_never_emits_kappa_on_failure():
    rng = np.random.default_rng(20)
    for _ in range(200):
        mu = rng.uniform(0, 0.5)
        a = rng.uniform(0.2, 1.0)
        b = a + rng.uniform(0, 1.0)
        s = int(rng.integers(1, 6))
        tau = rng.uniform(0.05, 3.0)
        st = CoherenceStats(mu=mu, a=a, b=b)
        cert = certify_coherence(1.0, 1.0, st, s, tau, 100, 0.05)
        assert cert.feasible == tau_condition_holds(st, s, tau)


def test_max_feasible_tau():
    assert max_feasible_tau(CoherenceStats(mu=0.0, a=1.0, b=1.0), 3) == math.inf
    st = CoherenceStats(mu=0.01, a=1.0, b=1.0)
    assert max_feasible_tau(st, 2) == pytest.approx(5.5625, rel=1e-12)
    st2 = CoherenceStats(mu=0.2, a=1.0, b=1.0)
    assert max_feasible_tau(st2, 3) is None


def test_max_feasible_tau_boundary_property():
    rng = np.random.default_rng(21)
    for _ in range(100):
        mu = rng.uniform(1e-4, 0.2)
        a = rng.uniform(0.5, 1.0)
        b = a + rng.uniform(0, 0.5)
        s = int(rng.integers(1, 4))
        st = CoherenceStats(mu=mu, a=a, b=b)
        t = max_feasible_tau(st, s)
        if t is None or math.isinf(t):
            continue
        assert tau_condition_holds(st, s, t * (1 - 1e-6))
        assert not tau_condition_holds(st, s, t * (1 + 1e-6))


def test_select_tau():
    assert select_tau(CoherenceStats(mu=0.0, a=1.0, b=1.0), 2) == 1.0
    st = CoherenceStats(mu=0.01, a=1.0, b=1.0)
    assert select_tau(st, 2) == pytest.approx(1.0)  # min(1, 5.5625/2)
    st_tight = CoherenceStats(mu=0.05, a=1.0, b=1.0)
    t = select_tau(st_tight, 2)
    assert t is not None and tau_condition_holds(st_tight, 2, t)
    assert select_tau(CoherenceStats(mu=0.2, a=1.0, b=1.0), 3) is None


def test_kappa_monotone_in_c1_c3():
    rng = np.random.default_rng(22)
    st0 = CoherenceStats(mu=0.0, a=1.0, b=1.0)
    for _ in range(100):
        c1 = rng.uniform(0.1, 3.0)
        c3 = rng.uniform(0.1, 3.0)
        tau = rng.uniform(0.2, 2.0)
        mu = rng.uniform(0.0, 0.01)
        st = CoherenceStats(mu=mu, a=1.0, b=1.0)
        k0 = certify_coherence(c1, c3, st, 1, tau, 100, 0.05).kappa_r
        up_c1 = certify_coherence(c1 * 1.01, c3, st, 1, tau, 100, 0.05).kappa_r
        dn_c3 = certify_coherence(c1, c3 * 1.01, st, 1, tau, 100, 0.05).kappa_r
        assert up_c1 > k0 > dn_c3
    # kappa grows when the denominator a + b*mu shrinks
    k_small = certify_coherence(1.0, 1.0, CoherenceStats(mu=0.001, a=0.9, b=1.0), 1, 1.0, 100, 0.05)
    k_big = certify_coherence(1.0, 1.0, st0, 1, 1.0, 100, 0.05)
    assert k_small.kappa_r > k_big.kappa_r


def test_certificate_route_exclusivity():
    basic = certify_basic(0.5, 2.0, 100, 4, 0.05)
    assert basic.c2 is not None and basic.c3 is None and basic.tau is None
    st = CoherenceStats(mu=0.0, a=1.0, b=1.0)
    coh = certify_coherence(1.0, 1.0, st, 2, 1.0, 100, 0.05)
    assert coh.c3 is not None and coh.tau is not None and coh.c2 is None
    assert coh.flags.eq_t_holds is True


def test_certificate_json_fields():
    cert = certify_basic(0.5, 2.0, 100, 4, 0.05)
    d = cert.as_dict()
    for key in ("c0", "q", "c1", "c_r", "kappa_r", "radius", "confidence", "provenance"):
        assert key in d


def test_noise_spec_validation():
    with pytest.raises(ValueError):
        NoiseSpec(sigma=-1.0)
    with pytest.raises(ValueError):
        NoiseSpec(sigma=1.0, c_eps=0.5)
    with pytest.raises(ValueError):
        NoiseSpec(sigma=1.0, kind="cauchy")
    spec = NoiseSpec.logistic_residual()
    assert spec.sigma == 0.5 and spec.c_eps == 2.0 and spec.bounded
    assert NoiseSpec.from_dict({"kind": "uniform", "sigma": 0.3}).half_range == 0.3


def _rademacher_samples(m, n, sigma, rng):
    return sigma * (2.0 * rng.integers(0, 2, size=(m, n)) - 1.0)


def _directions(n, rng, k=12):
    dirs = [np.eye(n)[i] for i in range(4)]
    dirs.append(np.ones(n) / math.sqrt(n))
    while len(dirs) < k:
        dirs.append(rng.standard_normal(n))
    return np.asarray(dirs)


def test_tail_check_positive_control():
    rng = np.random.default_rng(23)
    n = 20
    samples = _rademacher_samples(20_000, n, 1.0, rng)
    rep = tail_check(NoiseSpec(sigma=1.0, kind="rademacher"), samples, _directions(n, rng))
    assert not rep.flagged
    assert rep.draws == 20_000 and rep.n_directions == 12


def test_tail_check_negative_control():
    rng = np.random.default_rng(24)
    n = 20
    samples = _rademacher_samples(20_000, n, 1.0, rng)
    lying = NoiseSpec(sigma=0.5, kind="rademacher")  # true scale is 1.0
    rep = tail_check(lying, samples, _directions(n, rng))
    assert rep.flagged


def test_tail_check_validation():
    rng = np.random.default_rng(25)
    with pytest.raises(ValueError, match="draws"):
        tail_check(NoiseSpec(sigma=1.0), rng.standard_normal((100, 5)), np.eye(5))
    with pytest.raises(ValueError, match="directions"):
        tail_check(NoiseSpec(sigma=1.0), rng.standard_normal((20_000, 5)), np.eye(5))


def test_tail_check_t_zero_trivial():
    rng = np.random.default_rng(26)
    n = 12
    samples = _rademacher_samples(10_000, n, 1.0, rng)
    rep = tail_check(
        NoiseSpec(sigma=1.0, kind="rademacher"), samples, _directions(n, rng), t_grid=[0.0]
    )
    assert not rep.flagged  # rate <= 1 <= c_eps
