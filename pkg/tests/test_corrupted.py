import math

import numpy as np
import pytest

from sparselink.certificates import NoiseSpec
from sparselink.corrupted import (
    CorruptionSpec,
    composed_tail,
    induce_problem,
    slope_bound_transfer,
    smooth_link,
)
from sparselink.design import DesignMatrix, DomainSpec
from sparselink.links import LinkDomainError, exp_link, identity_link, poly_link


SQUARE = poly_link([0.0, 0.0, 1.0], interval=(-1.0, 1.0))


def test_corruption_spec_validation():
    with pytest.raises(ValueError, match="R0 > R \\+ r"):
        CorruptionSpec(xi_kind="uniform", r=0.5, R=1.0, R0=1.2)
    with pytest.raises(ValueError, match="xi kind"):
        CorruptionSpec(xi_kind="cauchy", r=0.5, R=1.0, R0=2.0)
    spec = CorruptionSpec.from_dict(
        {"xi": {"kind": "uniform", "r": 0.3}, "R": 1.0, "R0": 1.5}
    )
    assert spec.interval == (-1.0, 1.0)


def test_smooth_square_uniform():
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5)
    sl = smooth_link(SQUARE, spec)
    zs = np.linspace(-1.0, 1.0, 33)
    assert np.max(np.abs(sl.g(zs) - (zs**2 + 0.03))) <= 1e-9
    # series coefficients: E xi^2, 0, 1, then zeros
    assert sl.series[0] == pytest.approx(0.03, abs=1e-12)
    assert abs(sl.series[1]) <= 1e-12
    assert sl.series[2] == pytest.approx(1.0, rel=1e-12)
    assert np.all(np.abs(sl.series[3:]) <= 1e-12)


def test_smooth_identity_is_identity():
    for kind in ("uniform", "scaled-rademacher", "truncated-gaussian"):
        spec = CorruptionSpec(xi_kind=kind, r=0.3, R=1.0, R0=1.5)
        sl = smooth_link(identity_link(interval=(-1.0, 1.0)), spec)
        zs = np.linspace(-1.0, 1.0, 17)
        assert np.max(np.abs(sl.g(zs) - zs)) <= 1e-12


def test_smooth_exp_closed_form():
    spec = CorruptionSpec(xi_kind="uniform", r=0.5, R=1.0, R0=2.0)
    sl = smooth_link(exp_link((-1.0, 1.0)), spec)
    factor = math.sinh(0.5) / 0.5
    zs = np.linspace(-1.0, 1.0, 9)
    assert np.max(np.abs(sl.g(zs) - factor * np.exp(zs))) <= 1e-10
    assert sl.g(np.array([0.0]))[0] == pytest.approx(1.042191, abs=1e-6)


def test_smooth_rademacher_exact_average():
    spec = CorruptionSpec(xi_kind="scaled-rademacher", r=0.4, R=1.0, R0=1.5)
    sl = smooth_link(SQUARE, spec)
    assert sl.method == "exact-average"
    zs = np.linspace(-1.0, 1.0, 9)
    assert np.allclose(sl.g(zs), zs**2 + 0.16, atol=1e-14)


def test_series_vs_quadrature_agreement():
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=0.8, R0=1.6)
    sl = smooth_link(exp_link((-0.8, 0.8)), spec)
    zs = np.linspace(-0.8, 0.8, 64)
    assert np.max(np.abs(sl.g_series(zs) - sl.g(zs))) <= 1e-8
    assert sl.series_quad_dev is not None and sl.series_quad_dev <= 1e-8


def test_smooth_monte_carlo_agreement():
    rng = np.random.default_rng(0)
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5)
    sl = smooth_link(SQUARE, spec)
    draws = 1_000_000
    xi = spec.sample_xi(draws, rng)
    for z in rng.uniform(-1.0, 1.0, size=20):
        vals = (z + xi) ** 2
        mc = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(draws))
        assert abs(sl.g(np.array([z]))[0] - mc) <= 3.0 * se + 1e-12


def test_smooth_domain_error():
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5)
    sl = smooth_link(SQUARE, spec)
    with pytest.raises(LinkDomainError):
        sl.g(np.array([1.25]))


def test_slope_transfer_values():
    assert slope_bound_transfer(
        identity_link(), CorruptionSpec(xi_kind="uniform", r=0.3, R=0.5, R0=1.0)
    ) == pytest.approx(1.0)
    assert slope_bound_transfer(
        exp_link((-0.5, 0.5)), CorruptionSpec(xi_kind="uniform", r=0.3, R=0.5, R0=1.0)
    ) == pytest.approx(math.exp(-1.0), rel=1e-12)
    cubic = poly_link([0.0, 0.0, 0.0, 1.0], interval=(-0.5, 0.5))
    assert slope_bound_transfer(
        cubic, CorruptionSpec(xi_kind="uniform", r=0.3, R=0.5, R0=1.0)
    ) == 0.0


def test_slope_transfer_certified_against_empirical():
    rng = np.random.default_rng(1)
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=0.5, R0=1.0)
    f = exp_link((-0.5, 0.5))
    sl = smooth_link(f, spec)
    bound = slope_bound_transfer(f, spec)
    x = rng.uniform(-0.5, 0.5, size=10_000)
    y = rng.uniform(-0.5, 0.5, size=10_000)
    keep = np.abs(x - y) > 1e-10
    quot = np.abs(sl.g(x[keep]) - sl.g(y[keep])) / np.abs(x[keep] - y[keep])
    assert bound <= quot.min() + 1e-12


def test_composed_tail_examples():
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5, sup_f=1.0)
    out = composed_tail(NoiseSpec(sigma=0.5, c_eps=2.0, kind="rademacher"), spec)
    assert out.sigma == pytest.approx(2.0) and out.c_eps == pytest.approx(4.0)
    # sigma -> 0: bounded path with the combined essential half-range
    out0 = composed_tail(NoiseSpec(sigma=0.0, c_eps=2.0, kind="rademacher"), spec)
    assert out0.sigma == pytest.approx(1.0) and out0.c_eps == 2.0
    # sup_f equal to sigma
    spec2 = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5, sup_f=0.5)
    out2 = composed_tail(NoiseSpec(sigma=0.5, c_eps=1.5, kind="uniform"), spec2)
    assert out2.sigma == pytest.approx(1.0) and out2.c_eps == pytest.approx(3.5)


def test_composed_tail_dominance_pointwise():
    for sup_f, sigma, c_eps in [(1.0, 0.5, 2.0), (0.4, 1.2, 1.5), (2.0, 2.0, 3.0)]:
        spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5, sup_f=sup_f)
        out = composed_tail(NoiseSpec(sigma=sigma, c_eps=c_eps, kind="uniform"), spec)
        t = np.linspace(0.0, 10.0 * out.sigma, 401)
        two_term = 2.0 * np.exp(-(t**2) / (8.0 * sup_f**2)) + c_eps * np.exp(
            -(t**2) / (8.0 * sigma**2)
        )
        folded = out.c_eps * np.exp(-(t**2) / (2.0 * out.sigma**2))
        assert np.all(two_term <= folded + 1e-15)


def test_sup_f_estimated_from_boundary():
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5)
    sl = smooth_link(SQUARE, spec)
    # |z^2| on |z| = 1.5 has max 2.25; the estimate adds a 1.05 safety factor
    assert sl.sup_f == pytest.approx(2.25 * 1.05, rel=1e-6)


def test_induce_problem_square_link():
    rng = np.random.default_rng(2)
    A = 2.0 * rng.integers(0, 2, (30, 4)) - 1.0
    X = DesignMatrix(A)
    beta = np.zeros(4)
    beta[0] = 0.2
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5)
    noise = NoiseSpec(sigma=0.1, c_eps=2.0, kind="uniform")
    xi = spec.sample_xi(30, rng)
    y = (A @ beta + xi) ** 2 + 0.1 * (2.0 * rng.integers(0, 2, 30) - 1.0)
    ind = induce_problem(SQUARE, spec, X, y, DomainSpec(interval=(-0.9, 0.9)), 0.1, noise)
    assert ind.problem.kind == "lse"
    # induced link is the exact polynomial z^2 + r^2/3
    zs = np.linspace(-0.9, 0.9, 11)
    assert np.allclose(ind.problem.link.f(zs), zs**2 + 0.03, atol=1e-12)
    assert ind.noise.sigma == pytest.approx(2.0 * max(ind.smoothed.sup_f, 0.1))
    assert ind.noise.c_eps == pytest.approx(4.0)


def test_induce_problem_identity_matches_uncorrupted():
    rng = np.random.default_rng(3)
    A = 2.0 * rng.integers(0, 2, (20, 3)) - 1.0
    X = DesignMatrix(A)
    spec = CorruptionSpec(xi_kind="uniform", r=0.2, R=1.0, R0=1.5, sup_f=1.5)
    noise = NoiseSpec(sigma=0.3, c_eps=2.0, kind="uniform")
    y = A @ np.array([0.3, 0.0, 0.0])
    ind = induce_problem(
        identity_link(interval=(-1.0, 1.0)), spec, X, y, DomainSpec(interval=(-1.0, 1.0)), 0.5, noise
    )
    zs = np.linspace(-1.0, 1.0, 11)
    assert np.allclose(ind.problem.link.f(zs), zs, atol=1e-12)
    assert ind.noise.sigma == pytest.approx(2.0 * 1.5)
    assert ind.noise.c_eps == pytest.approx(4.0)


def test_induce_problem_degenerate_corruption_limit():
    # point-mass-at-0 limit: tiny r leaves g indistinguishable from f
    rng = np.random.default_rng(4)
    A = 2.0 * rng.integers(0, 2, (20, 3)) - 1.0
    X = DesignMatrix(A)
    spec = CorruptionSpec(xi_kind="uniform", r=1e-9, R=1.0, R0=1.5, sup_f=2.25)
    noise = NoiseSpec(sigma=0.5, c_eps=2.0, kind="uniform")
    y = (A @ np.array([0.2, 0.0, 0.0])) ** 2
    ind = induce_problem(SQUARE, spec, X, y, DomainSpec(interval=(-1.0, 1.0)), 0.1, noise)
    zs = np.linspace(-1.0, 1.0, 11)
    assert np.max(np.abs(ind.problem.link.f(zs) - zs**2)) <= 1e-9
    assert ind.noise.sigma == pytest.approx(2.0 * max(2.25, 0.5))


def test_induce_problem_domain_check():
    X = DesignMatrix(np.eye(3))
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=1.0, R0=1.5)
    noise = NoiseSpec(sigma=0.1, c_eps=2.0, kind="uniform")
    with pytest.raises(ValueError, match="inside"):
        induce_problem(SQUARE, spec, X, np.zeros(3), DomainSpec(interval=(-2.0, 2.0)), 0.1, noise)


def test_smoothed_as_analytic_link_exp():
    spec = CorruptionSpec(xi_kind="uniform", r=0.3, R=0.6, R0=1.2)
    sl = smooth_link(exp_link((-0.6, 0.6)), spec)
    g_link = sl.as_analytic_link()
    zs = np.linspace(-0.6, 0.6, 9)
    assert np.allclose(g_link.f(zs), sl.g(zs), atol=1e-14)
    # certified Cauchy bound dominates sampled derivative magnitudes
    d2 = g_link.dk_bound_fn(2, (-0.6, 0.6))
    samples = np.abs(sl.g_deriv(2, zs)) / 2.0
    assert np.all(samples <= d2 * (1 + 1e-9))
    # slope data transfers
    assert g_link.slope_exact_fn((-0.6, 0.6)) == pytest.approx(
        slope_bound_transfer(exp_link((-0.6, 0.6)), spec)
    )
