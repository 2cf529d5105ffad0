"""Tuning constants, feasibility conditions, and bound certificates.

Given a design, a link, and a sub-Gaussian noise description, this module
computes the constants that certify a high-probability error radius for the
l1-regularized estimator:

* ``c1_*``       -- the noise-correlation constant, in three flavors
                    (exponential-family, analytic bounded-disc, analytic
                    general),
* ``c3_curvature`` -- the loss-curvature constant (half the cumulant
                    curvature infimum, or the squared minimal slope),
* ``c2_from_coherence`` -- parameter-space curvature from c3 and a
                    coherence-based restricted-singular-value bound,
* ``certify_basic`` / ``certify_coherence`` -- assemble the tuning
                    parameter c_r and the radius factor kappa_r, checking
                    the feasibility inequalities,
* ``tail_check``  -- empirical verification of the sub-Gaussian tail
                    condition Pr{|a'eps| > t ||a||} <= c_eps exp(-t^2/(2 sigma^2)).

All computations are deterministic pure functions of their inputs; every
certificate records which formula produced each number.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .design import CoherenceStats, DesignMatrix
from .links import AnalyticLink, ExpFamilyLink, LinkDomainError, inf_lambda2, slope_lower_bound
from .validation import check_in_open_unit, check_interval

__all__ = [
    "NoiseSpec",
    "AnalyticC1Params",
    "BoundCertificate",
    "CertFlags",
    "CertificateError",
    "InfeasibleCertificateError",
    "c1_exp_family",
    "c1_analytic_bounded",
    "c1_analytic_general",
    "c3_curvature",
    "c2_from_coherence",
    "certify_basic",
    "certify_coherence",
    "tau_condition_holds",
    "max_feasible_tau",
    "select_tau",
    "tail_check",
    "TailCheckReport",
]

TAIL_REL_TOL = 1e-9  # stop a series once its certified tail is this small


class CertificateError(ValueError):
    """A constant could not be certified on the given inputs."""


class InfeasibleCertificateError(RuntimeError):
    """A feasibility condition failed; carries the diagnostic certificate."""

    def __init__(self, certificate):
        self.certificate = certificate
        super().__init__(f"infeasible certificate: {certificate.infeasibility_reason()}")


BOUNDED_NOISE_KINDS = (
    "rademacher",
    "uniform",
    "truncated-gaussian",
    "logistic-bernoulli-residual",
)


@dataclass(frozen=True)
class NoiseSpec:
    """Sub-Gaussian observation-noise parameters (sigma, c_eps).

    Every built-in generator draws values supported in [-sigma, sigma]
    (the logistic Bernoulli residual has range 1 with sigma = 1/2), so the
    declared pair (sigma, c_eps = 2) is guaranteed by Hoeffding's inequality.
    """

    sigma: float
    c_eps: float = 2.0
    kind: str = "rademacher"

    def __post_init__(self):
        if self.sigma < 0:
            raise ValueError(f"sigma must be >= 0, got {self.sigma}")
        if self.c_eps < 1:
            raise ValueError(f"c_eps must be >= 1, got {self.c_eps}")
        if self.kind not in BOUNDED_NOISE_KINDS + ("composed",):
            raise ValueError(f"unknown noise kind {self.kind!r}")

    @property
    def bounded(self) -> bool:
        return self.kind in BOUNDED_NOISE_KINDS

    @property
    def half_range(self) -> float:
        """Half the essential range; equals sigma for every bounded built-in."""
        if not self.bounded:
            raise ValueError(f"noise kind {self.kind!r} has no declared range")
        return self.sigma

    @classmethod
    def logistic_residual(cls) -> "NoiseSpec":
        return cls(sigma=0.5, c_eps=2.0, kind="logistic-bernoulli-residual")

    @classmethod
    def from_dict(cls, d) -> "NoiseSpec":
        kind = d.get("kind", "rademacher")
        if kind == "logistic-bernoulli-residual":
            return cls(sigma=float(d.get("sigma", 0.5)), c_eps=float(d.get("c_eps", 2.0)), kind=kind)
        return cls(sigma=float(d["sigma"]), c_eps=float(d.get("c_eps", 2.0)), kind=kind)

    def as_dict(self):
        return {"sigma": self.sigma, "c_eps": self.c_eps, "kind": self.kind}


# ---------------------------------------------------------------------------
# c1 constants


def c1_exp_family(noise: NoiseSpec, X: DesignMatrix, q: float) -> float:
    """c1 = sigma * sqrt(ln(p/q) / (2n)) * max_j ||V_j||_2."""
    q = check_in_open_unit(q, "q")
    if math.log(X.p / q) <= 0:
        raise CertificateError(f"ln(p/q) <= 0 for p={X.p}, q={q}")
    return float(noise.sigma * math.sqrt(math.log(X.p / q) / (2 * X.n)) * X.col_l2.max())


def lambda_p(p: int, q: float) -> float:
    """ln[p (1 + 1/q)]."""
    q = check_in_open_unit(q, "q")
    return math.log(p * (1.0 + 1.0 / q))


@dataclass(frozen=True)
class AnalyticC1Params:
    """Inputs for the analytic-link c1 series.

    ``variant`` selects the bounded-disc form (series in theta*r_c about 0,
    for domains capped in ||.||_{1,inf}) or the general form (series in r_c1
    with the domain radius delta_D entering through Q = 4*delta_D/r_c1 + 1).
    """

    q: float
    variant: str = "bounded-disc"
    theta: float = 0.5
    r_c: Optional[float] = None
    r_c1: Optional[float] = None
    delta_D: Optional[float] = None

    def __post_init__(self):
        check_in_open_unit(self.q, "q")
        if self.variant not in ("bounded-disc", "general"):
            raise ValueError(f"unknown c1 variant {self.variant!r}")
        if self.variant == "bounded-disc":
            check_in_open_unit(self.theta, "theta")

    def Q(self) -> float:
        if self.delta_D is None or self.r_c1 is None:
            raise CertificateError(
                "delta_D unavailable: compute it with domain_radius_upper or "
                "set an explicit weighted_l1_cap"
            )
        if self.delta_D < 0:
            raise ValueError("delta_D must be nonnegative")
        return 4.0 * self.delta_D / self.r_c1 + 1.0


def _max_power_mean(X: DesignMatrix, k: int) -> float:
    """max_j n^(-1/(2k)) ||V_j||_{2k}; nondecreasing in k, <= max_j ||V_j||_inf."""
    return float(X.n ** (-1.0 / (2 * k)) * X.col_l2k(k).max())


def _tail_sq_geom(u: float, K: int) -> float:
    """Certified upper bound on sum_{k>K} k^2 u^(k-1) for 0 <= u < 1."""
    if u <= 0:
        return 0.0
    if u >= 1:
        raise CertificateError(f"series ratio {u} >= 1; tail diverges")
    total = 0.0
    k = K + 1
    for _ in range(500):
        total += k * k * u ** (k - 1)
        k += 1
    # remainder: term ratio u*((k+1)/k)^2 is <= rho for all orders >= k
    rho = u * (1.0 + 1.0 / k) ** 2
    if rho >= 1:
        raise CertificateError(f"series ratio bound {rho} >= 1; tail not certified")
    last = k * k * u ** (k - 1)
    return total + last / (1.0 - rho)


def c1_analytic_bounded(
    link: AnalyticLink,
    X: DesignMatrix,
    params: AnalyticC1Params,
    noise: NoiseSpec,
    details: bool = False,
):
    """Bounded-disc analytic c1.

    c1 = sigma sqrt(2 lambda_p) * sum_k sqrt(k) |f^(k)(0)|/(k-1)!
         * (theta r_c)^(k-1) * n^(-1/(2k)) max_j ||V_j||_{2k},

    truncated once a certified tail falls below ``TAIL_REL_TOL`` of the
    partial sum; the tail bound is added to keep the value conservative.
    """
    if params.variant != "bounded-disc":
        raise ValueError("params.variant must be 'bounded-disc'")
    r_c = params.r_c
    if r_c is None:
        if math.isfinite(link.radius0):
            r_c = link.radius0
        elif link.degree is not None and link.degree <= 1:
            r_c = 1.0  # series has a single term; the radius is immaterial
        else:
            raise CertificateError(f"{link.name}: r_c required (infinite disc)")
    if r_c <= 0:
        raise ValueError("r_c must be positive")
    x = params.theta * r_c
    if x >= link.radius0:
        raise CertificateError(
            f"theta*r_c = {x} >= radius of convergence {link.radius0}; series diverges"
        )
    lam_p = lambda_p(X.p, params.q)
    front = noise.sigma * math.sqrt(2.0 * lam_p)

    def term(k):
        return (
            math.sqrt(k)
            * link.taylor_abs(k)
            / math.factorial(k - 1)
            * x ** (k - 1)
            * _max_power_mean(X, k)
        )

    def struct_tail(K):
        if link.degree is not None:
            return 0.0 if K >= link.degree else None
        if link.geom_disc0_fn is None:
            return None
        rho = 0.5 * (x + link.radius0) if math.isfinite(link.radius0) else max(2.0 * x, 1.0)
        M = float(link.geom_disc0_fn(rho))
        m_inf = float(X.col_linf.max())
        # sqrt(k) k |f^(k)(0)|/k! <= k^2 M / rho^k
        return m_inf * (M / rho) * _tail_sq_geom(x / rho, K)

    partial, tail, K_used = _sum_series(term, struct_tail, link)
    value = front * (partial + tail)
    if details:
        return value, {
            "lambda_p": lam_p,
            "terms_used": K_used,
            "tail_bound": front * tail,
            "variant": "bounded-disc",
        }
    return value


def c1_analytic_general(
    link: AnalyticLink,
    X: DesignMatrix,
    params: AnalyticC1Params,
    noise: NoiseSpec,
    details: bool = False,
):
    """General analytic c1 over a domain of weighted-l1 radius delta_D.

    c1 = sqrt(2) sigma * sum_k k sqrt(2p ln(pQ) + k lambda_p) d_k r_c1^(k-1)
         * n^(-1/(2k)) max_j ||V_j||_{2k},      Q = 4 delta_D / r_c1 + 1.
    """
    if params.variant != "general":
        raise ValueError("params.variant must be 'general'")
    if params.r_c1 is None or params.r_c1 <= 0:
        raise ValueError("r_c1 must be positive")
    I = check_interval(link.interval)
    r_u = float(link.uniform_radius_fn(I)) if link.uniform_radius_fn else math.inf
    if params.r_c1 >= r_u:
        raise CertificateError(f"r_c1 = {params.r_c1} >= uniform analyticity radius {r_u}")
    Q = params.Q()
    lam_p = lambda_p(X.p, params.q)
    alpha = 2.0 * X.p * math.log(X.p * Q)
    r1 = params.r_c1

    def term(k):
        dk = float(link.dk_bound_fn(k, I))
        return k * math.sqrt(alpha + k * lam_p) * dk * r1 ** (k - 1) * _max_power_mean(X, k)

    def struct_tail(K):
        if link.degree is not None:
            return 0.0 if K >= link.degree else None
        if link.geom_interval_fn is None:
            return None
        r = 0.5 * (r1 + r_u) if math.isfinite(r_u) else max(2.0 * r1, 1.0)
        M = float(link.geom_interval_fn(I, r))
        m_inf = float(X.col_linf.max())
        # k sqrt(alpha + k lam) <= (sqrt(alpha) + sqrt(lam)) k^(3/2) <= (...) k^2
        return m_inf * (math.sqrt(alpha) + math.sqrt(lam_p)) * (M / r) * _tail_sq_geom(r1 / r, K)

    partial, tail, K_used = _sum_series(term, struct_tail, link)
    value = math.sqrt(2.0) * noise.sigma * (partial + tail)
    if details:
        return value, {
            "lambda_p": lam_p,
            "Q": Q,
            "terms_used": K_used,
            "tail_bound": math.sqrt(2.0) * noise.sigma * tail,
            "variant": "general",
        }
    return value


def _sum_series(term, struct_tail, link):
    """Sum term(k) for k >= 1 until the certified tail is negligible.

    Returns (partial_sum, added_tail_bound, terms_used).  Raises when no
    tail certificate is available at the truncation point.
    """
    partial = 0.0
    K_hard = link.degree if link.degree is not None else max(link.K_max, 1)
    for k in range(1, K_hard + 1):
        partial += term(k)
        tail = struct_tail(k)
        if tail is not None and tail <= TAIL_REL_TOL * max(partial, 1e-300):
            return partial, tail, k
    tail = struct_tail(K_hard)
    if tail is None:
        raise CertificateError(
            f"{link.name}: series tail not certifiable at K_max={K_hard}"
        )
    return partial, tail, K_hard


# ---------------------------------------------------------------------------
# curvature constants


def c3_curvature(link, interval) -> float:
    """Prediction-space curvature constant.

    Exponential family: (1/2) inf_I Lambda'';  analytic: (minimal slope)^2.
    Raises ``CertificateError`` when the constant degenerates to 0.
    """
    lo, hi = check_interval(interval)
    if isinstance(link, ExpFamilyLink):
        if link.name == "poisson" and (math.isinf(lo) or math.isinf(hi)):
            raise LinkDomainError(
                "poisson cumulant has unbounded curvature: certificates require "
                "a finite, user-capped interval"
            )
        inf2 = inf_lambda2(link, (lo, hi))
        c3 = 0.5 * inf2.value
    elif isinstance(link, AnalyticLink):
        c3 = slope_lower_bound(link, (lo, hi)) ** 2
    else:
        raise TypeError(f"unsupported link type {type(link)}")
    if c3 <= 0:
        raise CertificateError("Condition H3 unverifiable on this domain: curvature constant is 0")
    return float(c3)


def c2_from_coherence(c3: float, stats: CoherenceStats, m: int) -> Optional[float]:
    """c2 = c3 * gamma(m) with gamma(m) = a - (m-1) b mu; None when gamma <= 0.

    gamma(m) lower-bounds the restricted singular value min ||X d||^2/(n ||d||^2)
    over m-sparse d: the Gram matrix of any m columns has diagonal >= a*n and
    off-diagonal magnitudes <= b*mu*n, so Gershgorin gives the bound.  m caps
    |spt(v - beta)| (= h + s when the domain caps supports at h).
    """
    if m < 1:
        raise ValueError(f"m must be >= 1, got {m}")
    gamma = stats.a - (m - 1) * stats.b * stats.mu
    if gamma <= 0:
        return None
    return float(c3 * gamma)


# ---------------------------------------------------------------------------
# feasibility in tau


def tau_condition_holds(stats: CoherenceStats, s: int, tau: float) -> bool:
    """a + b mu > 2 b (3 + 4 tau) s mu."""
    return stats.a + stats.b * stats.mu > 2.0 * stats.b * (3.0 + 4.0 * tau) * s * stats.mu


def max_feasible_tau(stats: CoherenceStats, s: int) -> Optional[float]:
    """sup of feasible tau; +inf when mu = 0, None when no tau > 0 works."""
    if s < 1:
        raise ValueError(f"s must be >= 1, got {s}")
    if stats.mu == 0.0:
        return math.inf
    num = stats.a + stats.b * stats.mu - 6.0 * stats.b * s * stats.mu
    if num <= 0:
        return None
    return float(num / (8.0 * stats.b * s * stats.mu))


def select_tau(stats: CoherenceStats, s: int) -> Optional[float]:
    """Default tau = min(1, max feasible tau / 2); None when infeasible.

    Moderate tau keeps both c_r = 2(1+1/tau) c1 sqrt(n) and the radius
    factor moderate; halving the supremum leaves slack in the strict
    inequality.
    """
    t_max = max_feasible_tau(stats, s)
    if t_max is None:
        return None
    if math.isinf(t_max):
        return 1.0
    return min(1.0, t_max / 2.0)


# ---------------------------------------------------------------------------
# certificates


@dataclass(frozen=True)
class CertFlags:
    basic_feasible: bool
    eq_t_holds: Optional[bool] = None  # None on the c2 path

    def as_dict(self):
        return {"basic_feasible": self.basic_feasible, "eq_t_holds": self.eq_t_holds}


@dataclass(frozen=True)
class BoundCertificate:
    """All constants for one estimation problem, plus feasibility flags.

    Exactly one of the two routes is populated: c2 (direct parameter-space
    curvature) or c3 + tau (prediction-space curvature with coherence
    control).  ``kappa_r`` is present only when the route is feasible; the
    certified error radius is kappa_r * sqrt(s/n) at confidence 1 - c0*q.
    """

    c0: float
    q: float
    c1: float
    s: int
    n: int
    flags: CertFlags
    provenance: str
    c2: Optional[float] = None
    c3: Optional[float] = None
    tau: Optional[float] = None
    c_r: Optional[float] = None
    kappa_r: Optional[float] = None
    extras: dict = field(default_factory=dict)

    @property
    def feasible(self) -> bool:
        return self.kappa_r is not None

    def radius(self) -> float:
        if not self.feasible:
            raise InfeasibleCertificateError(self)
        return float(self.kappa_r * math.sqrt(self.s / self.n))

    @property
    def confidence(self) -> float:
        return 1.0 - self.c0 * self.q

    def infeasibility_reason(self) -> str:
        if self.feasible:
            return "feasible"
        if self.flags.eq_t_holds is False:
            if self.tau is None:
                return (
                    "no positive tau satisfies a + b*mu > 2*b*(3+4*tau)*s*mu "
                    f"(s={self.s}; coherence too large)"
                )
            return (
                "tau condition failed: a + b*mu must exceed 2*b*(3+4*tau)*s*mu "
                f"(tau={self.tau}, s={self.s})"
            )
        if not self.flags.basic_feasible:
            return "coherence too large for the sparsity level"
        return "no radius available"

    def as_dict(self):
        d = {
            "c0": self.c0,
            "q": self.q,
            "c1": self.c1,
            "c2": self.c2,
            "c3": self.c3,
            "tau": self.tau,
            "c_r": self.c_r,
            "kappa_r": self.kappa_r,
            "s": self.s,
            "n": self.n,
            "confidence": self.confidence,
            "radius": self.radius() if self.feasible else None,
            "feasible": self.feasible,
            "flags": self.flags.as_dict(),
            "provenance": self.provenance,
        }
        if self.extras:
            d["extras"] = dict(self.extras)
        return d


def certify_basic(
    c1: float, c2: float, n: int, s: int, q: float, c0: float = 2.0, provenance: str = ""
) -> BoundCertificate:
    """Certificate from (c1, c2): c_r = 2 c1 sqrt(n), kappa_r = 4 c1 / c2."""
    if c1 <= 0 or c2 <= 0:
        raise ValueError("c1 and c2 must be positive")
    return BoundCertificate(
        c0=float(c0),
        q=float(q),
        c1=float(c1),
        c2=float(c2),
        s=int(s),
        n=int(n),
        c_r=float(2.0 * c1 * math.sqrt(n)),
        kappa_r=float(4.0 * c1 / c2),
        flags=CertFlags(basic_feasible=True),
        provenance=provenance or "basic(c1,c2)",
    )


def certify_coherence(
    c1: float,
    c3: float,
    stats: CoherenceStats,
    s: int,
    tau: float,
    n: int,
    q: float,
    c0: float = 2.0,
    provenance: str = "",
) -> BoundCertificate:
    """Certificate from (c1, c3) plus the coherence feasibility conditions.

    On success: c_r = 2 (1 + 1/tau) c1 sqrt(n) and

        kappa_r = 3 (2 + 1/tau) sqrt(2 + (1 + 2 tau)^2) / (a + b mu) * c1/c3.

    When the tau condition fails the certificate is returned with
    ``eq_t_holds = False`` and no kappa_r; the caller may retry with a
    smaller tau or smaller s.
    """
    if c1 <= 0 or c3 <= 0:
        raise ValueError("c1 and c3 must be positive")
    if tau <= 0:
        raise ValueError(f"tau must be positive, got {tau}")
    basic = stats.a + stats.b * stats.mu > 6.0 * stats.b * s * stats.mu
    eq_t = tau_condition_holds(stats, s, tau)
    common = dict(
        c0=float(c0),
        q=float(q),
        c1=float(c1),
        c3=float(c3),
        tau=float(tau),
        s=int(s),
        n=int(n),
        provenance=provenance or "coherence(c1,c3,tau)",
        extras={"mu": stats.mu, "a": stats.a, "b": stats.b},
    )
    if not eq_t:
        return BoundCertificate(
            flags=CertFlags(basic_feasible=basic, eq_t_holds=False), **common
        )
    c_r = 2.0 * (1.0 + 1.0 / tau) * c1 * math.sqrt(n)
    kappa = (
        3.0
        * (2.0 + 1.0 / tau)
        * math.sqrt(2.0 + (1.0 + 2.0 * tau) ** 2)
        / (stats.a + stats.b * stats.mu)
        * (c1 / c3)
    )
    return BoundCertificate(
        c_r=float(c_r),
        kappa_r=float(kappa),
        flags=CertFlags(basic_feasible=basic, eq_t_holds=True),
        **common,
    )


# ---------------------------------------------------------------------------
# empirical tail verification


@dataclass
class TailCheckReport:
    """Exceedance frequencies against the declared sub-Gaussian bound."""

    entries: list
    flagged: bool
    draws: int
    n_directions: int

    def as_dict(self):
        return {
            "entries": self.entries,
            "flagged": self.flagged,
            "draws": self.draws,
            "n_directions": self.n_directions,
        }


def tail_check(noise: NoiseSpec, samples, directions, t_grid=None) -> TailCheckReport:
    """Compare empirical tail rates of |a' eps| with c_eps exp(-t^2/(2 sigma^2)).

    ``samples`` is a (draws, n) array of noise vectors and ``directions`` a
    (k, n) array; directions are normalized to unit length.  A violation is
    flagged only when an empirical rate exceeds the bound by more than three
    binomial standard errors.
    """
    samples = np.asarray(samples, dtype=np.float64)
    directions = np.asarray(directions, dtype=np.float64)
    if samples.ndim != 2 or directions.ndim != 2:
        raise ValueError("samples and directions must be 2-D arrays")
    m, n = samples.shape
    if m < 10_000:
        raise ValueError(f"need >= 10000 noise draws, got {m}")
    if directions.shape[0] < 10:
        raise ValueError(f"need >= 10 directions, got {directions.shape[0]}")
    if directions.shape[1] != n:
        raise ValueError("directions and samples disagree on dimension")
    norms = np.linalg.norm(directions, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero direction")
    directions = directions / norms[:, None]
    if t_grid is None:
        if noise.sigma <= 0:
            raise ValueError("default t grid needs sigma > 0")
        t_grid = noise.sigma * np.array([0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    t_grid = np.asarray(t_grid, dtype=np.float64)

    proj = samples @ directions.T  # (m, k)
    entries = []
    flagged = False
    for j in range(directions.shape[0]):
        absproj = np.abs(proj[:, j])
        for t in t_grid:
            emp = float(np.mean(absproj > t))
            if noise.sigma > 0:
                bound = float(noise.c_eps * math.exp(-(t**2) / (2.0 * noise.sigma**2)))
            else:
                bound = float(noise.c_eps) if t == 0 else 0.0
            se = math.sqrt(emp * (1.0 - emp) / m)
            flag = emp > bound + 3.0 * se
            flagged = flagged or flag
            entries.append(
                {
                    "direction": j,
                    "t": float(t),
                    "empirical": emp,
                    "bound": bound,
                    "se": se,
                    "flag": flag,
                }
            )
    return TailCheckReport(
        entries=entries, flagged=flagged, draws=m, n_directions=int(directions.shape[0])
    )
