"""Link-function families.

Two kinds of links drive the estimators:

* ``ExpFamilyLink`` -- a cumulant Lambda with first and second derivatives,
  used by the maximum-likelihood objective.  Built-ins: logistic
  (Lambda = ln(1+e^t)), gaussian identity (t^2/2), poisson (e^t).
* ``AnalyticLink`` -- a real-analytic f with power-series data at 0,
  certified per-order derivative bounds d_k = sup_I |f^(k)|/k!, and slope
  (minimal difference quotient) bounds.  Built-ins: identity, exp,
  polynomial, scaled logistic sigmoid.

Links are immutable and evaluation is pure.  Derivatives come from closed
forms or exact recurrences, never from automatic differentiation: every
bound exported from here is used to certify error radii, so it has to be
trusted, conservative, and reproducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from numpy.polynomial import polynomial as npoly
from scipy.special import expit

from .validation import check_interval

__all__ = [
    "ExpFamilyLink",
    "AnalyticLink",
    "LinkDomainError",
    "SeriesTruncationError",
    "CurvatureInfimum",
    "logistic_link",
    "gaussian_link",
    "poisson_link",
    "identity_link",
    "exp_link",
    "poly_link",
    "logistic_analytic_link",
    "series_link",
    "eval_cumulant",
    "inf_lambda2",
    "slope_lower_bound",
    "dk_bounds",
    "link_from_spec",
]

GRID_POINTS = 4096  # dense-grid resolution for inf/slope fallbacks


class LinkDomainError(ValueError):
    """Evaluation requested outside the link's validity domain."""


class SeriesTruncationError(ValueError):
    """Series data exhausted before the requested order."""


# ---------------------------------------------------------------------------
# exponential-family links


@dataclass(frozen=True)
class ExpFamilyLink:
    """Cumulant Lambda with derivatives on a validity interval."""

    name: str
    lam: Callable
    lam1: Callable
    lam2: Callable
    valid_interval: tuple = (-math.inf, math.inf)
    # closed-form infimum of lam2 over [lo, hi]; returns (value, vanishing)
    lam2_inf_fn: Optional[Callable] = None

    def contains(self, t) -> bool:
        lo, hi = self.valid_interval
        t = np.asarray(t, dtype=np.float64)
        return bool(np.all((t >= lo) & (t <= hi)))

    def spec_dict(self):
        return {"kind": self.name, "interval": list(self.valid_interval)}


def logistic_link() -> ExpFamilyLink:
    def lam2_inf(lo, hi):
        if math.isinf(lo) or math.isinf(hi):
            return 0.0, True
        t = max(abs(lo), abs(hi))
        return float(expit(t) * expit(-t)), False

    return ExpFamilyLink(
        name="logistic",
        lam=lambda t: np.logaddexp(0.0, t),
        lam1=expit,
        lam2=lambda t: expit(t) * expit(-t),
        lam2_inf_fn=lam2_inf,
    )


def gaussian_link() -> ExpFamilyLink:
    return ExpFamilyLink(
        name="gaussian",
        lam=lambda t: 0.5 * np.square(t),
        lam1=lambda t: np.asarray(t, dtype=np.float64) + 0.0,
        lam2=lambda t: np.ones_like(np.asarray(t, dtype=np.float64)),
        lam2_inf_fn=lambda lo, hi: (1.0, False),
    )


def poisson_link(valid_interval=(-math.inf, math.inf)) -> ExpFamilyLink:
    def lam2_inf(lo, hi):
        if math.isinf(lo):
            return 0.0, True
        return float(math.exp(lo)), False

    return ExpFamilyLink(
        name="poisson",
        lam=np.exp,
        lam1=np.exp,
        lam2=np.exp,
        valid_interval=check_interval(valid_interval),
        lam2_inf_fn=lam2_inf,
    )


def eval_cumulant(link: ExpFamilyLink, t: float):
    """(Lambda, Lambda', Lambda'') at t; t must lie in the validity interval."""
    t = float(t)
    if not link.contains(t):
        raise LinkDomainError(
            f"t={t} outside valid interval {link.valid_interval} of {link.name}"
        )
    return float(link.lam(t)), float(link.lam1(t)), float(link.lam2(t))


@dataclass(frozen=True)
class CurvatureInfimum:
    """inf of Lambda'' over an interval, with provenance of the value."""

    value: float
    vanishing: bool = False  # interval unbounded and Lambda'' -> 0 there
    tolerance: float = 0.0  # resolution of the grid fallback; 0 = closed form


def inf_lambda2(link: ExpFamilyLink, interval) -> CurvatureInfimum:
    """Certified infimum of Lambda'' over the interval.

    Built-ins use closed forms (monotone structure of Lambda'').  The
    fallback is a 4096-point grid with one parabola-refinement pass; its
    spacing is surfaced as ``tolerance``.
    """
    lo, hi = check_interval(interval)
    vlo, vhi = link.valid_interval
    if lo < vlo or hi > vhi:
        raise LinkDomainError(f"interval [{lo}, {hi}] not inside {link.valid_interval}")
    if link.lam2_inf_fn is not None:
        value, vanishing = link.lam2_inf_fn(lo, hi)
        return CurvatureInfimum(value=value, vanishing=vanishing)
    if math.isinf(lo) or math.isinf(hi):
        raise LinkDomainError(
            f"{link.name}: grid infimum needs a finite interval; none provided"
        )
    ts = np.linspace(lo, hi, GRID_POINTS)
    vals = np.asarray(link.lam2(ts), dtype=np.float64)
    i = int(np.argmin(vals))
    best = float(vals[i])
    if 0 < i < GRID_POINTS - 1:
        t_ref = _parabola_vertex(ts[i - 1 : i + 2], vals[i - 1 : i + 2])
        if t_ref is not None and lo <= t_ref <= hi:
            best = min(best, float(link.lam2(t_ref)))
    h = (hi - lo) / (GRID_POINTS - 1)
    return CurvatureInfimum(value=max(best, 0.0), tolerance=h)


def _parabola_vertex(xs, ys):
    x0, x1, x2 = xs
    y0, y1, y2 = ys
    denom = (x0 - x1) * (x0 - x2) * (x1 - x2)
    if denom == 0:
        return None
    a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / denom
    b = (x2**2 * (y0 - y1) + x1**2 * (y2 - y0) + x0**2 * (y1 - y2)) / denom
    if a <= 0:
        return None
    return -b / (2 * a)


# ---------------------------------------------------------------------------
# analytic links


@dataclass(frozen=True)
class AnalyticLink:
    """Real-analytic link with certified series and derivative-bound data.

    ``series_at0(k)`` returns the signed derivative f^(k)(0) (k=0 gives
    f(0)); ``deriv(k, x)`` evaluates f^(k) pointwise; ``dk_bound_fn(k, I)``
    returns a certified upper bound on sup_I |f^(k)|/k!.  ``radius0`` is the
    open disc of analyticity about 0 and ``uniform_radius_fn(I)`` the open
    uniform radius about points of I.  ``geom_disc0_fn(rho)`` and
    ``geom_interval_fn(I, r)`` provide Cauchy-type moduli M such that
    |f^(k)(0)|/k! <= M/rho^k resp. d_k <= M/r^k, used to certify series
    tails.  Fields are None when the corresponding data is unavailable.
    """

    name: str
    f: Callable
    f1: Callable
    interval: tuple = (-1.0, 1.0)
    radius0: float = math.inf
    K_max: int = 64
    series_at0: Optional[Callable] = None
    deriv: Optional[Callable] = None
    dk_bound_fn: Optional[Callable] = None
    uniform_radius_fn: Optional[Callable] = None
    geom_disc0_fn: Optional[Callable] = None
    geom_interval_fn: Optional[Callable] = None
    slope_exact_fn: Optional[Callable] = None
    degree: Optional[int] = None
    complex_modulus_fn: Optional[Callable] = None
    spec_extra: dict = field(default_factory=dict)

    @property
    def is_affine(self) -> bool:
        return self.degree is not None and self.degree <= 1

    def taylor_abs(self, k: int) -> float:
        """|f^(k)(0)| for k >= 1, from the signed series data."""
        if self.series_at0 is None:
            raise SeriesTruncationError(f"{self.name}: no series data at 0")
        return abs(self.series_at0(k))

    def series_eval(self, z, K: Optional[int] = None) -> np.ndarray:
        """Evaluate the Taylor series about 0 truncated at order K."""
        if self.series_at0 is None:
            raise SeriesTruncationError(f"{self.name}: no series data at 0")
        K = self.K_max if K is None else K
        z = np.asarray(z, dtype=np.float64)
        out = np.zeros_like(z)
        term = np.ones_like(z)  # z^k / k!
        for k in range(0, K + 1):
            if k > 0:
                term = term * z / k
            out = out + self.series_at0(k) * term
        return out

    def spec_dict(self):
        d = {"kind": self.name, "interval": list(self.interval)}
        d.update(self.spec_extra)
        return d


def identity_link(interval=(-math.inf, math.inf)) -> AnalyticLink:
    interval = check_interval(interval)
    return AnalyticLink(
        name="identity",
        f=lambda z: np.asarray(z, dtype=np.float64) + 0.0,
        f1=lambda z: np.ones_like(np.asarray(z, dtype=np.float64)),
        interval=interval,
        radius0=math.inf,
        series_at0=lambda k: 1.0 if k == 1 else 0.0,
        deriv=_poly_deriv_fn(np.array([0.0, 1.0])),
        dk_bound_fn=lambda k, I: 1.0 if k == 1 else 0.0,
        uniform_radius_fn=lambda I: math.inf,
        geom_disc0_fn=None,  # finite series, no tail needed
        geom_interval_fn=None,
        slope_exact_fn=lambda I: 1.0,
        degree=1,
        complex_modulus_fn=lambda z: np.abs(z),
    )


def exp_link(interval=(-1.0, 1.0)) -> AnalyticLink:
    interval = check_interval(interval)

    def dk_bound(k, I):
        lo, hi = I
        if math.isinf(hi):
            raise LinkDomainError("exp link: d_k bound needs a finite upper endpoint")
        return math.exp(hi) / math.factorial(k) if k <= 170 else math.exp(hi - math.lgamma(k + 1))

    return AnalyticLink(
        name="exp",
        f=np.exp,
        f1=np.exp,
        interval=interval,
        radius0=math.inf,
        series_at0=lambda k: 1.0,
        deriv=lambda k, x: np.exp(np.asarray(x, dtype=np.float64)),
        dk_bound_fn=dk_bound,
        uniform_radius_fn=lambda I: math.inf,
        geom_disc0_fn=lambda rho: math.exp(rho),
        geom_interval_fn=lambda I, r: math.exp(I[1] + r),
        slope_exact_fn=lambda I: 0.0 if math.isinf(I[0]) else math.exp(I[0]),
        degree=None,
        complex_modulus_fn=lambda z: np.abs(np.exp(z)),
    )


def _poly_deriv_fn(coeffs):
    coeffs = np.asarray(coeffs, dtype=np.float64)

    def deriv(k, x):
        c = coeffs
        for _ in range(k):
            c = npoly.polyder(c)
            if c.size == 0:
                c = np.zeros(1)
        return npoly.polyval(np.asarray(x, dtype=np.float64), c)

    return deriv


def _poly_abs_max_on(coeffs, lo, hi):
    """Exact max of |poly| over [lo, hi] via critical points."""
    c = np.asarray(coeffs, dtype=np.float64)
    cand = [lo, hi]
    dc = npoly.polyder(c)
    if dc.size and np.any(dc != 0):
        roots = npoly.polyroots(dc)
        for r in roots:
            if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                cand.append(float(r.real))
    return float(np.max(np.abs(npoly.polyval(np.array(cand), c))))


def _poly_slope(coeffs, lo, hi):
    """Exact minimal difference quotient of a polynomial on [lo, hi].

    Equals min |f'| when f' keeps one sign on the interval, else 0.
    """
    dc = npoly.polyder(np.asarray(coeffs, dtype=np.float64))
    if dc.size == 0 or np.all(dc == 0):
        return 0.0
    if dc.size == 1:
        return float(abs(dc[0]))
    if math.isinf(lo) or math.isinf(hi):
        return 0.0  # nonconstant derivative is unbounded/sign-varying at infinity
    cand = [lo, hi]
    d2 = npoly.polyder(dc)
    for arr in (dc, d2):
        if arr.size and np.any(arr != 0):
            for r in npoly.polyroots(arr):
                if abs(r.imag) < 1e-12 and lo <= r.real <= hi:
                    cand.append(float(r.real))
    vals = npoly.polyval(np.array(sorted(set(cand))), dc)
    if vals.min() < 0.0 < vals.max():
        return 0.0
    return float(np.min(np.abs(vals)))


def poly_link(coeffs, interval=(-1.0, 1.0)) -> AnalyticLink:
    """Polynomial link f(x) = sum_j coeffs[j] * x^j."""
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=np.float64))
    if coeffs.ndim != 1 or coeffs.size == 0:
        raise ValueError("poly link needs a 1-D, nonempty coefficient list")
    interval = check_interval(interval)
    deg = int(np.max(np.nonzero(coeffs)[0])) if np.any(coeffs != 0) else 0
    dcoeffs = npoly.polyder(coeffs) if coeffs.size > 1 else np.zeros(1)

    def series_at0(k):
        return float(coeffs[k] * math.factorial(k)) if k <= deg else 0.0

    def dk_bound(k, I):
        if k > deg:
            return 0.0
        lo, hi = I
        if math.isinf(lo) or math.isinf(hi):
            raise LinkDomainError("poly link: d_k bound needs a finite interval")
        m = max(abs(lo), abs(hi))
        j = np.arange(k, deg + 1)
        binom = np.array([math.comb(int(jj), k) for jj in j], dtype=np.float64)
        return float(np.sum(np.abs(coeffs[k : deg + 1]) * binom * m ** (j - k)))

    return AnalyticLink(
        name="poly",
        f=lambda z: npoly.polyval(np.asarray(z, dtype=np.float64), coeffs),
        f1=lambda z: npoly.polyval(np.asarray(z, dtype=np.float64), dcoeffs),
        interval=interval,
        radius0=math.inf,
        series_at0=series_at0,
        deriv=_poly_deriv_fn(coeffs),
        dk_bound_fn=dk_bound,
        uniform_radius_fn=lambda I: math.inf,
        slope_exact_fn=lambda I: _poly_slope(coeffs, I[0], I[1]),
        degree=deg,
        complex_modulus_fn=lambda z: np.abs(npoly.polyval(z, coeffs)),
        spec_extra={"coeffs": [float(c) for c in coeffs]},
    )


def _sigmoid_derivative_polys(K):
    """Coefficient arrays P_k with sigma^(k)(x) = P_k(sigma(x)); P_0 = t."""
    polys = [np.array([0.0, 1.0])]
    for _ in range(K):
        pk = polys[-1]
        polys.append(npoly.polymul(npoly.polyder(pk), np.array([0.0, 1.0, -1.0])))
    return polys


def _sigmoid_strip_modulus(u):
    """sup |1/(1+e^-w)| over the strip |Im w| <= u; finite for u < pi."""
    if u < math.pi / 2:
        return 1.0
    if u >= math.pi:
        return math.inf
    return 1.0 / math.sin(u)


def logistic_analytic_link(scale=1.0, rate=1.0, interval=(-1.0, 1.0)) -> AnalyticLink:
    """Scaled sigmoid f(x) = scale * sigmoid(rate * x) as an analytic link.

    Poles of the sigmoid sit at +/- i*pi/rate, so the disc of analyticity
    about 0 has radius pi/rate; modulus bounds on strips certify the
    derivative bounds d_k <= scale * (rate/r)^k * M(rate*r).
    """
    A, B = float(scale), float(rate)
    if A <= 0 or B <= 0:
        raise ValueError("scale and rate must be positive")
    interval = check_interval(interval)
    K_max = 64
    polys = _sigmoid_derivative_polys(K_max + 2)

    def deriv(k, x):
        x = np.asarray(x, dtype=np.float64)
        if k == 0:
            return A * expit(B * x)
        if k > K_max + 2:
            raise SeriesTruncationError(f"logistic-analytic: order {k} > K_max={K_max}")
        return A * B**k * npoly.polyval(expit(B * x), polys[k])

    def dk_bound(k, I):
        # Cauchy on discs of radius r about points of I, with the strip
        # modulus bound; r = pi/(2B) keeps |sigmoid| <= 1 there.
        r = math.pi / (2 * B)
        return A * (1.0 / r) ** k

    def geom_interval(I, r):
        u = B * r
        m = _sigmoid_strip_modulus(u)
        if math.isinf(m):
            raise LinkDomainError(
                f"logistic-analytic: radius {r} reaches the poles (rate={B})"
            )
        return A * m

    def slope_exact(I):
        lo, hi = I
        if math.isinf(lo) or math.isinf(hi):
            return 0.0
        t = B * max(abs(lo), abs(hi))
        return float(A * B * expit(t) * expit(-t))

    def complex_modulus(z):
        z = np.asarray(z, dtype=np.complex128)
        return np.abs(A / (1.0 + np.exp(-B * z)))

    return AnalyticLink(
        name="logistic-analytic",
        f=lambda z: A * expit(B * np.asarray(z, dtype=np.float64)),
        f1=lambda z: A * B * expit(B * z) * expit(-B * np.asarray(z, dtype=np.float64)),
        interval=interval,
        radius0=math.pi / B,
        K_max=K_max,
        series_at0=lambda k: float(deriv(k, 0.0)),
        deriv=deriv,
        dk_bound_fn=dk_bound,
        uniform_radius_fn=lambda I: math.pi / B,
        geom_disc0_fn=lambda rho: geom_interval(None, rho),
        geom_interval_fn=geom_interval,
        slope_exact_fn=slope_exact,
        degree=None,
        complex_modulus_fn=complex_modulus,
        spec_extra={"scale": A, "rate": B},
    )


def series_link(f, f1, derivs_at0, interval, radius, name="series") -> AnalyticLink:
    """User-supplied link from callables plus finite series data at 0.

    ``derivs_at0[k]`` is f^(k)(0) (index 0 = f(0)).  Derivative bounds use
    the Cauchy estimate from the declared disc ``radius`` about 0 with the
    declared modulus ``sup`` -- here approximated by the largest available
    coefficient-based bound; orders beyond the data raise.
    """
    derivs_at0 = np.asarray(derivs_at0, dtype=np.float64)
    interval = check_interval(interval)
    K_avail = derivs_at0.size - 1

    def series_at0(k):
        if k > K_avail:
            raise SeriesTruncationError(
                f"{name}: series data exhausted at order {k} (K_max={K_avail})"
            )
        return float(derivs_at0[k])

    return AnalyticLink(
        name=name,
        f=f,
        f1=f1,
        interval=interval,
        radius0=float(radius),
        K_max=K_avail,
        series_at0=series_at0,
        deriv=None,
        dk_bound_fn=None,
        uniform_radius_fn=None,
        slope_exact_fn=None,
    )


# ---------------------------------------------------------------------------
# operations on analytic links


def slope_lower_bound(link: AnalyticLink, interval=None) -> float:
    """Certified lower bound on the minimal difference quotient of f over I.

    Exact for built-ins (closed-form or polynomial-root minimization of
    |f'|).  The generic fallback takes the minimum of adjacent grid
    difference quotients minus a curvature slack 4*h*d_2 and returns 0
    whenever one-signedness cannot be certified.
    """
    I = check_interval(interval if interval is not None else link.interval)
    if link.slope_exact_fn is not None:
        return max(0.0, float(link.slope_exact_fn(I)))
    lo, hi = I
    if not (math.isfinite(lo) and math.isfinite(hi)) or hi <= lo:
        raise ValueError("grid slope bound needs a finite interval of positive length")
    xs = np.linspace(lo, hi, GRID_POINTS)
    fs = np.asarray(link.f(xs), dtype=np.float64)
    q = np.diff(fs) / np.diff(xs)
    if q.min() < 0.0 < q.max():
        return 0.0
    h = (hi - lo) / (GRID_POINTS - 1)
    if link.dk_bound_fn is None:
        return 0.0  # no curvature data: cannot certify between grid nodes
    slack = 4.0 * h * float(link.dk_bound_fn(2, I))
    return max(0.0, float(np.min(np.abs(q))) - slack)


def dk_bounds(link: AnalyticLink, ks, interval=None) -> np.ndarray:
    """Certified upper bounds on d_k = sup_I |f^(k)|/k! for each k in ks."""
    I = check_interval(interval if interval is not None else link.interval)
    if link.dk_bound_fn is None:
        raise SeriesTruncationError(
            f"{link.name}: no derivative-bound data (K_max={link.K_max})"
        )
    return np.array([float(link.dk_bound_fn(int(k), I)) for k in ks], dtype=np.float64)


# ---------------------------------------------------------------------------
# JSON link specification

EXP_FAMILY_KINDS = ("logistic", "gaussian", "poisson")
ANALYTIC_KINDS = ("identity", "exp", "poly", "logistic-analytic")


def link_from_spec(spec):
    """Build a link from its JSON spec.

    Exponential-family kinds: logistic | gaussian | poisson (optional
    "interval" caps the validity domain).  Analytic kinds: identity | exp |
    poly (with "coeffs") | logistic-analytic (with "scale", "rate");
    "interval" sets the default estimation interval I.
    """
    if isinstance(spec, (ExpFamilyLink, AnalyticLink)):
        return spec
    if isinstance(spec, str):
        spec = {"kind": spec}
    kind = spec.get("kind")
    interval = spec.get("interval")
    if kind == "logistic":
        return logistic_link()
    if kind == "gaussian":
        return gaussian_link()
    if kind == "poisson":
        return poisson_link(interval if interval is not None else (-math.inf, math.inf))
    if kind == "identity":
        return identity_link(interval if interval is not None else (-math.inf, math.inf))
    if kind == "exp":
        return exp_link(interval if interval is not None else (-1.0, 1.0))
    if kind == "poly":
        if "coeffs" not in spec:
            raise ValueError('poly link spec needs "coeffs"')
        return poly_link(spec["coeffs"], interval if interval is not None else (-1.0, 1.0))
    if kind == "logistic-analytic":
        return logistic_analytic_link(
            scale=spec.get("scale", 1.0),
            rate=spec.get("rate", 1.0),
            interval=interval if interval is not None else (-1.0, 1.0),
        )
    raise ValueError(f"unknown link kind {kind!r}")
