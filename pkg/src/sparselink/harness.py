"""Monte Carlo experiment engine: data generation, coverage, scaling, oracles.

Experiments are driven by a single config (JSON or TOML).  All randomness
derives from one 64-bit seed through counter-based Philox streams: the
design uses spawn key (0,), replicate k uses spawn key (1, k), so results
are reproducible regardless of thread count and replicate order.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from . import io as sio
from .certificates import (
    BoundCertificate,
    CertFlags,
    CertificateError,
    InfeasibleCertificateError,
    NoiseSpec,
    c1_analytic_bounded,
    c1_analytic_general,
    c1_exp_family,
    c2_from_coherence,
    c3_curvature,
    certify_basic,
    certify_coherence,
    AnalyticC1Params,
    select_tau,
)
from .design import DesignMatrix, DomainSpec, coherence_stats, domain_contains, domain_radius_upper
from .estimators import (
    EstimationProblem,
    FitOptions,
    fit,
    make_inequality_context,
    check_basic_inequality,
    objective,
)
from .links import AnalyticLink, ExpFamilyLink, link_from_spec

__all__ = [
    "ExperimentConfig",
    "CoverageReport",
    "ReplicateRecord",
    "ScalingReport",
    "generate_design",
    "generate_truth",
    "generate_noise",
    "draw_observations",
    "build_certificate",
    "run_coverage",
    "run_scaling",
    "brute_force_fit",
    "load_config",
]

WITHIN_SLACK = 1e-12  # numerical slack when comparing error to the radius
DESIGN_KINDS = ("gaussian", "rademacher", "orthogonal", "custom-file")


def _rng(seed, *key):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class DesignConfig:
    kind: str = "rademacher"
    n: int = 100
    p: int = 20
    normalize: bool = True
    redraw: bool = False
    path: Optional[str] = None

    def __post_init__(self):
        if self.kind not in DESIGN_KINDS:
            raise ValueError(f"unknown design kind {self.kind!r}")
        if self.kind != "custom-file" and (self.n < 1 or self.p < 1):
            raise ValueError("design needs n >= 1 and p >= 1")


@dataclass(frozen=True)
class BetaConfig:
    s: int = 1
    magnitude: float = 1.0


@dataclass(frozen=True)
class CertificateConfig:
    proposition: str = "basic"  # "basic" (c2 route) | "coherence" (c3 + tau route)
    q: float = 0.05
    c0: Optional[float] = None  # default: noise c_eps
    tau: Optional[float] = None  # default: min(1, max feasible tau / 2)
    m: Optional[int] = None  # default: s + support_cap on the basic route
    c1_variant: Optional[str] = None  # exp-family | bounded-disc | general
    theta: float = 0.5
    r_c: Optional[float] = None
    r_c1: Optional[float] = None
    delta_D: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    design: DesignConfig
    beta: BetaConfig
    noise: NoiseSpec
    model: dict
    domain: DomainSpec
    certificate: CertificateConfig
    replicates: int = 100
    seed: int = 0
    threads: int = 1
    kind: Optional[str] = None  # mle | lse; default from the link family
    fit_tol: Optional[float] = None
    fit_max_iter: int = 50_000
    multi_start: int = 5
    outputs: dict = field(default_factory=dict)
    scaling: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d) -> "ExperimentConfig":
        dom = d.get("domain", {})
        fit_cfg = d.get("fit", {})
        return cls(
            design=DesignConfig(**d.get("design", {})),
            beta=BetaConfig(**d.get("beta", {})),
            noise=NoiseSpec.from_dict(d.get("noise", {"kind": "rademacher", "sigma": 0.5})),
            model=dict(d.get("model", {"kind": "identity"})),
            domain=DomainSpec(
                interval=tuple(dom.get("interval", (-math.inf, math.inf))),
                weighted_l1_cap=dom.get("weighted_l1_cap"),
                support_cap=dom.get("support_cap"),
            ),
            certificate=CertificateConfig(**d.get("certificate", {})),
            replicates=int(d.get("replicates", 100)),
            seed=int(d.get("seed", 0)),
            threads=int(d.get("threads", 1)),
            kind=d.get("kind") or fit_cfg.get("kind"),
            fit_tol=fit_cfg.get("tol"),
            fit_max_iter=int(fit_cfg.get("max_iter", 50_000)),
            multi_start=int(fit_cfg.get("multi_start", 5)),
            outputs=dict(d.get("outputs", {})),
            scaling=dict(d.get("scaling", {})),
        )

    def link(self):
        return link_from_spec(self.model)

    def problem_kind(self) -> str:
        if self.kind is not None:
            return self.kind
        return "mle" if isinstance(self.link(), ExpFamilyLink) else "lse"


def load_config(path) -> ExperimentConfig:
    return ExperimentConfig.from_dict(load_config_dict(path))


def load_config_dict(path) -> dict:
    path = Path(path)
    text = path.read_bytes()
    if path.suffix.lower() == ".toml":
        try:
            import tomllib  # Python >= 3.11
        except ModuleNotFoundError:
            import tomli as tomllib
        return tomllib.loads(text.decode("utf-8"))
    import json

    return json.loads(text.decode("utf-8"))


# ---------------------------------------------------------------------------
# synthetic data


def generate_design(kind, n, p, seed_or_rng, normalize=True, path=None) -> DesignMatrix:
    """Random design with columns scaled to ||V_j||_2 = sqrt(n).

    Kinds: gaussian | rademacher | orthogonal (orthonormalized gaussian,
    needs n >= p) | custom-file.
    """
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else _rng(seed_or_rng, 0)
    if kind == "custom-file":
        A = sio.load_matrix(path)
    elif kind == "gaussian":
        A = rng.standard_normal((n, p))
    elif kind == "rademacher":
        A = 2.0 * rng.integers(0, 2, size=(n, p)) - 1.0
    elif kind == "orthogonal":
        if n < p:
            raise ValueError(f"orthogonal design needs n >= p, got n={n}, p={p}")
        Q, _ = np.linalg.qr(rng.standard_normal((n, p)))
        A = Q * math.sqrt(n)
    else:
        raise ValueError(f"unknown design kind {kind!r}")
    if normalize:
        norms = np.linalg.norm(A, axis=0)
        if np.any(norms == 0):
            raise ValueError("zero column in generated design")
        A = A * (math.sqrt(A.shape[0]) / norms)
    return DesignMatrix(A)


def generate_truth(p, s, magnitude, seed_or_rng) -> np.ndarray:
    """s-sparse vector with +/-magnitude entries at uniform positions."""
    if s > p:
        raise ValueError(f"s={s} exceeds p={p}")
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else _rng(seed_or_rng, 1)
    beta = np.zeros(p)
    if s == 0:
        return beta
    idx = rng.choice(p, size=s, replace=False)
    signs = 2.0 * rng.integers(0, 2, size=s) - 1.0
    beta[idx] = signs * magnitude
    return beta


def generate_noise(spec: NoiseSpec, n, seed_or_rng) -> np.ndarray:
    """Additive noise draw; every kind is bounded by sigma, so the declared
    (sigma, c_eps = 2) tail condition holds by Hoeffding."""
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else _rng(seed_or_rng, 2)
    if spec.kind == "rademacher":
        return spec.sigma * (2.0 * rng.integers(0, 2, size=n) - 1.0)
    if spec.kind == "uniform":
        return rng.uniform(-spec.sigma, spec.sigma, size=n)
    if spec.kind == "truncated-gaussian":
        out = rng.standard_normal(n)
        while True:
            bad = np.abs(out) > 3.0
            if not bad.any():
                break
            out[bad] = rng.standard_normal(int(bad.sum()))
        return out * (spec.sigma / 3.0)
    if spec.kind == "logistic-bernoulli-residual":
        raise ValueError(
            "logistic Bernoulli residuals are drawn jointly with y; use draw_observations"
        )
    raise ValueError(f"noise kind {spec.kind!r} has no generator")


def draw_observations(X: DesignMatrix, beta, link, noise: NoiseSpec, kind, rng):
    """(y, eps) for one replicate.

    Logistic Bernoulli draws y_i ~ Bernoulli(Lambda'(x_i'beta)) with
    sigma = 1/2; other kinds add bounded noise to the model mean.
    """
    z = X.entries @ beta
    if noise.kind == "logistic-bernoulli-residual":
        if kind != "mle" or link.name != "logistic":
            raise ValueError("logistic-bernoulli-residual noise needs the logistic MLE model")
        mu = link.lam1(z)
        y = (rng.random(X.n) < mu).astype(np.float64)
        return y, y - mu
    eps = generate_noise(noise, X.n, rng)
    mean = link.lam1(z) if kind == "mle" else link.f(z)
    return mean + eps, eps


# ---------------------------------------------------------------------------
# certificate assembly


def build_certificate(X, link, noise, domain, s, cfg: CertificateConfig, kind) -> BoundCertificate:
    """Assemble the certificate described by the config for one instance.

    Returns an infeasible certificate (no kappa_r) rather than raising when
    a feasibility condition fails; callers abort on ``.feasible == False``.
    """
    q = cfg.q
    c0 = cfg.c0 if cfg.c0 is not None else noise.c_eps
    if noise.sigma == 0.0:
        return BoundCertificate(
            c0=c0, q=q, c1=0.0, s=s, n=X.n, c_r=0.0, kappa_r=0.0,
            flags=CertFlags(basic_feasible=True),
            provenance="noiseless: all constants vanish",
        )
    variant = cfg.c1_variant or ("exp-family" if kind == "mle" else "bounded-disc")
    details = {}
    if variant == "exp-family":
        c1 = c1_exp_family(noise, X, q)
    elif variant == "bounded-disc":
        params = AnalyticC1Params(q=q, variant="bounded-disc", theta=cfg.theta, r_c=cfg.r_c)
        c1, details = c1_analytic_bounded(link, X, params, noise, details=True)
    elif variant == "general":
        delta = cfg.delta_D
        if delta is None:
            delta = domain_radius_upper(domain, X)
        r_c1 = cfg.r_c1
        if r_c1 is None:
            raise CertificateError("general c1 variant needs r_c1")
        params = AnalyticC1Params(
            q=q, variant="general", r_c1=r_c1, delta_D=delta
        )
        c1, details = c1_analytic_general(link, X, params, noise, details=True)
    else:
        raise ValueError(f"unknown c1 variant {variant!r}")

    stats = coherence_stats(X)
    c3 = c3_curvature(link, domain.interval)
    prov_c1 = f"c1={variant}"

    if cfg.proposition == "basic":
        m = cfg.m
        if m is None:
            if domain.support_cap is None:
                raise CertificateError(
                    "basic certificate needs m (cap on |spt(v - beta)|): set "
                    "domain.support_cap or certificate.m"
                )
            m = int(domain.support_cap) + int(s)
        c2 = c2_from_coherence(c3, stats, m)
        if c2 is None:
            return BoundCertificate(
                c0=c0, q=q, c1=c1, s=s, n=X.n, c3=c3,
                flags=CertFlags(basic_feasible=False),
                provenance=f"basic+{prov_c1}: gamma({m}) <= 0",
                extras={"mu": stats.mu, "a": stats.a, "b": stats.b, "m": m, **details},
            )
        cert = certify_basic(c1, c2, X.n, s, q, c0=c0, provenance=f"basic+{prov_c1}")
        return replace_extras(cert, {"mu": stats.mu, "a": stats.a, "b": stats.b, "m": m,
                                     "c3": c3, **details})
    if cfg.proposition == "coherence":
        tau = cfg.tau if cfg.tau is not None else select_tau(stats, s)
        if tau is None:
            return BoundCertificate(
                c0=c0, q=q, c1=c1, s=s, n=X.n, c3=c3,
                flags=CertFlags(basic_feasible=False, eq_t_holds=False),
                provenance=f"coherence+{prov_c1}: no feasible tau",
                extras={"mu": stats.mu, "a": stats.a, "b": stats.b, **details},
            )
        cert = certify_coherence(
            c1, c3, stats, s, tau, X.n, q, c0=c0, provenance=f"coherence+{prov_c1}"
        )
        return replace_extras(cert, details)
    raise ValueError(f"unknown proposition {cfg.proposition!r}")


def replace_extras(cert: BoundCertificate, extra: dict) -> BoundCertificate:
    merged = dict(cert.extras)
    merged.update(extra)
    return BoundCertificate(
        c0=cert.c0, q=cert.q, c1=cert.c1, s=cert.s, n=cert.n, flags=cert.flags,
        provenance=cert.provenance, c2=cert.c2, c3=cert.c3, tau=cert.tau,
        c_r=cert.c_r, kappa_r=cert.kappa_r, extras=merged,
    )


# ---------------------------------------------------------------------------
# coverage experiment


@dataclass
class ReplicateRecord:
    replicate: int
    error_l2: float
    radius: float
    within: bool
    ineq_holds: bool
    objective_vs_truth: bool
    objective_hat: float
    objective_truth: float
    converged: bool
    iterations: int

    ROW_FIELDS = (
        "replicate", "error_l2", "radius", "within", "ineq_holds",
        "objective_vs_truth", "objective_hat", "objective_truth",
        "converged", "iterations",
    )

    def row(self):
        return [getattr(self, f) for f in self.ROW_FIELDS]

    def as_dict(self):
        return {f: getattr(self, f) for f in self.ROW_FIELDS}


@dataclass
class CoverageReport:
    records: list
    coverage: float
    target: float
    ci_low: float
    ci_high: float
    pvalue: float
    passes: bool
    certificate: BoundCertificate
    config_seed: int
    replicates: int

    def as_dict(self):
        return {
            "coverage": self.coverage,
            "target": self.target,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "pvalue": self.pvalue,
            "passes": self.passes,
            "replicates": self.replicates,
            "seed": self.config_seed,
            "certificate": self.certificate.as_dict(),
            "records": [r.as_dict() for r in self.records],
        }

    def write_csv(self, path):
        sio.write_csv(path, ReplicateRecord.ROW_FIELDS, [r.row() for r in self.records])

    def write_json(self, path):
        Path(path).write_text(sio.dumps_json(self.as_dict()))


def _make_design(config: ExperimentConfig, rng) -> DesignMatrix:
    d = config.design
    return generate_design(d.kind, d.n, d.p, rng, normalize=d.normalize, path=d.path)


def run_replicate(config: ExperimentConfig, X, cert, k: int):
    """One replicate: draw truth and data, fit with the certified c_r, record."""
    link = config.link()
    kind = config.problem_kind()
    rng = _rng(config.seed, 1, k)
    if config.design.redraw:
        X = _make_design(config, rng)
        cert = build_certificate(
            X, link, config.noise, config.domain, config.beta.s, config.certificate, kind
        )
        if not cert.feasible:
            raise InfeasibleCertificateError(cert)
    beta = generate_truth(X.p, config.beta.s, config.beta.magnitude, rng)
    lo, hi = config.domain.interval
    z = X.entries @ beta
    if np.any(z < lo) or np.any(z > hi):
        raise ValueError(
            f"replicate {k}: magnitude {config.beta.magnitude} pushes X beta outside "
            f"the interval [{lo}, {hi}]"
        )
    y, eps = draw_observations(X, beta, link, config.noise, kind, rng)
    prob = EstimationProblem(
        X=X, y=y, link=link, domain=config.domain, c_r=cert.c_r, kind=kind
    )
    res = fit(
        prob,
        FitOptions(
            tol=config.fit_tol,
            max_iter=config.fit_max_iter,
            multi_start=config.multi_start,
            seed=k,
        ),
    )
    err = float(np.linalg.norm(res.beta_hat - beta))
    radius = cert.radius()
    obj_hat = objective(prob, res.beta_hat)
    obj_true = objective(prob, beta)
    ineq = check_basic_inequality(make_inequality_context(prob, beta, eps), prob, res.beta_hat)
    rec = ReplicateRecord(
        replicate=k,
        error_l2=err,
        radius=radius,
        within=bool(err <= radius * (1 + WITHIN_SLACK) + WITHIN_SLACK),
        ineq_holds=ineq.holds,
        objective_vs_truth=bool(obj_hat <= obj_true + 1e-9 * (1.0 + abs(obj_true))),
        objective_hat=obj_hat,
        objective_truth=obj_true,
        converged=res.converged,
        iterations=res.iterations,
    )
    return rec, cert


def run_coverage(config: ExperimentConfig) -> CoverageReport:
    """Coverage experiment: empirical rate of {error <= certified radius}.

    Aborts with ``InfeasibleCertificateError`` when the certificate's
    feasibility condition fails.  The aggregate is tested one-sided against
    the target 1 - c0*q at level 0.01: the bound is an inequality, so only
    genuine undershoots count as failures.
    """
    link = config.link()
    kind = config.problem_kind()
    X = _make_design(config, _rng(config.seed, 0))
    cert = build_certificate(
        X, link, config.noise, config.domain, config.beta.s, config.certificate, kind
    )
    if not cert.feasible:
        raise InfeasibleCertificateError(cert)

    ks = list(range(config.replicates))
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            out = list(pool.map(lambda k: run_replicate(config, X, cert, k), ks))
    else:
        out = [run_replicate(config, X, cert, k) for k in ks]
    records = [rec for rec, _ in out]
    last_cert = out[-1][1] if out else cert

    n = len(records)
    hits = sum(r.within for r in records)
    coverage = hits / n if n else float("nan")
    target = cert.confidence
    ci_low, ci_high = _wilson_ci(hits, n)
    test = binomtest(hits, n, p=target, alternative="less")
    passes = bool(test.pvalue >= 0.01)
    return CoverageReport(
        records=records,
        coverage=coverage,
        target=target,
        ci_low=ci_low,
        ci_high=ci_high,
        pvalue=float(test.pvalue),
        passes=passes,
        certificate=last_cert,
        config_seed=config.seed,
        replicates=n,
    )


def _wilson_ci(hits, n, z=1.96):
    if n == 0:
        return float("nan"), float("nan")
    phat = hits / n
    denom = 1 + z**2 / n
    center = (phat + z**2 / (2 * n)) / denom
    half = z * math.sqrt(phat * (1 - phat) / n + z**2 / (4 * n**2)) / denom
    return max(0.0, center - half), min(1.0, center + half)


# ---------------------------------------------------------------------------
# scaling experiment


@dataclass
class ScalingReport:
    n_grid: list
    medians: list
    slope: Optional[float]
    flat_zero: bool
    ratio_n: Optional[int] = None
    ratio_s: Optional[float] = None  # median error ratio when s doubles
    medians_2s: Optional[float] = None

    def as_dict(self):
        return {
            "n_grid": self.n_grid,
            "medians": self.medians,
            "slope": self.slope,
            "flat_zero": self.flat_zero,
            "ratio_n": self.ratio_n,
            "ratio_s": self.ratio_s,
            "median_2s_at_ratio_n": self.medians_2s,
        }

    def write_json(self, path):
        Path(path).write_text(sio.dumps_json(self.as_dict()))


def run_scaling(config: ExperimentConfig, n_grid=None) -> ScalingReport:
    """Median error versus n on a grid, with the doubled-sparsity ratio.

    Reports the least-squares slope of log(median error) against log(n);
    the error radius scales like sqrt(s/n), so the slope should sit near
    -1/2 and doubling s should scale the median by about sqrt(2).
    """
    if n_grid is None:
        n_grid = config.scaling.get("n_grid")
    if n_grid is None or len(n_grid) < 4:
        raise ValueError("scaling needs an increasing n grid with >= 4 points")
    n_grid = [int(n) for n in n_grid]
    if any(b <= a for a, b in zip(n_grid[:-1], n_grid[1:])):
        raise ValueError("n grid must be strictly increasing")
    reps = int(config.scaling.get("replicates", 50))

    def median_error(n, s, seed_shift):
        cfg = replace(
            config,
            design=replace(config.design, n=n),
            beta=replace(config.beta, s=s),
            replicates=reps,
            seed=config.seed + seed_shift,
        )
        rep = run_coverage(cfg)
        return float(np.median([r.error_l2 for r in rep.records]))

    medians = [median_error(n, config.beta.s, 0) for n in n_grid]
    flat_zero = all(m <= 1e-12 for m in medians)
    slope = None
    if not flat_zero and all(m > 0 for m in medians):
        slope = float(np.polyfit(np.log(n_grid), np.log(medians), 1)[0])

    ratio_n = int(config.scaling.get("ratio_n", n_grid[-1]))
    ratio_s = None
    med2 = None
    if config.scaling.get("ratio_s_check", True) and 2 * config.beta.s <= config.design.p:
        base = median_error(ratio_n, config.beta.s, 0)
        med2 = median_error(ratio_n, 2 * config.beta.s, 1)
        if base > 0:
            ratio_s = med2 / base
    return ScalingReport(
        n_grid=n_grid,
        medians=medians,
        slope=slope,
        flat_zero=flat_zero,
        ratio_n=ratio_n,
        ratio_s=ratio_s,
        medians_2s=med2,
    )


# ---------------------------------------------------------------------------
# brute-force oracle


def brute_force_fit(prob: EstimationProblem, grid_spec) -> np.ndarray:
    """Exhaustive objective minimization over a grid intersected with D.

    ``grid_spec`` maps each coordinate to (lo, hi, spacing); scalars apply to
    all coordinates: {"lo": -2, "hi": 2, "spacing": 1e-3}.  Enumeration is
    lexicographic and ties keep the first (lexicographically smallest) point.
    Refusing grids above 1e8 points keeps the oracle honest about cost.
    """
    p = prob.X.p
    if p > 3:
        raise ValueError(f"brute force supports p <= 3, got p={p}")
    lo = np.broadcast_to(np.asarray(grid_spec["lo"], dtype=np.float64), (p,))
    hi = np.broadcast_to(np.asarray(grid_spec["hi"], dtype=np.float64), (p,))
    spacing = float(grid_spec["spacing"])
    axes = []
    for j in range(p):
        count = int(math.floor((hi[j] - lo[j]) / spacing + 1e-9)) + 1
        axes.append(lo[j] + spacing * np.arange(count))
    sizes = [a.size for a in axes]
    total = int(np.prod(sizes))
    if total > 10**8:
        raise ValueError(f"grid too large: {total} > 1e8 points")

    A = prob.X.entries
    y = prob.y
    dlo, dhi = prob.domain.interval
    best_val, best_v = math.inf, None
    chunk = 1 << 18
    for start in range(0, total, chunk):
        idx = np.arange(start, min(start + chunk, total))
        V = np.empty((idx.size, p))
        rem = idx
        for j in range(p - 1, -1, -1):
            V[:, j] = axes[j][rem % sizes[j]]
            rem = rem // sizes[j]
        Z = V @ A.T
        if prob.kind == "mle":
            smooth = np.sum(prob.link.lam(Z), axis=1) - Z @ y
        else:
            smooth = np.sum((y[None, :] - prob.link.f(Z)) ** 2, axis=1)
        vals = smooth + prob.c_r * np.sum(np.abs(V), axis=1)
        feas = np.all((Z >= dlo - 1e-12) & (Z <= dhi + 1e-12), axis=1)
        if prob.domain.weighted_l1_cap is not None:
            w = np.abs(V) @ prob.X.col_linf
            feas &= w <= prob.domain.weighted_l1_cap + 1e-12
        if prob.domain.support_cap is not None:
            feas &= np.count_nonzero(V, axis=1) <= prob.domain.support_cap
        vals = np.where(feas, vals, math.inf)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val = float(vals[i])
            best_v = V[i].copy()
    if best_v is None or not math.isfinite(best_val):
        raise ValueError("no feasible grid point")
    return best_v
