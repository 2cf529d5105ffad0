"""Objectives and l1-regularized solvers over constrained search domains.

The estimation problem is

    minimize_v  L(Xv) + c_r ||v||_1    over v in D,

where L is either the negative exponential-family log-likelihood
(sum_i Lambda(z_i) - y'z) or the squared residual ||y - f(z)||^2, and D
couples all coordinates through Xv in I^n plus optional weighted-l1 and
support caps.

The solver splits on an auxiliary variable z = Xv: the z-update is a
per-row 1-D proximal step of the row loss restricted to I (closed form,
safeguarded Newton/bisection, or grid+bisection depending on the loss), and
the v-update is an l1-penalized quadratic solved by cyclic coordinate
descent.  This keeps both the interval constraint and the l1 penalty exact
rather than penalized.  Support caps are enforced by hard-thresholding with
a final re-fit on the kept support; that pass is heuristic and flagged.

``objective_trace`` records the running best penalized objective over
iterates that are feasible within the constraint tolerance, so it is
nonincreasing by construction and its last entry is the returned objective.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.optimize import linprog, minimize

from .design import DesignMatrix, DomainReport, DomainSpec, domain_contains, weighted_l1_norm
from .links import AnalyticLink, ExpFamilyLink
from .validation import as_vector

__all__ = [
    "EstimationProblem",
    "FitOptions",
    "FitResult",
    "InequalityContext",
    "InequalityReport",
    "InfeasibleDomainError",
    "objective",
    "fit",
    "optimality_residual",
    "make_inequality_context",
    "check_basic_inequality",
    "project_weighted_l1",
]

CONSTRAINT_TOL = 1e-8  # feasibility slack for returned estimates


class InfeasibleDomainError(ValueError):
    """The search domain is provably empty."""


@dataclass(frozen=True)
class EstimationProblem:
    """One estimation instance: design, observations, link, domain, penalty."""

    X: DesignMatrix
    y: np.ndarray
    link: object
    domain: DomainSpec
    c_r: float
    kind: str  # "mle" | "lse"

    def __post_init__(self):
        object.__setattr__(self, "y", as_vector(self.y, self.X.n, "y"))
        if self.kind not in ("mle", "lse"):
            raise ValueError(f"kind must be 'mle' or 'lse', got {self.kind!r}")
        if self.kind == "mle" and not isinstance(self.link, ExpFamilyLink):
            raise TypeError("mle problems need an ExpFamilyLink")
        if self.kind == "lse" and not isinstance(self.link, AnalyticLink):
            raise TypeError("lse problems need an AnalyticLink")
        if self.c_r < 0:
            raise ValueError(f"c_r must be >= 0, got {self.c_r}")

    @property
    def convex(self) -> bool:
        # Built-in cumulants are convex; squared error is convex iff f is affine.
        return self.kind == "mle" or self.link.is_affine


# ---------------------------------------------------------------------------
# smooth part


def _smooth_value(prob, z) -> float:
    if prob.kind == "mle":
        _check_mle_domain(prob, z)
        return float(np.sum(prob.link.lam(z)) - prob.y @ z)
    return float(np.sum((prob.y - prob.link.f(z)) ** 2))


def _smooth_grad_z(prob, z) -> np.ndarray:
    if prob.kind == "mle":
        _check_mle_domain(prob, z)
        return prob.link.lam1(z) - prob.y
    fz = prob.link.f(z)
    return 2.0 * prob.link.f1(z) * (fz - prob.y)


def _check_mle_domain(prob, z):
    lo, hi = prob.link.valid_interval
    if np.any(z < lo) or np.any(z > hi):
        from .links import LinkDomainError

        raise LinkDomainError(
            f"cumulant {prob.link.name} undefined at some rows of Xv "
            f"(valid interval {prob.link.valid_interval})"
        )


def objective(prob: EstimationProblem, v) -> float:
    """Penalized objective L(Xv) + c_r ||v||_1.

    Evaluates the smooth part even for v outside the search domain whenever
    the link is defined there; domain feasibility is reported separately by
    ``domain_contains``.
    """
    v = as_vector(v, prob.X.p)
    z = prob.X.entries @ v
    return _smooth_value(prob, z) + prob.c_r * float(np.abs(v).sum())


# ---------------------------------------------------------------------------
# projections


def project_weighted_l1(v, cap: float, X) -> np.ndarray:
    """Euclidean projection onto {u : sum_j w_j |u_j| <= cap}, w_j = ||V_j||_inf.

    Exact weighted soft-threshold with bisection on the multiplier: the
    weighted norm of the thresholded vector is continuous, piecewise linear,
    and decreasing in the multiplier, so bisection converges to the root.
    ``X`` may be a DesignMatrix or an explicit positive weight vector.
    """
    if cap <= 0:
        raise ValueError(f"cap must be positive, got {cap}")
    w = X.col_linf if isinstance(X, DesignMatrix) else np.asarray(X, dtype=np.float64)
    v = as_vector(v, w.shape[0])
    if np.any(w <= 0):
        raise ValueError("weights must be positive")
    if float(np.abs(v) @ w) <= cap:
        return v.copy()
    lo, hi = 0.0, float(np.max(np.abs(v) / w)) + 1.0
    for _ in range(200):
        nu = 0.5 * (lo + hi)
        norm = float(np.maximum(np.abs(v) - nu * w, 0.0) @ w)
        if norm > cap:
            lo = nu
        else:
            hi = nu
    return np.sign(v) * np.maximum(np.abs(v) - hi * w, 0.0)


def _hard_threshold(v, h):
    """Keep the h largest-magnitude coordinates (ties: lowest index)."""
    order = np.lexsort((np.arange(v.shape[0]), -np.abs(v)))
    out = np.zeros_like(v)
    keep = order[:h]
    out[keep] = v[keep]
    return out


# ---------------------------------------------------------------------------
# coordinate descent for the l1-penalized quadratic


def _cd_lasso(A, cols, col_sq, t, lam, v0, weights=None, nu=0.0, tol=1e-10, max_sweeps=2000):
    """Cyclic coordinate descent for  min_v ||t - A v||^2 + sum_j th_j |v_j|.

    th_j = lam + nu * weights_j.  Ties at the threshold set the coordinate
    to 0, matching the subdifferential convention.  Stops on the KKT
    residual of the subproblem.
    """
    p = len(cols)
    v = v0.copy()
    th = np.full(p, 0.5 * lam) if weights is None else 0.5 * (lam + nu * weights)
    r = t - A @ v
    kkt = math.inf
    for sweep in range(1, max_sweeps + 1):
        for j in range(p):
            old = v[j]
            zj = cols[j] @ r + col_sq[j] * old
            aj = abs(zj) - th[j]
            new = 0.0 if aj <= 0 else math.copysign(aj, zj) / col_sq[j]
            if new != old:
                r -= (new - old) * cols[j]
                v[j] = new
        kkt = _kkt_residual_lasso(v, A.T @ r, th)
        if kkt <= tol:
            break
    return v


def _kkt_residual_lasso(v, g, th):
    # stationarity of ||t - Av||^2 + 2 sum th_j |v_j|:  g_j = th_j sign(v_j)
    on = v != 0
    out = 0.0
    if np.any(on):
        out = max(out, 2.0 * float(np.max(np.abs(g[on] - th[on] * np.sign(v[on])))))
    if np.any(~on):
        out = max(out, 2.0 * float(np.max(np.maximum(np.abs(g[~on]) - th[~on], 0.0))))
    return out


def _v_update(A, cols, col_sq, t, lam, v0, cap, weights, tol):
    """v-update: l1-penalized quadratic; the weighted-l1 cap, when active,
    is enforced exactly through bisection on its Lagrange multiplier."""
    v = _cd_lasso(A, cols, col_sq, t, lam, v0, tol=tol)
    if cap is None or float(np.abs(v) @ weights) <= cap * (1 + 1e-12):
        return v
    lo, hi = 0.0, 1.0
    v_hi = _cd_lasso(A, cols, col_sq, t, lam, v, weights=weights, nu=hi, tol=tol)
    while float(np.abs(v_hi) @ weights) > cap and hi < 1e16:
        hi *= 4.0
        v_hi = _cd_lasso(A, cols, col_sq, t, lam, v_hi, weights=weights, nu=hi, tol=tol)
    best = v_hi
    for _ in range(60):
        nu = 0.5 * (lo + hi)
        v_nu = _cd_lasso(A, cols, col_sq, t, lam, best, weights=weights, nu=nu, tol=tol)
        if float(np.abs(v_nu) @ weights) > cap:
            lo = nu
        else:
            hi = nu
            best = v_nu
        if hi - lo <= 1e-12 * max(1.0, hi):
            break
    return best


# ---------------------------------------------------------------------------
# per-row proximal steps for the z-update


def _make_prox_rows(prob):
    lo, hi = prob.domain.interval
    y = prob.y
    if prob.kind == "mle":
        lam1 = prob.link.lam1
        vlo, vhi = prob.link.valid_interval
        zlo, zhi = max(lo, vlo), min(hi, vhi)

        def prox(w, rho):
            # root of lam1(z) - y + rho (z - w); slope >= rho brackets the root
            g0 = lam1(w) - y
            half = np.abs(g0) / rho + 1e-12
            a, b = w - half, w + half
            for _ in range(80):
                mid = 0.5 * (a + b)
                gm = lam1(mid) - y + rho * (mid - w)
                neg = gm < 0
                a = np.where(neg, mid, a)
                b = np.where(neg, b, mid)
            return np.clip(0.5 * (a + b), zlo, zhi)

        return prox

    link = prob.link
    if link.is_affine:
        # f(z) = a0 + a1 z: closed-form blend of the loss and the quadratic
        a0 = float(link.f(0.0))
        a1 = float(link.f1(0.0))

        def prox(w, rho):
            z = (2.0 * a1 * (y - a0) + rho * w) / (2.0 * a1 * a1 + rho)
            return np.clip(z, lo, hi)

        return prox

    f, f1 = link.f, link.f1
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ValueError(
            "a non-affine analytic link needs a finite domain interval "
            "(the row loss is searched over [lo, hi])"
        )

    def prox(w, rho):
        # phi(z) = (y - f(z))^2 + rho/2 (z - w)^2 over [lo, hi]: the feasible
        # minimizer z* has phi(z*) <= phi(clip(w)), which bounds |z* - w|;
        # 65-point grid localization in the window, then bisection on phi'.
        def phi(z):
            return (y[:, None] - f(z)) ** 2 + 0.5 * rho * (z - w[:, None]) ** 2

        w_c = np.clip(w, lo, hi)
        phi_wc = (y - f(w_c)) ** 2 + 0.5 * rho * (w_c - w) ** 2
        span = np.sqrt(2.0 * phi_wc / rho) + 1e-12
        g_lo = np.maximum(w - span, lo)
        g_hi = np.minimum(w + span, hi)
        g_lo = np.minimum(g_lo, w_c)  # keep the window nonempty and feasible
        g_hi = np.maximum(g_hi, w_c)
        grid = g_lo[:, None] + (g_hi - g_lo)[:, None] * np.linspace(0.0, 1.0, 65)[None, :]
        vals = phi(grid)
        idx = np.argmin(vals, axis=1)
        rows = np.arange(w.shape[0])
        a = grid[rows, np.maximum(idx - 1, 0)]
        b = grid[rows, np.minimum(idx + 1, 64)]
        for _ in range(60):
            mid = 0.5 * (a + b)
            dm = -2.0 * f1(mid) * (y - f(mid)) + rho * (mid - w)
            neg = dm < 0
            a = np.where(neg, mid, a)
            b = np.where(neg, b, mid)
        z_ref = 0.5 * (a + b)
        cand = np.stack([z_ref, grid[rows, idx], g_lo, g_hi], axis=1)
        best = np.argmin(phi(cand), axis=1)
        return cand[rows, best]

    return prox


# ---------------------------------------------------------------------------
# fit results and options


@dataclass(frozen=True)
class FitOptions:
    """Solver controls.  ``tol`` defaults to 1e-8 (convex) or 1e-6."""

    tol: Optional[float] = None
    max_iter: int = 50_000
    multi_start: int = 5
    seed: int = 0
    rho0: Optional[float] = None
    warm_starts: tuple = ()

    def resolve_tol(self, convex: bool) -> float:
        return self.tol if self.tol is not None else (1e-8 if convex else 1e-6)


@dataclass
class FitResult:
    """Estimate plus solver diagnostics."""

    beta_hat: np.ndarray
    objective_value: float
    objective_trace: list
    optimality_residual: float
    domain_report: DomainReport
    iterations: int
    converged: bool
    solver: str
    n_starts: int = 1
    support_polished: bool = False
    seed: int = 0

    def as_dict(self):
        nz = np.flatnonzero(self.beta_hat)
        return {
            "beta_hat": [[int(j), float(self.beta_hat[j])] for j in nz],
            "p": int(self.beta_hat.shape[0]),
            "objective_value": self.objective_value,
            "objective_trace": [float(t) for t in self.objective_trace],
            "optimality_residual": self.optimality_residual,
            "domain_report": self.domain_report.as_dict(),
            "iterations": self.iterations,
            "converged": self.converged,
            "solver": self.solver,
            "n_starts": self.n_starts,
            "support_polished": self.support_polished,
            "seed": self.seed,
        }


class _BestTracker:
    """Running best penalized objective over domain-feasible candidates.

    When the domain caps supports, offered iterates are hard-thresholded
    first so that every traced value belongs to the true search domain.
    """

    def __init__(self, prob):
        self.prob = prob
        self.h = prob.domain.support_cap
        self.v = None
        self.obj = math.inf
        self.trace = []

    def offer(self, v):
        if self.h is not None and np.count_nonzero(v) > self.h:
            v = _hard_threshold(v, self.h)
        rep = domain_contains(v, self.prob.X, self.prob.domain, tol=CONSTRAINT_TOL)
        if not rep.inside:
            return False
        obj = objective(self.prob, v)
        if obj <= self.obj or self.v is None:
            # ties go to the later iterate, which is the more converged one
            self.obj = min(obj, self.obj)
            self.v = v.copy()
        self.trace.append(self.obj)
        return True


# ---------------------------------------------------------------------------
# solver core


def fit(prob: EstimationProblem, opts: Optional[FitOptions] = None) -> FitResult:
    """Solve the penalized problem over the search domain.

    Convex instances (MLE with convex cumulant; LSE with affine link) are
    solved to the stationarity tolerance from a single start; nonconvex
    analytic LSE returns the best-found point over multiple starts together
    with its projected-gradient residual.  The returned estimate never has a
    worse objective than 0 (when feasible) or any user-supplied warm start.
    """
    opts = opts or FitOptions()
    convex = prob.convex
    tol = opts.resolve_tol(convex)
    _check_domain_nonempty(prob)

    tracker = _BestTracker(prob)
    tracker.offer(np.zeros(prob.X.p))
    for ws in opts.warm_starts:
        tracker.offer(as_vector(ws, prob.X.p))

    lo, hi = prob.domain.interval
    rows_unconstrained = math.isinf(lo) and math.isinf(hi)
    direct = (
        prob.kind == "lse"
        and prob.link.is_affine
        and rows_unconstrained
        and prob.domain.weighted_l1_cap is None
    )

    total_iters = 0
    if direct:
        solver = "cd"
        v_final, total_iters, converged = _fit_lasso_direct(prob, tol, opts.max_iter, tracker)
    else:
        solver = "admm"
        converged = False
        starts = _build_starts(prob, opts, convex)
        v_final = starts[0]
        for v0 in starts:
            v_run, iters, conv = _admm_run(prob, v0, opts, tol, tracker)
            total_iters += iters
            converged = converged or conv
            v_final = v_run

    polished = False
    h = prob.domain.support_cap
    if h is not None:
        beta_polished, extra = _polish_support(prob, v_final, opts)
        total_iters += extra
        polished = True
        tracker.offer(beta_polished)

    beta = tracker.v if tracker.v is not None else v_final
    trace = list(tracker.trace)
    obj_val = trace[-1] if trace else objective(prob, beta)
    rep = domain_contains(beta, prob.X, prob.domain, tol=CONSTRAINT_TOL)
    resid = _restricted_residual(prob, beta) if polished else optimality_residual(prob, beta)
    return FitResult(
        beta_hat=beta,
        objective_value=obj_val,
        objective_trace=trace,
        optimality_residual=resid,
        domain_report=rep,
        iterations=total_iters,
        converged=converged,
        solver=solver,
        n_starts=1 if (convex or direct) else max(opts.multi_start, 1),
        support_polished=polished,
        seed=opts.seed,
    )


def replace_support_cap(domain: DomainSpec, cap) -> DomainSpec:
    return DomainSpec(
        interval=domain.interval, weighted_l1_cap=domain.weighted_l1_cap, support_cap=cap
    )


def _restricted_residual(prob, beta):
    """Stationarity of the problem restricted to the support of beta.

    Support-capped solves are only stationary on the kept support (the cap
    makes the full problem nonconvex), so the meaningful diagnostic is the
    refit subproblem's residual.
    """
    keep = np.flatnonzero(beta)
    relaxed_domain = replace_support_cap(prob.domain, None)
    if keep.size == 0:
        return optimality_residual(replace(prob, domain=relaxed_domain), beta)
    sub = EstimationProblem(
        X=DesignMatrix(prob.X.entries[:, keep]),
        y=prob.y,
        link=prob.link,
        domain=relaxed_domain,
        c_r=prob.c_r,
        kind=prob.kind,
    )
    return optimality_residual(sub, beta[keep])


def _check_domain_nonempty(prob):
    lo, hi = prob.domain.interval
    if lo <= 0.0 <= hi:
        return
    # 0 outside I: certify feasibility of {lo <= Xv <= hi} with a tiny LP
    n, p = prob.X.n, prob.X.p
    A = prob.X.entries
    ub, rhs = [], []
    if math.isfinite(hi):
        ub.append(A)
        rhs.append(np.full(n, hi))
    if math.isfinite(lo):
        ub.append(-A)
        rhs.append(np.full(n, -lo))
    res = linprog(
        c=np.zeros(p),
        A_ub=np.vstack(ub),
        b_ub=np.concatenate(rhs),
        bounds=[(None, None)] * p,
        method="highs",
    )
    if res.status == 2:
        raise InfeasibleDomainError("search domain is empty: no v satisfies Xv in I^n")


def _build_starts(prob, opts, convex):
    if convex:
        return [np.zeros(prob.X.p)]
    starts = [np.zeros(prob.X.p)]
    ridge = _ridge_start(prob)
    if ridge is not None:
        starts.append(ridge)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(opts.seed)))
    scale = 0.5 / max(float(prob.X.col_l2.max()) / math.sqrt(prob.X.n), 1e-12)
    while len(starts) < max(opts.multi_start, 1):
        starts.append(_shrink_into_interval(prob, scale * rng.standard_normal(prob.X.p)))
    return starts[: max(opts.multi_start, 1)]


def _ridge_start(prob):
    # linearize f at 0 to build a quadratic warm start
    X = prob.X.entries
    f0 = float(prob.link.f(0.0))
    s0 = float(prob.link.f1(0.0))
    if abs(s0) < 1e-8:
        return None
    t = (prob.y - f0) / s0
    alpha = 0.01 * float(np.sum(prob.X.col_l2**2)) / prob.X.p
    v = np.linalg.solve(X.T @ X + alpha * np.eye(prob.X.p), X.T @ t)
    return _shrink_into_interval(prob, v)


def _shrink_into_interval(prob, v):
    lo, hi = prob.domain.interval
    if not (lo <= 0.0 <= hi):
        return v  # cannot shrink toward an infeasible origin
    z = prob.X.entries @ v
    t = 1.0
    if math.isfinite(hi) and np.any(z > hi):
        t = min(t, float(np.min(np.where(z > hi, hi / z, np.inf))))
    if math.isfinite(lo) and np.any(z < lo):
        t = min(t, float(np.min(np.where(z < lo, lo / z, np.inf))))
    v = max(min(t, 1.0), 0.0) * 0.999 * v
    if prob.domain.weighted_l1_cap is not None:
        v = project_weighted_l1(v, prob.domain.weighted_l1_cap * 0.999, prob.X)
    return v


def _fit_lasso_direct(prob, tol, max_iter, tracker):
    """Direct coordinate descent when the domain places no row constraints.

    ||y - a0 - a1 X v||^2 + c_r ||v||_1 is the standard l1-penalized
    quadratic; each sweep is a descent, so candidates are offered per sweep.
    """
    X = prob.X.entries
    a0 = float(prob.link.f(0.0))
    a1 = float(prob.link.f1(0.0))
    A = a1 * X
    cols = [np.ascontiguousarray(A[:, j]) for j in range(prob.X.p)]
    col_sq = (a1 * prob.X.col_l2) ** 2
    t = prob.y - a0
    v = np.zeros(prob.X.p)
    r = t.copy()
    th = np.full(prob.X.p, 0.5 * prob.c_r)
    sweeps_cap = max(1, min(max_iter, 100_000))
    for sweep in range(1, sweeps_cap + 1):
        for j in range(prob.X.p):
            old = v[j]
            zj = cols[j] @ r + col_sq[j] * old
            aj = abs(zj) - th[j]
            new = 0.0 if aj <= 0 else math.copysign(aj, zj) / col_sq[j]
            if new != old:
                r -= (new - old) * cols[j]
                v[j] = new
        tracker.offer(v)
        if _kkt_residual_lasso(v, A.T @ r, th) <= tol:
            return v, sweep, True
    return v, sweeps_cap, False


def _admm_run(prob, v0, opts, tol, tracker):
    """Scaled two-block splitting on z = Xv with adaptive penalty balancing.

    For convex problems the split residuals only gate a true stationarity
    check: iteration continues with tightened thresholds until the
    optimality residual of the (support-cap-relaxed) problem meets tol.
    """
    A = prob.X.entries
    n = prob.X.n
    cols = [np.ascontiguousarray(A[:, j]) for j in range(prob.X.p)]
    col_sq = prob.X.col_l2**2
    weights = prob.X.col_linf
    cap = prob.domain.weighted_l1_cap
    prox = _make_prox_rows(prob)
    spec_sq = prob.X.spectral_norm() ** 2
    rho = opts.rho0 if opts.rho0 is not None else max(spec_sq / n, 1e-3)

    relaxed = (
        prob
        if prob.domain.support_cap is None
        else replace(prob, domain=replace_support_cap(prob.domain, None))
    )
    v = v0.copy()
    Xv = A @ v
    z = prox(Xv, rho)
    u = np.zeros(n)
    inner_tol = max(tol * 1e-2, 1e-13)
    scale = max(1.0, float(np.max(np.abs(prob.y))))
    thresh = max(tol * scale, 1e-14)
    converged = False
    it = 0
    best_seen = math.inf
    last_improve = 0
    for it in range(1, opts.max_iter + 1):
        v = _v_update(A, cols, col_sq, z - u, 2.0 * prob.c_r / rho, v, cap, weights, inner_tol)
        Xv = A @ v
        z_old = z
        z = prox(Xv + u, rho)
        u = u + Xv - z
        r_inf = float(np.max(np.abs(Xv - z)))
        s_inf = rho * float(np.max(np.abs(A.T @ (z - z_old))))
        if it % 10 == 0:
            tracker.offer(v)
        if r_inf <= thresh and s_inf <= thresh:
            tracker.offer(v)
            # gate convergence on the point that will be returned
            use_best = prob.domain.support_cap is None and tracker.v is not None
            gate_v = tracker.v if use_best else v
            if not prob.convex or optimality_residual(relaxed, gate_v) <= tol:
                converged = True
                break
            if thresh <= 1e-14:  # cannot tighten further
                break
            thresh = max(thresh * 0.1, 1e-14)
        elif not prob.convex and it % 50 == 0:
            # split residuals can keep sloshing around a nonconvex local
            # solution; accept once the current iterate is feasible and its
            # projected-gradient residual is small, and stop exploring a
            # start that has stopped improving the best-found objective
            if tracker.offer(v) and optimality_residual(relaxed, v) <= tol:
                converged = True
                break
            if tracker.obj < best_seen - 1e-12 * scale:
                best_seen = tracker.obj
                last_improve = it
            elif it >= 300 and it - last_improve >= 150:
                break
        if it % 10 == 0 and it <= 2000:
            if r_inf > 10.0 * s_inf and rho < 1e12:
                rho *= 2.0
                u *= 0.5
            elif s_inf > 10.0 * r_inf and rho > 1e-12:
                rho *= 0.5
                u *= 2.0
    tracker.offer(v)
    return v, it, converged


def _polish_support(prob, v, opts):
    """Keep the h largest coordinates and re-fit on that support (heuristic:
    exact l0-constrained optimization is out of scope)."""
    h = prob.domain.support_cap
    keep = np.sort(np.lexsort((np.arange(v.shape[0]), -np.abs(v)))[:h])
    sub_X = DesignMatrix(prob.X.entries[:, keep])
    sub_domain = DomainSpec(
        interval=prob.domain.interval,
        weighted_l1_cap=prob.domain.weighted_l1_cap,
        support_cap=None,
    )
    sub_prob = EstimationProblem(
        X=sub_X, y=prob.y, link=prob.link, domain=sub_domain, c_r=prob.c_r, kind=prob.kind
    )
    res = fit(sub_prob, replace(opts, warm_starts=(v[keep],)))
    out = np.zeros_like(v)
    out[keep] = res.beta_hat
    return out, res.iterations


# ---------------------------------------------------------------------------
# optimality diagnostics


def optimality_residual(prob: EstimationProblem, v) -> float:
    """Stationarity measure at v.

    Convex case: Euclidean norm of the minimal element of
    grad L + subdifferential(c_r ||.||_1) + normal cone of the active
    constraints; the l1 part is resolved per coordinate and active
    interval/cap constraints enter through nonnegative multipliers fitted by
    a small bound-constrained least-squares.

    Nonconvex case: norm of the projected-gradient mapping at step 1/L
    (interval activity is reported via the domain report instead).
    """
    v = as_vector(v, prob.X.p)
    z = prob.X.entries @ v
    g = prob.X.entries.T @ _smooth_grad_z(prob, z)

    if not prob.convex:
        L = _lipschitz_estimate(prob, z)
        w = v - g / L
        step = np.sign(w) * np.maximum(np.abs(w) - prob.c_r / L, 0.0)
        if prob.domain.weighted_l1_cap is not None:
            step = project_weighted_l1(step, prob.domain.weighted_l1_cap, prob.X)
        return float(L * np.linalg.norm(v - step))

    act_tol = 1e-7 * max(1.0, float(np.max(np.abs(z))))
    lo, hi = prob.domain.interval
    rows = []
    if math.isfinite(hi):
        rows += [prob.X.entries[i] for i in np.flatnonzero(z >= hi - act_tol)]
    if math.isfinite(lo):
        rows += [-prob.X.entries[i] for i in np.flatnonzero(z <= lo + act_tol)]
    cap = prob.domain.weighted_l1_cap
    cap_active = cap is not None and weighted_l1_norm(v, prob.X) >= cap * (1 - 1e-9)

    on = v != 0
    sign_on = np.sign(v)
    w_cap = prob.X.col_linf

    def residual_and_grad(mult):
        # total gradient including multiplier contributions
        tot = g.copy()
        if rows:
            tot += np.asarray(rows).T @ mult[: len(rows)]
        nu = mult[-1] if cap_active else 0.0
        tot = tot + nu * w_cap * sign_on  # zero on off-support coords
        th_off = prob.c_r + nu * w_cap
        res = np.where(
            on,
            tot + prob.c_r * sign_on,
            np.sign(tot) * np.maximum(np.abs(tot) - th_off, 0.0),
        )
        val = float(res @ res)
        grad = np.zeros(mult.shape[0])
        # d res / d tot is 1 on support and on live off-support coords
        live = (~on) & (np.abs(tot) > th_off)
        dres_dtot = on.astype(float) + live.astype(float)
        if rows:
            R = np.asarray(rows)
            grad[: len(rows)] = 2.0 * (R @ (res * dres_dtot))
        if cap_active:
            dres_dnu = np.where(on, w_cap * sign_on, 0.0)
            dres_dnu = dres_dnu - np.where(live, w_cap * np.sign(tot), 0.0)
            grad[-1] = 2.0 * float(res @ dres_dnu)
        return val, grad

    k = len(rows) + (1 if cap_active else 0)
    if k == 0:
        val, _ = residual_and_grad(np.zeros(1))
        return float(math.sqrt(val))
    best = residual_and_grad(np.zeros(k))[0]
    res = minimize(
        residual_and_grad,
        x0=np.zeros(k),
        jac=True,
        method="L-BFGS-B",
        bounds=[(0.0, None)] * k,
        options={"maxiter": 500, "ftol": 1e-18, "gtol": 1e-14},
    )
    return float(math.sqrt(min(res.fun, best)))


def _lipschitz_estimate(prob, z_obs):
    spec_sq = prob.X.spectral_norm() ** 2
    lo, hi = prob.domain.interval
    if math.isfinite(lo) and math.isfinite(hi):
        zs = np.linspace(lo, hi, 256)
    else:
        m = max(1.0, float(np.max(np.abs(z_obs))))
        zs = np.linspace(-2 * m, 2 * m, 256)
    if prob.kind == "mle":
        curv = float(np.max(prob.link.lam2(zs)))
    else:
        f1 = prob.link.f1(zs)
        resid = np.max(np.abs(prob.y)) + float(np.max(np.abs(prob.link.f(zs))))
        if prob.link.deriv is not None:
            f2 = prob.link.deriv(2, zs)
        else:
            f2 = np.gradient(f1, zs)
        curv = float(2.0 * (np.max(f1**2) + np.max(np.abs(f2)) * resid))
    return max(spec_sq * curv, 1e-8)


# ---------------------------------------------------------------------------
# optimality-implied inequality checker


@dataclass(frozen=True)
class InequalityContext:
    """Ground-truth context for the optimality-implied inequality.

    MLE: G = sum, psi_i(z) = Lambda(z) - Lambda'(X_i'beta) z, phi_i(z) = z/2.
    LSE: G = ||.||^2, psi_i = phi_i = f.
    """

    kind: str
    beta: np.ndarray
    eps: np.ndarray


def make_inequality_context(prob: EstimationProblem, beta, eps) -> InequalityContext:
    return InequalityContext(
        kind=prob.kind,
        beta=as_vector(beta, prob.X.p, "beta"),
        eps=as_vector(eps, prob.X.n, "eps"),
    )


@dataclass(frozen=True)
class InequalityReport:
    holds: bool
    lhs: float
    rhs: float
    tol: float

    def as_dict(self):
        return {"holds": self.holds, "lhs": self.lhs, "rhs": self.rhs, "tol": self.tol}


def check_basic_inequality(ctx: InequalityContext, prob: EstimationProblem, v) -> InequalityReport:
    """Evaluate G(psi(Xv)-psi(Xb)) <= 2|<eps, phi(Xv)-phi(Xb)>| - c_r(||v||_1 - ||b||_1).

    Any v whose penalized objective does not exceed that of the truth
    satisfies this by the optimality algebra; the checker evaluates both
    sides exactly for use in simulations where beta and eps are known.
    """
    if ctx.kind != prob.kind:
        raise ValueError(f"context kind {ctx.kind!r} does not match problem {prob.kind!r}")
    v = as_vector(v, prob.X.p)
    zb = prob.X.entries @ ctx.beta
    zv = prob.X.entries @ v
    pen = prob.c_r * (float(np.abs(v).sum()) - float(np.abs(ctx.beta).sum()))
    if prob.kind == "mle":
        lam, lam1 = prob.link.lam, prob.link.lam1
        lhs = float(np.sum(lam(zv) - lam(zb) - lam1(zb) * (zv - zb)))
        noise = 2.0 * abs(float(ctx.eps @ (0.5 * zv - 0.5 * zb)))
    else:
        f = prob.link.f
        dv = f(zv) - f(zb)
        lhs = float(dv @ dv)
        noise = 2.0 * abs(float(ctx.eps @ dv))
    rhs = noise - pen
    tol = 1e-9 * (1.0 + abs(lhs) + abs(rhs))
    return InequalityReport(holds=lhs <= rhs + tol, lhs=lhs, rhs=rhs, tol=tol)
