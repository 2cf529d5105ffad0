"""Design-matrix representation, coherence statistics, and search domains.

The estimation problems in this package are posed over a fixed n x p design
matrix X with columns V_1, ..., V_p.  This module owns:

* ``DesignMatrix`` -- immutable wrapper with cached column norms,
* ``coherence_stats`` -- mutual coherence and the column-energy range,
* ``DomainSpec`` / ``domain_contains`` -- search domains cut out by an
  interval constraint on the rows of Xv, an optional weighted-l1 cap, and an
  optional support cap,
* ``domain_radius_upper`` -- a certified upper bound on the radius of the
  smallest weighted-l1 ball containing the domain,
* support/norm-decomposition helpers used by the test suite.

Vectors are plain 1-D numpy arrays throughout; ``support`` returns the index
set of nonzero coordinates.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .validation import as_matrix, as_vector, check_interval

__all__ = [
    "DesignMatrix",
    "CoherenceStats",
    "DomainSpec",
    "DomainReport",
    "DomainUnboundedError",
    "coherence_stats",
    "column_norm_2k",
    "weighted_l1_norm",
    "domain_contains",
    "domain_radius_upper",
    "support",
    "restrict_to",
    "norm_decomposition",
]


class DomainUnboundedError(ValueError):
    """Raised when a radius bound is requested for an unbounded domain."""


class DesignMatrix:
    """Fixed n x p design with eagerly cached l2/linf column norms.

    Columns must be nonzero.  The 2k-norm cache fills lazily per requested k
    and is guarded by a lock so instances can be shared across threads.
    """

    __slots__ = ("entries", "n", "p", "col_l2", "col_linf", "_l2k", "_lock", "_spec")

    def __init__(self, entries):
        A = as_matrix(entries, "design matrix")
        self.entries = A
        self.entries.setflags(write=False)
        self.n, self.p = A.shape
        self.col_l2 = np.linalg.norm(A, axis=0)
        self.col_linf = np.max(np.abs(A), axis=0)
        if np.any(self.col_l2 == 0.0):
            j = int(np.argmin(self.col_l2))
            raise ValueError(f"column {j} of the design matrix is zero")
        self._l2k = {1: self.col_l2}
        self._spec = None
        self._lock = threading.Lock()

    def spectral_norm(self) -> float:
        """||X||_2, computed once and cached."""
        with self._lock:
            if self._spec is None:
                self._spec = float(np.linalg.norm(self.entries, 2))
            return self._spec

    def col_l2k(self, k: int) -> np.ndarray:
        """p-vector of ||V_j||_{2k}; computed once per k and cached."""
        k = int(k)
        if k < 1:
            raise ValueError(f"k must be >= 1, got {k}")
        with self._lock:
            out = self._l2k.get(k)
            if out is None:
                out = _norm_2k(self.entries, k)
                self._l2k[k] = out
        return out

    def __repr__(self):
        return f"DesignMatrix(n={self.n}, p={self.p})"


def _norm_2k(A: np.ndarray, k: int) -> np.ndarray:
    # Rescale by the column max so |x/m|^(2k) cannot overflow for large k.
    m = np.max(np.abs(A), axis=0)
    scaled = np.abs(A) / m
    s = np.sum(scaled ** (2 * k), axis=0)
    return m * s ** (1.0 / (2 * k))


def column_norm_2k(X: DesignMatrix, k: int) -> np.ndarray:
    """Entrywise (sum_i |X_ij|^(2k))^(1/(2k)) for every column j."""
    return X.col_l2k(k)


@dataclass(frozen=True)
class CoherenceStats:
    """Mutual coherence mu and normalized column-energy range [a, b]."""

    mu: float
    a: float
    b: float

    def as_dict(self):
        return {"mu": self.mu, "a": self.a, "b": self.b}


def coherence_stats(X: DesignMatrix) -> CoherenceStats:
    """Coherence statistics of the design.

    mu = max_{i<j} |V_i' V_j| / (||V_i|| ||V_j||),
    a  = min_j ||V_j||^2 / n,   b = max_j ||V_j||^2 / n.

    For p = 1 the max runs over an empty set and mu is defined as 0.
    """
    A, norms = X.entries, X.col_l2
    if X.p == 1:
        mu = 0.0
    else:
        G = A.T @ A
        C = np.abs(G) / np.outer(norms, norms)
        np.fill_diagonal(C, -np.inf)
        mu = float(min(C.max(), 1.0))
    energy = norms**2 / X.n
    return CoherenceStats(mu=mu, a=float(energy.min()), b=float(energy.max()))


def weighted_l1_norm(v, X: DesignMatrix) -> float:
    """sum_j |v_j| * ||V_j||_inf."""
    v = as_vector(v, X.p)
    return float(np.abs(v) @ X.col_linf)


def support(v, tol: float = 0.0) -> np.ndarray:
    """Indices of coordinates with |v_j| > tol."""
    v = np.asarray(v, dtype=np.float64)
    return np.flatnonzero(np.abs(v) > tol)


def restrict_to(v, S) -> np.ndarray:
    """Copy of v with every coordinate outside the index set S zeroed."""
    v = np.asarray(v, dtype=np.float64)
    out = np.zeros_like(v)
    S = np.asarray(S, dtype=np.intp)
    out[S] = v[S]
    return out


def norm_decomposition(v, beta, S, a: float = 1.0):
    """Both sides of the support-split norm identities for S containing spt(beta).

    With d = v - beta and S a superset of spt(beta), exact identities hold:

        ||v||_1    = ||beta + d_S||_1 + ||v_{S^c}||_1
        ||d||_a^a  = ||d_S||_a^a      + ||v_{S^c}||_a^a

    Returns a dict with the four evaluated quantities, for use as a test
    utility.  Raises if S does not contain the support of beta.
    """
    v = np.asarray(v, dtype=np.float64)
    beta = np.asarray(beta, dtype=np.float64)
    S = np.asarray(S, dtype=np.intp)
    if not np.all(np.isin(support(beta), S)):
        raise ValueError("S must contain the support of beta")
    d = v - beta
    d_S = restrict_to(d, S)
    mask = np.ones(v.shape[0], dtype=bool)
    mask[S] = False
    v_Sc = v * mask
    return {
        "l1_total": float(np.abs(v).sum()),
        "l1_split": float(np.abs(beta + d_S).sum() + np.abs(v_Sc).sum()),
        "la_total": float((np.abs(d) ** a).sum()),
        "la_split": float((np.abs(d_S) ** a).sum() + (np.abs(v_Sc) ** a).sum()),
    }


@dataclass(frozen=True)
class DomainSpec:
    """Search domain: rows of Xv confined to an interval, plus optional caps.

    Membership means X_i'v in [lo, hi] for every row i, and, when set,
    ||v||_{1,inf} <= weighted_l1_cap and |spt(v)| <= support_cap.
    """

    interval: tuple = (-math.inf, math.inf)
    weighted_l1_cap: Optional[float] = None
    support_cap: Optional[int] = None

    def __post_init__(self):
        lo, hi = check_interval(self.interval, "interval")
        object.__setattr__(self, "interval", (lo, hi))
        if self.weighted_l1_cap is not None:
            cap = float(self.weighted_l1_cap)
            if not cap > 0:
                raise ValueError(f"weighted_l1_cap must be positive, got {cap}")
            object.__setattr__(self, "weighted_l1_cap", cap)
        if self.support_cap is not None:
            h = int(self.support_cap)
            if h < 1:
                raise ValueError(f"support_cap must be >= 1, got {h}")
            object.__setattr__(self, "support_cap", h)

    @property
    def unconstrained(self) -> bool:
        lo, hi = self.interval
        return (
            math.isinf(lo)
            and math.isinf(hi)
            and self.weighted_l1_cap is None
            and self.support_cap is None
        )

    @property
    def interval_finite(self) -> bool:
        lo, hi = self.interval
        return math.isfinite(lo) and math.isfinite(hi)

    def as_dict(self):
        return {
            "interval": list(self.interval),
            "weighted_l1_cap": self.weighted_l1_cap,
            "support_cap": self.support_cap,
        }


@dataclass
class DomainReport:
    """Outcome of a domain membership test, with violation margins.

    ``rows`` lists (row index, margin) pairs for rows where X_i'v leaves the
    interval; ``weighted_excess`` / ``support_excess`` give the amount by
    which the respective cap is exceeded (None when the cap holds or is
    unset).
    """

    inside: bool
    rows: list = field(default_factory=list)
    weighted_excess: Optional[float] = None
    support_excess: Optional[int] = None
    max_margin: float = 0.0

    def as_dict(self):
        return {
            "inside": self.inside,
            "rows": [[int(i), m] for i, m in self.rows],
            "weighted_excess": self.weighted_excess,
            "support_excess": self.support_excess,
            "max_margin": self.max_margin,
        }


def domain_contains(v, X: DesignMatrix, D: DomainSpec, tol: float = 0.0) -> DomainReport:
    """Test v against all three constraint families of D.

    ``tol`` is an absolute slack: a constraint counts as violated only when
    its margin exceeds tol.  Margins are always reported unslackened.
    """
    v = as_vector(v, X.p)
    lo, hi = D.interval
    z = X.entries @ v
    margins = np.maximum(lo - z, z - hi)
    bad = np.flatnonzero(margins > tol)
    rows = [(int(i), float(margins[i])) for i in bad]
    max_margin = float(margins.max(initial=0.0)) if len(rows) else 0.0

    weighted_excess = None
    if D.weighted_l1_cap is not None:
        w = weighted_l1_norm(v, X)
        if w > D.weighted_l1_cap + tol:
            weighted_excess = float(w - D.weighted_l1_cap)

    support_excess = None
    if D.support_cap is not None:
        nnz = int(np.count_nonzero(v))
        if nnz > D.support_cap:
            support_excess = nnz - D.support_cap

    inside = not rows and weighted_excess is None and support_excess is None
    return DomainReport(
        inside=inside,
        rows=rows,
        weighted_excess=weighted_excess,
        support_excess=support_excess,
        max_margin=max_margin,
    )


def domain_radius_upper(D: DomainSpec, X: DesignMatrix) -> float:
    """Upper bound on the radius of the smallest ||.||_{1,inf} ball holding D.

    The exact radius is not computable for general polyhedral domains; an
    upper bound is sufficient because every downstream constant is
    nondecreasing in it.  Two certified bounds are available:

    * an explicit weighted-l1 cap is itself a ball radius (centered at 0);
    * when the interval is finite and X has full column rank with p <= n,
      the domain maps into the box pinv(X) * [lo, hi]^n, whose weighted-l1
      circumradius about the box center is computed exactly.

    Raises ``DomainUnboundedError`` when neither bound applies.
    """
    candidates = []
    if D.weighted_l1_cap is not None:
        candidates.append(float(D.weighted_l1_cap))
    if D.interval_finite and X.p <= X.n:
        P, rank = _pinv_with_rank(X.entries)
        if rank == X.p:
            lo, hi = D.interval
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            # v = P z for z in [lo, hi]^n, so coordinate j lies within
            # (P @ mid*ones)_j +/- half * sum_i |P_ji|.
            half_widths = half * np.abs(P).sum(axis=1)
            candidates.append(float(half_widths @ X.col_linf))
    if not candidates:
        raise DomainUnboundedError(
            "delta undefined: domain is unbounded (no weighted_l1_cap and no "
            "finite-interval full-column-rank bound available)"
        )
    return min(candidates)


def _pinv_with_rank(A):
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    tol = s.max() * max(A.shape) * np.finfo(np.float64).eps
    rank = int(np.sum(s > tol))
    s_inv = np.where(s > tol, 1.0 / np.where(s > tol, s, 1.0), 0.0)
    return (vt.T * s_inv) @ u.T, rank
