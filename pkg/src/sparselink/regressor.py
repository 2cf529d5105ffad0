"""Scikit-learn style estimator facade.

``SparseLinkRegressor`` wraps the constrained l1-regularized solver behind
the usual fit/predict/get_params surface so it composes with pipelines,
grid search, and the rest of the ecosystem.  ``predict`` returns the model
mean: Lambda'(Xv) for likelihood links, f(Xv) for analytic links.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .design import DesignMatrix, DomainSpec
from .estimators import EstimationProblem, FitOptions, fit
from .links import ExpFamilyLink, link_from_spec

__all__ = ["SparseLinkRegressor"]


class SparseLinkRegressor(RegressorMixin, BaseEstimator):
    """l1-regularized regression through a known link, over a constrained domain.

    Parameters
    ----------
    link : str, dict, or link object
        Link specification, e.g. "identity", {"kind": "logistic"},
        {"kind": "poly", "coeffs": [0, 0, 1]}.  Exponential-family links fit
        by maximum likelihood, analytic links by least squares.
    c_r : float
        l1 penalty weight (the certified tuning parameter when taken from a
        bound certificate).
    interval : (lo, hi) or None
        Row constraint X_i'v in [lo, hi]; None leaves rows unconstrained.
    weighted_l1_cap : float or None
        Cap on sum_j |v_j| * ||V_j||_inf.
    support_cap : int or None
        Cap on the number of nonzero coefficients (enforced by a final
        threshold-and-refit pass).
    tol, max_iter, multi_start, random_state
        Solver controls; see FitOptions.
    """

    def __init__(
        self,
        link="identity",
        c_r=1.0,
        interval=None,
        weighted_l1_cap=None,
        support_cap=None,
        tol=None,
        max_iter=50_000,
        multi_start=5,
        random_state=0,
    ):
        self.link = link
        self.c_r = c_r
        self.interval = interval
        self.weighted_l1_cap = weighted_l1_cap
        self.support_cap = support_cap
        self.tol = tol
        self.max_iter = max_iter
        self.multi_start = multi_start
        self.random_state = random_state

    def _domain(self):
        interval = self.interval if self.interval is not None else (-math.inf, math.inf)
        return DomainSpec(
            interval=tuple(interval),
            weighted_l1_cap=self.weighted_l1_cap,
            support_cap=self.support_cap,
        )

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        link = link_from_spec(self.link)
        kind = "mle" if isinstance(link, ExpFamilyLink) else "lse"
        prob = EstimationProblem(
            X=DesignMatrix(X),
            y=np.asarray(y, dtype=np.float64),
            link=link,
            domain=self._domain(),
            c_r=float(self.c_r),
            kind=kind,
        )
        res = fit(
            prob,
            FitOptions(
                tol=self.tol,
                max_iter=self.max_iter,
                multi_start=self.multi_start,
                seed=int(self.random_state or 0),
            ),
        )
        self.link_ = link
        self.kind_ = kind
        self.coef_ = res.beta_hat
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        self.objective_value_ = res.objective_value
        self.optimality_residual_ = res.optimality_residual
        self.fit_result_ = res
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X)
        z = X @ self.coef_
        if self.kind_ == "mle":
            return np.asarray(self.link_.lam1(z), dtype=np.float64)
        return np.asarray(self.link_.f(z), dtype=np.float64)

    def decision_function(self, X):
        """Linear index X @ coef_."""
        check_is_fitted(self, "coef_")
        X = check_array(X)
        return X @ self.coef_
