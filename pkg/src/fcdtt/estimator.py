"""Link travel-time estimators.

Observations follow the additive model ``Y = X @ theta + noise`` where row
``i`` of ``X`` holds the fraction of each link covered by path integral
``i`` and ``Y[i]`` is its elapsed time. Three estimators are provided:

* historic ridge: ``min ||Y - X theta||^2 + lambda1 ||D theta||^2`` with
  ``D`` the first-difference operator along the corridor;
* incident lasso: ``min ||Y - X (theta + delta)||^2 + lambda2 ||delta||_1``
  for a fixed historic ``theta``, solved by cyclic coordinate descent;
* median backprojection: each path's time is split over its links in
  proportion to covered length, and each link takes the median of its
  full-link-equivalent samples.

Functional solvers (``solve_ridge``, ``solve_lasso``...) work on an
:class:`ObservationSet`; the estimator classes wrap them behind the
scikit-learn ``fit``/``predict`` interface.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numba
import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_design, check_link_vector, check_penalty
from .exceptions import ConvergenceWarning, NumericalError, UnobservedLinkError, ValidationError
from .network import build_difference_matrix

LASSO_TOL_S = 1e-9
LASSO_MAX_SWEEPS = 10_000


@dataclass(frozen=True)
class ObservationSet:
    X: np.ndarray
    Y: np.ndarray

    def __post_init__(self):
        X, Y = check_design(self.X, self.Y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Y", Y)

    @property
    def n_links(self) -> int:
        return self.X.shape[1]

    def __len__(self):
        return self.X.shape[0]

    def subset(self, rows):
        return ObservationSet(self.X[rows], self.Y[rows])


@dataclass(frozen=True)
class HistoricModel:
    theta: np.ndarray
    lambda1: float
    clamped_links: tuple = ()

    @property
    def n_links(self) -> int:
        return self.theta.shape[0]


@dataclass(frozen=True)
class IncidentEstimate:
    delta: np.ndarray
    lambda2: float
    converged: bool = True
    n_sweeps: int = 0
    kkt_residual: float = 0.0


def design_matrix(coverages, n_links) -> np.ndarray:
    """Stack ``{link_id: fraction}`` maps into a dense coverage matrix."""
    X = np.zeros((len(coverages), n_links))
    for i, cov in enumerate(coverages):
        for k, frac in cov.items():
            if not 0 <= k < n_links:
                raise ValidationError(f"link id {k} outside 0..{n_links - 1}")
            X[i, k] = frac
    return X


def build_observations(paths, n_links) -> ObservationSet:
    """Design matrix and travel-time vector for a list of path integrals.

    ``n_links`` may also be a :class:`~fcdtt.network.RoadNetwork`.
    """
    if not isinstance(n_links, int):
        n_links = n_links.n_links
    if not paths:
        raise ValidationError("no path integrals to build observations from")
    X = design_matrix([p.coverage for p in paths], n_links)
    Y = np.array([p.travel_time_s for p in paths], dtype=np.float64)
    return ObservationSet(X, Y)


# -- historic ridge -----------------------------------------------------------

def ridge_objective(X, Y, D, lambda1, theta):
    r = Y - X @ theta
    d = D @ theta
    return float(r @ r + lambda1 * (d @ d))


def _solve_normal_equations(A, b):
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            return scipy.linalg.solve(A, b, assume_a="pos")
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
        # singular or near-singular: minimum-norm solution via SVD
        return np.linalg.lstsq(A, b, rcond=None)[0]


def solve_ridge_unclamped(obs: ObservationSet, D, lambda1) -> np.ndarray:
    lambda1 = check_penalty(lambda1, "lambda1")
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2 or D.shape[1] != obs.n_links:
        raise ValidationError(f"difference matrix has shape {D.shape}, expected (*, {obs.n_links})")
    A = obs.X.T @ obs.X
    if D.shape[0]:
        A = A + lambda1 * (D.T @ D)
    theta = _solve_normal_equations(A, obs.X.T @ obs.Y)
    if not np.all(np.isfinite(theta)):
        raise NumericalError("ridge solve produced non-finite link times")
    return theta


def solve_ridge(obs: ObservationSet, D, lambda1) -> HistoricModel:
    """Smoothness-penalised least squares; negative link times are clamped to 0."""
    theta = solve_ridge_unclamped(obs, D, lambda1)
    clamped = tuple(int(k) for k in np.flatnonzero(theta < 0))
    if clamped:
        theta = np.maximum(theta, 0.0)
    return HistoricModel(theta, float(lambda1), clamped)


# -- incident lasso -----------------------------------------------------------

def soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def lasso_objective(X, Y, theta, lambda2, delta):
    r = Y - X @ (theta + delta)
    return float(r @ r + lambda2 * np.abs(delta).sum())


def lasso_kkt_residual(X, Y, theta, lambda2, delta) -> float:
    """Largest violation of the lasso subgradient optimality conditions."""
    grad = 2.0 * X.T @ (Y - X @ (theta + delta))
    active = delta != 0
    viol = np.where(
        active,
        np.abs(grad - lambda2 * np.sign(delta)),
        np.maximum(np.abs(grad) - lambda2, 0.0),
    )
    return float(viol.max()) if viol.size else 0.0


def lasso_lambda_max(obs: ObservationSet, theta) -> float:
    """Smallest ``lambda2`` at which ``delta = 0`` is optimal."""
    theta = check_link_vector(theta, obs.n_links)
    return float(np.max(np.abs(2.0 * obs.X.T @ (obs.Y - obs.X @ theta))))


@numba.njit(cache=True)
def _coordinate_descent(gram, grad, delta, half_lam, tol, max_sweeps):
    """Cyclic soft-thresholding sweeps; updates ``grad`` and ``delta`` in place."""
    n = delta.shape[0]
    sweeps = 0
    while sweeps < max_sweeps:
        sweeps += 1
        max_change = 0.0
        for k in range(n):
            z = gram[k, k]
            if z <= 0.0:
                continue
            old = delta[k]
            rho = grad[k] + z * old
            if rho > half_lam:
                new = (rho - half_lam) / z
            elif rho < -half_lam:
                new = (rho + half_lam) / z
            else:
                new = 0.0
            step = new - old
            if step != 0.0:
                delta[k] = new
                for j in range(n):
                    grad[j] -= gram[j, k] * step
                if abs(step) > max_change:
                    max_change = abs(step)
        if max_change < tol:
            return sweeps, True
    return sweeps, False


def solve_lasso(obs: ObservationSet, theta, lambda2, tol=LASSO_TOL_S, max_sweeps=LASSO_MAX_SWEEPS) -> IncidentEstimate:
    """Sparse per-link deviations from ``theta`` by cyclic coordinate descent.

    Coordinates are visited in ascending link order starting from
    ``delta = 0``. Iteration stops once a full sweep moves no coordinate by
    more than ``tol`` seconds, or after ``max_sweeps`` sweeps, in which case
    a :class:`ConvergenceWarning` is issued and the last iterate returned.
    """
    theta = check_link_vector(theta, obs.n_links)
    lambda2 = check_penalty(lambda2, "lambda2")
    X = obs.X
    gram = X.T @ X
    # grad holds X^T (Y - X (theta + delta)), updated incrementally
    grad = X.T @ (obs.Y - X @ theta)
    delta = np.zeros(obs.n_links)
    sweeps, converged = _coordinate_descent(gram, grad, delta, 0.5 * lambda2, float(tol), int(max_sweeps))

    kkt = lasso_kkt_residual(X, obs.Y, theta, lambda2, delta)
    if not np.all(np.isfinite(delta)):
        raise NumericalError("lasso iterate became non-finite")
    if not converged:
        warnings.warn(
            f"coordinate descent stopped after {sweeps} sweeps (KKT residual {kkt:.3g})",
            ConvergenceWarning,
            stacklevel=2,
        )
    return IncidentEstimate(delta, lambda2, converged, sweeps, kkt)


# -- prediction ---------------------------------------------------------------

def predict_travel_time(coverage, theta, delta=None) -> float:
    """Sum of covered link times, ``sum_n coverage[n] * (theta[n] + delta[n])``."""
    theta = np.asarray(theta, dtype=np.float64)
    total = 0.0
    for k, frac in coverage.items():
        if not 0 <= k < theta.shape[0]:
            raise ValidationError(f"unknown link id {k}")
        link = theta[k] if delta is None else theta[k] + delta[k]
        total += frac * link
    return float(total)


# -- median backprojection ----------------------------------------------------

def backprojection_samples(X, Y, link_lengths):
    """Per-link lists of full-link-equivalent travel times."""
    X = np.asarray(X, dtype=np.float64)
    lengths = np.asarray(link_lengths, dtype=np.float64)
    samples = [[] for _ in range(X.shape[1])]
    for row, y in zip(X, Y):
        covered = np.flatnonzero(row)
        total = float(row[covered] @ lengths[covered])
        for k in covered:
            # time spent on the covered part, scaled up to the whole link;
            # the length ratio goes first so a lone full link returns y exactly
            samples[k].append(y * (lengths[k] / total))
    return samples


def median_backproject(paths, net) -> np.ndarray:
    """Median backprojected link times; ``nan`` marks links with no samples."""
    obs = build_observations(paths, net.n_links)
    return _medians(backprojection_samples(obs.X, obs.Y, net.lengths))


def _medians(samples):
    return np.array([np.median(s) if s else np.nan for s in samples])


def predict_backprojected(coverage, link_times) -> float:
    for k in coverage:
        if np.isnan(link_times[k]):
            raise UnobservedLinkError(k)
    return predict_travel_time(coverage, link_times)


# -- scikit-learn estimators --------------------------------------------------

class HistoricRidge(RegressorMixin, BaseEstimator):
    """Long-run link times from pooled path integrals.

    Parameters
    ----------
    lambda1 : float
        Weight of the squared first-difference penalty between adjacent links.
    clamp : bool
        Clamp negative fitted link times to zero.
    """

    def __init__(self, lambda1=1.0, clamp=True):
        self.lambda1 = lambda1
        self.clamp = clamp

    def fit(self, X, y):
        obs = ObservationSet(X, y)
        D = build_difference_matrix(obs.n_links)
        if self.clamp:
            model = solve_ridge(obs, D, self.lambda1)
            self.theta_ = model.theta
            self.clamped_links_ = model.clamped_links
        else:
            self.theta_ = solve_ridge_unclamped(obs, D, self.lambda1)
            self.clamped_links_ = ()
        self.n_features_in_ = obs.n_links
        return self

    def predict(self, X):
        check_is_fitted(self, "theta_")
        return check_design(X) @ self.theta_

    def to_model(self) -> HistoricModel:
        check_is_fitted(self, "theta_")
        return HistoricModel(self.theta_, float(self.lambda1), tuple(self.clamped_links_))


class IncidentLasso(RegressorMixin, BaseEstimator):
    """Sparse same-day deviations on top of fixed historic link times.

    Parameters
    ----------
    theta : array-like of shape (n_links,) or None
        Historic link times; zeros when None.
    lambda2 : float
        L1 weight on the deviations.
    tol, max_sweeps :
        Coordinate-descent stopping rule.
    """

    def __init__(self, theta=None, lambda2=1.0, tol=LASSO_TOL_S, max_sweeps=LASSO_MAX_SWEEPS):
        self.theta = theta
        self.lambda2 = lambda2
        self.tol = tol
        self.max_sweeps = max_sweeps

    def _theta(self, n_links):
        if self.theta is None:
            return np.zeros(n_links)
        return check_link_vector(self.theta, n_links)

    def fit(self, X, y):
        obs = ObservationSet(X, y)
        theta = self._theta(obs.n_links)
        est = solve_lasso(obs, theta, self.lambda2, tol=self.tol, max_sweeps=self.max_sweeps)
        self.delta_ = est.delta
        self.converged_ = est.converged
        self.n_iter_ = est.n_sweeps
        self.kkt_residual_ = est.kkt_residual
        self.lambda_max_ = lasso_lambda_max(obs, theta)
        self.n_features_in_ = obs.n_links
        return self

    def predict(self, X):
        check_is_fitted(self, "delta_")
        return check_design(X) @ (self._theta(self.n_features_in_) + self.delta_)


class MedianBackprojector(RegressorMixin, BaseEstimator):
    """Length-proportional backprojection with per-link medians.

    Parameters
    ----------
    link_lengths : array-like of shape (n_links,) or None
        Link lengths in meters; equal lengths when None.
    """

    def __init__(self, link_lengths=None):
        self.link_lengths = link_lengths

    def fit(self, X, y):
        obs = ObservationSet(X, y)
        lengths = np.ones(obs.n_links) if self.link_lengths is None else check_link_vector(
            self.link_lengths, obs.n_links, "link_lengths"
        )
        samples = backprojection_samples(obs.X, obs.Y, lengths)
        self.link_times_ = _medians(samples)
        self.n_samples_ = np.array([len(s) for s in samples])
        self.n_features_in_ = obs.n_links
        return self

    def predict(self, X):
        """Raises :class:`UnobservedLinkError` if a row covers a link without samples."""
        check_is_fitted(self, "link_times_")
        X = check_design(X)
        touched = np.flatnonzero((X > 0).any(axis=0) & np.isnan(self.link_times_))
        if touched.size:
            raise UnobservedLinkError(int(touched[0]))
        return X @ np.nan_to_num(self.link_times_)
