"""Univariate draws for one incomplete column given complete predictors.

Two imputer kinds are provided.  The Bayesian normal imputer draws the
residual variance from its scaled inverse chi-square posterior and the
coefficients from their conditional normal posterior around a
ridge-stabilized least-squares solution, then samples from the
posterior predictive.  Predictive-mean matching reuses the same single
parameter draw to score observed and missing rows alike, then hands
each missing row the observed outcome of one of its nearest neighbors
in predicted-mean space.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular

IMPUTER_BAYES = "bayesian-normal"
IMPUTER_PMM = "pmm"
IMPUTER_KINDS = (IMPUTER_BAYES, IMPUTER_PMM)

DEFAULT_RIDGE = 1e-5
DEFAULT_DONORS = 5


@dataclass(eq=False)
class LinearModelDraw:
    """One posterior draw of a normal linear model.

    ``coefficients`` holds the intercept first, then one slope per
    predictor; ``residual_sd`` is strictly positive; ``ridge`` echoes
    the stabilization constant used in the normal equations.
    """

    coefficients: np.ndarray
    residual_sd: float
    ridge: float


def _design(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 2:
        raise ValueError("predictor matrix must be 2-d")
    return np.hstack([np.ones((x.shape[0], 1)), x])


def ridged_least_squares(x: np.ndarray, y: np.ndarray, ridge: float = DEFAULT_RIDGE):
    """Solve the ridge-stabilized normal equations for ``y ~ 1 + x``.

    Returns ``(coefficients, cholesky_factor)`` where the factor is the
    lower Cholesky triangle of ``design' design + ridge * I``.
    """
    design = _design(x)
    y = np.asarray(y, dtype=float).ravel()
    if design.shape[0] != y.shape[0]:
        raise ValueError("predictor and outcome row counts differ")
    if not (np.isfinite(design).all() and np.isfinite(y).all()):
        raise ValueError("design and outcome must be finite")
    gram = design.T @ design + ridge * np.eye(design.shape[1])
    lower = np.linalg.cholesky(gram)
    coefficients = cho_solve((lower, True), design.T @ y)
    return coefficients, lower


def draw_linear_params(
    y_obs: np.ndarray,
    x_obs: np.ndarray,
    rng: np.random.Generator,
    ridge: float = DEFAULT_RIDGE,
) -> LinearModelDraw:
    """Draw linear-model parameters from their posterior.

    The residual variance is RSS over a chi-square draw with
    ``n_obs - r - 1`` degrees of freedom (``r`` predictors); the
    coefficients are normal around the ridged least-squares solution
    with covariance ``sigma^2 (X'X + ridge I)^{-1}``.

    Raises
    ------
    ValueError
        With an "overparameterized imputation model" message when the
        degrees of freedom are not positive.
    """
    x_obs = np.asarray(x_obs, dtype=float)
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    n_obs, r = x_obs.shape
    df = n_obs - r - 1
    if df <= 0:
        raise ValueError(
            f"overparameterized imputation model: {r} predictors with "
            f"{n_obs} observed cases leaves {df} degrees of freedom"
        )
    coefficients, lower = ridged_least_squares(x_obs, y_obs, ridge)
    design = _design(x_obs)
    residuals = y_obs - design @ coefficients
    rss = float(residuals @ residuals)
    sigma2 = rss / rng.chisquare(df)
    noise = rng.standard_normal(design.shape[1])
    residual_sd = float(np.sqrt(sigma2))
    if residual_sd == 0.0:
        residual_sd = float(np.finfo(float).tiny)
    drawn = coefficients + residual_sd * solve_triangular(lower.T, noise, lower=False)
    return LinearModelDraw(coefficients=drawn, residual_sd=residual_sd, ridge=ridge)


def draw_predictive(
    params: LinearModelDraw,
    x_mis: np.ndarray,
    rng: np.random.Generator,
) -> np.ndarray:
    """Sample the posterior predictive at the missing rows."""
    x_mis = np.asarray(x_mis, dtype=float)
    if x_mis.shape[1] != params.coefficients.shape[0] - 1:
        raise ValueError("predictor count does not match the parameter draw")
    mean = params.coefficients[0] + x_mis @ params.coefficients[1:]
    return mean + params.residual_sd * rng.standard_normal(x_mis.shape[0])


def nearest_donors(
    pred_obs: np.ndarray,
    pred_mis: np.ndarray,
    donors: int,
) -> np.ndarray:
    """Indices of the ``donors`` observed rows nearest each missing row.

    Rows are ranked by absolute predicted-mean gap with a stable sort,
    so exact ties resolve to the lower observed-row index.  Returns an
    array of shape ``(len(pred_mis), donors)``.
    """
    pred_obs = np.asarray(pred_obs, dtype=float)
    pred_mis = np.asarray(pred_mis, dtype=float)
    if not 1 <= donors <= pred_obs.shape[0]:
        raise ValueError("donor count must be in [1, number of observed rows]")
    gaps = np.abs(pred_obs[None, :] - pred_mis[:, None])
    order = np.argsort(gaps, axis=1, kind="stable")
    return order[:, :donors]


def pmm_impute(
    y_obs: np.ndarray,
    x_obs: np.ndarray,
    x_mis: np.ndarray,
    rng: np.random.Generator,
    donors: int = DEFAULT_DONORS,
    ridge: float = DEFAULT_RIDGE,
) -> np.ndarray:
    """Impute by predictive-mean matching against observed outcomes.

    A single posterior parameter draw scores observed and missing rows;
    each missing row then receives the observed outcome of one donor
    drawn uniformly from its ``donors`` nearest observed rows.  Every
    imputed value is therefore an observed value of the column.
    """
    y_obs = np.asarray(y_obs, dtype=float).ravel()
    x_mis = np.asarray(x_mis, dtype=float)
    params = draw_linear_params(y_obs, x_obs, rng, ridge)
    design_obs = _design(np.asarray(x_obs, dtype=float))
    pred_obs = design_obs @ params.coefficients
    pred_mis = params.coefficients[0] + x_mis @ params.coefficients[1:]
    pools = nearest_donors(pred_obs, pred_mis, donors)
    picks = rng.integers(donors, size=x_mis.shape[0])
    return y_obs[pools[np.arange(x_mis.shape[0]), picks]]
