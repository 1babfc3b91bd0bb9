"""Weight-space Bayesian linear regression with Gaussian prior and noise.

Designs are stored column-per-sample (``p x N``) so that the posterior
precision reads ``A = design @ design.T / noise + inv(prior)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy import linalg
from scipy.linalg import lapack

from .errors import DataError, NumericalError

log = logging.getLogger(__name__)

NOISE_FLOOR = 1e-6
JITTER_SCALE = 1e-8
JITTER_RETRIES = 3


@dataclass(frozen=True)
class LinearPosterior:
    mean_weights: np.ndarray
    precision: np.ndarray
    precision_inverse: np.ndarray
    noise_variance: float
    prior_covariance: np.ndarray

    @property
    def dim(self) -> int:
        return self.mean_weights.shape[0]


def cholesky_jitter(matrix: np.ndarray) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of an SPD matrix, adding diagonal jitter on failure.

    Returns the factor and the total jitter that was added.
    """
    p = matrix.shape[0]
    if p == 0:
        return np.zeros((0, 0)), 0.0
    base = JITTER_SCALE * float(np.trace(matrix)) / p
    jitter = 0.0
    for attempt in range(JITTER_RETRIES + 1):
        try:
            factor = linalg.cholesky(matrix + jitter * np.eye(p), lower=True, check_finite=False)
            if jitter:
                log.warning("Cholesky needed diagonal jitter %.3g", jitter)
            return factor, jitter
        except linalg.LinAlgError:
            if attempt == JITTER_RETRIES or not np.isfinite(base) or base <= 0:
                break
            jitter = base * 10.0**attempt
    raise NumericalError("matrix is not positive definite, even after diagonal jitter")


def _cholesky_inverse(factor: np.ndarray) -> np.ndarray:
    """Inverse from a lower Cholesky factor (LAPACK potri fills one triangle)."""
    if factor.shape[0] == 0:
        return np.zeros((0, 0))
    inv, info = lapack.dpotri(factor, lower=1)
    if info != 0:
        raise NumericalError(f"potri failed with info={info}")
    lower = np.tril(inv)
    return lower + np.tril(inv, -1).T


def spd_inverse(matrix: np.ndarray) -> np.ndarray:
    factor, _ = cholesky_jitter(matrix)
    return _cholesky_inverse(factor)


def _check_prior(prior_covariance, p: int) -> tuple[np.ndarray, np.ndarray]:
    if prior_covariance is None:
        return np.eye(p), np.eye(p)
    prior = np.atleast_2d(np.asarray(prior_covariance, dtype=float))
    if prior.shape != (p, p):
        raise DataError(f"prior covariance must be {p}x{p}, got {prior.shape}")
    if not np.all(np.isfinite(prior)) or not np.allclose(prior, prior.T, rtol=1e-9, atol=0):
        raise NumericalError("prior covariance must be finite and symmetric")
    try:
        factor = linalg.cholesky(prior, lower=True)
    except linalg.LinAlgError as exc:
        raise NumericalError("prior covariance is not positive definite") from exc
    prior_precision = linalg.cho_solve((factor, True), np.eye(p))
    return prior, 0.5 * (prior_precision + prior_precision.T)


def _posterior_from_moments(
    gram: np.ndarray,
    cross: np.ndarray,
    noise_variance: float,
    prior: np.ndarray,
    prior_precision: np.ndarray,
) -> LinearPosterior:
    precision = gram / noise_variance + prior_precision
    precision = 0.5 * (precision + precision.T)
    factor, _ = cholesky_jitter(precision)
    inverse = _cholesky_inverse(factor)
    weights = linalg.cho_solve((factor, True), cross, check_finite=False) / noise_variance
    return LinearPosterior(weights, precision, inverse, float(noise_variance), prior)


def _validate(design, targets) -> tuple[np.ndarray, np.ndarray]:
    design = np.asarray(design, dtype=float)
    if design.ndim == 1:
        design = design[np.newaxis, :]
    targets = np.asarray(targets, dtype=float).ravel()
    if design.shape[1] == 0 or targets.shape[0] == 0:
        raise DataError("fit needs at least one sample")
    if design.shape[1] != targets.shape[0]:
        raise DataError(f"design has {design.shape[1]} columns but {targets.shape[0]} targets")
    if not (np.all(np.isfinite(design)) and np.all(np.isfinite(targets))):
        raise DataError("design and targets must be finite")
    return design, targets


def fit(design, targets, noise_variance: float, prior_covariance=None) -> LinearPosterior:
    """Posterior over weights for ``targets ~ N(design.T @ w, noise)``, ``w ~ N(0, prior)``.

    ``design`` is ``p x N``. The precision is
    ``design @ design.T / noise + inv(prior)`` and the mean weights are
    ``inv(precision) @ design @ targets / noise``.
    """
    design, targets = _validate(design, targets)
    if not noise_variance > 0 or not np.isfinite(noise_variance):
        raise DataError(f"noise_variance must be positive, got {noise_variance}")
    prior, prior_precision = _check_prior(prior_covariance, design.shape[0])
    return _posterior_from_moments(design @ design.T, design @ targets, noise_variance, prior, prior_precision)


NOISE_RULES = ("mse", "dof")


def gram_eigen(gram: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    lam, vecs = linalg.eigh(0.5 * (gram + gram.T), check_finite=False)
    return np.maximum(lam, 0.0), vecs


def plugin_noise_fit(
    gram: np.ndarray,
    cross: np.ndarray,
    target_sq: float,
    n: int,
    prior_covariance=None,
    floor: float = NOISE_FLOOR,
    rule: str = "dof",
    max_iter: int = 500,
    rtol: float = 1e-9,
    eig: tuple[np.ndarray, np.ndarray] | None = None,
) -> LinearPosterior:
    """Fit with the noise variance estimated from the training residuals.

    The residual depends on the weights, which depend on the noise level, so
    the two are iterated to a fixed point. ``rule="mse"`` uses the mean
    squared residual; ``rule="dof"`` divides the residual sum of squares by
    ``n`` minus the effective number of parameters (trace of the hat matrix).
    Works from sufficient statistics: ``gram = X X^T``, ``cross = X y`` and
    ``target_sq = y^T y``. The iteration runs in the eigenbasis of the
    prior-whitened Gram matrix, so each step is ``O(p)``; pass ``eig`` (from
    :func:`gram_eigen`) to share one decomposition across several targets.
    """
    if rule not in NOISE_RULES:
        raise DataError(f"noise rule must be one of {NOISE_RULES}, got {rule!r}")
    p = gram.shape[0]
    prior, prior_precision = _check_prior(prior_covariance, p)
    if prior_covariance is None:
        white_gram, white_cross = gram, cross
    else:
        root = linalg.cholesky(prior, lower=True)
        white_gram, white_cross = root.T @ gram @ root, root.T @ cross
    lam, vecs = eig if eig is not None else gram_eigen(white_gram)
    ct = vecs.T @ white_cross
    ct2 = ct * ct

    def step(s2: float) -> float:
        shrink = 1.0 / (lam + s2)
        rss = target_sq - np.sum(ct2 * shrink * (2.0 - lam * shrink))
        rss = max(rss, 0.0)
        denom = float(n)
        if rule == "dof":
            denom = max(n - float(np.sum(lam * shrink)), 1.0)
        return max(rss / denom, floor)

    sigma2 = max(target_sq / n, floor)
    for _ in range(max_iter):
        new = step(sigma2)
        done = abs(new - sigma2) <= rtol * sigma2
        sigma2 = new
        if done:
            break
    return _posterior_from_moments(gram, cross, sigma2, prior, prior_precision)


def fit_plugin(
    design, targets, prior_covariance=None, floor: float = NOISE_FLOOR, rule: str = "dof"
) -> LinearPosterior:
    """:func:`fit` with the residual plug-in noise estimate."""
    design, targets = _validate(design, targets)
    return plugin_noise_fit(
        design @ design.T, design @ targets, float(targets @ targets), targets.shape[0], prior_covariance, floor, rule
    )


def predict(posterior: LinearPosterior, x, include_noise: bool = False) -> tuple[float, float]:
    """Predictive mean ``w.x`` and variance ``x^T A^-1 x`` (plus noise if asked)."""
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != posterior.dim:
        raise DataError(f"input has length {x.shape[0]}, model expects {posterior.dim}")
    if not np.all(np.isfinite(x)):
        raise DataError("prediction input must be finite")
    mean = float(posterior.mean_weights @ x)
    var = max(float(x @ posterior.precision_inverse @ x), 0.0)
    if include_noise:
        var += posterior.noise_variance
    return mean, var


def predict_batch(posterior: LinearPosterior, inputs, include_noise: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`predict` for an ``M x p`` input matrix."""
    inputs = np.atleast_2d(np.asarray(inputs, dtype=float))
    if inputs.shape[1] != posterior.dim:
        raise DataError(f"inputs have {inputs.shape[1]} columns, model expects {posterior.dim}")
    means = inputs @ posterior.mean_weights
    var = np.einsum("ij,jk,ik->i", inputs, posterior.precision_inverse, inputs)
    var = np.maximum(var, 0.0)
    if include_noise:
        var = var + posterior.noise_variance
    return means, var


def recursive_inverse_extend(
    previous_inverse,
    cross,
    sq_norm: float,
    noise_variance: float = 0.0,
) -> np.ndarray:
    """Inverse of ``[[s, u^T], [u, A]]`` given ``inv(A)``, with ``s = sq_norm + noise_variance``.

    The new row/column is prepended, matching how the chain adds one feature
    row in front of the previous design. Uses the partitioned inverse::

        a = 1 / (s - u^T inv(A) u)
        b = -a * (inv(A) u)^T
        C = inv(A) + a * (inv(A) u)(inv(A) u)^T
    """
    prev = np.atleast_2d(np.asarray(previous_inverse, dtype=float))
    if prev.size == 0:
        prev = np.zeros((0, 0))
    u = np.asarray(cross, dtype=float).ravel()
    if u.shape[0] != prev.shape[0]:
        raise DataError(f"cross-term length {u.shape[0]} does not match inverse size {prev.shape[0]}")
    s = float(sq_norm) + float(noise_variance)
    pu = prev @ u
    schur = s - u @ pu
    if not schur > 0:
        raise NumericalError(f"Schur complement {schur:.3g} <= 0: extended matrix is not positive definite")
    a = 1.0 / schur
    p = prev.shape[0] + 1
    out = np.empty((p, p))
    out[0, 0] = a
    out[0, 1:] = -a * pu
    out[1:, 0] = -a * pu
    out[1:, 1:] = prev + a * np.outer(pu, pu)
    return out


def grow_inverse(matrix) -> list[np.ndarray]:
    """Inverses of the trailing principal blocks of an SPD matrix, grown one row at a time.

    Element ``k`` is ``inv(matrix[-(k+1):, -(k+1):])``.
    """
    m = np.asarray(matrix, dtype=float)
    p = m.shape[0]
    inv = np.zeros((0, 0))
    out = []
    for i in range(p - 1, -1, -1):
        inv = recursive_inverse_extend(inv, m[i + 1 :, i], m[i, i])
        out.append(inv)
    return out
