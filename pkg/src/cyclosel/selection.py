"""Training-set selection: chained time-posterior scorer (MAP) and the CT/CD baselines.

The chained model factorises ``p(x | t)`` into ``D`` univariate linear
regressions, dimension ``d`` regressed on the preceding ``d - 1`` features
and a time encoding of the day-of-year stamp. Scoring a test vector against
every candidate timestamp only varies the time encoding ``phi(t)``, so each
factor's predictive mean is affine in ``phi`` and its variance quadratic in
``phi``; after a per-test-day precomputation each candidate costs ``O(D)``.

Time encodings:

* ``"cyclic"`` -- ``[cos, sin]`` of the stamp's position on the annual
  cycle, so a factor mean can follow a yearly harmonic;
* ``"linear"`` -- the stamp itself as a single scalar covariate.

Either way the covariates are z-scored with training-pool statistics.
"""

from __future__ import annotations

import datetime as dt
import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from . import bayes
from .core import Dataset, DaySample, FeatureSchema, Standardization, stamp_angle
from .errors import CycloselError, DataError

log = logging.getLogger(__name__)

METHODS = ("CT", "CD", "MAP")
TIME_ENCODINGS = ("cyclic", "linear")
LOG_2PI = float(np.log(2.0 * np.pi))


def time_features(days, encoding: str) -> np.ndarray:
    """Raw ``N x m`` time covariates for day-of-year stamps (not yet z-scored)."""
    days = np.asarray(days, dtype=float)
    if encoding == "cyclic":
        angle = stamp_angle(days)
        return np.column_stack([np.cos(angle), np.sin(angle)])
    if encoding == "linear":
        return days[:, np.newaxis]
    raise DataError(f"time encoding must be one of {TIME_ENCODINGS}, got {encoding!r}")


@dataclass(frozen=True)
class ChainModel:
    dimension_models: tuple[bayes.LinearPosterior, ...]
    schema: FeatureSchema
    ordering: np.ndarray
    standardization: Standardization
    time_encoding: str
    time_mean: np.ndarray
    time_std: np.ndarray

    @property
    def dim(self) -> int:
        return len(self.dimension_models)

    def times(self, days) -> np.ndarray:
        """Time covariates z-scored with the training pool's statistics."""
        return (time_features(days, self.time_encoding) - self.time_mean) / self.time_std


@dataclass(frozen=True)
class TimePosterior:
    candidate_ids: list[str]
    log_scores: np.ndarray
    days: np.ndarray
    dates: list[dt.date]
    normalized: np.ndarray | None = None


@dataclass
class SelectionResult:
    method: str
    selected_ids: list[str]
    scores: np.ndarray
    selection_seconds: float
    indices: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0, dtype=int))

    @property
    def k(self) -> int:
        return len(self.selected_ids)

    def to_dict(self, timing: bool = True) -> dict:
        out = {
            "method": self.method,
            "k": self.k,
            "selected_dates": list(self.selected_ids),
            "scores": [round(float(s), 9) for s in self.scores],
        }
        if timing:
            out["selection_seconds"] = self.selection_seconds
        return out


def fit_chain(
    training: Dataset,
    ordering: Sequence[int] | None = None,
    time_encoding: str = "cyclic",
    noise_floor: float = bayes.NOISE_FLOOR,
    noise_rule: str = "dof",
) -> ChainModel:
    """Fit one Bayesian linear regression per feature dimension along ``ordering``.

    Dimension ``d`` (in chain order) is regressed on dimensions ``0..d-1``
    followed by the time covariates; its noise variance is the residual
    plug-in estimate, floored at ``noise_floor``.
    """
    if training.standardization is None:
        raise DataError("fit_chain needs a standardized training set")
    n, dim = training.features.shape
    ordering = _check_ordering(ordering, dim)
    if n < dim + 2:
        log.warning("chain fit with N=%d samples for D=%d dimensions", n, dim)

    raw_t = time_features(training.days, time_encoding)
    t_mean = raw_t.mean(axis=0)
    t_std = raw_t.std(axis=0)
    t_std[t_std == 0] = 1.0
    tf = (raw_t - t_mean) / t_std
    z = np.column_stack([training.features[:, ordering], tf])
    gram = z.T @ z
    time_idx = list(range(dim, dim + tf.shape[1]))
    models = []
    for d in range(dim):
        idx = list(range(d)) + time_idx
        try:
            post = bayes.plugin_noise_fit(
                gram[np.ix_(idx, idx)], gram[idx, d], float(gram[d, d]), n, floor=noise_floor, rule=noise_rule
            )
        except CycloselError as exc:
            raise type(exc)(f"chain dimension {d} (schema index {ordering[d]}): {exc}") from exc
        models.append(post)
    return ChainModel(
        tuple(models), training.schema, ordering, training.standardization, time_encoding, t_mean, t_std
    )


def _check_ordering(ordering, dim: int) -> np.ndarray:
    if ordering is None:
        return np.arange(dim)
    ordering = np.asarray(ordering, dtype=int)
    if sorted(ordering.tolist()) != list(range(dim)):
        raise DataError(f"ordering must be a permutation of 0..{dim - 1}")
    return ordering


def factor_moments(model: ChainModel, x: np.ndarray) -> tuple[np.ndarray, ...]:
    """Per-dimension coefficients of the predictive moments as functions of ``phi = phi(t)``.

    Returns ``(obs, c, s, alpha, g, b)`` such that factor ``d`` has mean
    ``c[d] + s[d] @ phi`` and variance
    ``alpha[d] + 2 g[d] @ phi + phi @ b[d] @ phi`` (before adding noise).
    """
    xo = np.asarray(x, dtype=float)[model.ordering]
    dim = model.dim
    m = model.dimension_models[0].dim
    c = np.empty(dim)
    s = np.empty((dim, m))
    alpha = np.empty(dim)
    g = np.empty((dim, m))
    b = np.empty((dim, m, m))
    for d, post in enumerate(model.dimension_models):
        prev = xo[:d]
        inv = post.precision_inverse
        c[d] = post.mean_weights[:d] @ prev
        s[d] = post.mean_weights[d:]
        alpha[d] = prev @ inv[:d, :d] @ prev
        g[d] = prev @ inv[:d, d:]
        b[d] = inv[d:, d:]
    return xo, c, s, alpha, g, b


def score_times(model: ChainModel, test_sample: DaySample, candidates: Dataset) -> TimePosterior:
    """Unnormalized log posterior of each candidate's timestamp given ``test_sample``.

    Sum over chain factors of the Gaussian log density of the test value
    under the factor's predictive distribution (noise included) evaluated at
    the candidate's stamp. ``test_sample`` must already be standardized with
    the model's statistics.
    """
    if test_sample.features.shape[0] != model.dim:
        raise DataError(f"test sample has {test_sample.features.shape[0]} features, chain has {model.dim}")
    if candidates.schema.total_dim != model.schema.total_dim:
        raise DataError(f"candidate schema {candidates.schema.name!r} does not match chain schema")

    xo, c, s, alpha, g, b = factor_moments(model, test_sample.features)
    noise = np.array([m.noise_variance for m in model.dimension_models])

    uniq, inverse = np.unique(candidates.days, return_inverse=True)
    phi = model.times(uniq).T  # m x K
    mean = c[:, None] + s @ phi
    var = alpha[:, None] + 2.0 * (g @ phi) + np.einsum("ik,dij,jk->dk", phi, b, phi)
    var = np.maximum(var, 0.0) + noise[:, None]
    resid = xo[:, None] - mean
    per_day = -0.5 * (LOG_2PI + np.log(var) + resid * resid / var).sum(axis=0)

    scores = per_day[inverse]
    if not np.all(np.isfinite(scores)):
        raise DataError("non-finite time posterior score")
    normalized = np.exp(scores - logsumexp(scores)) if len(scores) else scores
    return TimePosterior(candidates.ids, scores, candidates.days.copy(), list(candidates.dates), normalized)


def _rank(scores: np.ndarray, dates: Sequence[dt.date], ids: Sequence[str]) -> np.ndarray:
    """Indices by score desc, then date desc, then id asc."""
    ordinal = np.array([d.toordinal() for d in dates])
    id_rank = np.argsort(np.argsort(np.array(ids, dtype=object), kind="stable"), kind="stable")
    return np.lexsort((id_rank, -ordinal, -np.asarray(scores)))


def _check_k(k: int, n: int) -> None:
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if k > n:
        raise DataError(f"k={k} exceeds the {n} available candidates")


def select_map(model: ChainModel, test_sample: DaySample, candidates: Dataset, k: int) -> SelectionResult:
    start = time.perf_counter()
    _check_k(k, len(candidates))
    post = score_times(model, test_sample, candidates)
    order = _rank(post.log_scores, post.dates, post.candidate_ids)[:k]
    elapsed = time.perf_counter() - start
    return SelectionResult("MAP", [post.candidate_ids[i] for i in order], post.log_scores[order], elapsed, order)


def sample_map(
    model: ChainModel, test_sample: DaySample, candidates: Dataset, k: int, seed: int | Sequence[int]
) -> SelectionResult:
    """Random-draw variant: draw ``k`` candidates without replacement from the normalized posterior."""
    start = time.perf_counter()
    _check_k(k, len(candidates))
    post = score_times(model, test_sample, candidates)
    rng = np.random.default_rng(seed)
    p = post.normalized
    # draws without replacement need at least k nonzero weights
    p = np.maximum(p, np.finfo(float).tiny)
    order = rng.choice(len(p), size=k, replace=False, p=p / p.sum())
    elapsed = time.perf_counter() - start
    return SelectionResult("MAP-DRAW", [post.candidate_ids[i] for i in order], post.log_scores[order], elapsed, order)


def select_ct(candidates: Dataset, test_date: dt.date, k: int) -> SelectionResult:
    """The ``k`` most recent candidates from years before ``test_date``'s year."""
    start = time.perf_counter()
    cutoff = dt.date(test_date.year, 1, 1)
    pool = [i for i, d in enumerate(candidates.dates) if d < cutoff]
    if k < 1:
        raise DataError(f"k must be >= 1, got {k}")
    if len(pool) < k:
        raise DataError(f"only {len(pool)} candidate days before {cutoff}, need k={k}")
    pool.sort(key=lambda i: candidates.dates[i], reverse=True)
    order = np.array(pool[:k], dtype=int)
    scores = np.array([-(test_date - candidates.dates[i]).days for i in order], dtype=float)
    elapsed = time.perf_counter() - start
    ids = candidates.ids
    return SelectionResult("CT", [ids[i] for i in order], scores, elapsed, order)


def select_cd(candidates: Dataset, test_sample: DaySample, k: int) -> SelectionResult:
    """The ``k`` candidates nearest to ``test_sample`` in Euclidean feature distance."""
    start = time.perf_counter()
    if test_sample.features.shape[0] != candidates.schema.total_dim:
        raise DataError(
            f"test sample has {test_sample.features.shape[0]} features, candidates have {candidates.schema.total_dim}"
        )
    _check_k(k, len(candidates))
    dist = np.sqrt(((candidates.features - test_sample.features) ** 2).sum(axis=1))
    order = _rank(-dist, candidates.dates, candidates.ids)[:k]
    elapsed = time.perf_counter() - start
    ids = candidates.ids
    return SelectionResult("CD", [ids[i] for i in order], -dist[order], elapsed, order)
