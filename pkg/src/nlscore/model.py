"""Spherical two-variance Gaussian speaker model and matched-condition scoring.

The model assumes speaker means are drawn from N(0, between_var * I) and
utterance embeddings from N(mean, within_var * I), both after subtracting
a global center. Everything downstream (enrollment posteriors, predictive
densities, normalized-likelihood scores) is closed form. All log densities
carry their full normalization constants so that score differences are
exact log-likelihood-ratio differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import LabeledDataset
from .errors import EstimationError, ModelError

__all__ = [
    "StatsOptions",
    "DomainStats",
    "EnrollmentModel",
    "estimate_domain_stats",
    "build_enrollment_model",
    "enrollment_models_from_dataset",
    "marginal_log_density",
    "predictive_log_density",
    "nl_log_score",
]


@dataclass(frozen=True)
class StatsOptions:
    """Options for domain statistics estimation.

    min_variance floors both estimated variances to keep densities
    non-degenerate. length_normalize scales every embedding to unit norm
    before estimation; callers who enable it must apply the same
    preprocessing to vectors they score.
    """

    min_variance: float = 1e-6
    length_normalize: bool = False


@dataclass(frozen=True, eq=False)
class DomainStats:
    """Spherical Gaussian statistics of one domain.

    between_var is the per-dimension variance of speaker means,
    within_var the per-dimension variance of utterances around their
    speaker mean. center is the global mean subtracted before any
    density evaluation.
    """

    dim: int
    between_var: float
    within_var: float
    center: np.ndarray = field(repr=False)

    def __eq__(self, other):
        if not isinstance(other, DomainStats):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.between_var == other.between_var
            and self.within_var == other.within_var
            and np.array_equal(self.center, other.center)
        )

    def __post_init__(self):
        if self.dim < 1:
            raise ModelError("dim must be >= 1")
        for name, v in (("between_var", self.between_var), ("within_var", self.within_var)):
            if not (math.isfinite(v) and v > 0):
                raise ModelError(f"{name} must be finite and positive, got {v!r}")
        center = np.asarray(self.center, dtype=np.float64)
        if center.shape != (self.dim,):
            raise ModelError(f"center must have shape ({self.dim},), got {center.shape}")
        if not np.all(np.isfinite(center)):
            raise ModelError("center must be finite")
        center = np.ascontiguousarray(center)
        center.setflags(write=False)
        object.__setattr__(self, "center", center)

    @property
    def marginal_var(self) -> float:
        """Per-dimension variance of an utterance from a random speaker."""
        return self.between_var + self.within_var


@dataclass(frozen=True, eq=False)
class EnrollmentModel:
    """Posterior-predictive distribution of one speaker's next utterance.

    Built from n centered enrollment samples with mean sample_mean under
    a DomainStats model:

        pred_mean = n*b / (n*b + w) * sample_mean
        pred_var  = w + b*w / (n*b + w)

    with b = between_var and w = within_var. The predictive distribution
    is N(pred_mean, pred_var * I) in centered coordinates.
    """

    model_id: str
    n_samples: int
    sample_mean: np.ndarray = field(repr=False)
    pred_mean: np.ndarray = field(repr=False)
    pred_var: float

    def __post_init__(self):
        if self.n_samples < 1:
            raise ModelError("n_samples must be >= 1")
        if not (math.isfinite(self.pred_var) and self.pred_var > 0):
            raise ModelError("pred_var must be finite and positive")
        for name in ("sample_mean", "pred_mean"):
            arr = np.ascontiguousarray(np.asarray(getattr(self, name), dtype=np.float64))
            if arr.ndim != 1 or not np.all(np.isfinite(arr)):
                raise ModelError(f"{name} must be a finite vector")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if self.sample_mean.shape != self.pred_mean.shape:
            raise ModelError("sample_mean and pred_mean must have the same dimension")

    @property
    def dim(self) -> int:
        return self.pred_mean.shape[0]

    def __eq__(self, other):
        if not isinstance(other, EnrollmentModel):
            return NotImplemented
        return (
            self.model_id == other.model_id
            and self.n_samples == other.n_samples
            and self.pred_var == other.pred_var
            and np.array_equal(self.sample_mean, other.sample_mean)
            and np.array_equal(self.pred_mean, other.pred_mean)
        )


def estimate_domain_stats(
    data: LabeledDataset, opts: StatsOptions | None = None
) -> DomainStats:
    """Estimate spherical between/within speaker variances and the center.

    The center is the global mean. within_var pools squared deviations
    from per-speaker means over all speakers with at least two
    utterances (denominator sum of n_k - 1), averaged over dimensions.
    between_var is the population variance of per-speaker means averaged
    over dimensions, minus the sampling correction within_var / nbar,
    where nbar is the harmonic mean of per-speaker counts. Both variances
    are floored at opts.min_variance.
    """
    opts = opts or StatsOptions()
    emb = data.embeddings
    if opts.length_normalize:
        emb = data.length_normalized().embeddings
    groups = data.speaker_indices()
    if len(groups) < 2:
        raise EstimationError(
            f"need at least 2 speakers to estimate between-speaker variance, got {len(groups)}"
        )
    center = emb.mean(axis=0)
    centered = emb - center

    counts = np.array([len(idx) for idx in groups.values()], dtype=np.float64)
    means = np.stack([centered[idx].mean(axis=0) for idx in groups.values()])
    within_df = float((counts - 1.0).sum())
    if within_df < 1.0:
        raise EstimationError(
            "within-speaker variance is unidentifiable: no speaker has 2 or more utterances"
        )
    ss_within = 0.0
    for idx, mean in zip(groups.values(), means):
        ss_within += float(((centered[idx] - mean) ** 2).sum())
    within = ss_within / within_df / data.dim
    within = max(within, opts.min_variance)

    harmonic_n = len(counts) / float((1.0 / counts).sum())
    between_raw = float(means.var(axis=0, ddof=0).mean())
    between = max(between_raw - within / harmonic_n, opts.min_variance)

    for name, v in (("within-speaker", within), ("between-speaker", between)):
        if not (math.isfinite(v) and v > 0):
            raise EstimationError(f"degenerate {name} variance estimate: {v!r}")
    return DomainStats(dim=data.dim, between_var=between, within_var=within, center=center)


def build_enrollment_model(
    stats: DomainStats, model_id: str, samples: Sequence[np.ndarray] | np.ndarray
) -> EnrollmentModel:
    """Build the posterior-predictive model from raw enrollment samples.

    Samples are centered by stats.center before averaging.
    """
    arr = np.asarray(samples, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.size == 0:
        raise ModelError(f"model {model_id!r}: enrollment sample list is empty")
    if arr.ndim != 2 or arr.shape[1] != stats.dim:
        raise ModelError(
            f"model {model_id!r}: samples have dimension {arr.shape[-1]}, stats expect {stats.dim}"
        )
    if not np.all(np.isfinite(arr)):
        raise ModelError(f"model {model_id!r}: samples must be finite")
    n = arr.shape[0]
    sample_mean = (arr - stats.center).mean(axis=0)
    b, w = stats.between_var, stats.within_var
    shrink = n * b / (n * b + w)
    return EnrollmentModel(
        model_id=model_id,
        n_samples=n,
        sample_mean=sample_mean,
        pred_mean=shrink * sample_mean,
        pred_var=w + b * w / (n * b + w),
    )


def enrollment_models_from_dataset(
    stats: DomainStats, data: LabeledDataset
) -> dict[str, EnrollmentModel]:
    """One enrollment model per speaker, from all of that speaker's vectors."""
    return {
        spk: build_enrollment_model(stats, spk, data.embeddings[idx])
        for spk, idx in data.speaker_indices().items()
    }


def _check_dim(stats_or_model, x: np.ndarray, what: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.shape[-1] != stats_or_model.dim:
        raise ModelError(
            f"{what}: vector dimension {arr.shape[-1]} does not match model dimension "
            f"{stats_or_model.dim}"
        )
    return arr


def _gaussian_log_density(diff: np.ndarray, var: float, dim: int):
    q = np.sum(diff * diff, axis=-1)
    return -0.5 * dim * math.log(2.0 * math.pi * var) - q / (2.0 * var)


def marginal_log_density(stats: DomainStats, x: np.ndarray):
    """Exact log density of x under the speaker-averaged (evidence) model.

    After centering, the marginal is N(0, (between_var + within_var) * I).
    Accepts a single vector or a batch with vectors in the last axis;
    returns a scalar or an array of matching leading shape.
    """
    arr = _check_dim(stats, x, "marginal_log_density")
    out = _gaussian_log_density(arr - stats.center, stats.marginal_var, stats.dim)
    return float(out) if out.ndim == 0 else out


def predictive_log_density(model: EnrollmentModel, x: np.ndarray, stats: DomainStats):
    """Exact log density of x under a speaker's posterior-predictive model.

    x is centered by stats.center (the same stats the model was built
    from), then evaluated under N(pred_mean, pred_var * I).
    """
    if model.dim != stats.dim:
        raise ModelError(
            f"model dimension {model.dim} does not match stats dimension {stats.dim}"
        )
    arr = _check_dim(stats, x, "predictive_log_density")
    out = _gaussian_log_density(arr - stats.center - model.pred_mean, model.pred_var, stats.dim)
    return float(out) if out.ndim == 0 else out


def nl_log_score(model: EnrollmentModel, x: np.ndarray, stats: DomainStats):
    """Log normalized likelihood: predictive log density minus evidence.

    Full constants are retained on both terms, so differences of scores
    across trials are exact log-likelihood-ratio differences.
    """
    return predictive_log_density(model, x, stats) - marginal_log_density(stats, x)
