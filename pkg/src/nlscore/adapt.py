"""Cross-domain adaptation: linear transforms, their ML training, and the
decoupled (DSD), domain-adaptation (DAT) and multi-domain (MDT) scorers.

The linear transform maps test-condition vectors into enrollment-condition
coordinates. Its parameters are fit by maximizing the summed log density
of transformed cross-domain vectors under the speakers' enrollment
posterior-predictive models, with an analytic gradient and the Adam
optimizer. DSD then normalizes with statistics estimated in the test
condition, while DAT normalizes with the enrollment-condition statistics
applied to the transformed vector; the two scores differ only in that
normalization term.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dataset import LabeledDataset
from .errors import EstimationError, ModelError, TrainError, TrainWarning
from .model import (
    DomainStats,
    EnrollmentModel,
    StatsOptions,
    build_enrollment_model,
    estimate_domain_stats,
    marginal_log_density,
    predictive_log_density,
)

__all__ = [
    "DomainTransform",
    "TrainConfig",
    "TrainResult",
    "LabelMixConfig",
    "transform_apply",
    "transformed_predictive_log_density",
    "dsd_log_score",
    "dat_log_score",
    "objective_and_gradient",
    "fit_transform",
    "train_transform",
    "mdt_estimate",
    "mix_labels",
]

# Allowed per-step objective decrease before a step counts as a
# monotonicity violation (relative to max(1, |objective|)).
MONOTONICITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class DomainTransform:
    """Affine map x = matrix @ xhat + offset from test to enrollment coordinates."""

    matrix: np.ndarray = field(repr=False)  # (dim, dim)
    offset: np.ndarray = field(repr=False)  # (dim,)

    def __post_init__(self):
        m = np.ascontiguousarray(np.asarray(self.matrix, dtype=np.float64))
        b = np.ascontiguousarray(np.asarray(self.offset, dtype=np.float64))
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ModelError(f"transform matrix must be square, got shape {m.shape}")
        if b.shape != (m.shape[0],):
            raise ModelError(
                f"transform offset shape {b.shape} does not match matrix {m.shape}"
            )
        if not (np.all(np.isfinite(m)) and np.all(np.isfinite(b))):
            raise ModelError("transform entries must be finite")
        m.setflags(write=False)
        b.setflags(write=False)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", b)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def identity(cls, dim: int) -> "DomainTransform":
        return cls(np.eye(dim), np.zeros(dim))

    def __eq__(self, other):
        if not isinstance(other, DomainTransform):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix) and np.array_equal(
            self.offset, other.offset
        )


@dataclass(frozen=True)
class TrainConfig:
    """Adam settings for transform training.

    batch_size None means full batch. With minibatches the convergence
    check runs on the full objective at epoch boundaries. init is
    "identity" or "random_orthogonal"; the seed drives the orthogonal
    init and minibatch shuffling, so runs are deterministic per seed.
    """

    learning_rate: float = 1e-3
    max_iters: int = 2000
    batch_size: int | None = None
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    convergence_tol: float = 1e-7
    init: str = "identity"

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise TrainError("learning_rate must be positive")
        if self.max_iters < 1:
            raise TrainError("max_iters must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise TrainError("batch_size must be >= 1 or None for full batch")
        if not (0.0 < self.adam_beta1 < 1.0 and 0.0 < self.adam_beta2 < 1.0):
            raise TrainError("adam betas must lie in (0, 1)")
        if self.adam_eps <= 0:
            raise TrainError("adam_eps must be positive")
        if self.convergence_tol <= 0:
            raise TrainError("convergence_tol must be positive")
        if self.init not in ("identity", "random_orthogonal"):
            raise TrainError(f"unknown init {self.init!r}")


@dataclass(frozen=True, eq=False)
class TrainResult:
    """Transform training outcome with the per-step objective trace."""

    transform: DomainTransform
    objective_history: np.ndarray  # objective value entering each step
    n_iters: int
    converged: bool
    monotonicity_violations: int


@dataclass(frozen=True)
class LabelMixConfig:
    """Controlled sharing of speaker labels across domains.

    proportion_independent is the fraction of speakers that keep a single
    label across domains; the remaining speakers are split into one
    synthetic speaker per domain.
    """

    proportion_independent: float
    seed: int

    def __post_init__(self):
        if not 0.0 <= self.proportion_independent <= 1.0:
            raise EstimationError("proportion_independent must lie in [0, 1]")


# ---------------------------------------------------------------------------
# scoring
# ---------------------------------------------------------------------------


def transform_apply(t: DomainTransform, xhat: np.ndarray) -> np.ndarray:
    """Apply the affine map to a vector or a batch of row vectors."""
    arr = np.asarray(xhat, dtype=np.float64)
    if arr.shape[-1] != t.dim:
        raise ModelError(
            f"transform_apply: vector dimension {arr.shape[-1]} does not match "
            f"transform dimension {t.dim}"
        )
    return arr @ t.matrix.T + t.offset


def transformed_predictive_log_density(
    t: DomainTransform, model: EnrollmentModel, xhat: np.ndarray, enroll_stats: DomainStats
):
    """Predictive log density of a test-condition vector after mapping it
    into enrollment coordinates. Centering by enroll_stats.center applies
    to the transformed vector."""
    return predictive_log_density(model, transform_apply(t, xhat), enroll_stats)


def dsd_log_score(
    t: DomainTransform,
    model: EnrollmentModel,
    xhat: np.ndarray,
    enroll_stats: DomainStats,
    test_stats: DomainStats,
):
    """Decoupled score: prediction under enrollment statistics via the
    transform, normalization under the test-condition statistics on the
    raw vector."""
    return transformed_predictive_log_density(t, model, xhat, enroll_stats) - marginal_log_density(
        test_stats, xhat
    )


def dat_log_score(
    t: DomainTransform,
    model: EnrollmentModel,
    xhat: np.ndarray,
    enroll_stats: DomainStats,
):
    """Domain-adaptation score: identical to the decoupled score except the
    normalization uses the enrollment-condition model on the transformed
    vector."""
    transformed = transform_apply(t, xhat)
    return predictive_log_density(model, transformed, enroll_stats) - marginal_log_density(
        enroll_stats, transformed
    )


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _stack_batch(
    test_vectors: np.ndarray, models: Sequence[EnrollmentModel], enroll_stats: DomainStats
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Targets in raw coordinates (pred_mean + center) and weights per row."""
    x = np.asarray(test_vectors, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[0] != len(models):
        raise TrainError(
            f"batch has {x.shape[0]} vectors but {len(models)} aligned models"
        )
    if x.shape[0] == 0:
        dim = enroll_stats.dim
        return np.zeros((0, dim)), np.zeros((0, dim)), np.zeros(0)
    if not np.all(np.isfinite(x)):
        raise TrainError("non-finite test vector in training batch")
    targets = np.stack([m.pred_mean for m in models]) + enroll_stats.center
    pred_vars = np.array([m.pred_var for m in models], dtype=np.float64)
    return x, targets, pred_vars


def _objective_and_gradient_arrays(
    matrix: np.ndarray,
    offset: np.ndarray,
    x: np.ndarray,
    targets: np.ndarray,
    pred_vars: np.ndarray,
    dim: int,
) -> tuple[float, np.ndarray, np.ndarray]:
    if x.shape[0] == 0:
        return 0.0, np.zeros_like(matrix), np.zeros_like(offset)
    residual = x @ matrix.T + offset - targets
    inv_var = 1.0 / pred_vars
    const = -0.5 * dim * np.log(2.0 * np.pi * pred_vars).sum()
    quad = 0.5 * float(((residual * residual).sum(axis=1) * inv_var).sum())
    objective = const - quad
    weighted = residual * inv_var[:, None]
    grad_offset = -weighted.sum(axis=0)
    grad_matrix = -weighted.T @ x
    return objective, grad_matrix, grad_offset


def objective_and_gradient(
    t: DomainTransform,
    test_vectors: np.ndarray,
    models: Sequence[EnrollmentModel],
    enroll_stats: DomainStats,
) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Training objective and its analytic gradient.

    The objective is the sum over batch rows of the transformed
    predictive log density; models[i] is the enrollment model paired with
    test_vectors[i]. Returns (objective, (grad_matrix, grad_offset)).
    An empty batch yields objective 0 and zero gradients.
    """
    x, targets, pred_vars = _stack_batch(test_vectors, models, enroll_stats)
    obj, gm, gb = _objective_and_gradient_arrays(
        t.matrix, t.offset, x, targets, pred_vars, enroll_stats.dim
    )
    if not (math.isfinite(obj) and np.all(np.isfinite(gm)) and np.all(np.isfinite(gb))):
        raise TrainError("non-finite objective or gradient")
    return obj, (gm, gb)


def _random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def training_pairs(
    enroll_data: LabeledDataset, test_data: LabeledDataset, enroll_stats: DomainStats
) -> tuple[np.ndarray, list[EnrollmentModel]]:
    """Cross-domain training batch over speakers present in both datasets.

    One enrollment model per shared speaker, built from all of that
    speaker's enrollment-condition vectors; each of the speaker's
    test-condition vectors becomes one batch row paired with that model.
    """
    shared = sorted(set(enroll_data.speakers()) & set(test_data.speakers()))
    if not shared:
        raise TrainError("no shared speaker ids between enrollment and test data")
    if enroll_data.dim != test_data.dim or enroll_data.dim != enroll_stats.dim:
        raise TrainError("enrollment data, test data and stats dimensions must match")
    test_groups = test_data.speaker_indices()
    rows: list[np.ndarray] = []
    models: list[EnrollmentModel] = []
    for spk in shared:
        model = build_enrollment_model(enroll_stats, spk, enroll_data.vectors_for_speaker(spk))
        idx = test_groups[spk]
        rows.append(test_data.embeddings[idx])
        models.extend([model] * len(idx))
    return np.vstack(rows), models


def fit_transform(
    enroll_data: LabeledDataset,
    test_data: LabeledDataset,
    enroll_stats: DomainStats,
    cfg: TrainConfig | None = None,
) -> TrainResult:
    """Maximize the summed transformed predictive log density with Adam.

    Runs until max_iters or until the relative objective change
    |L_t - L_{t-1}| / max(1, |L_{t-1}|) drops below convergence_tol
    (checked on the full objective; at epoch boundaries when
    minibatching). Deterministic given cfg.seed.
    """
    cfg = cfg or TrainConfig()
    vectors, models = training_pairs(enroll_data, test_data, enroll_stats)
    x, targets, pred_vars = _stack_batch(vectors, models, enroll_stats)
    dim = enroll_stats.dim
    n = x.shape[0]

    rng = np.random.default_rng(cfg.seed)
    if cfg.init == "identity":
        matrix = np.eye(dim)
    else:
        matrix = _random_orthogonal(dim, rng)
    offset = np.zeros(dim)

    m_matrix = np.zeros_like(matrix)
    v_matrix = np.zeros_like(matrix)
    m_offset = np.zeros_like(offset)
    v_offset = np.zeros_like(offset)
    beta1, beta2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps

    full_batch = cfg.batch_size is None or cfg.batch_size >= n
    steps_per_epoch = 1 if full_batch else int(np.ceil(n / cfg.batch_size))
    order = np.arange(n)

    history: list[float] = []
    prev_check: float | None = None
    converged = False
    steps = 0
    for step in range(1, cfg.max_iters + 1):
        if full_batch:
            bx, bt, bv = x, targets, pred_vars
        else:
            pos = (step - 1) % steps_per_epoch
            if pos == 0:
                order = rng.permutation(n)
            sel = order[pos * cfg.batch_size : (pos + 1) * cfg.batch_size]
            bx, bt, bv = x[sel], targets[sel], pred_vars[sel]

        obj, grad_matrix, grad_offset = _objective_and_gradient_arrays(
            matrix, offset, bx, bt, bv, dim
        )
        if not (
            math.isfinite(obj)
            and np.all(np.isfinite(grad_matrix))
            and np.all(np.isfinite(grad_offset))
        ):
            raise TrainError(f"non-finite objective at iteration {step}")

        if full_batch:
            full_obj = obj
        else:
            full_obj, _, _ = _objective_and_gradient_arrays(
                matrix, offset, x, targets, pred_vars, dim
            )
        history.append(full_obj)

        # ascend: Adam on the negated gradient
        m_matrix = beta1 * m_matrix + (1 - beta1) * (-grad_matrix)
        v_matrix = beta2 * v_matrix + (1 - beta2) * grad_matrix**2
        m_offset = beta1 * m_offset + (1 - beta1) * (-grad_offset)
        v_offset = beta2 * v_offset + (1 - beta2) * grad_offset**2
        bias1 = 1 - beta1**step
        bias2 = 1 - beta2**step
        matrix = matrix - cfg.learning_rate * (m_matrix / bias1) / (
            np.sqrt(v_matrix / bias2) + eps
        )
        offset = offset - cfg.learning_rate * (m_offset / bias1) / (
            np.sqrt(v_offset / bias2) + eps
        )
        steps = step

        at_check = full_batch or step % steps_per_epoch == 0
        if at_check:
            if prev_check is not None:
                rel = abs(full_obj - prev_check) / max(1.0, abs(prev_check))
                if rel < cfg.convergence_tol:
                    converged = True
                    break
            prev_check = full_obj

    hist = np.asarray(history)
    if cfg.init == "identity" and len(hist) > 50 and n > 0:
        if hist[1:51].max() <= hist[0]:
            warnings.warn(
                "objective did not improve over the first 50 iterations from the "
                "identity initialization",
                TrainWarning,
                stacklevel=2,
            )
    allowed_drop = MONOTONICITY_TOL * np.maximum(1.0, np.abs(hist[:-1]))
    violations = int((np.diff(hist) < -allowed_drop).sum()) if len(hist) > 1 else 0
    if len(hist) > 1 and violations > 0.01 * (len(hist) - 1):
        warnings.warn(
            f"objective decreased on {violations} of {len(hist) - 1} steps",
            TrainWarning,
            stacklevel=2,
        )
    return TrainResult(
        transform=DomainTransform(matrix, offset),
        objective_history=hist,
        n_iters=steps,
        converged=converged,
        monotonicity_violations=violations,
    )


def train_transform(
    enroll_data: LabeledDataset,
    test_data: LabeledDataset,
    enroll_stats: DomainStats,
    cfg: TrainConfig | None = None,
) -> DomainTransform:
    """Train and return just the transform; see fit_transform for details."""
    return fit_transform(enroll_data, test_data, enroll_stats, cfg).transform


# ---------------------------------------------------------------------------
# multi-domain training
# ---------------------------------------------------------------------------


def mix_labels(data: LabeledDataset, mix: LabelMixConfig) -> LabeledDataset:
    """Relabel pooled cross-domain data with a controlled label split.

    Speakers are sorted, shuffled with the seeded generator, and the
    first round(proportion * n) keep one label across domains; every
    other speaker is split into per-domain labels "spk::domain".
    """
    speakers = data.speakers()
    rng = np.random.default_rng(mix.seed)
    order = rng.permutation(len(speakers))
    n_independent = int(round(mix.proportion_independent * len(speakers)))
    independent = {speakers[i] for i in order[:n_independent]}
    new_labels = tuple(
        spk if spk in independent else f"{spk}::{dom}"
        for spk, dom in zip(data.spk_ids, data.domain_ids)
    )
    return data.relabeled(new_labels)


def mdt_estimate(
    pooled: LabeledDataset, mix: LabelMixConfig, opts: StatsOptions | None = None
) -> DomainStats:
    """Multi-domain statistics from pooled data with controlled labels.

    Requires at least two domains in the pool; relabels per mix, then
    runs the ordinary statistics estimator on the result.
    """
    if len(pooled.domains()) < 2:
        raise EstimationError(
            "multi-domain estimation needs data from at least 2 domains, "
            f"got {pooled.domains()}"
        )
    return estimate_domain_stats(mix_labels(pooled, mix), opts)
