"""Trial construction, batch scoring across methods, and EER computation."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .adapt import DomainTransform, dat_log_score, dsd_log_score
from .dataset import LabeledDataset
from .errors import EvalError
from .model import DomainStats, EnrollmentModel, nl_log_score

__all__ = [
    "TARGET",
    "NONTARGET",
    "UNKNOWN",
    "Trial",
    "ScoreRecord",
    "EerResult",
    "ScoringArtifacts",
    "METHODS",
    "make_trials",
    "score_trials",
    "compute_eer",
]

TARGET = "target"
NONTARGET = "nontarget"
UNKNOWN = "unknown"
_LABELS = (TARGET, NONTARGET, UNKNOWN)

METHODS = ("nl", "mdt", "dat", "dsd", "cosine")


@dataclass(frozen=True)
class Trial:
    model_id: str
    test_utt_id: str
    label: str = UNKNOWN

    def __post_init__(self):
        if not self.model_id or not self.test_utt_id:
            raise EvalError("trial ids must be non-empty")
        if self.label not in _LABELS:
            raise EvalError(f"unknown trial label {self.label!r}")


@dataclass(frozen=True)
class ScoreRecord:
    model_id: str
    test_utt_id: str
    score: float
    label: str = UNKNOWN

    def __post_init__(self):
        if not math.isfinite(self.score):
            raise EvalError(
                f"non-finite score for trial ({self.model_id}, {self.test_utt_id})"
            )
        if self.label not in _LABELS:
            raise EvalError(f"unknown trial label {self.label!r}")


@dataclass(frozen=True)
class EerResult:
    eer: float
    threshold: float
    n_target: int
    n_nontarget: int

    @property
    def eer_percent(self) -> float:
        return 100.0 * self.eer


@dataclass
class ScoringArtifacts:
    """Everything a scoring method may need.

    enroll_stats are the statistics the models were built with (for the
    multi-domain method these are the pooled statistics). test_vectors
    maps test utterance ids to raw embedding vectors.
    """

    test_vectors: dict[str, np.ndarray]
    models: dict[str, EnrollmentModel] | None = None
    enroll_stats: DomainStats | None = None
    test_stats: DomainStats | None = None
    transform: DomainTransform | None = None


def make_trials(
    enroll_data: LabeledDataset,
    test_data: LabeledDataset,
    max_nontarget_per_model: int | None = None,
    seed: int = 0,
) -> list[Trial]:
    """One model per enrollment speaker; exhaustive targets, sampled nontargets.

    Target trials pair each speaker with all of that speaker's test
    utterances. Nontarget trials pair the speaker with other speakers'
    test utterances, subsampled per model (seeded, without replacement)
    when max_nontarget_per_model is given; None keeps them all. A test
    utterance id may not appear in its own model's enrollment set.
    Speakers with no test utterances are skipped with a warning.
    """
    rng = np.random.default_rng(seed)
    test_by_spk = test_data.speaker_indices()
    test_utts = np.asarray(test_data.utt_ids)
    test_spks = np.asarray(test_data.spk_ids)
    enroll_by_spk = enroll_data.speaker_indices()

    trials: list[Trial] = []
    for spk, enroll_idx in enroll_by_spk.items():
        own = test_by_spk.get(spk)
        if own is None or len(own) == 0:
            warnings.warn(f"speaker {spk!r} has no test utterances; skipped")
            continue
        enrolled_utts = {enroll_data.utt_ids[i] for i in enroll_idx}
        leaked = enrolled_utts.intersection(test_utts[own])
        if leaked:
            raise EvalError(
                f"test utterances {sorted(leaked)} appear in the enrollment set of "
                f"speaker {spk!r}"
            )
        for utt in test_utts[own]:
            trials.append(Trial(spk, str(utt), TARGET))
        other = np.flatnonzero(test_spks != spk)
        if max_nontarget_per_model is not None and len(other) > max_nontarget_per_model:
            chosen = rng.choice(other, size=max_nontarget_per_model, replace=False)
            other = np.sort(chosen)
        for i in other:
            trials.append(Trial(spk, str(test_utts[i]), NONTARGET))
    if not trials:
        raise EvalError("no trials could be constructed")
    return trials


def _require(artifacts: ScoringArtifacts, method: str, *names: str):
    for name in names:
        if getattr(artifacts, name) is None:
            raise EvalError(f"method {method!r} requires artifact {name!r}")


def _cosine(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    na = np.linalg.norm(a)
    nb = np.linalg.norm(b, axis=-1)
    denom = na * nb
    out = np.where(denom > 0, (b @ a) / np.where(denom > 0, denom, 1.0), 0.0)
    return out


def score_trials(
    trials: list[Trial], method: str, artifacts: ScoringArtifacts
) -> list[ScoreRecord]:
    """Score every trial with the chosen method, preserving trial order.

    Methods: "nl" (matched-condition normalized likelihood), "mdt" (the
    same scorer under pooled multi-domain statistics), "dat", "dsd", and
    "cosine" (cosine similarity of centered vectors, diagnostic only).
    Raises EvalError naming any artifact the method needs but is missing.
    """
    method = method.lower()
    if method not in METHODS:
        raise EvalError(f"unknown scoring method {method!r}; choose from {METHODS}")
    if not trials:
        raise EvalError("empty trial list")
    _require(artifacts, method, "test_vectors", "models", "enroll_stats")
    if method == "dsd":
        _require(artifacts, method, "transform", "test_stats")
    elif method == "dat":
        _require(artifacts, method, "transform")

    models = artifacts.models
    stats = artifacts.enroll_stats
    vectors = artifacts.test_vectors

    # group trial rows per model so each model scores one vector batch
    by_model: dict[str, list[int]] = {}
    for i, tr in enumerate(trials):
        if tr.model_id not in models:
            raise EvalError(f"no enrollment model for id {tr.model_id!r}")
        if tr.test_utt_id not in vectors:
            raise EvalError(f"no test vector for utterance {tr.test_utt_id!r}")
        by_model.setdefault(tr.model_id, []).append(i)

    scores = np.empty(len(trials))
    for model_id, rows in by_model.items():
        model = models[model_id]
        x = np.stack([vectors[trials[i].test_utt_id] for i in rows])
        if method in ("nl", "mdt"):
            s = nl_log_score(model, x, stats)
        elif method == "dsd":
            s = dsd_log_score(artifacts.transform, model, x, stats, artifacts.test_stats)
        elif method == "dat":
            s = dat_log_score(artifacts.transform, model, x, stats)
        else:  # cosine
            s = _cosine(model.sample_mean, x - stats.center)
        scores[rows] = np.atleast_1d(s)

    return [
        ScoreRecord(tr.model_id, tr.test_utt_id, float(scores[i]), tr.label)
        for i, tr in enumerate(trials)
    ]


def compute_eer(records: list[ScoreRecord]) -> EerResult:
    """Equal error rate with a pinned threshold-sweep convention.

    At a threshold t, the false-acceptance rate counts nontarget scores
    >= t and the false-rejection rate counts target scores < t.
    Candidate thresholds are the distinct scores plus one point above the
    maximum; the EER is read at the FAR/FRR crossing with linear
    interpolation between adjacent candidates. When the crossing lands
    exactly on a candidate, the reported threshold is the midpoint of the
    bracketing distinct scores, which places it strictly between the two
    populations whenever they separate.
    """
    if any(r.label == UNKNOWN for r in records):
        raise EvalError("cannot compute EER: records with unknown labels present")
    target = np.array([r.score for r in records if r.label == TARGET])
    nontarget = np.array([r.score for r in records if r.label == NONTARGET])
    if len(target) == 0 or len(nontarget) == 0:
        raise EvalError(
            f"EER needs both trial kinds: {len(target)} target, {len(nontarget)} nontarget"
        )

    scores = np.unique(np.concatenate([target, nontarget]))
    # candidate thresholds: every distinct score, then one above the max
    thresholds = np.append(scores, scores[-1] + 1.0)
    target_sorted = np.sort(target)
    nontarget_sorted = np.sort(nontarget)
    # FAR(t) = #(nontarget >= t) / n ; FRR(t) = #(target < t) / n
    below_nt = np.searchsorted(nontarget_sorted, thresholds, side="left")
    far = (len(nontarget) - below_nt) / len(nontarget)
    frr = np.searchsorted(target_sorted, thresholds, side="left") / len(target)
    gap = far - frr  # non-increasing in t; starts at 1, ends at -1

    idx = int(np.argmax(gap <= 0))
    if gap[idx] == 0.0:
        eer = far[idx]
        if idx >= 1:
            threshold = 0.5 * (thresholds[idx - 1] + thresholds[idx])
        else:  # unreachable for non-empty score sets; kept for safety
            threshold = thresholds[idx]
    else:
        alpha = gap[idx - 1] / (gap[idx - 1] - gap[idx])
        eer = far[idx - 1] + alpha * (far[idx] - far[idx - 1])
        threshold = thresholds[idx - 1] + alpha * (thresholds[idx] - thresholds[idx - 1])
    return EerResult(
        eer=float(eer),
        threshold=float(threshold),
        n_target=len(target),
        n_nontarget=len(nontarget),
    )
