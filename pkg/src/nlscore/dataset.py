"""Labeled embedding datasets.

A dataset is a column-oriented collection of fixed-dimension embedding
vectors, each tagged with an utterance id, a speaker id and a domain id.
Instances are immutable after construction and safe to share across
workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import ModelError


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    utt_ids: tuple[str, ...]
    spk_ids: tuple[str, ...]
    domain_ids: tuple[str, ...]
    embeddings: np.ndarray = field(repr=False)  # (n, dim) float64

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.utt_ids == other.utt_ids
            and self.spk_ids == other.spk_ids
            and self.domain_ids == other.domain_ids
            and np.array_equal(self.embeddings, other.embeddings)
        )

    def __post_init__(self):
        emb = np.asarray(self.embeddings, dtype=np.float64)
        if emb.ndim != 2 or emb.shape[1] < 1:
            raise ModelError("embeddings must be a 2-D (n, dim) array with dim >= 1")
        n = emb.shape[0]
        if not (len(self.utt_ids) == len(self.spk_ids) == len(self.domain_ids) == n):
            raise ModelError("id columns and embedding rows must have equal length")
        if n == 0:
            raise ModelError("dataset must contain at least one record")
        if not np.all(np.isfinite(emb)):
            raise ModelError("embeddings must be finite")
        if len(set(self.utt_ids)) != n:
            raise ModelError("utterance ids must be unique within a dataset")
        emb = np.ascontiguousarray(emb)
        emb.setflags(write=False)
        object.__setattr__(self, "embeddings", emb)
        object.__setattr__(self, "utt_ids", tuple(self.utt_ids))
        object.__setattr__(self, "spk_ids", tuple(self.spk_ids))
        object.__setattr__(self, "domain_ids", tuple(self.domain_ids))

    # -- basic shape ----------------------------------------------------

    def __len__(self) -> int:
        return self.embeddings.shape[0]

    @property
    def dim(self) -> int:
        return self.embeddings.shape[1]

    def records(self) -> Iterator[tuple[str, str, str, np.ndarray]]:
        for i in range(len(self)):
            yield self.utt_ids[i], self.spk_ids[i], self.domain_ids[i], self.embeddings[i]

    @classmethod
    def from_records(
        cls, records: Iterable[tuple[str, str, str, Sequence[float]]]
    ) -> "LabeledDataset":
        utts, spks, doms, vecs = [], [], [], []
        for utt, spk, dom, vec in records:
            utts.append(utt)
            spks.append(spk)
            doms.append(dom)
            vecs.append(np.asarray(vec, dtype=np.float64))
        if not vecs:
            raise ModelError("dataset must contain at least one record")
        return cls(tuple(utts), tuple(spks), tuple(doms), np.vstack(vecs))

    # -- lookups ---------------------------------------------------------

    def speakers(self) -> list[str]:
        """Distinct speaker ids in sorted order."""
        return sorted(set(self.spk_ids))

    def domains(self) -> list[str]:
        return sorted(set(self.domain_ids))

    def speaker_indices(self) -> dict[str, np.ndarray]:
        """Row indices per speaker, speakers in sorted order, rows in dataset order."""
        out: dict[str, list[int]] = {}
        for i, spk in enumerate(self.spk_ids):
            out.setdefault(spk, []).append(i)
        return {spk: np.asarray(out[spk], dtype=np.intp) for spk in sorted(out)}

    def vectors_for_speaker(self, spk_id: str) -> np.ndarray:
        idx = [i for i, s in enumerate(self.spk_ids) if s == spk_id]
        if not idx:
            raise ModelError(f"unknown speaker id: {spk_id!r}")
        return self.embeddings[idx]

    def vectors_by_utt(self) -> dict[str, np.ndarray]:
        return {utt: self.embeddings[i] for i, utt in enumerate(self.utt_ids)}

    # -- derived datasets -------------------------------------------------

    def subset(self, indices: Sequence[int] | np.ndarray) -> "LabeledDataset":
        idx = np.asarray(indices, dtype=np.intp)
        return LabeledDataset(
            tuple(self.utt_ids[i] for i in idx),
            tuple(self.spk_ids[i] for i in idx),
            tuple(self.domain_ids[i] for i in idx),
            self.embeddings[idx].copy(),
        )

    def for_domain(self, domain_id: str) -> "LabeledDataset":
        idx = [i for i, d in enumerate(self.domain_ids) if d == domain_id]
        if not idx:
            raise ModelError(f"no records for domain {domain_id!r}")
        return self.subset(idx)

    def for_speakers(self, spk_ids: Iterable[str]) -> "LabeledDataset":
        keep = set(spk_ids)
        idx = [i for i, s in enumerate(self.spk_ids) if s in keep]
        if not idx:
            raise ModelError("speaker selection matched no records")
        return self.subset(idx)

    def relabeled(self, new_spk_ids: Sequence[str]) -> "LabeledDataset":
        """Same records with replacement speaker labels (utterance ids kept)."""
        if len(new_spk_ids) != len(self):
            raise ModelError("relabeling must provide one speaker id per record")
        return LabeledDataset(
            self.utt_ids, tuple(new_spk_ids), self.domain_ids, self.embeddings.copy()
        )

    def length_normalized(self) -> "LabeledDataset":
        """Each embedding scaled to unit Euclidean norm."""
        norms = np.linalg.norm(self.embeddings, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ModelError("cannot length-normalize a zero embedding")
        return LabeledDataset(
            self.utt_ids, self.spk_ids, self.domain_ids, self.embeddings / norms
        )


def concat(datasets: Sequence[LabeledDataset]) -> LabeledDataset:
    """Concatenate datasets in order. Utterance ids must stay unique."""
    if not datasets:
        raise ModelError("cannot concatenate an empty list of datasets")
    dims = {d.dim for d in datasets}
    if len(dims) != 1:
        raise ModelError(f"datasets have mixed dimensions: {sorted(dims)}")
    return LabeledDataset(
        tuple(u for d in datasets for u in d.utt_ids),
        tuple(s for d in datasets for s in d.spk_ids),
        tuple(g for d in datasets for g in d.domain_ids),
        np.vstack([d.embeddings for d in datasets]),
    )
