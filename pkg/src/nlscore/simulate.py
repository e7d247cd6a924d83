"""Synthetic cross-domain world generator with known ground truth.

Speaker means and utterances follow the spherical two-variance Gaussian
model in a canonical domain; every other domain sees the same speakers
through an affine channel G = scale * Q (Q a seeded random rotation) plus
a shift, with fresh within-speaker noise per domain. Restricting channels
to scaled rotations keeps every domain exactly spherical, so the true
statistics of each domain and the optimal inverse transform are known in
closed form.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adapt import DomainTransform
from .dataset import LabeledDataset
from .errors import ConfigError
from .model import DomainStats

__all__ = ["WorldConfig", "DomainChannel", "WorldTruth", "generate_world"]


@dataclass(frozen=True)
class WorldConfig:
    """Parameters of a synthetic multi-domain world.

    The first entry of domains is the canonical (enrollment) domain;
    every other domain gets its own channel. rotation_seed drives the
    channel geometry, sample_seed the data draws. identity_rotation
    forces every channel rotation to the identity (pure scale + shift),
    which is the way to build a world with no mismatch at all.
    """

    dim: int = 16
    n_speakers: int = 260
    n_utts_per_domain: int = 20
    between_var: float = 1.0
    within_var: float = 0.5
    channel_scale: float = 1.5
    channel_shift_norm: float = 1.0
    rotation_seed: int = 0
    sample_seed: int = 0
    domains: tuple[str, ...] = ("A", "B")
    identity_rotation: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError("dim must be >= 1")
        if self.n_speakers < 2:
            raise ConfigError("n_speakers must be >= 2")
        if self.n_utts_per_domain < 1:
            raise ConfigError("n_utts_per_domain must be >= 1")
        if not (self.between_var > 0 and self.within_var > 0):
            raise ConfigError("between_var and within_var must be positive")
        if self.channel_scale <= 0:
            raise ConfigError("channel_scale must be positive")
        if self.channel_shift_norm < 0:
            raise ConfigError("channel_shift_norm must be non-negative")
        if len(self.domains) < 1:
            raise ConfigError("at least one domain id is required")
        if len(set(self.domains)) != len(self.domains):
            raise ConfigError("domain ids must be unique")
        object.__setattr__(self, "domains", tuple(self.domains))


@dataclass(frozen=True, eq=False)
class DomainChannel:
    """Affine channel mapping canonical vectors into one domain."""

    rotation: np.ndarray = field(repr=False)  # orthogonal (dim, dim)
    scale: float
    shift: np.ndarray = field(repr=False)

    @property
    def matrix(self) -> np.ndarray:
        return self.scale * self.rotation

    def inverse_transform(self) -> DomainTransform:
        """Exact inverse map back to canonical coordinates."""
        inv = self.rotation.T / self.scale
        return DomainTransform(matrix=inv, offset=-inv @ self.shift)

    def implied_stats(self, canonical: DomainStats) -> DomainStats:
        """True statistics of this domain under the scaled-rotation closure."""
        s2 = self.scale**2
        return DomainStats(
            dim=canonical.dim,
            between_var=s2 * canonical.between_var,
            within_var=s2 * canonical.within_var,
            center=self.matrix @ canonical.center + self.shift,
        )


@dataclass(frozen=True, eq=False)
class WorldTruth:
    """Ground truth of a generated world.

    true_stats holds the exact generating statistics per domain
    (canonical domain included); channels holds the affine channel of
    every non-canonical domain.
    """

    speaker_means: np.ndarray = field(repr=False)  # (n_speakers, dim)
    canonical_domain: str
    true_stats: dict[str, DomainStats] = field(repr=False)
    channels: dict[str, DomainChannel] = field(repr=False)


def _random_rotation(dim: int, rng: np.random.Generator) -> np.ndarray:
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def generate_world(cfg: WorldConfig) -> tuple[dict[str, LabeledDataset], WorldTruth]:
    """Draw one dataset per domain plus the generating ground truth.

    Deterministic given (rotation_seed, sample_seed). Within-speaker
    noise is redrawn per domain, mirroring parallel recordings of the
    same speakers on different devices.
    """
    rot_rng = np.random.default_rng(cfg.rotation_seed)
    samp_rng = np.random.default_rng(cfg.sample_seed)
    canonical = cfg.domains[0]
    canonical_stats = DomainStats(
        dim=cfg.dim,
        between_var=cfg.between_var,
        within_var=cfg.within_var,
        center=np.zeros(cfg.dim),
    )

    channels: dict[str, DomainChannel] = {}
    for dom in cfg.domains[1:]:
        rotation = np.eye(cfg.dim) if cfg.identity_rotation else _random_rotation(cfg.dim, rot_rng)
        if cfg.channel_shift_norm > 0:
            direction = rot_rng.standard_normal(cfg.dim)
            shift = direction / np.linalg.norm(direction) * cfg.channel_shift_norm
        else:
            shift = np.zeros(cfg.dim)
        channels[dom] = DomainChannel(rotation=rotation, scale=cfg.channel_scale, shift=shift)

    spk_ids = [f"s{k:04d}" for k in range(cfg.n_speakers)]
    means = samp_rng.standard_normal((cfg.n_speakers, cfg.dim)) * np.sqrt(cfg.between_var)

    datasets: dict[str, LabeledDataset] = {}
    true_stats: dict[str, DomainStats] = {canonical: canonical_stats}
    for dom in cfg.domains:
        noise = samp_rng.standard_normal(
            (cfg.n_speakers, cfg.n_utts_per_domain, cfg.dim)
        ) * np.sqrt(cfg.within_var)
        vectors = means[:, None, :] + noise
        if dom != canonical:
            chan = channels[dom]
            vectors = vectors @ chan.matrix.T + chan.shift
            true_stats[dom] = chan.implied_stats(canonical_stats)
        flat = vectors.reshape(-1, cfg.dim)
        utts = tuple(
            f"{spk}-{dom}-{j:04d}"
            for spk in spk_ids
            for j in range(cfg.n_utts_per_domain)
        )
        spks = tuple(spk for spk in spk_ids for _ in range(cfg.n_utts_per_domain))
        doms = tuple(dom for _ in range(len(flat)))
        datasets[dom] = LabeledDataset(utts, spks, doms, flat)

    truth = WorldTruth(
        speaker_means=means,
        canonical_domain=canonical,
        true_stats=true_stats,
        channels=channels,
    )
    return datasets, truth
