import numpy as np
import pytest

from nlscore import LabeledDataset, WorldConfig, generate_world


def dataset_from_arrays(vectors_by_speaker, domain="A", prefix="u"):
    """Build a dataset from {speaker: (n, dim) array}."""
    records = []
    counter = 0
    for spk in sorted(vectors_by_speaker):
        for vec in np.atleast_2d(vectors_by_speaker[spk]):
            records.append((f"{prefix}{counter:05d}", spk, domain, vec))
            counter += 1
    return LabeledDataset.from_records(records)


def sample_two_level(rng, n_speakers, n_utts, dim, between, within):
    """Direct draw from the two-level Gaussian generative model."""
    means = rng.standard_normal((n_speakers, dim)) * np.sqrt(between)
    return means[:, None, :] + rng.standard_normal((n_speakers, n_utts, dim)) * np.sqrt(within)


@pytest.fixture(scope="session")
def small_world():
    """Two-domain mismatched world, small enough for fast tests."""
    cfg = WorldConfig(
        dim=8,
        n_speakers=60,
        n_utts_per_domain=10,
        between_var=1.0,
        within_var=0.5,
        channel_scale=1.5,
        channel_shift_norm=1.0,
        rotation_seed=11,
        sample_seed=12,
    )
    datasets, truth = generate_world(cfg)
    return cfg, datasets, truth
