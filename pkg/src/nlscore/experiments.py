"""Desk-scale experiment drivers: cross-domain method comparison, the
label-proportion sweep, and the training-data-amount sweep.

Each driver splits the available speakers into a training block (used to
estimate statistics and fit transforms) and a held-out evaluation block
(used to enroll models and score trials), runs every ordered domain pair,
and reports equal error rates per method. All randomness derives from a
single master seed, so reruns are bit-identical.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .adapt import LabelMixConfig, TrainConfig, mdt_estimate, train_transform
from .dataset import LabeledDataset, concat
from .errors import EvalError
from .model import (
    DomainStats,
    StatsOptions,
    enrollment_models_from_dataset,
    estimate_domain_stats,
)
from .scoring import EerResult, ScoringArtifacts, compute_eer, make_trials, score_trials
from .simulate import WorldConfig, generate_world

__all__ = [
    "ExperimentConfig",
    "ResultRow",
    "run_table1_sweep",
    "run_table2_experiment",
    "run_table3_sweep",
    "format_method_table",
    "format_proportion_table",
    "format_count_table",
]


@dataclass(frozen=True)
class ExperimentConfig:
    """Protocol knobs shared by the experiment drivers.

    n_enroll_utts vectors per speaker and domain go to enrollment, the
    rest to test. mdt_proportion is the label-sharing fraction used for
    the multi-domain baseline outside the dedicated sweep.
    """

    n_eval_speakers: int = 60
    n_enroll_utts: int = 3
    max_nontarget_per_model: int | None = None
    mdt_proportion: float = 1.0
    seed: int = 0
    stats_options: StatsOptions = StatsOptions()
    train: TrainConfig = TrainConfig()
    parallel: bool = False

    def __post_init__(self):
        if self.n_eval_speakers < 2:
            raise EvalError("n_eval_speakers must be >= 2")
        if self.n_enroll_utts < 1:
            raise EvalError("n_enroll_utts must be >= 1")
        if not 0.0 <= self.mdt_proportion <= 1.0:
            raise EvalError("mdt_proportion must lie in [0, 1]")


@dataclass(frozen=True)
class ResultRow:
    """One experiment cell: enrollment-test case, method, and its EER."""

    case: str
    method: str
    n_speakers: int
    proportion: float | None
    eer: EerResult


def _derived_seeds(seed: int) -> tuple[int, int, int, int]:
    children = np.random.SeedSequence(seed).spawn(4)
    return tuple(int(c.generate_state(1)[0]) for c in children)


def _split_enroll_test(
    data: LabeledDataset, n_enroll: int, seed: int
) -> tuple[LabeledDataset, LabeledDataset]:
    """Per-speaker seeded split into enrollment and test subsets."""
    rng = np.random.default_rng(seed)
    enroll_idx: list[int] = []
    test_idx: list[int] = []
    for spk, idx in data.speaker_indices().items():
        if len(idx) <= n_enroll:
            enroll_idx.extend(int(i) for i in idx)
            continue
        chosen = set(rng.choice(len(idx), size=n_enroll, replace=False).tolist())
        for j, i in enumerate(idx):
            (enroll_idx if j in chosen else test_idx).append(int(i))
    if not test_idx:
        raise EvalError("enrollment split left no test utterances")
    return data.subset(sorted(enroll_idx)), data.subset(sorted(test_idx))


@dataclass(frozen=True, eq=False)
class _Protocol:
    """Frozen per-run data layout: training pool and eval splits per domain."""

    domains: tuple[str, ...]
    train_by_domain: dict[str, LabeledDataset]
    enroll_eval: dict[str, LabeledDataset]
    test_eval: dict[str, LabeledDataset]
    train_speaker_order: tuple[str, ...]  # shuffled; prefixes give nested subsets
    trial_seed: int
    mix_seed: int


def _resolve_datasets(source) -> dict[str, LabeledDataset]:
    if isinstance(source, WorldConfig):
        datasets, _ = generate_world(source)
        return datasets
    return dict(source)


def _build_protocol(datasets_by_domain: dict[str, LabeledDataset], cfg: ExperimentConfig) -> _Protocol:
    if len(datasets_by_domain) < 2:
        raise EvalError(
            f"need at least 2 domains, got {sorted(datasets_by_domain)}"
        )
    speaker_sets = [set(d.speakers()) for d in datasets_by_domain.values()]
    common = sorted(set.intersection(*speaker_sets))
    if len(common) < cfg.n_eval_speakers + 2:
        raise EvalError(
            f"{len(common)} speakers shared across domains cannot supply "
            f"{cfg.n_eval_speakers} evaluation speakers plus a training pool"
        )
    split_seed, enroll_seed, trial_seed, mix_seed = _derived_seeds(cfg.seed)
    order = np.random.default_rng(split_seed).permutation(len(common))
    eval_speakers = [common[i] for i in order[: cfg.n_eval_speakers]]
    train_order = tuple(common[i] for i in order[cfg.n_eval_speakers :])

    train_by_domain: dict[str, LabeledDataset] = {}
    enroll_eval: dict[str, LabeledDataset] = {}
    test_eval: dict[str, LabeledDataset] = {}
    for dom, data in datasets_by_domain.items():
        train_by_domain[dom] = data.for_speakers(train_order)
        eval_data = data.for_speakers(eval_speakers)
        enroll_eval[dom], test_eval[dom] = _split_enroll_test(
            eval_data, cfg.n_enroll_utts, enroll_seed
        )
    return _Protocol(
        domains=tuple(datasets_by_domain),
        train_by_domain=train_by_domain,
        enroll_eval=enroll_eval,
        test_eval=test_eval,
        train_speaker_order=train_order,
        trial_seed=trial_seed,
        mix_seed=mix_seed,
    )


# ---------------------------------------------------------------------------
# cells
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class _CellSpec:
    enroll_dom: str
    test_dom: str
    train_enroll: LabeledDataset
    train_test: LabeledDataset
    enroll_eval: LabeledDataset
    test_eval: LabeledDataset
    methods: tuple[str, ...]
    mdt_stats: DomainStats | None
    stats_options: StatsOptions
    train_cfg: TrainConfig
    trial_seed: int
    max_nontarget: int | None
    n_speakers: int
    proportion: float | None


def _score_cell(spec: _CellSpec) -> list[ResultRow]:
    enroll_stats = estimate_domain_stats(spec.train_enroll, spec.stats_options)
    needs_transform = any(m in ("dat", "dsd") for m in spec.methods)
    transform = None
    test_stats = None
    if needs_transform:
        transform = train_transform(
            spec.train_enroll, spec.train_test, enroll_stats, spec.train_cfg
        )
    if "dsd" in spec.methods:
        test_stats = estimate_domain_stats(spec.train_test, spec.stats_options)

    trials = make_trials(
        spec.enroll_eval, spec.test_eval, spec.max_nontarget, spec.trial_seed
    )
    test_vectors = spec.test_eval.vectors_by_utt()
    models_enroll = enrollment_models_from_dataset(enroll_stats, spec.enroll_eval)

    rows = []
    case = f"{spec.enroll_dom}-{spec.test_dom}"
    for method in spec.methods:
        if method == "mdt":
            stats = spec.mdt_stats
            artifacts = ScoringArtifacts(
                test_vectors=test_vectors,
                models=enrollment_models_from_dataset(stats, spec.enroll_eval),
                enroll_stats=stats,
            )
        else:
            artifacts = ScoringArtifacts(
                test_vectors=test_vectors,
                models=models_enroll,
                enroll_stats=enroll_stats,
                test_stats=test_stats,
                transform=transform,
            )
        records = score_trials(trials, method, artifacts)
        rows.append(
            ResultRow(
                case=case,
                method=method,
                n_speakers=spec.n_speakers,
                proportion=spec.proportion if method == "mdt" else None,
                eer=compute_eer(records),
            )
        )
    return rows


def _mismatch_rows(
    protocol: _Protocol,
    train_by_domain: dict[str, LabeledDataset],
    methods: tuple[str, ...],
    cfg: ExperimentConfig,
    proportion: float | None,
) -> list[ResultRow]:
    n_speakers = len(next(iter(train_by_domain.values())).speakers())
    mdt_stats = None
    if "mdt" in methods:
        prop = cfg.mdt_proportion if proportion is None else proportion
        mdt_stats = mdt_estimate(
            concat(list(train_by_domain.values())),
            LabelMixConfig(proportion_independent=prop, seed=protocol.mix_seed),
            cfg.stats_options,
        )
        mdt_prop = prop
    else:
        mdt_prop = None

    specs = [
        _CellSpec(
            enroll_dom=a,
            test_dom=b,
            train_enroll=train_by_domain[a],
            train_test=train_by_domain[b],
            enroll_eval=protocol.enroll_eval[a],
            test_eval=protocol.test_eval[b],
            methods=methods,
            mdt_stats=mdt_stats,
            stats_options=cfg.stats_options,
            train_cfg=cfg.train,
            trial_seed=protocol.trial_seed,
            max_nontarget=cfg.max_nontarget_per_model,
            n_speakers=n_speakers,
            proportion=mdt_prop,
        )
        for a in protocol.domains
        for b in protocol.domains
        if a != b
    ]
    if cfg.parallel and len(specs) > 1:
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_score_cell, specs))
    else:
        results = [_score_cell(spec) for spec in specs]
    return [row for cell in results for row in cell]


def _floor_rows(protocol: _Protocol, cfg: ExperimentConfig) -> list[ResultRow]:
    """Matched-condition baseline: enroll and test in the same domain."""
    rows = []
    n_speakers = len(protocol.train_speaker_order)
    for dom in protocol.domains:
        stats = estimate_domain_stats(protocol.train_by_domain[dom], cfg.stats_options)
        trials = make_trials(
            protocol.enroll_eval[dom],
            protocol.test_eval[dom],
            cfg.max_nontarget_per_model,
            protocol.trial_seed,
        )
        artifacts = ScoringArtifacts(
            test_vectors=protocol.test_eval[dom].vectors_by_utt(),
            models=enrollment_models_from_dataset(stats, protocol.enroll_eval[dom]),
            enroll_stats=stats,
        )
        records = score_trials(trials, "nl", artifacts)
        rows.append(
            ResultRow(
                case=f"{dom}-{dom}",
                method="nl",
                n_speakers=n_speakers,
                proportion=None,
                eer=compute_eer(records),
            )
        )
    return rows


# ---------------------------------------------------------------------------
# drivers
# ---------------------------------------------------------------------------


def run_table2_experiment(
    datasets_by_domain: dict[str, LabeledDataset] | WorldConfig,
    methods: tuple[str, ...] = ("mdt", "dat", "dsd"),
    cfg: ExperimentConfig | None = None,
) -> list[ResultRow]:
    """Cross-domain method comparison over every ordered domain pair.

    Matched pairs report the plain matched-condition score as a floor
    reference; mismatched pairs report one row per requested method.
    """
    cfg = cfg or ExperimentConfig()
    datasets = _resolve_datasets(datasets_by_domain)
    protocol = _build_protocol(datasets, cfg)
    rows = _floor_rows(protocol, cfg)
    rows += _mismatch_rows(protocol, protocol.train_by_domain, tuple(methods), cfg, None)
    return rows


def run_table1_sweep(
    datasets_by_domain: dict[str, LabeledDataset] | WorldConfig,
    proportions: tuple[float, ...] = (0.0, 0.2, 0.4, 0.6, 0.8, 1.0),
    cfg: ExperimentConfig | None = None,
) -> list[ResultRow]:
    """Label-sharing proportion sweep for multi-domain training.

    Reports the matched-trained baseline ("nl") per case once, then one
    multi-domain column per proportion.
    """
    cfg = cfg or ExperimentConfig()
    datasets = _resolve_datasets(datasets_by_domain)
    protocol = _build_protocol(datasets, cfg)
    rows = _mismatch_rows(protocol, protocol.train_by_domain, ("nl",), cfg, None)
    for p in proportions:
        if not 0.0 <= p <= 1.0:
            raise EvalError(f"proportion {p} outside [0, 1]")
        rows += _mismatch_rows(protocol, protocol.train_by_domain, ("mdt",), cfg, p)
    return rows


def run_table3_sweep(
    datasets_by_domain: dict[str, LabeledDataset] | WorldConfig,
    speaker_counts: tuple[int, ...],
    methods: tuple[str, ...] = ("mdt", "dat", "dsd"),
    cfg: ExperimentConfig | None = None,
) -> list[ResultRow]:
    """Training-data-amount sweep with nested speaker subsets.

    Larger counts contain the smaller ones, so the data-amount effect is
    isolated from subset variance. The full count reproduces the method
    comparison driver exactly.
    """
    cfg = cfg or ExperimentConfig()
    datasets = _resolve_datasets(datasets_by_domain)
    protocol = _build_protocol(datasets, cfg)
    total = len(protocol.train_speaker_order)
    rows: list[ResultRow] = []
    for count in speaker_counts:
        if count < 2 or count > total:
            raise EvalError(
                f"speaker count {count} outside the available training pool [2, {total}]"
            )
        subset = protocol.train_speaker_order[:count]
        train_sub = {
            dom: data.for_speakers(subset) for dom, data in protocol.train_by_domain.items()
        }
        rows += _mismatch_rows(protocol, train_sub, tuple(methods), cfg, None)
    return rows


# ---------------------------------------------------------------------------
# rendering
# ---------------------------------------------------------------------------


def _fmt_eer(row: ResultRow | None) -> str:
    return "-" if row is None else f"{row.eer.eer_percent:.3f}"


def format_method_table(rows: list[ResultRow]) -> str:
    """Cases down, methods across, matched floors in a leading column."""
    methods = []
    for r in rows:
        if r.method != "nl" and r.method not in methods:
            methods.append(r.method)
    cases = []
    for r in rows:
        if r.case not in cases:
            cases.append(r.case)
    index = {(r.case, r.method): r for r in rows}
    header = ["case", "nl"] + [m.upper() for m in methods]
    widths = [max(8, len(h) + 2) for h in header]
    lines = ["".join(h.ljust(w) for h, w in zip(header, widths))]
    for case in cases:
        cells = [case, _fmt_eer(index.get((case, "nl")))]
        cells += [_fmt_eer(index.get((case, m))) for m in methods]
        lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def format_proportion_table(rows: list[ResultRow]) -> str:
    """Cases down, label-sharing proportions across, baseline first."""
    props = sorted({r.proportion for r in rows if r.proportion is not None})
    cases = []
    for r in rows:
        if r.case not in cases:
            cases.append(r.case)
    base = {r.case: r for r in rows if r.method == "nl"}
    index = {(r.case, r.proportion): r for r in rows if r.method == "mdt"}
    header = ["case", "base"] + [f"{100 * p:g}%" for p in props]
    widths = [max(8, len(h) + 2) for h in header]
    lines = ["".join(h.ljust(w) for h, w in zip(header, widths))]
    for case in cases:
        cells = [case, _fmt_eer(base.get(case))]
        cells += [_fmt_eer(index.get((case, p))) for p in props]
        lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)


def format_count_table(rows: list[ResultRow]) -> str:
    """One block per method: cases down, training speaker counts across."""
    counts = sorted({r.n_speakers for r in rows})
    methods = []
    cases = []
    for r in rows:
        if r.method not in methods:
            methods.append(r.method)
        if r.case not in cases:
            cases.append(r.case)
    index = {(r.method, r.case, r.n_speakers): r for r in rows}
    header = ["method", "case"] + [str(c) for c in counts]
    widths = [max(8, len(h) + 2) for h in header]
    lines = ["".join(h.ljust(w) for h, w in zip(header, widths))]
    for method in methods:
        for case in cases:
            cells = [method.upper(), case]
            cells += [_fmt_eer(index.get((method, case, c))) for c in counts]
            lines.append("".join(c.ljust(w) for c, w in zip(cells, widths)))
    return "\n".join(lines)
