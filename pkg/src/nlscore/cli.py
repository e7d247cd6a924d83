"""Command-line interface.

Exit codes: 0 on success, 1 on usage errors, 2 on data, estimation,
training or evaluation errors. Diagnostics go to standard error; results
go to files or standard output. Every stochastic subcommand takes its
seeds as mandatory flags, so identical command lines on identical inputs
produce byte-identical outputs.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import fileio
from .adapt import LabelMixConfig, TrainConfig, fit_transform, mdt_estimate
from .dataset import LabeledDataset, concat
from .errors import EvalError, NlscoreError
from .experiments import (
    ExperimentConfig,
    format_count_table,
    format_method_table,
    format_proportion_table,
    run_table1_sweep,
    run_table2_experiment,
    run_table3_sweep,
)
from .model import StatsOptions, enrollment_models_from_dataset, estimate_domain_stats
from .scoring import METHODS, ScoringArtifacts, compute_eer, make_trials, score_trials
from .simulate import WorldConfig, generate_world


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit 1 for usage problems, not argparse's 2
        raise _UsageError(message)


def _add_stats_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--min-variance", type=float, default=StatsOptions.min_variance)
    p.add_argument("--length-norm", action="store_true")


def _stats_options(args) -> StatsOptions:
    return StatsOptions(min_variance=args.min_variance, length_normalize=args.length_norm)


def _add_train_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--learning-rate", type=float, default=TrainConfig.learning_rate)
    p.add_argument("--max-iters", type=int, default=TrainConfig.max_iters)
    p.add_argument("--batch-size", default="ALL", help="minibatch size or ALL")
    p.add_argument("--convergence-tol", type=float, default=TrainConfig.convergence_tol)
    p.add_argument(
        "--init", choices=("identity", "random_orthogonal"), default=TrainConfig.init
    )


def _train_config(args, seed: int) -> TrainConfig:
    batch = None if str(args.batch_size).upper() == "ALL" else int(args.batch_size)
    return TrainConfig(
        learning_rate=args.learning_rate,
        max_iters=args.max_iters,
        batch_size=batch,
        seed=seed,
        convergence_tol=args.convergence_tol,
        init=args.init,
    )


def _add_world_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=WorldConfig.dim)
    p.add_argument("--speakers", type=int, default=WorldConfig.n_speakers)
    p.add_argument("--utts", type=int, default=WorldConfig.n_utts_per_domain)
    p.add_argument("--between-var", type=float, default=WorldConfig.between_var)
    p.add_argument("--within-var", type=float, default=WorldConfig.within_var)
    p.add_argument("--scale", type=float, default=WorldConfig.channel_scale)
    p.add_argument("--shift-norm", type=float, default=WorldConfig.channel_shift_norm)
    p.add_argument("--domains", default=",".join(WorldConfig.domains))
    p.add_argument("--rotation-seed", type=int, default=None)
    p.add_argument("--sample-seed", type=int, default=None)
    p.add_argument("--identity-rotation", action="store_true")


def _world_config(args) -> WorldConfig:
    if args.rotation_seed is None or args.sample_seed is None:
        raise _UsageError("--rotation-seed and --sample-seed are required")
    return WorldConfig(
        dim=args.dim,
        n_speakers=args.speakers,
        n_utts_per_domain=args.utts,
        between_var=args.between_var,
        within_var=args.within_var,
        channel_scale=args.scale,
        channel_shift_norm=args.shift_norm,
        rotation_seed=args.rotation_seed,
        sample_seed=args.sample_seed,
        domains=tuple(args.domains.split(",")),
        identity_rotation=args.identity_rotation,
    )


def _load_pooled(paths: list[str]) -> LabeledDataset:
    return concat([fileio.read_embeddings(p) for p in paths])


def _comma_list(raw: str, convert, what: str):
    try:
        return tuple(convert(tok) for tok in raw.split(",") if tok != "")
    except ValueError:
        raise _UsageError(f"cannot parse {what} list from {raw!r}") from None


# ---------------------------------------------------------------------------
# handlers
# ---------------------------------------------------------------------------


def _cmd_simulate(args) -> int:
    cfg = _world_config(args)
    datasets, truth = generate_world(cfg)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for dom in cfg.domains:
        emb = out / f"{dom}.embeddings"
        fileio.write_embeddings(emb, datasets[dom])
        print(emb)
        stats = out / f"true-{dom}.stats"
        fileio.write_stats(stats, truth.true_stats[dom])
        print(stats)
        if dom != truth.canonical_domain:
            trans = out / f"true-{dom}.transform"
            fileio.write_transform(trans, truth.channels[dom].inverse_transform())
            print(trans)
    return 0


def _cmd_estimate_stats(args) -> int:
    data = _load_pooled(args.data)
    stats = estimate_domain_stats(data, _stats_options(args))
    fileio.write_stats(args.output, stats)
    return 0


def _cmd_train_mdt(args) -> int:
    data = _load_pooled(args.data)
    mix = LabelMixConfig(proportion_independent=args.proportion, seed=args.seed)
    stats = mdt_estimate(data, mix, _stats_options(args))
    fileio.write_stats(args.output, stats)
    return 0


def _cmd_train_transform(args) -> int:
    enroll = fileio.read_embeddings(args.enroll_data)
    test = fileio.read_embeddings(args.test_data)
    stats = fileio.read_stats(args.enroll_stats)
    result = fit_transform(enroll, test, stats, _train_config(args, args.seed))
    fileio.write_transform(args.output, result.transform)
    print(
        f"iterations={result.n_iters} converged={result.converged} "
        f"objective={fileio.fmt_float(result.objective_history[-1])}",
        file=sys.stderr,
    )
    return 0


def _cmd_score(args) -> int:
    method = args.method.lower()
    if method in ("dat", "dsd") and args.transform is None:
        raise EvalError(f"method {method!r} requires a transform file (--transform)")
    if method == "dsd" and args.test_stats is None:
        raise EvalError("method 'dsd' requires test-condition statistics (--test-stats)")
    enroll = fileio.read_embeddings(args.enroll_data)
    test = fileio.read_embeddings(args.test_data)
    enroll_stats = fileio.read_stats(args.enroll_stats)
    max_nt = None if str(args.max_nontarget).upper() == "ALL" else int(args.max_nontarget)
    trials = make_trials(enroll, test, max_nt, args.seed)
    artifacts = ScoringArtifacts(
        test_vectors=test.vectors_by_utt(),
        models=enrollment_models_from_dataset(enroll_stats, enroll),
        enroll_stats=enroll_stats,
        test_stats=fileio.read_stats(args.test_stats) if args.test_stats else None,
        transform=fileio.read_transform(args.transform) if args.transform else None,
    )
    records = score_trials(trials, method, artifacts)
    fileio.write_scores(args.output, records)
    return 0


def _cmd_evaluate(args) -> int:
    records = fileio.read_scores(args.scores)
    result = compute_eer(records)
    lines = (
        f"eer_percent {fileio.fmt_float(result.eer_percent)}\n"
        f"threshold {fileio.fmt_float(result.threshold)}\n"
        f"n_target {result.n_target}\n"
        f"n_nontarget {result.n_nontarget}\n"
    )
    sys.stdout.write(lines)
    if args.output:
        with open(args.output, "w", encoding="ascii") as out:
            out.write(lines)
    return 0


def _experiment_inputs(args):
    if args.data:
        pooled = _load_pooled(args.data)
        datasets = {dom: pooled.for_domain(dom) for dom in pooled.domains()}
    else:
        datasets, _ = generate_world(_world_config(args))
    cfg = ExperimentConfig(
        n_eval_speakers=args.eval_speakers,
        n_enroll_utts=args.enroll_utts,
        max_nontarget_per_model=(
            None if str(args.max_nontarget).upper() == "ALL" else int(args.max_nontarget)
        ),
        mdt_proportion=args.mdt_proportion,
        seed=args.seed,
        stats_options=_stats_options(args),
        train=_train_config(args, args.seed),
        parallel=args.parallel,
    )
    return datasets, cfg


def _emit_rows(args, rows, table: str) -> int:
    print(table)
    if args.output:
        fileio.write_result_rows(args.output, rows)
    return 0


def _cmd_table1(args) -> int:
    datasets, cfg = _experiment_inputs(args)
    proportions = _comma_list(args.proportions, float, "proportion")
    rows = run_table1_sweep(datasets, proportions, cfg)
    return _emit_rows(args, rows, format_proportion_table(rows))


def _methods(args) -> tuple[str, ...]:
    methods = _comma_list(args.methods.lower(), str, "method")
    for m in methods:
        if m not in METHODS:
            raise _UsageError(f"unknown method {m!r}; choose from {METHODS}")
    return methods


def _cmd_table2(args) -> int:
    datasets, cfg = _experiment_inputs(args)
    rows = run_table2_experiment(datasets, _methods(args), cfg)
    return _emit_rows(args, rows, format_method_table(rows))


def _cmd_table3(args) -> int:
    datasets, cfg = _experiment_inputs(args)
    counts = _comma_list(args.speaker_counts, int, "speaker count")
    rows = run_table3_sweep(datasets, counts, _methods(args), cfg)
    return _emit_rows(args, rows, format_count_table(rows))


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="nlscore",
        description=(
            "Normalized-likelihood speaker verification scoring under "
            "enrollment/test domain mismatch."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="generate a synthetic cross-domain world")
    _add_world_args(p)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("estimate-stats", help="estimate domain statistics from data")
    p.add_argument("--data", action="append", required=True)
    p.add_argument("--output", required=True)
    _add_stats_args(p)
    p.set_defaults(handler=_cmd_estimate_stats)

    p = sub.add_parser("train-mdt", help="pooled multi-domain statistics with label mixing")
    p.add_argument("--data", action="append", required=True)
    p.add_argument("--proportion", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    _add_stats_args(p)
    p.set_defaults(handler=_cmd_train_mdt)

    p = sub.add_parser("train-transform", help="fit the test-to-enrollment linear map")
    p.add_argument("--enroll-data", required=True)
    p.add_argument("--test-data", required=True)
    p.add_argument("--enroll-stats", required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--seed", type=int, required=True)
    _add_train_args(p)
    p.set_defaults(handler=_cmd_train_transform)

    p = sub.add_parser("score", help="score verification trials")
    p.add_argument("--method", required=True, choices=sorted(METHODS))
    p.add_argument("--enroll-data", required=True)
    p.add_argument("--test-data", required=True)
    p.add_argument("--enroll-stats", required=True)
    p.add_argument("--test-stats")
    p.add_argument("--transform")
    p.add_argument("--max-nontarget", default="ALL")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--output", required=True)
    p.set_defaults(handler=_cmd_score)

    p = sub.add_parser("evaluate", help="equal error rate from a score file")
    p.add_argument("--scores", required=True)
    p.add_argument("--output")
    p.set_defaults(handler=_cmd_evaluate)

    for name, extra, handler in (
        ("table1", "label-proportion sweep", _cmd_table1),
        ("table2", "cross-domain method comparison", _cmd_table2),
        ("table3", "training-data-amount sweep", _cmd_table3),
    ):
        p = sub.add_parser(name, help=f"desk-scale experiment: {extra}")
        p.add_argument("--data", action="append", help="embedding files (else simulate)")
        _add_world_args(p)
        p.add_argument("--seed", type=int, required=True)
        p.add_argument("--eval-speakers", type=int, default=ExperimentConfig.n_eval_speakers)
        p.add_argument("--enroll-utts", type=int, default=ExperimentConfig.n_enroll_utts)
        p.add_argument("--max-nontarget", default="ALL")
        p.add_argument("--mdt-proportion", type=float, default=ExperimentConfig.mdt_proportion)
        p.add_argument("--parallel", action="store_true")
        p.add_argument("--output")
        _add_stats_args(p)
        _add_train_args(p)
        if name == "table1":
            p.add_argument("--proportions", default="0,0.2,0.4,0.6,0.8,1.0")
        else:
            p.add_argument("--methods", default="mdt,dat,dsd")
        if name == "table3":
            p.add_argument("--speaker-counts", required=True)
        p.set_defaults(handler=handler)

    return parser


def cli_dispatch(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help and friends
        return 0 if exc.code in (0, None) else 1
    try:
        return args.handler(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    except NlscoreError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"IOError: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
