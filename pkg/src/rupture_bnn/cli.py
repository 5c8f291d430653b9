"""Command-line front end: generate | train | evaluate | importance.

Random streams derived from ``--seed`` (see RandomSource):
    (0, layer)   weight initialization      (3,)  minority upsampling
    (1, epoch)   training noise and batches (4,)  evaluation posterior samples
    (2,)         train/test split           (5,)  feature shuffles
    (6,)         train-set F1 printout
The split seed is stored in the checkpoint so evaluation can rebuild the
test fold from the full CSV.

Exit status: 0 success, 1 data/model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import warnings
from pathlib import Path

import numpy as np

from . import analysis, data, importance
from .checkpoint import Checkpoint, CheckpointError, read_checkpoint, save_checkpoint, write_atomic
from .core_math import DimensionError, RandomSource
from .model import TrainConfig, TrainingDivergedError, prior_posterior_density, weight_summary
from .pipeline import EVALUATE, SHUFFLE, TRAIN_F1, prepare_and_train, split_fold

log = logging.getLogger("rupture_bnn")

FEW_SAMPLES = 30


class UsageError(Exception):
    pass


def positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def nonneg_int(text):
    v = int(text)
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def batch_size(text):
    return "full" if text == "full" else positive_int(text)


def read_config(path) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for n, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("-", "_")] = value
    return out


def _sibling(path, suffix):
    p = Path(path)
    return str(p.with_name(p.stem + suffix))


def _add_common(p, out_default):
    p.add_argument("--seed", type=nonneg_int, default=0, help="root random seed")
    p.add_argument("--config", help="key = value file; flags take precedence")
    p.add_argument("--out", default=out_default, help="primary output path")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_test_selector(p):
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--data", help="full CSV; the test fold is rebuilt from the checkpoint's split")
    g.add_argument("--test-csv", help="CSV used as the test set as is")
    p.add_argument("--samples", type=positive_int, default=analysis.DEFAULT_SAMPLES,
                   help="posterior samples per prediction")
    p.add_argument("--threshold", type=float, default=None,
                   help="fixed decision threshold instead of the F1-optimal one")
    p.add_argument("--figures", help="directory for PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rupture-bnn", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="write a synthetic labelled CSV")
    _add_common(g, "data.csv")
    g.add_argument("--n", type=positive_int, default=2000, help="number of rows")
    g.add_argument("--s-crit", dest="s_crit", type=float, default=data.GeneratorConfig.s_crit)
    g.add_argument("--geom-coupling", dest="geom_coupling", type=float,
                   default=data.GeneratorConfig.geom_coupling)
    g.add_argument("--energy-coeff", dest="energy_coeff", type=float,
                   default=data.GeneratorConfig.energy_coeff)

    t = sub.add_parser("train", help="fit the variational network")
    _add_common(t, "model.json")
    t.add_argument("--data", required=True)
    t.add_argument("--train-count", dest="train_count", type=positive_int, default=1600)
    t.add_argument("--epochs", type=nonneg_int, default=TrainConfig.epochs)
    t.add_argument("--lr", type=float, default=TrainConfig.initial_learning_rate)
    t.add_argument("--decay", type=float, default=TrainConfig.decay_rate)
    t.add_argument("--batch-size", dest="batch_size", type=batch_size, default="full")
    t.add_argument("--mc-samples", dest="mc_samples", type=positive_int,
                   default=TrainConfig.elbo_mc_samples)
    t.add_argument("--kl-scale", dest="kl_scale", type=float, default=None)
    t.add_argument("--hidden", type=positive_int, default=12, help="hidden units")
    t.add_argument("--no-upsample", dest="upsample", action="store_false")
    t.add_argument("--history", help="history CSV (default: <out>_history.csv)")
    t.add_argument("--figures", help="directory for PNG figures and their CSV tables")

    e = sub.add_parser("evaluate", help="posterior predictive evaluation report")
    _add_common(e, "report.json")
    e.add_argument("--checkpoint", required=True)
    _add_test_selector(e)
    e.add_argument("--bins", type=positive_int, default=10)
    e.add_argument("--hist-out", dest="hist_out",
                   help="histogram CSV (default: <out>_histogram.csv)")

    i = sub.add_parser("importance", help="permutation importance with uncertainty")
    _add_common(i, "importance.csv")
    i.add_argument("--checkpoint", required=True)
    _add_test_selector(i)
    i.add_argument("--repeats", type=positive_int, default=10)
    i.add_argument("--report", help="evaluation JSON to embed the table into")
    return parser


def _parse(argv):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = read_config(args.config)
        except OSError as exc:
            parser.error(f"cannot read config: {exc}")
        except UsageError as exc:
            parser.error(str(exc))
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = set(cfg) - known
        if unknown:
            parser.error(f"unknown config keys: {', '.join(sorted(unknown))}")
        for a in sub._actions:
            if a.dest in cfg and isinstance(a, argparse._StoreFalseAction | argparse._StoreTrueAction):
                cfg[a.dest] = cfg[a.dest].lower() in ("1", "true", "yes", "on")
        sub.set_defaults(**cfg)
        args = parser.parse_args(argv)
    return args


def cmd_generate(args):
    cfg = data.GeneratorConfig(args.s_crit, args.geom_coupling, args.energy_coeff)
    table = data.generate_synthetic(args.n, RandomSource(args.seed), cfg)
    write_atomic(args.out, data.to_csv_text(table))
    k = int(table.labels.sum())
    print(f"wrote {len(table)} rows to {args.out}: "
          f"{k} propagated ({k / len(table):.1%}), {len(table) - k} arrested")


def _history_text(history):
    lines = ["epoch,elbo,ll,kl,lr"]
    for r in history.records:
        lines.append(f"{r.epoch},{r.elbo:.17g},{r.likelihood:.17g},{r.kl:.17g},{r.learning_rate:.17g}")
    return "\n".join(lines) + "\n"


def _density_text(tables):
    lines = ["group,bin_center,count,density,prior_density"]
    for t in tables:
        for c, n, d, p in zip(t.bin_centers, t.counts, t.density, t.prior_density):
            lines.append(f"{t.group},{c:.17g},{int(n)},{d:.17g},{p:.17g}")
    return "\n".join(lines) + "\n"


def cmd_train(args):
    table = data.load_csv(args.data)
    config = TrainConfig(initial_learning_rate=args.lr, decay_rate=args.decay, epochs=args.epochs,
                         batch_size=args.batch_size, elbo_mc_samples=args.mc_samples,
                         kl_scale=args.kl_scale, seed=args.seed)
    run = prepare_and_train(table, args.seed, args.train_count, config,
                            hidden=args.hidden, upsample=args.upsample)
    model, history, std, tr = run.model, run.history, run.standardizer, run.train

    save_checkpoint(Checkpoint(model, std, tr.feature_names, args.seed, args.train_count,
                               {k: getattr(config, k) for k in config.__dataclass_fields__}),
                    args.out)
    hist_path = args.history or _sibling(args.out, "_history.csv")
    write_atomic(hist_path, _history_text(history))

    dist = analysis.predict_distribution(model, tr.features, S=100,
                                         rng=RandomSource(args.seed).child(TRAIN_F1))
    pred = analysis.classify(dist, 0.5)
    print(f"trained {config.epochs} epochs on {len(tr)} rows; checkpoint {args.out}, history {hist_path}")
    print(f"train F1 at 0.5: propagated {analysis.f1_positive(pred, tr.labels):.4f}, "
          f"weighted {analysis.weighted_f1(pred, tr.labels):.4f}")

    if args.figures:
        from . import plotting

        os.makedirs(args.figures, exist_ok=True)
        tables = prior_posterior_density(model)
        write_atomic(os.path.join(args.figures, "prior_posterior.csv"), _density_text(tables))
        plotting.plot_prior_posterior(tables, os.path.join(args.figures, "prior_posterior.png"))
        plotting.plot_weight_maps(weight_summary(model), os.path.join(args.figures, "weight_maps.png"),
                                  tr.feature_names)


def _load_test(args, ckpt: Checkpoint):
    names = ckpt.feature_names or data.FEATURE_NAMES
    if args.data:
        if ckpt.split_seed is None:
            raise CheckpointError("checkpoint has no split record; pass --test-csv")
        table = data.load_csv(args.data, names)
        _, test = split_fold(table, ckpt.split_seed, ckpt.train_count)
    else:
        test = data.load_csv(args.test_csv, names)
    if ckpt.standardizer is not None:
        test = ckpt.standardizer.apply(test)
    if test.features.shape[1] != ckpt.model.n_inputs:
        raise DimensionError(
            f"checkpoint expects {ckpt.model.n_inputs} features, data has {test.features.shape[1]}")
    return test


def _evaluate(args):
    ckpt = read_checkpoint(args.checkpoint)
    test = _load_test(args, ckpt)
    if args.samples < 2:
        raise UsageError("--samples must be at least 2")
    if args.samples < FEW_SAMPLES:
        warnings.warn(f"only {args.samples} posterior samples; uncertainty estimates are unreliable")
    dist = analysis.predict_distribution(ckpt.model, test.features, S=args.samples,
                                         rng=RandomSource(args.seed).child(EVALUATE))
    if args.threshold is None:
        th = analysis.optimal_threshold(dist.mean_score, test.labels)
    else:
        pred = analysis.classify(dist, args.threshold)
        th = analysis.ThresholdResult(args.threshold, analysis.f1_positive(pred, test.labels))
    return ckpt, test, dist, th


def cmd_evaluate(args):
    _, test, dist, th = _evaluate(args)
    report = analysis.evaluation_report(dist, test.labels, th, bins=args.bins)
    text = json.dumps(report, indent=2) + "\n"
    write_atomic(args.out, text)
    hist_path = args.hist_out or _sibling(args.out, "_histogram.csv")
    rows = analysis.uncertainty_histogram(dist, args.bins)
    write_atomic(hist_path, analysis.histogram_csv_text(rows))
    sys.stdout.write(text)
    if args.figures:
        from . import plotting

        os.makedirs(args.figures, exist_ok=True)
        plotting.plot_score_histogram(rows, os.path.join(args.figures, "score_uncertainty.png"))


def cmd_importance(args):
    ckpt, test, dist, th = _evaluate(args)
    if args.report and args.threshold is None:
        with open(args.report, encoding="utf-8") as fh:
            th = analysis.ThresholdResult(json.load(fh)["threshold"], float("nan"))
    rows = importance.permutation_importance(
        ckpt.model, test, th.threshold, S=args.samples,
        rng=RandomSource(args.seed).child(SHUFFLE), repeats=args.repeats)
    text = importance.importance_csv_text(rows)
    write_atomic(args.out, text)
    sys.stdout.write(text)
    if args.report:
        with open(args.report, encoding="utf-8") as fh:
            report = json.load(fh)
        report["importance"] = [r.__dict__ for r in rows]
        write_atomic(args.report, json.dumps(report, indent=2) + "\n")
    if args.figures:
        from . import plotting

        os.makedirs(args.figures, exist_ok=True)
        plotting.plot_importance(rows, os.path.join(args.figures, "importance.png"))


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "importance": cmd_importance,
}


def main(argv=None) -> int:
    args = _parse(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    logging.captureWarnings(True)
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (data.DataError, CheckpointError, DimensionError, TrainingDivergedError,
            ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
