"""Command-line entry point: ``hiermda {gen,train,eval,ablate,check}``."""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

from . import _backend, checks, harness, infer
from .data import SynthConfig, gen_synth, load_corpus, load_csv, save_corpus
from .train import TrainConfig

log = logging.getLogger("hiermda")


class UsageError(Exception):
    pass


def _lambda(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if math.isnan(v) or v < 0:
        raise argparse.ArgumentTypeError("lambda must be >= 0 or inf")
    return v


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in text.split(",") if t.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _add_train_flags(p, lambda1=True):
    if lambda1:
        p.add_argument("--lambda1", type=_lambda, default=1e-3, help="coupling strength; 'inf' for one shared model")
    p.add_argument("--lambda2", type=_lambda, default=0.0, help="center weight decay")
    p.add_argument("--epochs", type=int, default=70)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument("--lr-data", type=float, default=1e-3)
    p.add_argument("--lr-couple", type=float, default=1e-2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=_ints, default=harness.DEFAULT_HIDDEN,
                   help="hidden layer widths, comma separated (empty for a linear model)")
    p.add_argument("--activation", choices=("relu", "tanh"), default="relu")


def _train_config(args, lambda1=None) -> TrainConfig:
    try:
        return TrainConfig(epochs=args.epochs, batch_size=args.batch_size, lr_data=args.lr_data,
                           lr_couple=args.lr_couple,
                           lambda1=args.lambda1 if lambda1 is None else lambda1,
                           lambda2=args.lambda2, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _require_dir(path) -> Path:
    path = Path(path)
    if not path.is_dir():
        raise UsageError(f"data directory not found: {path}")
    return path


def _corpus_for(args):
    corpus = load_corpus(_require_dir(args.data_dir))
    if args.target is not None:
        if args.target not in corpus.names:
            raise UsageError(f"unknown target domain {args.target!r}; have {corpus.names}")
        corpus = corpus.with_target(corpus.names.index(args.target))
    return corpus


def cmd_gen(args) -> int:
    cfg = SynthConfig(seed=args.seed, samples_per_class=args.samples_per_class,
                      noise_sigma=args.noise_sigma)
    files = save_corpus(gen_synth(cfg), args.data_dir)
    print(f"wrote {len(files)} files to {args.data_dir}")
    return 0


def cmd_train(args) -> int:
    corpus = _corpus_for(args)
    spec = harness.build_spec(corpus, args.hidden, args.activation)
    cfg = _train_config(args)
    ens, history = harness.train_task(corpus, spec, cfg)
    harness.save_ensemble(ens, args.out, seed=cfg.seed)
    print(f"mode={cfg.mode} sources={','.join(corpus.source_names)} "
          f"target={corpus.names[corpus.target_index]} final_loss={history[-1]:.6f}")
    print(f"saved {args.out}")
    return 0


def cmd_eval(args) -> int:
    model = Path(args.model)
    if not model.is_file():
        raise UsageError(f"model file not found: {model}")
    ens, _ = harness.load_ensemble(model)
    if args.dataset is not None:
        path = Path(args.dataset)
        if not path.is_file():
            raise UsageError(f"dataset not found: {path}")
        data = load_csv(path, ens.spec.num_classes)
    else:
        corpus = load_corpus(_require_dir(args.data_dir), ens.spec.num_classes)
        target = args.target
        if target is None:
            rest = [n for n in corpus.names if n not in ens.domain_names]
            if len(rest) != 1:
                raise UsageError("cannot infer the target domain; pass --target")
            target = rest[0]
        if target not in corpus.names:
            raise UsageError(f"unknown target domain {target!r}")
        data = corpus.domains[corpus.names.index(target)].test
    methods = [infer.CENTER, infer.CONFIDENCE]
    methods += [infer.InferenceMethod.per_source(j) for j in range(ens.num_domains)]
    for m in methods:
        if m.kind == "center" and ens.is_shared:
            print(f"{m}\t{harness.NA}")
            continue
        label = str(m) if m.kind != "per_source" else f"source:{ens.domain_names[m.domain]}"
        print(f"{label}\t{100 * infer.evaluate(ens, data, m):.2f}")
    return 0


def cmd_ablate(args) -> int:
    if args.data_dir is not None:
        corpus = load_corpus(_require_dir(args.data_dir))
    else:
        corpus = gen_synth(SynthConfig(seed=args.seed))
    try:
        grid = harness.parse_grid(args.grid)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    report = harness.run_loo(corpus, _train_config(args, lambda1=0.0), grid,
                             args.hidden, args.activation)
    if args.out is None:
        text = harness.report_csv(report) if args.format == "csv" else harness.report_markdown(report)
        sys.stdout.write(text)
    else:
        harness.emit_report(report, args.format, args.out)
        print(f"wrote {args.out}")
    return 0


def cmd_check(args) -> int:
    ok = True
    for name, passed, detail in checks.run_all():
        ok &= passed
        print(f"{'PASS' if passed else 'FAIL'}  {name}  ({detail})")
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hiermda", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="write the synthetic ring-shift corpus as CSV files")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples-per-class", type=int, default=100)
    p.add_argument("--noise-sigma", type=float, default=0.9)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train one configuration and save the ensemble")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--target", help="domain held out as target (default: last)")
    p.add_argument("--out", required=True, help="ensemble file to write")
    _add_train_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="accuracy of a saved ensemble per inference method")
    p.add_argument("--model", required=True)
    p.add_argument("--data-dir")
    p.add_argument("--dataset", help="single CSV file to score instead of a corpus domain")
    p.add_argument("--target")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="leave-one-domain-out sweep over lambda1")
    p.add_argument("--data-dir", help="corpus directory (default: generate from --seed)")
    p.add_argument("--grid", default="inf,1e-1,1e-3,1e-5,0")
    p.add_argument("--format", choices=("csv", "markdown"), default="csv")
    p.add_argument("--out")
    _add_train_flags(p, lambda1=False)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("check", help="run the gradient and derivation checks")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    log.debug("kernel backend: %s", _backend.name)
    if args.command == "eval" and (args.data_dir is None) == (args.dataset is None):
        parser.error("eval needs exactly one of --data-dir or --dataset")
    try:
        return args.func(args)
    except (UsageError, FileNotFoundError) as exc:
        print(f"hiermda: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError, OSError) as exc:
        print(f"hiermda: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
