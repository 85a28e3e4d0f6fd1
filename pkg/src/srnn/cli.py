"""Command-line entry point: ``srnn {gen-data,train,decode,eval,gradcheck,oracle}``.

Exit codes: 0 ok, 1 usage or validation error, 2 training diverged,
3 a verification check failed.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import MODES, Dims, TrainConfig, rng_stream
from .data import (
    Corpus,
    CorpusError,
    Sequence,
    gen_synthetic_segmental,
    gen_synthetic_strokes,
    load_corpus,
    separated_profile,
)
from .segcrf import LabeledSegmentation, SegmentationError
from .training import DivergenceError

EXIT_OK, EXIT_USAGE, EXIT_DIVERGED, EXIT_VERIFY = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits with status 2 on bad usage; we reserve 2 for divergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# -- gen-data ----------------------------------------------------------------


def _profile(spec: str, n_labels: int) -> list[tuple[int, int]]:
    if spec == "separated":
        return separated_profile(n_labels)
    lo, sep, hi = spec.partition("-")
    try:
        rng = (int(lo), int(hi if sep else lo))
    except ValueError:
        raise UsageError(f"--durations must be 'separated' or 'LO-HI', got {spec!r}") from None
    return [rng] * n_labels


def cmd_gen_data(args) -> int:
    if args.generator == "segmental":
        corpus = gen_synthetic_segmental(args.n, labels=args.labels, durations=_profile(args.durations, args.labels),
                                         sigma=args.sigma, seed=args.seed)
    else:
        corpus = gen_synthetic_strokes(args.n, alphabet=args.alphabet, seed=args.seed, jitter=args.sigma)
    out = [corpus] if not args.split else _split(corpus, args.split)
    paths = [args.out] if len(out) == 1 else [f"{args.out}.{k}" for k in ("train", "dev", "test")[: len(out)]]
    from .data import save_corpus

    for part, path in zip(out, paths):
        save_corpus(part, path)
        print(f"wrote {len(part)} instances to {path}")
    return EXIT_OK


def _split(corpus: Corpus, spec: str) -> list[Corpus]:
    from .data import split_corpus

    sizes = [int(s) for s in spec.split(",")]
    if sum(sizes) != len(corpus) or not 1 <= len(sizes) <= 3:
        raise UsageError(f"--split sizes {sizes} must sum to --n={len(corpus)} (at most three parts)")
    return split_corpus(corpus, sizes)


# -- train ---------------------------------------------------------------------


def _config(args) -> TrainConfig:
    return TrainConfig(mode=args.mode, lr=args.lr, l2=args.l2, epochs=args.epochs, patience=args.patience,
                       seed=args.seed, max_seg_len=args.max_seg_len, dims=Dims.parse(args.dims), workers=args.workers)


def cmd_train(args) -> int:
    from .models import save_model
    from .training import train

    config = _config(args)
    max_len = config.max_seg_len if config.mode == "full" else None
    train_corpus = load_corpus(args.train, max_len=max_len)
    dev_corpus = load_corpus(args.dev) if args.dev else None
    log_path = args.log or f"{args.out}.log"
    Path(log_path).write_text("", encoding="utf-8")
    result = train(train_corpus, dev_corpus, config, log_path=log_path)
    save_model(result.model, args.out)
    print(f"best epoch {result.best_epoch} dev metric {result.best_metric:.4f}; model written to {args.out}")
    return EXIT_OK


# -- decode / eval ---------------------------------------------------------------


def _check_inventory(model, corpus: Corpus):
    unknown = sorted({y for s in corpus for y in (s.labels or [])} - set(model.labels))
    if unknown:
        raise UsageError(f"corpus labels {unknown} are not in the model's inventory {model.labels}")
    if model.kind != corpus.input_kind:
        raise UsageError(f"model expects {model.kind} input, corpus has {corpus.input_kind}")
    if model.kind == "vectors" and corpus.input_dim != model.input_dim:
        raise UsageError(f"model expects {model.input_dim}-dim tokens, corpus has {corpus.input_dim}")


def _predict(model, corpus: Corpus) -> list:
    _check_inventory(model, corpus)
    return [model.decode(s.tokens) for s in corpus]


def _as_sequence(tokens, pred) -> Sequence:
    if isinstance(pred, LabeledSegmentation):
        return Sequence(tokens, pred.labels, pred.durations)
    return Sequence(tokens, list(pred), None)


def cmd_decode(args) -> int:
    from .data import save_corpus
    from .models import load_model

    model = load_model(args.model)
    corpus = load_corpus(args.test)
    preds = _predict(model, corpus)
    save_corpus([_as_sequence(s.tokens, p) for s, p in zip(corpus, preds)], args.out)
    print(f"decoded {len(preds)} instances to {args.out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .metrics import evaluate

    gold_corpus = load_corpus(args.test)
    if not gold_corpus.has_durations:
        raise UsageError(f"{args.test}: evaluation needs gold durations")
    if bool(args.pred) == bool(args.model):
        raise UsageError("give exactly one of --pred (decoded corpus) or --model")
    if args.model:
        from .models import load_model

        preds = _predict(load_model(args.model), gold_corpus)
        name = Path(args.model).stem
    else:
        pred_corpus = load_corpus(args.pred)
        if len(pred_corpus) != len(gold_corpus):
            raise UsageError(f"{len(pred_corpus)} predictions for {len(gold_corpus)} gold instances")
        preds = [s.gold if s.durations is not None else list(s.labels or []) for s in pred_corpus]
        name = Path(args.pred).stem
    if not all(isinstance(p, LabeledSegmentation) for p in preds):
        preds = [p.labels if isinstance(p, LabeledSegmentation) else p for p in preds]
    metrics = evaluate(preds, [s.gold for s in gold_corpus])
    sys.stdout.write(metrics.table(name))
    return EXIT_OK


# -- verification --------------------------------------------------------------------


def _gradcheck_instance(args, config: TrainConfig):
    if args.train:
        corpus = load_corpus(args.train)
    else:
        corpus = gen_synthetic_segmental(1, labels=3, seed=args.seed, durations=[(1, 3)] * 3)
    return corpus, corpus.instances[0]


def cmd_gradcheck(args) -> int:
    from contextlib import nullcontext

    from .diffgraph import inject_backward_fault
    from .gradcheck import check_gradient
    from .training import make_model

    config = _config(args)
    corpus, seq = _gradcheck_instance(args, config)
    model = make_model(corpus, config)
    fault = inject_backward_fault(args.fault) if args.fault else nullcontext()
    with fault:
        report = check_gradient(model.params, lambda tape: model.loss(tape, seq, config.mode),
                                rng_stream(config.seed, "gradcheck"), min_coords=args.coords)
    tensors = len({r[0] for r in report.rows})
    print(f"mode {config.mode}: {len(report.rows)} coordinates over {tensors} tensors")
    print(f"max relative error {report.max_rel_error:.3e} (tolerance {report.tolerance:g})")
    for name, idx, ana, num in report.failures[:20]:
        print(f"FAIL {name}[{idx}] analytic {ana:.6e} numeric {num:.6e}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_VERIFY


def cmd_oracle(args) -> int:
    from .oracle import run_oracle_suite

    report = run_oracle_suite(max_n=args.max_n, max_labels=args.max_labels, seeds=args.seeds, tolerance=args.tol)
    print(f"{report.cases} cases in {report.seconds:.1f}s")
    for name, dev in report.max_dev.items():
        print(f"max |deviation| {name}: {dev:.3e}")
    print(f"map mismatches: {report.map_mismatches}")
    print("PASS" if report.passed else "FAIL")
    return EXIT_OK if report.passed else EXIT_VERIFY


# -- parser ----------------------------------------------------------------------------


def _train_flags(p: argparse.ArgumentParser, defaults: TrainConfig):
    p.add_argument("--mode", choices=MODES, default=defaults.mode)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--max-seg-len", type=int, default=None)
    p.add_argument("--epochs", type=int, default=defaults.epochs)
    p.add_argument("--patience", type=int, default=defaults.patience)
    p.add_argument("--lr", type=float, default=defaults.lr)
    p.add_argument("--l2", type=float, default=defaults.l2)
    p.add_argument("--dims", default="", help="overrides such as 'ctx=24,seg=18'")
    p.add_argument("--workers", type=int, default=defaults.workers)


def build_parser() -> argparse.ArgumentParser:
    defaults = TrainConfig()
    parser = _Parser(prog="srnn", description="Segmental RNN training, decoding and verification.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="write a synthetic corpus")
    g.add_argument("--generator", choices=("segmental", "strokes"), default="segmental")
    g.add_argument("--n", type=int, default=100)
    g.add_argument("--labels", type=int, default=4)
    g.add_argument("--durations", default="separated", help="'separated' or a shared range 'LO-HI'")
    g.add_argument("--sigma", type=float, default=0.1, help="emission noise (stroke jitter for strokes)")
    g.add_argument("--alphabet", default="abcdef")
    g.add_argument("--split", default="", help="comma-separated part sizes written as OUT.train/.dev/.test")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train a model")
    _train_flags(t, defaults)
    t.add_argument("--train", required=True)
    t.add_argument("--dev")
    t.add_argument("--out", required=True, help="model file")
    t.add_argument("--log", help="per-epoch metrics log (default OUT.log)")
    t.set_defaults(func=cmd_train)

    d = sub.add_parser("decode", help="decode a corpus with a trained model")
    d.add_argument("--model", required=True)
    d.add_argument("--test", required=True)
    d.add_argument("--out", required=True)
    d.set_defaults(func=cmd_decode)

    e = sub.add_parser("eval", help="score predictions against gold")
    e.add_argument("--test", required=True, help="gold corpus")
    e.add_argument("--pred", help="decoded corpus")
    e.add_argument("--model", help="decode --test with this model first")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("gradcheck", help="reverse-mode gradients against finite differences")
    _train_flags(c, defaults)
    c.add_argument("--train", help="corpus whose first instance is checked (default: synthetic)")
    c.add_argument("--coords", type=int, default=10, help="minimum sampled coordinates")
    c.add_argument("--fault", help=argparse.SUPPRESS)  # negative-control hook: halve one primitive's backward
    c.set_defaults(func=cmd_gradcheck)

    o = sub.add_parser("oracle", help="dynamic programs against brute-force enumeration")
    o.add_argument("--max-n", type=int, default=6)
    o.add_argument("--max-labels", type=int, default=3)
    o.add_argument("--seeds", type=int, default=20)
    o.add_argument("--tol", type=float, default=1e-9)
    o.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help or a usage error
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"error: training diverged: {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except (UsageError, CorpusError, SegmentationError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
