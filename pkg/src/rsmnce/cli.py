"""Command-line interface: ``rsmnce <command> [options]``.

Commands: build-vocab, train, eval, infer, benchmark, sweep-alpha.
Errors print a single ``error: ...`` line on stderr and exit with status 2.
"""
import argparse
import json
import logging
import os
import sys

from . import kernels
from .benchmark import DEFAULT_CONFIGS, DEFAULT_VOCAB_SIZES, parse_config, run_benchmark, write_timings
from .cd import CdConfig, train_cd
from .corpus import (
    STOP_WORDS,
    Corpus,
    build_vocabulary,
    load_bow,
    load_vocabulary,
    read_labels,
    read_lines,
    read_text_corpus,
    save_vocabulary,
)
from .evaluation import (
    classify_accuracy,
    extract_features,
    retrieve,
    train_classifier,
    write_classification_report,
)
from .nce import NceConfig, train_nce
from .rsm import RsmModel, load_model, save_model
from .synthetic import topic_corpus

logger = logging.getLogger("rsmnce")


class CliError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliError(message)


# -- helpers ----------------------------------------------------------------


def _int_list(text):
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated integer list: {text!r}")


def _float_list(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated number list: {text!r}")


def _effective_seed(args):
    env = os.environ.get("RSM_SEED")
    if env is None or env == "":
        return args.seed
    try:
        return int(env)
    except ValueError:
        raise CliError(f"RSM_SEED must be an integer, got {env!r}")


def _require_file(path, what):
    if path is None:
        raise CliError(f"{what} is required")
    if not os.path.isfile(path):
        raise CliError(f"{what} not found: {path}")
    return path


def _load_corpus(path, vocab, fmt, labels_path=None):
    """Untransformed corpus from a text or sparse BoW file."""
    _require_file(path, "corpus file")
    labels = read_labels(_require_file(labels_path, "labels file")) if labels_path else None
    if fmt == "bow":
        return load_bow(path, vocab, labels=labels)
    raw = read_text_corpus(path)
    if labels is not None and len(labels) != len(raw):
        raise CliError(f"{labels_path}: {len(labels)} labels for {len(raw)} documents")
    return Corpus.from_tokens(raw, vocab, labels)


def _prepare(corpus, flags):
    """Apply the transforms recorded in ``flags`` to an untransformed corpus."""
    if flags.get("log_count"):
        corpus = corpus.with_log_count()
    if flags.get("idf"):
        corpus = corpus.with_idf()
    return corpus


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


class _StatsSink:
    """One JSON record per line on stdout, mirrored to a file."""

    def __init__(self, path):
        self.fh = open(path, "w", encoding="utf-8") if path else None

    def __call__(self, rec):
        line = json.dumps(rec, sort_keys=True)
        print(line, flush=True)
        if self.fh is not None:
            self.fh.write(line + "\n")
            self.fh.flush()

    def close(self):
        if self.fh is not None:
            self.fh.close()


# -- commands ---------------------------------------------------------------


def cmd_build_vocab(args):
    raw = read_text_corpus(_require_file(args.input, "input corpus"))
    if args.stop_words:
        stop = frozenset(w.strip().lower() for w in read_lines(_require_file(args.stop_words, "stop-word file")))
    else:
        stop = frozenset() if args.no_stop_words else STOP_WORDS
    vocab = build_vocabulary(raw, args.max_size, stop)
    words, df = save_vocabulary(vocab, args.out)
    print(json.dumps({"K": len(vocab), "T": vocab.n_docs, "vocab": words, "doc_freq": df}, sort_keys=True))
    return 0


def _check_train_flags(args):
    nce_only = {"--alpha": args.alpha, "--noise-k": args.noise_k}
    if args.trainer in ("cd", "pcd"):
        if args.idf:
            raise CliError(f"--idf is not supported with --trainer {args.trainer} (CD needs integer counts)")
        for flag, value in nce_only.items():
            if value is not None:
                raise CliError(f"{flag} only applies to --trainer nce")
        if args.cache_noise:
            raise CliError("--cache-noise only applies to --trainer nce")
    elif args.gibbs_steps is not None:
        raise CliError("--gibbs-steps only applies to --trainer cd/pcd")
    for name in ("hidden", "batch"):
        if getattr(args, name) < 1:
            raise CliError(f"--{name} must be positive")
    if args.epochs < 0:
        raise CliError("--epochs must be non-negative")
    if args.lr < 0:
        raise CliError("--lr must be non-negative")


def _train(corpus, args, seed, log=None):
    """Train per ``args`` on an untransformed corpus; returns (params, flags, stats)."""
    flags = {"log_count": bool(args.log_count), "idf": bool(args.idf)}
    if args.log_count:
        corpus = corpus.with_log_count()
    if args.trainer == "nce":
        cfg = NceConfig(
            k=5 if args.noise_k is None else args.noise_k,
            alpha=0.5 if args.alpha is None else args.alpha,
            learning_rate=args.lr,
            batch_size=args.batch,
            epochs=args.epochs,
            seed=seed,
            weighting="idf" if args.idf else "count",
            cache_noise=args.cache_noise,
            hidden=args.hidden,
        )
        params, stats = train_nce(corpus, cfg, log=log)
    else:
        cfg = CdConfig(
            gibbs_steps=1 if args.gibbs_steps is None else args.gibbs_steps,
            persistent=args.trainer == "pcd",
            learning_rate=args.lr,
            batch_size=args.batch,
            epochs=args.epochs,
            seed=seed,
            hidden=args.hidden,
        )
        params, stats = train_cd(corpus, cfg, log=log)
    return params, flags, stats


def cmd_train(args):
    _check_train_flags(args)
    seed = _effective_seed(args)
    vocab = load_vocabulary(_require_file(args.vocab, "vocabulary file"))
    corpus = _load_corpus(args.input, vocab, args.format)
    if len(corpus) == 0:
        raise CliError("no non-empty documents in the training corpus")
    run = {k: v for k, v in sorted(vars(args).items()) if k != "func"}
    run["seed"] = seed
    run["backend"] = kernels.active_backend()
    _write_json(args.model + ".run.json", run)
    sink = _StatsSink(args.stats or args.model + ".stats.jsonl")
    try:
        params, flags, _ = _train(corpus, args, seed, log=sink)
    finally:
        sink.close()
    save_model(RsmModel(params, flags, vocab.words), args.model)
    return 0


def _load_model_for(args):
    model = load_model(_require_file(args.model, "model file"))
    if args.hidden is not None and args.hidden != model.params.H:
        raise CliError(f"H mismatch: model has H={model.params.H}, evaluation requested H={args.hidden}")
    vocab = load_vocabulary(_require_file(args.vocab, "vocabulary file"))
    if len(vocab) != model.params.K:
        raise CliError(f"vocabulary has {len(vocab)} words but the model has K={model.params.K}")
    if model.words and tuple(model.words) != tuple(vocab.words):
        raise CliError("vocabulary differs from the one the model was trained with")
    return model, vocab


def cmd_eval(args):
    if not (args.retrieval or args.classify):
        args.retrieval = True
    model, vocab = _load_model_for(args)
    if args.classify and not (args.train_labels and args.test_labels):
        raise CliError("--classify needs --train-labels and --test-labels")
    if args.retrieval and not (args.train_labels and args.test_labels):
        raise CliError("retrieval needs --train-labels and --test-labels")
    flags = model.transform_flags
    train = _prepare(_load_corpus(args.train, vocab, args.format, args.train_labels), flags)
    test = _prepare(_load_corpus(args.test, vocab, args.format, args.test_labels), flags)
    f_train = extract_features(model.params, train, flags)
    f_test = extract_features(model.params, test, flags)
    os.makedirs(args.out_dir, exist_ok=True)
    summary = {"n_train": len(train), "n_test": len(test), "H": model.params.H, "K": model.params.K}
    if args.retrieval:
        report = retrieve(f_test, f_train, threads=args.threads)
        report.write_csv(os.path.join(args.out_dir, "retrieval.csv"))
        summary["map"] = report.map
    if args.classify:
        clf = train_classifier(f_train, l2=args.l2, epochs=args.clf_epochs, lr=args.clf_lr,
                               seed=_effective_seed(args))
        acc = classify_accuracy(clf, f_test)
        write_classification_report(os.path.join(args.out_dir, "classification.json"), acc, len(test),
                                    [str(c) for c in clf.classes])
        summary["accuracy"] = acc
    _write_json(os.path.join(args.out_dir, "summary.json"), summary)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_infer(args):
    model, vocab = _load_model_for(args)
    corpus = _prepare(_load_corpus(args.input, vocab, args.format), model.transform_flags)
    feats = extract_features(model.params, corpus, model.transform_flags)
    with open(args.out, "w", encoding="utf-8") as fh:
        for row in feats.rows:
            fh.write(",".join(repr(float(x)) for x in row) + "\n")
    print(json.dumps({"documents": len(corpus), "H": model.params.H, "out": args.out}, sort_keys=True))
    return 0


def cmd_benchmark(args):
    for name in args.configs:
        parse_config(name)
    if any(K < 2 for K in args.vocab_sizes):
        raise CliError("vocabulary sizes must be at least 2")
    sink = _StatsSink(None)
    records = run_benchmark(
        args.vocab_sizes, args.configs,
        log=lambda r: sink(dict(vars(r))),
        hidden=args.hidden, batch_size=args.batch, batches=args.batches, warmup=args.warmup,
        doc_length=args.doc_length, alpha=args.alpha, seed=_effective_seed(args),
    )
    write_timings(records, args.out)
    return 0


def _sweep_corpora(args, seed):
    if args.train:
        vocab = load_vocabulary(_require_file(args.vocab, "vocabulary file"))
        train = _load_corpus(args.train, vocab, args.format, args.train_labels)
        test = _load_corpus(_require_file(args.test, "test corpus"), vocab, args.format, args.test_labels)
        if not (args.train_labels and args.test_labels):
            raise CliError("sweep-alpha needs --train-labels and --test-labels with --train")
        return train, test
    n_train, n_test = args.synthetic_docs
    corpus, _ = topic_corpus(n_train + n_test, args.synthetic_vocab, args.synthetic_topics, rng=seed)
    return corpus.subset(range(n_train)), corpus.subset(range(n_train, n_train + n_test))


def cmd_sweep_alpha(args):
    bad = [a for a in args.grid if not 0.0 <= a < 1.0]
    if bad:
        raise CliError(f"alpha grid values must lie in [0, 1): {bad}")
    if not args.grid:
        raise CliError("empty alpha grid")
    seed = _effective_seed(args)
    train, test = _sweep_corpora(args, seed)
    args.trainer, args.gibbs_steps, args.cache_noise = "nce", None, False
    rows = []
    for alpha in args.grid:
        args.alpha = alpha
        params, flags, stats = _train(train, args, seed)
        f_train = extract_features(params, _prepare(train, flags), flags)
        f_test = extract_features(params, _prepare(test, flags), flags)
        row = {"alpha": alpha, "map": retrieve(f_test, f_train, threads=args.threads).map}
        if args.classify:
            clf = train_classifier(f_train, l2=args.l2, epochs=args.clf_epochs, lr=args.clf_lr, seed=seed)
            row["accuracy"] = classify_accuracy(clf, f_test)
        row["objective"] = stats[-1]["objective"] if stats else float("nan")
        print(json.dumps(row, sort_keys=True), flush=True)
        rows.append(row)
    cols = ["alpha", "map"] + (["accuracy"] if args.classify else []) + ["objective"]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write(",".join(cols) + "\n")
        for r in rows:
            fh.write(",".join(repr(r[c]) for c in cols) + "\n")
    return 0


# -- parser -----------------------------------------------------------------


def _add_common(p):
    p.add_argument("--seed", type=int, default=0, help="random seed (RSM_SEED overrides)")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1, help="worker cap for evaluation")
    p.add_argument("--backend", choices=["auto", "ext", "python"], default=None,
                   help="kernel backend (default: RSMNCE_BACKEND or auto)")
    p.add_argument("-v", "--verbose", action="store_true")


def _add_format(p):
    p.add_argument("--format", choices=["text", "bow"], default="text",
                   help="corpus files are raw text (one doc per line) or sparse BoW")


def _add_training(p, trainer=True):
    if trainer:
        p.add_argument("--trainer", choices=["cd", "pcd", "nce"], default="nce")
        p.add_argument("--gibbs-steps", type=int, default=None, help="CD/PCD Gibbs steps (default 1)")
        p.add_argument("--cache-noise", action="store_true", help="sample noise once and reuse it")
        p.add_argument("--alpha", type=float, default=None, help="retained fraction (default 0.5)")
    p.add_argument("--noise-k", type=int, default=None, help="noise documents per data document (default 5)")
    p.add_argument("--idf", action="store_true", help="idf-weight inputs (nce only)")
    p.add_argument("--log-count", action="store_true", help="apply ceil(ln(1+count)) to counts")
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--lr", type=float, default=0.1)


def _add_classifier(p):
    p.add_argument("--l2", type=float, default=0.0, help="classifier weight penalty")
    p.add_argument("--clf-epochs", type=int, default=100)
    p.add_argument("--clf-lr", type=float, default=0.1)


def build_parser():
    parser = _Parser(prog="rsmnce", description="Replicated Softmax topic model with CD and alpha-NCE training.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("build-vocab", help="build a vocabulary from a text corpus")
    p.add_argument("--input", required=True)
    p.add_argument("--max-size", type=int, required=True)
    p.add_argument("--out", required=True, help="vocabulary file; doc freqs go to <out>.df")
    p.add_argument("--stop-words", help="file with one stop word per line (default: built-in list)")
    p.add_argument("--no-stop-words", action="store_true")
    _add_common(p)
    p.set_defaults(func=cmd_build_vocab)

    p = sub.add_parser("train", help="train an RSM")
    p.add_argument("--input", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--model", required=True, help="output model file (JSON)")
    p.add_argument("--stats", help="stats mirror file (default <model>.stats.jsonl)")
    _add_format(p)
    _add_training(p)
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="retrieval and/or classification with model features")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--train", required=True, help="index / classifier training corpus")
    p.add_argument("--test", required=True, help="query / test corpus")
    p.add_argument("--train-labels")
    p.add_argument("--test-labels")
    p.add_argument("--retrieval", action="store_true", help="run retrieval (default when nothing chosen)")
    p.add_argument("--classify", action="store_true", help="run classification")
    p.add_argument("--hidden", type=int, default=None, help="expected H; checked against the model")
    p.add_argument("--out-dir", required=True)
    _add_format(p)
    _add_classifier(p)
    _add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("infer", help="export hidden-posterior features as CSV")
    p.add_argument("--model", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--hidden", type=int, default=None, help="expected H; checked against the model")
    _add_format(p)
    _add_common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("benchmark", help="time CD and alpha-NCE minibatch updates")
    p.add_argument("--vocab-sizes", type=_int_list, default=list(DEFAULT_VOCAB_SIZES))
    p.add_argument("--configs", type=lambda s: [x for x in s.split(",") if x], default=list(DEFAULT_CONFIGS),
                   help="comma list such as cd1,cd5,pcd1,nce5,nce25")
    p.add_argument("--batches", type=int, default=20)
    p.add_argument("--warmup", type=int, default=3)
    p.add_argument("--hidden", type=int, default=128)
    p.add_argument("--batch", type=int, default=128)
    p.add_argument("--doc-length", type=int, default=100)
    p.add_argument("--alpha", type=float, default=0.5)
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("sweep-alpha", help="train and evaluate over a grid of alpha values")
    p.add_argument("--grid", type=_float_list, default=[0.0, 0.3, 0.5, 0.9])
    p.add_argument("--train", help="training corpus (default: synthetic topic corpus)")
    p.add_argument("--test")
    p.add_argument("--train-labels")
    p.add_argument("--test-labels")
    p.add_argument("--vocab")
    p.add_argument("--synthetic-docs", type=_int_list, default=[500, 150], help="train,test sizes")
    p.add_argument("--synthetic-vocab", type=int, default=200)
    p.add_argument("--synthetic-topics", type=int, default=3)
    p.add_argument("--classify", action="store_true")
    p.add_argument("--out", required=True)
    _add_format(p)
    _add_training(p, trainer=False)
    _add_classifier(p)
    _add_common(p)
    p.set_defaults(func=cmd_sweep_alpha)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise CliError("missing command; see --help")
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.backend is not None:
            kernels.use_backend(args.backend)
        return args.func(args)
    except (CliError, OSError, ValueError, FloatingPointError) as exc:
        msg = " ".join(str(exc).split()) or type(exc).__name__
        print(f"error: {msg}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
