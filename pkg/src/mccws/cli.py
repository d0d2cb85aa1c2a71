"""Command-line pipelines: preprocess, train, distill, segment, eval, bench, attention-export.

Data goes to files or stdout, diagnostics to stderr. Exit codes: 0 success,
1 any other error, 2 usage error or unknown domain, 3 unreadable checkpoint.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import __version__
from .corpus import (
    DomainId,
    Vocabulary,
    discover_domains,
    normalize_text,
    read_corpus,
    write_corpus,
)
from .encoder import local_mass, mean_attention_by_offset
from .evaluation import corpus_words, evaluate, oov_overlap, speed_bench
from .model import Segmenter
from .numerics import FORMAT_VERSION, CheckpointError
from .projection import SHARED, UnknownDomainError
from .trainer import FINETUNE_LR, TrainConfig, TrainingDiverged, evaluate_model, train_single_criteria, train_student, train_teacher

OUTPUT_ENV = "MCCWS_OUTPUT_DIR"
DEFAULT_OUTPUT = "mccws-out"

EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_CHECKPOINT = 3

log = logging.getLogger("mccws")

# (default, provenance) for every training flag; printed by --help
_TRAIN_DEFAULTS = {
    "epochs": (TrainConfig.epochs, "desk-scale choice"),
    "batch_size": (TrainConfig.batch_size, "desk-scale choice"),
    "lr": (TrainConfig.lr, f"desk-scale override of the {FINETUNE_LR:g} fine-tuning rate, for from-scratch models"),
    "weight_decay": (TrainConfig.weight_decay, "reference setting"),
    "dropout": (TrainConfig.dropout, "reference setting"),
    "alpha": (TrainConfig.alpha, "reference setting"),
    "seed": (TrainConfig.seed, "desk-scale choice"),
    "patience": (TrainConfig.patience, "desk-scale choice"),
    "dev_ratio": (TrainConfig.dev_ratio, "desk-scale choice"),
    "num_layers": (TrainConfig.num_layers, "desk-scale choice"),
    "num_heads": (TrainConfig.num_heads, "desk-scale choice"),
    "d_h": (TrainConfig.d_h, "desk-scale choice"),
    "d_ff": (TrainConfig.d_ff, "desk-scale choice"),
    "max_seq_len": (TrainConfig.max_seq_len, "reference setting"),
}


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_ERROR):
        super().__init__(message)
        self.code = code


def _output_dir(args) -> Path:
    out = Path(args.out_dir or os.environ.get(OUTPUT_ENV) or DEFAULT_OUTPUT)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    return path


def _load_model(path) -> Segmenter:
    try:
        return Segmenter.load(path)
    except (CheckpointError, OSError, KeyError, ValueError, json.JSONDecodeError) as exc:
        raise CommandError(f"cannot read checkpoint {path}: {exc}", EXIT_CHECKPOINT) from exc


def _check_domain(model: Segmenter, domain: str) -> str:
    if domain == SHARED:
        if not model.shared:
            raise CommandError(f"model has no shared projection; known domains: {', '.join(model.domains)}", EXIT_USAGE)
        return domain
    if domain not in model.domains:
        raise CommandError(str(UnknownDomainError(domain, model.domains + ([SHARED] if model.shared else []))), EXIT_USAGE)
    return domain


def _read_split(data_dir: Path, split: str) -> dict:
    names = discover_domains(data_dir)
    if not names:
        raise CommandError(f"no <domain>.train.txt files in {data_dir}")
    out = {}
    for k, name in enumerate(names):
        path = data_dir / f"{name}.{split}.txt"
        if path.exists():
            out[name] = read_corpus(path, DomainId(name, k))
    return out


def _train_config(args) -> TrainConfig:
    flags = {k: getattr(args, k) for k in _TRAIN_DEFAULTS}
    if args.config:
        return TrainConfig.from_file(args.config, **flags)
    return TrainConfig(**{k: v for k, v in flags.items() if v is not None})


def _read_lines(path: str | None) -> list[str]:
    if path is None or path == "-":
        return sys.stdin.read().splitlines()
    return Path(path).read_text(encoding="utf-8").splitlines()


# --- commands --------------------------------------------------------------


def cmd_preprocess(args) -> int:
    out = _output_dir(args)
    if args.synthetic:
        from .synthetic import make_criteria_corpus

        cc = make_criteria_corpus(args.synthetic, seed=args.seed)
        splits = {"train": cc.train, "test": cc.test}
    else:
        if args.data_dir is None:
            raise CommandError("preprocess needs --data-dir or --synthetic", EXIT_USAGE)
        src = Path(args.data_dir)
        splits = {s: _read_split(src, s) for s in ("train", "test")}
    stats = {"format": FORMAT_VERSION, "domains": {}}
    for split, corpora in splits.items():
        for name, corpus in corpora.items():
            write_corpus(out / f"{name}.{split}.txt", corpus)
            d = stats["domains"].setdefault(name, {})
            d[split] = {
                "sentences": len(corpus),
                "words": sum(len(ts.words()) for ts in corpus),
                "chars": sum(len(ts) for ts in corpus),
            }
    vocab = Vocabulary.build(splits["train"].values())
    vocab.save(out / "vocab.txt")
    stats["vocab_size"] = len(vocab)
    _write_json(out / "stats.json", stats)
    log.info("wrote %d domain(s) to %s", len(stats["domains"]), out)
    return 0


def cmd_train(args) -> int:
    out = _output_dir(args)
    config = _train_config(args)
    data = Path(args.data_dir)
    corpora = _read_split(data, "train")
    dev = _read_split(data, "dev") if any(data.glob("*.dev.txt")) else None
    ckpt = out / "model"
    if args.single_criteria:
        if args.single_criteria not in corpora:
            raise CommandError(f"no training corpus for domain {args.single_criteria!r}", EXIT_USAGE)
        pick = {args.single_criteria: corpora[args.single_criteria]}
        dev = {args.single_criteria: dev[args.single_criteria]} if dev else None
        model, report = train_single_criteria(pick, config, dev, output_dir=ckpt)
    else:
        model, report = train_teacher(corpora, config, dev, output_dir=ckpt)
    _write_json(out / "train_report.json", {"format": FORMAT_VERSION, "config": config.__dict__, **report.to_dict()})
    log.info("best dev macro-F1 %.4f at epoch %d; checkpoint %s", report.best_dev_f1, report.best_epoch, ckpt)
    return 0


def cmd_distill(args) -> int:
    out = _output_dir(args)
    teacher = _load_model(args.teacher)
    config = _train_config(args)
    data = Path(args.data_dir)
    corpora = _read_split(data, "train")
    dev = _read_split(data, "dev") if any(data.glob("*.dev.txt")) else None
    ckpt = out / "model"
    _, report = train_student(teacher, args.layers, corpora, config, dev, output_dir=ckpt)
    _write_json(out / "distill_report.json", {"format": FORMAT_VERSION, "layers": args.layers, **report.to_dict()})
    log.info("student best dev macro-F1 %.4f; checkpoint %s", report.best_dev_f1, ckpt)
    return 0


def cmd_segment(args) -> int:
    model = _load_model(args.model)
    domain = _check_domain(model, args.domain)
    lines = _read_lines(args.input)
    results = model.segment(lines, domain, batch_size=args.batch_size, precision=args.precision)
    text = "".join(" ".join(r.words) + "\n" for r in results)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return 0


def cmd_eval(args) -> int:
    out = _output_dir(args)
    payload: dict = {"format": FORMAT_VERSION}
    if args.gold:
        if not args.sys:
            raise CommandError("--gold needs --sys", EXIT_USAGE)
        gold = [ts.words() for ts in read_corpus(args.gold)]
        sys_words = [ts.words() for ts in read_corpus(args.sys)]
        vocab = corpus_words(read_corpus(args.train)) if args.train else None
        report = evaluate(gold, sys_words, vocab)
        payload["metrics"] = report.to_dict()
        (out / "metrics.tsv").write_text(report.to_tsv(), encoding="utf-8")
    elif args.model:
        if not args.data_dir:
            raise CommandError("--model needs --data-dir", EXIT_USAGE)
        model = _load_model(args.model)
        data = Path(args.data_dir)
        train, test = _read_split(data, "train"), _read_split(data, "test")
        mapping = {name: _check_domain(model, args.domain or name) for name in test}
        reports = evaluate_model(model, test, mapping, args.precision, {n: corpus_words(c) for n, c in train.items()})
        payload["metrics"] = {n: r.to_dict() for n, r in reports.items()}
        rows = ["domain\tprecision\trecall\tf1\toov_recall"]
        rows += [f"{n}\t{r.precision:.6f}\t{r.recall:.6f}\t{r.f1:.6f}\t{r.oov_recall:.6f}" for n, r in reports.items()]
        (out / "metrics.tsv").write_text("\n".join(rows) + "\n", encoding="utf-8")
    if args.data_dir and (args.overlap or not (args.gold or args.model)):
        data = Path(args.data_dir)
        train, test = _read_split(data, "train"), _read_split(data, "test")
        names = [n for n in train if n in test]
        matrix = oov_overlap([corpus_words(train[n]) for n in names], [corpus_words(test[n]) for n in names], names)
        payload["oov_overlap"] = matrix.to_dict()
        (out / "overlap.tsv").write_text(matrix.to_tsv(), encoding="utf-8")
    if len(payload) == 1:
        raise CommandError("eval needs --gold/--sys, --model/--data-dir, or --data-dir", EXIT_USAGE)
    _write_json(out / "eval.json", payload)
    log.info("wrote %s", out / "eval.json")
    return 0


def cmd_bench(args) -> int:
    out = _output_dir(args)
    model = _load_model(args.model)
    domain = _check_domain(model, args.domain or model.domains[0])
    if args.input:
        lines = [normalize_text(x).replace(" ", "") for x in _read_lines(args.input)]
        lines = [x for x in lines if x]
    else:
        from .synthetic import make_criteria_corpus

        cc = make_criteria_corpus(args.synthetic, test_ratio=0.5, seed=args.seed)
        lines = [ts.chars for ts in next(iter(cc.test.values()))]
    try:
        sizes = [int(x) for x in args.batch_sizes.split(",") if x.strip()]
    except ValueError as exc:
        raise CommandError(f"--batch-sizes must be comma-separated integers: {exc}", EXIT_USAGE) from exc
    table = speed_bench(model, lines, sizes, domain, args.repeats, args.warmup, args.precision, args.threads)
    _write_json(out / "bench.json", {"format": FORMAT_VERSION, "layers": model.config.num_layers, **table.to_dict()})
    (out / "bench.tsv").write_text(table.to_tsv(), encoding="utf-8")
    if not table.monotone:
        log.info("throughput is not monotone in batch size on this machine")
    return 0


def cmd_attention_export(args) -> int:
    model = _load_model(args.model)
    domain = _check_domain(model, args.domain or (SHARED if model.shared else model.domains[0]))
    sentences = list(args.sentence or [])
    if args.input:
        sentences += [x for x in _read_lines(args.input) if x.strip()]
    if not sentences:
        raise CommandError("attention-export needs --sentence or --input", EXIT_USAGE)
    results = model.segment(sentences, domain, capture_attention=True)
    exports = []
    for text, res in zip(sentences, results):
        rec = res.attention
        q = args.query_index if args.query_index is not None else rec.length // 2
        if not 0 <= q < rec.length:
            raise CommandError(f"query index {q} outside sentence of {rec.length} characters: {text!r}", EXIT_USAGE)
        avg = mean_attention_by_offset([rec], q)
        exports.append({
            "sentence": text,
            "query_index": q,
            "layers": rec.to_json(),
            "offset_average": avg.tolist(),
            "local_mass": local_mass(avg, q),
        })
    payload = exports[0] if len(exports) == 1 else exports
    path = Path(args.output) if args.output else _output_dir(args) / "attention.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, ensure_ascii=False) + "\n", encoding="utf-8")
    return 0


# --- parser ----------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_out(p):
    p.add_argument("--out-dir", help=f"output directory (default: ${OUTPUT_ENV} or ./{DEFAULT_OUTPUT})")


def _add_train_flags(p):
    p.add_argument("--config", help="key=value file with training settings; flags given here win")
    for key, (default, source) in _TRAIN_DEFAULTS.items():
        p.add_argument(
            "--" + key.replace("_", "-"),
            dest=key,
            type=type(default),
            default=None,
            help=f"default {default:g} ({source})" if isinstance(default, float) else f"default {default} ({source})",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="mccws", description="Multi-criteria Chinese word segmentation.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("preprocess", help="normalize segmented corpora and build the vocabulary")
    p.add_argument("--data-dir", help="directory of <domain>.train.txt / <domain>.test.txt files")
    p.add_argument("--synthetic", type=int, metavar="N", help="generate the two-criteria synthetic corpus of N sentences instead")
    p.add_argument("--seed", type=int, default=0, help="seed for --synthetic (default 0)")
    _add_out(p)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train a multi-criteria model (or a single-criteria ablation)")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--single-criteria", metavar="DOMAIN", help="train only on DOMAIN without a shared projection")
    _add_train_flags(p)
    _add_out(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("distill", help="distill a trained model into its bottom layers")
    p.add_argument("--teacher", required=True, help="teacher checkpoint directory")
    p.add_argument("--layers", type=int, required=True, help="number of encoder layers the student keeps")
    p.add_argument("--data-dir", required=True)
    _add_train_flags(p)
    _add_out(p)
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("segment", help="segment raw text, one sentence per line")
    p.add_argument("--model", required=True, help="checkpoint directory")
    p.add_argument("--domain", required=True, help=f"criterion to segment with, or {SHARED!r} for the shared projection")
    p.add_argument("--precision", choices=("full", "half"), default="full", help="default full")
    p.add_argument("--input", help="input file (default stdin)")
    p.add_argument("--output", help="output file (default stdout)")
    p.add_argument("--batch-size", type=int, default=32, help="default 32")
    p.set_defaults(func=cmd_segment)

    p = sub.add_parser("eval", help="score segmentations, a model, or cross-corpus OOV overlap")
    p.add_argument("--gold", help="gold segmented file")
    p.add_argument("--sys", help="system segmented file")
    p.add_argument("--train", help="training corpus for OOV recall (with --gold)")
    p.add_argument("--model", help="checkpoint to score on every <domain>.test.txt of --data-dir")
    p.add_argument("--data-dir")
    p.add_argument("--domain", help=f"decode every test set with this criterion (or {SHARED!r})")
    p.add_argument("--precision", choices=("full", "half"), default="full", help="default full")
    p.add_argument("--overlap", action="store_true", help="also write the OOV overlap matrix for --data-dir")
    _add_out(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="decoding throughput per batch size")
    p.add_argument("--model", required=True)
    p.add_argument("--input", help="raw text lines to decode (default: synthetic sentences)")
    p.add_argument("--synthetic", type=int, default=1000, metavar="N", help="synthetic sentence count when no --input (default 1000)")
    p.add_argument("--seed", type=int, default=0, help="default 0")
    p.add_argument("--domain")
    p.add_argument("--batch-sizes", default="1,8,32,128", help="comma-separated (default 1,8,32,128)")
    p.add_argument("--repeats", type=int, default=5, help="timed runs per batch size, median reported (default 5)")
    p.add_argument("--warmup", type=int, default=1, help="untimed runs first (default 1)")
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (default 1)")
    p.add_argument("--precision", choices=("full", "half"), default="full", help="default full")
    _add_out(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("attention-export", help="dump attention matrices as JSON for plotting")
    p.add_argument("--model", required=True)
    p.add_argument("--sentence", action="append", help="raw sentence (repeatable)")
    p.add_argument("--input", help="file of raw sentences")
    p.add_argument("--domain", help="criterion for decoding (attention itself does not depend on it)")
    p.add_argument("--query-index", type=int, help="query position for offset_average (default: sentence middle)")
    p.add_argument("--output", help="JSON file (default <out-dir>/attention.json)")
    _add_out(p)
    p.set_defaults(func=cmd_attention_export)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"mccws {args.command}: {exc}", file=sys.stderr)
        return exc.code
    except UnknownDomainError as exc:
        print(f"mccws {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TrainingDiverged as exc:
        print(f"mccws {args.command}: training diverged: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except (OSError, ValueError) as exc:
        print(f"mccws {args.command}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
