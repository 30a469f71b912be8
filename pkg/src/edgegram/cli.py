"""Command-line interface: vocab, walks, train, eval and bench-sync.

The CLI is a thin dispatcher over the library modules; all concurrency
lives in the engine. Exit codes: 0 success, 2 usage errors, 1 runtime
failures. Diagnostics go to stderr only.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .analogy import (
    format_report,
    load_questions,
    score,
    write_report_csv,
)
from .corpus import (
    generate_walks,
    load_edge_list,
    read_token_lines,
    read_tokens,
    worklist_from_lines,
    worklist_from_tokens,
    write_walks,
)
from .engine import (
    DETERMINISTIC,
    RACY,
    RoundRecord,
    RunConfig,
    read_manifest,
    run,
    write_manifest,
)
from .model import ModelParams, load_embeddings, save_embeddings
from .sync import CombineRule, SyncScheme
from .vocab import build_negative_table, build_vocabulary, write_vocabulary

MODE_NAMES = {"det": DETERMINISTIC, "racy": RACY}
ALL_SCHEMES = [s.value for s in SyncScheme]

# Manifest keys that reconstruct a train invocation, in argv order.
REPLAY_KEYS = [
    ("corpus", "--corpus"),
    ("sentences", "--sentences"),
    ("lowercase", "--lowercase"),
    ("min_count", "--min-count"),
    ("dim", "--dim"),
    ("window", "--window"),
    ("negatives", "--negatives"),
    ("alpha", "--alpha"),
    ("threshold", "--threshold"),
    ("epochs", "--epochs"),
    ("hosts", "--hosts"),
    ("rounds", "--rounds"),
    ("scheme", "--scheme"),
    ("combiner", "--combiner"),
    ("mode", "--mode"),
    ("threads", "--threads"),
    ("loss_every", "--loss-every"),
    ("seed", "--seed"),
    ("out", "--out"),
    ("metrics", "--metrics"),
    ("context_out", "--save-context"),
]


def _pick_seed(args, parser_name: str) -> int:
    if args.seed is not None:
        return args.seed
    seed = int.from_bytes(os.urandom(8), "little") & ((1 << 62) - 1)
    print(f"edgegram {parser_name}: no --seed given, using {seed}", file=sys.stderr)
    return seed


def _add_param_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--dim", type=int, default=200, help="embedding dimensionality")
    p.add_argument("--window", type=int, default=5, help="maximum context window")
    p.add_argument("--negatives", type=int, default=15, help="negative samples per target")
    p.add_argument("--alpha", type=float, default=0.025, help="initial learning rate")
    p.add_argument(
        "--threshold",
        type=float,
        default=1e-4,
        help="frequent-token subsampling threshold, 0 disables",
    )
    p.add_argument("--epochs", type=int, default=16)
    p.add_argument("--min-count", type=int, default=5, help="vocabulary count cutoff")
    p.add_argument(
        "--sentences",
        choices=["block", "line"],
        default="block",
        help="sentence segmentation: fixed 10k-token blocks or input lines",
    )
    p.add_argument(
        "--lowercase",
        action="store_true",
        help="lowercase corpus tokens before counting",
    )


def _add_cluster_flags(p: argparse.ArgumentParser, scheme_flag: bool = True) -> None:
    p.add_argument("--hosts", type=int, default=1, help="simulated host count")
    p.add_argument(
        "--rounds",
        default="auto",
        help="synchronization rounds per epoch, or 'auto' for the tuned table",
    )
    if scheme_flag:
        p.add_argument("--scheme", choices=ALL_SCHEMES, default=SyncScheme.PMO.value)
    p.add_argument(
        "--combiner", choices=[c.value for c in CombineRule], default=CombineRule.GC.value
    )
    p.add_argument("--mode", choices=sorted(MODE_NAMES), default="det")
    p.add_argument("--threads", type=int, default=1, help="compute threads per host")
    p.add_argument(
        "--loss-every",
        type=int,
        default=100,
        help="sample training loss every Nth update",
    )


def _parse_rounds(parser: argparse.ArgumentParser, raw) -> int | None:
    if raw is None or raw == "auto":
        return None
    try:
        value = int(raw)
    except ValueError:
        parser.error(f"--rounds must be an integer or 'auto', got {raw!r}")
    if value < 1:
        parser.error("--rounds must be >= 1")
    return value


def _load_corpus(args):
    tokens = read_tokens(args.corpus)
    if args.lowercase:
        tokens = (t.lower() for t in tokens)
    vocab = build_vocabulary(tokens, min_count=args.min_count)
    if args.sentences == "line":
        lines = read_token_lines(args.corpus)
        if args.lowercase:
            lines = ([t.lower() for t in line] for line in lines)
        worklist = worklist_from_lines(lines, vocab)
    else:
        tokens = read_tokens(args.corpus)
        if args.lowercase:
            tokens = (t.lower() for t in tokens)
        worklist = worklist_from_tokens(tokens, vocab)
    return vocab, worklist


def _build_config(parser, args, seed: int) -> RunConfig:
    params = ModelParams(
        dim=args.dim,
        window=args.window,
        negatives=args.negatives,
        alpha=args.alpha,
        subsample_threshold=args.threshold,
        epochs=args.epochs,
    )
    config = RunConfig(
        params=params,
        hosts=args.hosts,
        sync_rounds=_parse_rounds(parser, args.rounds),
        scheme=SyncScheme(args.scheme),
        combiner=CombineRule(args.combiner),
        compute_mode=MODE_NAMES[args.mode],
        threads_per_host=args.threads,
        seed=seed,
        loss_sample_every=args.loss_every,
    )
    try:
        config.validate()
    except ValueError as exc:
        parser.error(str(exc))
    return config


def _round_logger(total_rounds: int):
    def log(rec: RoundRecord) -> None:
        loss = "n/a" if np.isnan(rec.loss_mean) else f"{rec.loss_mean:.4f}"
        print(
            f"epoch {rec.epoch} round {rec.round + 1}/{total_rounds}"
            f" loss {loss} compute {rec.compute_s:.2f}s comm {rec.comm_s:.2f}s",
            file=sys.stderr,
        )

    return log


def cmd_vocab(parser, args) -> int:
    tokens = read_tokens(args.corpus)
    if args.lowercase:
        tokens = (t.lower() for t in tokens)
    vocab = build_vocabulary(tokens, min_count=args.min_count)
    if args.out == "-":
        for token, count in zip(vocab.tokens, vocab.counts):
            print(f"{token}\t{int(count)}")
    else:
        write_vocabulary(vocab, args.out)
    print(
        f"{len(vocab)} tokens retained, {vocab.total_words} occurrences",
        file=sys.stderr,
    )
    return 0


def cmd_walks(parser, args) -> int:
    seed = _pick_seed(args, "walks")
    graph = load_edge_list(args.graph)
    walks = generate_walks(graph, args.walks, args.length, seed)
    count = write_walks(walks, args.out)
    print(f"wrote {count} walks over {len(graph)} vertices to {args.out}", file=sys.stderr)
    return 0


def cmd_train(parser, args) -> int:
    seed = _pick_seed(args, "train")
    config = _build_config(parser, args, seed)
    vocab, worklist = _load_corpus(args)
    table = build_negative_table(vocab)
    rounds = config.resolved_rounds()

    model, metrics = run(
        vocab, worklist, config, table, log=_round_logger(rounds)
    )

    save_embeddings(args.out, vocab.tokens, model.embedding)
    outputs = [args.out]
    if args.save_context:
        save_embeddings(args.save_context, vocab.tokens, model.training)
        outputs.append(args.save_context)
    metrics_path = args.metrics or args.out + ".metrics.csv"
    metrics.write_csv(metrics_path)
    outputs.append(metrics_path)

    figures: list[str] = []
    if not args.no_figures:
        from .report import save_training_figures

        stem = metrics_path[:-4] if metrics_path.endswith(".csv") else metrics_path
        figures = save_training_figures(metrics, stem)
        outputs.extend(figures)

    manifest_path = args.out + ".manifest"
    write_manifest(
        manifest_path,
        {
            "command": "train",
            "version": __version__,
            "corpus": args.corpus,
            "sentences": args.sentences,
            "lowercase": int(args.lowercase),
            "min_count": args.min_count,
            "dim": args.dim,
            "window": args.window,
            "negatives": args.negatives,
            "alpha": args.alpha,
            "threshold": args.threshold,
            "epochs": args.epochs,
            "hosts": args.hosts,
            "rounds": rounds,
            "scheme": config.scheme.value,
            "combiner": config.combiner.value,
            "mode": args.mode,
            "threads": args.threads,
            "loss_every": args.loss_every,
            "seed": seed,
            "out": args.out,
            "metrics": metrics_path,
            "context_out": args.save_context or "",
            "vocab_size": len(vocab),
            "total_tokens": len(worklist),
            "figures": ",".join(figures),
        },
    )
    outputs.append(manifest_path)
    print("wrote " + " ".join(outputs), file=sys.stderr)
    return 0


def manifest_to_args(manifest: dict[str, str]) -> list[str]:
    """Rebuild the train argv a manifest records, for exact replay."""
    if manifest.get("command") != "train":
        raise ValueError("manifest does not describe a train run")
    argv: list[str] = []
    for key, flag in REPLAY_KEYS:
        value = manifest.get(key, "")
        if value == "":
            continue
        if flag == "--lowercase":
            if value not in ("0", "False", "false"):
                argv.append(flag)
            continue
        argv.extend([flag, value])
    return argv


def cmd_eval(parser, args) -> int:
    tokens, matrix = load_embeddings(args.model)
    lowercase = args.lowercase
    if lowercase is None:
        lowercase = False
        manifest_path = args.model + ".manifest"
        if os.path.exists(manifest_path):
            lowercase = read_manifest(manifest_path).get("lowercase", "0") not in (
                "0",
                "False",
                "false",
            )
    questions = load_questions(args.questions, lowercase=lowercase)
    report = score(matrix, tokens, questions)
    if args.report == "-":
        sys.stdout.write("#v1\n")
        sys.stdout.write("category,kind,attempted,skipped,correct,accuracy\n")
        for cat in report.categories:
            sys.stdout.write(
                f"{cat.name},{cat.kind},{cat.attempted},{cat.skipped},"
                f"{cat.correct},{cat.accuracy:.2f}\n"
            )
    else:
        print(format_report(report))
        if args.report:
            write_report_csv(report, args.report)
            print(f"wrote {args.report}", file=sys.stderr)
    if args.figure:
        from .report import save_category_figure

        save_category_figure(report, args.figure)
        print(f"wrote {args.figure}", file=sys.stderr)
    return 0


def cmd_bench_sync(parser, args) -> int:
    seed = _pick_seed(args, "bench-sync")
    schemes = [s.strip() for s in args.schemes.split(",") if s.strip()]
    if not schemes:
        parser.error("--schemes must list at least one scheme")
    for name in schemes:
        if name not in ALL_SCHEMES:
            parser.error(f"unknown scheme {name!r}")

    vocab, worklist = _load_corpus(args)
    table = build_negative_table(vocab)

    rows: list[dict] = []
    baseline = None
    for name in schemes:
        args.scheme = name
        config = _build_config(parser, args, seed)
        model, metrics = run(vocab, worklist, config, table)
        recs = metrics.records
        if baseline is None:
            baseline = model
            diff = 0.0
        else:
            diff = float(
                max(
                    np.max(np.abs(model.embedding - baseline.embedding), initial=0.0),
                    np.max(np.abs(model.training - baseline.training), initial=0.0),
                )
            )
        rows.append(
            {
                "scheme": name,
                "inspect_s": sum(r.inspect_s for r in recs),
                "compute_s": sum(r.compute_s for r in recs),
                "comm_s": sum(r.comm_s for r in recs),
                "reduce_vectors": sum(r.reduce_vectors for r in recs),
                "broadcast_vectors": sum(r.broadcast_vectors for r in recs),
                "id_count": sum(r.id_count for r in recs),
                "bytes": sum(r.bytes for r in recs),
                "max_abs_diff": diff,
            }
        )

    columns = [
        "scheme",
        "inspect_s",
        "compute_s",
        "comm_s",
        "reduce_vectors",
        "broadcast_vectors",
        "id_count",
        "bytes",
        "max_abs_diff",
    ]
    with open(args.out, "w", encoding="utf-8") as fh:
        fh.write("#v1\n")
        fh.write(",".join(columns) + "\n")
        for row in rows:
            cells = [
                f"{row[c]:.6g}" if isinstance(row[c], float) else str(row[c])
                for c in columns
            ]
            fh.write(",".join(cells) + "\n")

    widths = {c: max(len(c), *(len(f"{r[c]:.4g}" if isinstance(r[c], float) else str(r[c])) for r in rows)) for c in columns}
    print("  ".join(c.rjust(widths[c]) for c in columns))
    for row in rows:
        print(
            "  ".join(
                (f"{row[c]:.4g}" if isinstance(row[c], float) else str(row[c])).rjust(widths[c])
                for c in columns
            )
        )

    if not args.no_figures:
        from .report import save_benchmark_figure

        stem = args.out[:-4] if args.out.endswith(".csv") else args.out
        for path in save_benchmark_figure(rows, stem):
            print(f"wrote {path}", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="edgegram",
        description="Skip-gram embeddings as graph edge operators over simulated hosts",
    )
    parser.add_argument("--version", action="version", version=f"edgegram {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_vocab = sub.add_parser("vocab", help="count tokens and write the vocabulary")
    p_vocab.add_argument("--corpus", required=True)
    p_vocab.add_argument("--min-count", type=int, default=5)
    p_vocab.add_argument("--lowercase", action="store_true")
    p_vocab.add_argument("--out", required=True, help="output path, '-' for stdout")
    p_vocab.set_defaults(func=cmd_vocab)

    p_walks = sub.add_parser("walks", help="generate random-walk sentences from a graph")
    p_walks.add_argument("--graph", required=True, help="edge-list file")
    p_walks.add_argument("--walks", type=int, default=10, help="walks per vertex")
    p_walks.add_argument("--length", type=int, default=40, help="max vertices per walk")
    p_walks.add_argument("--seed", type=int, default=None)
    p_walks.add_argument("--out", required=True)
    p_walks.set_defaults(func=cmd_walks)

    p_train = sub.add_parser("train", help="train embeddings over simulated hosts")
    p_train.add_argument("--corpus", required=True)
    _add_param_flags(p_train)
    _add_cluster_flags(p_train)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", required=True, help="embedding output path")
    p_train.add_argument("--metrics", default=None, help="metrics CSV path")
    p_train.add_argument(
        "--save-context", default=None, help="also export training-side vectors here"
    )
    p_train.add_argument("--no-figures", action="store_true")
    p_train.add_argument(
        "--replay",
        default=None,
        help="load flags from a train manifest; explicit flags still override",
    )
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("eval", help="score embeddings on analogy questions")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument("--questions", required=True)
    p_eval.add_argument("--report", default=None, help="report CSV path, '-' for stdout")
    p_eval.add_argument(
        "--lowercase",
        action="store_true",
        default=None,
        help="lowercase questions; defaults to the model manifest's setting",
    )
    p_eval.add_argument("--figure", default=None, help="per-category accuracy PNG")
    p_eval.set_defaults(func=cmd_eval)

    p_bench = sub.add_parser(
        "bench-sync", help="compare synchronization schemes on one corpus"
    )
    p_bench.add_argument("--corpus", required=True)
    p_bench.add_argument(
        "--schemes", default=",".join(ALL_SCHEMES), help="comma-separated scheme list"
    )
    _add_param_flags(p_bench)
    _add_cluster_flags(p_bench, scheme_flag=False)
    p_bench.set_defaults(epochs=1, scheme=SyncScheme.PMO.value)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--out", required=True, help="comparison CSV path")
    p_bench.add_argument("--no-figures", action="store_true")
    p_bench.set_defaults(func=cmd_bench_sync)

    return parser


def _expand_replay(argv: list[str]) -> list[str]:
    if not argv or argv[0] != "train" or "--replay" not in argv:
        return argv
    idx = argv.index("--replay")
    if idx + 1 >= len(argv):
        return argv
    manifest = read_manifest(argv[idx + 1])
    rest = argv[1:idx] + argv[idx + 2 :]
    return ["train"] + manifest_to_args(manifest) + rest


def main(argv: list[str] | None = None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        argv = _expand_replay(list(argv))
    except (OSError, ValueError) as exc:
        print(f"edgegram: error: {exc}", file=sys.stderr)
        return 1
    args = parser.parse_args(argv)
    try:
        return args.func(parser, args)
    except BrokenPipeError:
        return 1
    except (OSError, ValueError) as exc:
        print(f"edgegram: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
