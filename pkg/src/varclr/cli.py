"""Command-line entry point: ``varclr <command> [flags]``.

Exit status is 0 on success, 1 on domain errors (bad input files, invalid
names, ...) and 2 on usage errors.  Commands that write an artifact also
write ``<out>.manifest.json`` next to it.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .checkpoint import FORMAT_VERSION, Checkpoint, export_embeddings
from .contrastive import TrainConfig, train
from .evaluation import checkpoint_scorer, evaluate_benchmark, levenshtein_score, read_benchmark, ScoreReport
from .mining import DEFAULT_MAX_LINES, mine_corpus, read_diff_dir, read_pairs, write_pairs
from .retrieval import (DEFAULT_KS, SearchIndex, build_index, filter_similar_pairs, hit_at_k,
                        make_typos, read_pool, read_query_pairs, search, write_typos)
from .tokenizer import BpeVocab, corpus_from_names, tokenize, train_bpe

log = logging.getLogger("varclr")


def _num(x: float) -> str:
    return f"{x:.6g}"


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(args: argparse.Namespace, out, inputs: Sequence, started: float) -> None:
    files = []
    for p in inputs:
        if p is None:
            continue
        p = Path(p)
        for f in sorted(x for x in p.rglob("*") if x.is_file()) if p.is_dir() else [p]:
            files.append({"path": str(f), "sha256": _sha256(f)})
    config = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "artifact", "inputs")}
    manifest = {
        "command": args.command,
        "config": config,
        "inputs": files,
        "seed": getattr(args, "seed", None),
        "version": __version__,
        "format_version": FORMAT_VERSION,
        "duration_seconds": round(time.perf_counter() - started, 3),
    }
    with open(f"{out}.manifest.json", "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=True)
        f.write("\n")


def cmd_mine(args) -> int:
    commits, errors = read_diff_dir(args.diffs)
    for e in errors:
        print(f"varclr: skipped {e}", file=sys.stderr)
    pairs = mine_corpus(commits, max_lines=args.max_lines, workers=args.workers)
    write_pairs(pairs, args.out)
    print(f"commits={len(commits)} pairs={len(pairs)} skipped_files={len(errors)}", file=sys.stderr)
    return 0


def _read_corpus_names(path) -> list[str]:
    names = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            fields = line.rstrip("\n").split("\t")
            if len(fields) > 1:
                # pairs TSV: only the two name columns are identifiers
                names.extend(fields[:2])
            else:
                names.extend(line.split())
    return names


def cmd_train_bpe(args) -> int:
    vocab = train_bpe(corpus_from_names(_read_corpus_names(args.corpus)), args.vocab_size, args.min_freq)
    vocab.save(args.out)
    print(f"vocab_size={len(vocab)} merges={len(vocab.merges)}", file=sys.stderr)
    return 0


def cmd_tokenize(args) -> int:
    vocab = BpeVocab.load(args.vocab)
    for name in args.names:
        print(" ".join(tokenize(name, vocab).surface))
    return 0


def cmd_train(args) -> int:
    pairs = read_pairs(args.pairs)
    vocab = BpeVocab.load(args.vocab)
    config = TrainConfig(batch_size=args.batch, temperature=args.tau, lr=args.lr, clip=args.clip,
                         max_epochs=args.epochs, patience=args.patience, val_fraction=args.val_fraction,
                         data_fraction=args.data_fraction, seed=args.seed, dim=args.dim,
                         hidden=args.hidden, out_dim=args.out_dim, embedding_dropout=args.embedding_dropout)
    log_path = args.log or f"{args.out}.log.csv"
    with open(log_path, "w", encoding="utf-8", newline="\n") as logf:
        logf.write("epoch,train_loss,val_loss,seconds\n")

        def on_epoch(epoch, train_loss, val_loss, seconds):
            logf.write(f"{epoch},{_num(train_loss)},{_num(val_loss)},{_num(seconds)}\n")
            logf.flush()

        ckpt = train(pairs, vocab, args.encoder, config, init_embeddings=args.init_embeddings,
                     epoch_callback=on_epoch)
    ckpt.save(args.out)
    m = ckpt.metadata
    print(f"best_epoch={m['best_epoch']} val_loss={_num(m['val_loss'])} "
          f"n_train={m['n_train']} n_val={m['n_val']}", file=sys.stderr)
    return 0


def cmd_score(args) -> int:
    ckpt = Checkpoint.load(args.ckpt)
    print(_num(checkpoint_scorer(ckpt)(args.var1, args.var2)))
    return 0


def cmd_eval(args) -> int:
    pairs = read_benchmark(args.benchmark)
    if args.baseline == "levenshtein":
        report = evaluate_benchmark(pairs, levenshtein_score, encoder="levenshtein", benchmark=args.benchmark)
    else:
        if not args.ckpt:
            raise ValueError("eval needs --ckpt unless --baseline is given")
        ckpt = Checkpoint.load(args.ckpt)
        report = evaluate_benchmark(pairs, checkpoint_scorer(ckpt), encoder=ckpt.encoder.kind,
                                    benchmark=args.benchmark)
    print(",".join(ScoreReport.HEADER))
    print(",".join(report.row()))
    return 0


def cmd_index(args) -> int:
    ckpt = Checkpoint.load(args.ckpt)
    index = build_index(read_pool(args.pool), ckpt)
    index.save(args.out)
    print(f"indexed={len(index)} dropped={index.dropped}", file=sys.stderr)
    return 0


def cmd_search(args) -> int:
    index = SearchIndex.load(args.index)
    for name, score in search(index, args.query, args.k, exclude_query=args.exclude_query):
        print(f"{name}\t{_num(score)}")
    return 0


def _parse_ks(text: str) -> list[int]:
    try:
        ks = [int(k) for k in text.split(",") if k.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid cutoff list {text!r}") from None
    if not ks or min(ks) < 1:
        raise argparse.ArgumentTypeError("cutoffs must be positive integers")
    return sorted(set(ks))


def cmd_hitk(args) -> int:
    index = SearchIndex.load(args.index)
    if args.pairs:
        queries = read_query_pairs(args.pairs)
    else:
        queries = filter_similar_pairs(read_benchmark(args.benchmark), args.threshold,
                                       both_directions=args.both_directions)
    curve = hit_at_k(index, queries, args.ks, exclude_query=args.exclude_query)
    curve.to_csv(args.out)
    print(f"queries={curve.n_queries} dropped={curve.dropped}", file=sys.stderr)
    return 0


def cmd_typo_gen(args) -> int:
    write_typos(make_typos(read_pool(args.pool), args.count, args.seed), args.out)
    return 0


def cmd_export(args) -> int:
    export_embeddings(Checkpoint.load(args.ckpt), args.out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="varclr", description="Contrastive variable-name representations.")
    parser.add_argument("--version", action="version",
                        version=f"varclr {__version__} (format {FORMAT_VERSION})")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    p = sub.add_parser("mine", help="mine rename pairs from unified diffs")
    p.add_argument("--diffs", required=True, help="diff file or directory of diff files")
    p.add_argument("--max-lines", type=int, default=DEFAULT_MAX_LINES,
                   help="keep commits with fewer changed lines than this")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine, artifact="out", inputs=("diffs",))

    p = sub.add_parser("train-bpe", help="learn a subword vocabulary")
    p.add_argument("--corpus", required=True, help="identifiers (whitespace separated) or a pairs TSV")
    p.add_argument("--vocab-size", type=int, required=True)
    p.add_argument("--min-freq", type=int, default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_bpe, artifact="out", inputs=("corpus",))

    p = sub.add_parser("tokenize", help="print subwords for each name")
    p.add_argument("--vocab", required=True)
    p.add_argument("names", nargs="+", metavar="NAME")
    p.set_defaults(func=cmd_tokenize)

    p = sub.add_parser("train", help="contrastively train an encoder")
    p.add_argument("--pairs", required=True)
    p.add_argument("--vocab", required=True)
    p.add_argument("--encoder", choices=("avg", "lstm"), default="avg")
    p.add_argument("--dim", type=int, default=768, help="embedding dimension")
    p.add_argument("--hidden", type=int, default=150, help="LSTM hidden size per direction")
    p.add_argument("--out-dim", type=int, default=150, help="LSTM output dimension")
    p.add_argument("--batch", type=int, default=1024)
    p.add_argument("--tau", type=float, default=0.05)
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--clip", type=float, default=1.0)
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--patience", type=int, default=10)
    p.add_argument("--val-fraction", type=float, default=0.05)
    p.add_argument("--data-fraction", type=float, default=1.0)
    p.add_argument("--embedding-dropout", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--init-embeddings", default=None)
    p.add_argument("--log", default=None, help="per-epoch CSV log (default: <out>.log.csv)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train, artifact="out", inputs=("pairs", "vocab", "init_embeddings"))

    p = sub.add_parser("score", help="cosine similarity of two names")
    p.add_argument("--ckpt", required=True)
    p.add_argument("var1")
    p.add_argument("var2")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="Spearman correlation against a benchmark CSV")
    p.add_argument("--ckpt")
    p.add_argument("--benchmark", required=True)
    p.add_argument("--baseline", choices=("levenshtein",))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("index", help="encode a name pool for search")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--pool", required=True, help="one identifier per line")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_index, artifact="out", inputs=("ckpt", "pool"))

    p = sub.add_parser("search", help="top-k most similar pool names")
    p.add_argument("--index", required=True)
    p.add_argument("--query", required=True)
    p.add_argument("--k", type=int, default=10)
    p.add_argument("--exclude-query", action="store_true")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("hitk", help="Hit@K curve for query/target pairs")
    p.add_argument("--index", required=True)
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--pairs", help="query<TAB>target lines")
    src.add_argument("--benchmark", help="benchmark CSV, filtered by --threshold")
    p.add_argument("--threshold", type=float, default=0.4)
    p.add_argument("--both-directions", action="store_true")
    p.add_argument("--ks", type=_parse_ks, default=list(DEFAULT_KS))
    p.add_argument("--exclude-query", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_hitk, artifact="out", inputs=("index", "pairs", "benchmark"))

    p = sub.add_parser("typo-gen", help="generate keyboard typos of pool names")
    p.add_argument("--pool", required=True)
    p.add_argument("--count", type=int, default=1023)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_typo_gen, artifact="out", inputs=("pool",))

    p = sub.add_parser("export-embeddings", help="write the embedding table as text")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export, artifact="out", inputs=("ckpt",))
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 0
    if args.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.perf_counter()
    try:
        code = args.func(args)
        if getattr(args, "artifact", None):
            inputs = [getattr(args, name, None) for name in args.inputs]
            _write_manifest(args, getattr(args, args.artifact), inputs, started)
    except (ValueError, OSError, IndexError) as e:
        print(f"varclr: error: {e}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
