"""Command-line entry point: one subcommand per pipeline stage.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .episodes import A_SWEEP, EpisodeConfig, episode_queries
from .errors import DataError, NumericError
from .harness import ExperimentSpec, emit_csv, load_dataset, run_experiment
from .index import AnnParams, build_compact_index, build_index, load_index, measure_recall, save_index
from .learners.maml import MamlConfig
from .learners.training import META_RETRIEVAL, METHODS, TrainSettings
from .store import (
    SyntheticSpec,
    generate_synthetic,
    load_corpus,
    load_text_embeddings,
    save_corpus,
    save_text_embeddings,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(f"{self.prog}: {message}")


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _add_gen(sub) -> None:
    p = sub.add_parser("gen-synthetic", help="write a synthetic eval corpus, repository and text embeddings")
    d = SyntheticSpec()
    p.add_argument("--out-dir", required=True, type=Path)
    p.add_argument("--n-classes", type=int, default=d.n_classes)
    p.add_argument("--per-class", type=int, default=d.per_class)
    p.add_argument("--corpus-per-class", type=int, default=d.corpus_per_class)
    p.add_argument("--dim", type=int, default=d.dim)
    p.add_argument("--noise", type=float, default=d.intra_class_noise)
    p.add_argument("--text-noise", type=float, default=d.text_noise)
    p.add_argument("--distractor-fraction", type=float, default=d.distractor_fraction)
    p.add_argument("--label-prefix", default=d.label_prefix)
    p.add_argument("--seed", type=int, default=d.seed)


def _add_build_index(sub) -> None:
    p = sub.add_parser("build-index", help="index a retrieval corpus")
    p.add_argument("--retrieval-corpus", required=True, type=Path)
    p.add_argument("--mode", choices=("exact", "ann"), default="exact")
    p.add_argument("--nlist", type=int, default=AnnParams.nlist)
    p.add_argument("--nprobe", type=int, default=AnnParams.nprobe)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, type=Path)


def _add_compact(sub) -> None:
    p = sub.add_parser("build-compact-index", help="exact index over the neighbours of a dataset")
    p.add_argument("--index", required=True, type=Path, help="full index descriptor")
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--text-embeddings", required=True, type=Path)
    p.add_argument("--per-image-k", type=int, default=20)
    p.add_argument("--per-class-k", type=int, default=100)
    p.add_argument("--out", required=True, type=Path)


def _add_recall(sub) -> None:
    p = sub.add_parser("eval-recall", help="recall@a of candidate indexes against a reference")
    p.add_argument("--index", required=True, type=Path, help="reference index descriptor")
    p.add_argument("--candidate", required=True, type=Path)
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--text-embeddings", required=True, type=Path)
    p.add_argument("--split", default="test")
    p.add_argument("--n-queries", type=int, default=200)
    p.add_argument("--a", type=int, default=20)
    p.add_argument("--nprobe", type=int, action="append", help="repeatable; ann candidates only")
    p.add_argument("--n-way", type=int, default=EpisodeConfig.n_way)
    p.add_argument("--alpha-t", type=float, default=EpisodeConfig.alpha_t)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path)


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="run an experiment and write a CSV")
    p.add_argument("experiment", choices=("sweep", "ablation", "cross-eval"))
    p.add_argument("--corpus", required=True, type=Path)
    p.add_argument("--text-embeddings", required=True, type=Path)
    p.add_argument("--index", required=True, type=Path)
    p.add_argument("--name", default="a")
    p.add_argument("--corpus-b", type=Path)
    p.add_argument("--text-embeddings-b", type=Path)
    p.add_argument("--index-b", type=Path)
    p.add_argument("--name-b", default="b")
    p.add_argument("--retrieval-corpus", type=Path, help="accepted for symmetry; the index carries its corpus")
    p.add_argument("--n-way", type=int, default=EpisodeConfig.n_way)
    p.add_argument("--k-shot", type=int, default=EpisodeConfig.k_shot)
    p.add_argument("--queries", type=int, default=EpisodeConfig.q_query)
    p.add_argument("--augment", type=int, action="append", help="repeatable A value")
    p.add_argument("--alpha-t", type=float, default=EpisodeConfig.alpha_t)
    p.add_argument("--method", action="append", choices=METHODS, help="repeatable")
    p.add_argument("--meta-retrieval", choices=META_RETRIEVAL, default="none")
    p.add_argument("--seed", type=int, default=0, help="first replicate seed")
    p.add_argument("--seeds", type=_positive_int, default=5, help="number of replicate seeds")
    p.add_argument("--inner-steps", type=int, default=MamlConfig.inner_steps)
    p.add_argument("--max-steps", type=int, default=TrainSettings.max_steps)
    p.add_argument("--test-episodes", type=int, default=TrainSettings.test_episodes)
    p.add_argument("--out", required=True, type=Path)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="fewshot-retrieval", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for add in (_add_gen, _add_build_index, _add_compact, _add_recall, _add_run):
        add(sub)
    return parser


def cmd_gen(args) -> None:
    spec = SyntheticSpec(
        n_classes=args.n_classes, per_class=args.per_class, corpus_per_class=args.corpus_per_class,
        dim=args.dim, intra_class_noise=args.noise, text_noise=args.text_noise,
        distractor_fraction=args.distractor_fraction, seed=args.seed, label_prefix=args.label_prefix,
    )
    eval_corpus, retrieval, text = generate_synthetic(spec)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    save_corpus(eval_corpus, args.out_dir / "eval.rafc")
    save_corpus(retrieval, args.out_dir / "retrieval.rafc")
    save_text_embeddings(text, args.out_dir / "text.rafc", eval_corpus.class_splits())
    print(f"wrote {eval_corpus.rows} eval rows, {retrieval.rows} repository rows to {args.out_dir}")


def cmd_build_index(args) -> None:
    corpus = load_corpus(args.retrieval_corpus)
    index = build_index(corpus, args.mode, AnnParams(args.nlist, args.nprobe), seed=args.seed)
    save_index(index, args.out)
    print(f"wrote {args.mode} index over {len(index)} rows to {args.out}")


def cmd_compact(args) -> None:
    full = load_index(args.index)
    corpus = load_corpus(args.corpus)
    text = load_text_embeddings(args.text_embeddings)
    text.check_covers(corpus)
    compact = build_compact_index(full, corpus, text, args.per_image_k, args.per_class_k)
    save_index(compact, args.out)
    print(f"wrote compact index with {len(compact)} of {len(full)} rows to {args.out}")


def cmd_recall(args) -> None:
    reference = load_index(args.index)
    candidate = load_index(args.candidate)
    corpus = load_corpus(args.corpus)
    text = load_text_embeddings(args.text_embeddings)
    cfg = EpisodeConfig(n_way=args.n_way, alpha_t=args.alpha_t, seed=args.seed)
    queries = episode_queries(corpus, text, args.split, cfg, args.n_queries)
    probes = args.nprobe if args.nprobe and candidate.mode == "ann" else [candidate.ann_params.nprobe]
    lines = ["nprobe,recall"]
    for nprobe in probes:
        r = measure_recall(reference, candidate.with_nprobe(nprobe), queries, args.a)
        lines.append(f"{nprobe},{r:.4f}")
    text_out = "\r\n".join(lines) + "\r\n"
    if args.out:
        args.out.write_text(text_out, newline="")
    print(text_out, end="")


def cmd_run(args) -> None:
    ds_a = load_dataset(args.name, args.corpus, args.text_embeddings, args.index)
    ds_b = None
    b_paths = (args.corpus_b, args.text_embeddings_b, args.index_b)
    if any(b_paths):
        if not all(b_paths):
            raise UsageError("--corpus-b, --text-embeddings-b and --index-b go together")
        ds_b = load_dataset(args.name_b, *b_paths)
    if args.experiment == "cross-eval" and ds_b is None:
        raise UsageError("cross-eval needs --corpus-b, --text-embeddings-b and --index-b")
    episode = EpisodeConfig(n_way=args.n_way, k_shot=args.k_shot, q_query=args.queries, alpha_t=args.alpha_t)
    settings = TrainSettings(
        maml=replace(MamlConfig(), inner_steps=args.inner_steps),
        max_steps=args.max_steps,
        test_episodes=args.test_episodes,
    )
    spec = ExperimentSpec(
        name=args.experiment,
        dataset_a=ds_a,
        dataset_b=ds_b,
        methods=tuple(args.method or ("lr", "maml", "protonet")),
        a_sweep=tuple(args.augment if args.augment is not None else A_SWEEP),
        meta_retrieval=args.meta_retrieval,
        seeds=tuple(range(args.seed, args.seed + args.seeds)),
        episode=episode,
        settings=settings,
    )
    rows = run_experiment(spec)
    emit_csv(rows, args.out)
    print(f"wrote {len(rows)} rows to {args.out}")


COMMANDS = {
    "gen-synthetic": cmd_gen,
    "build-index": cmd_build_index,
    "build-compact-index": cmd_compact,
    "eval-recall": cmd_recall,
    "run": cmd_run,
}


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, OSError, json.JSONDecodeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
