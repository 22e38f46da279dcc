"""Pipeline driver: every stage as a subcommand over a shared JSON config."""

from __future__ import annotations

import argparse
import json
import sys

from .cdfg import elaborate
from .config import PipelineConfig
from .corpus import (
    SummarizerClient,
    build_vocab,
    read_corpus,
    summarize_bundles,
    write_corpus,
)
from .cones import split_design, variant_bundle
from .errors import RtlFuseError
from .pipeline import (
    stage_ablate,
    stage_build_corpus,
    stage_finetune_and_evaluate,
    stage_index,
    stage_predict_zero_shot,
    stage_pretrain,
    stage_retrieve,
    write_toy_workspace,
)
from .rewrites import apply_rewrites
from .verilog import parse_verilog


def _load_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config)
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.train.seed = args.seed
    if getattr(args, "workers", None) is not None:
        cfg.workers = args.workers
    if getattr(args, "ablate", None):
        flag = args.ablate
        if flag == "retrieval":
            cfg.ablation_drop_retrieval = True
        elif flag in ("graph", "code", "summary"):
            cfg.ablation_drop_modality = flag
        elif flag.startswith("task:"):
            cfg.ablation_drop_task = flag.split(":", 1)[1]
        else:
            raise RtlFuseError(f"unknown ablation flag {flag!r}")
    return cfg


def cmd_parse(args) -> int:
    with open(args.source, "r", encoding="utf-8") as fh:
        design = parse_verilog(fh.read())
    graph = elaborate(design)
    text = graph.to_json()
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return 0


def cmd_split(args) -> int:
    from .cdfg import CdfGraph
    from .cones import align_netlist, bundle_from_cone

    with open(args.source, "r", encoding="utf-8") as fh:
        design = parse_verilog(fh.read())
    graph = elaborate(design)
    netlist = None
    if args.netlist:
        with open(args.netlist, "r", encoding="utf-8") as fh:
            netlist = CdfGraph.from_json(fh.read())
    bundles = []
    for cone in split_design(graph, include_outputs=args.include_outputs,
                             workers=args.workers or 1):
        net_cone = None
        if netlist is not None and not cone.is_output_cone:
            net_cone = align_netlist(cone, netlist)
        bundles.append(bundle_from_cone(design, cone, netlist_cone=net_cone))
    write_corpus(args.out, bundles)
    print(f"wrote {len(bundles)} bundles to {args.out}")
    return 0


def cmd_augment(args) -> int:
    bundles = read_corpus(args.corpus)
    out = []
    for b in bundles:
        out.append(b)
        if b.is_augmented or b.rtl_graph.is_output_cone:
            continue
        for vi, variant in enumerate(
                apply_rewrites(b.rtl_graph, args.count, seed=args.seed or 0)):
            out.append(variant_bundle(b, variant, vi))
    write_corpus(args.corpus, out)
    print(f"corpus now has {len(out)} bundles")
    return 0


def cmd_summarize(args) -> int:
    bundles = read_corpus(args.corpus)
    client = None if args.offline else SummarizerClient.from_env()
    summarize_bundles(bundles, client, max_tokens=args.max_tokens)
    write_corpus(args.corpus, bundles)
    mode = "offline" if client is None else "client"
    print(f"summarized {len(bundles)} bundles ({mode})")
    return 0


def cmd_build_corpus(args) -> int:
    cfg = _load_config(args)
    n = stage_build_corpus(cfg)
    print(f"wrote {n} bundles to {cfg.path('corpus_path')}")
    return 0


def cmd_build_vocab(args) -> int:
    vocab = build_vocab(args.corpus, min_count=args.min_count)
    vocab.save(args.out)
    print(f"vocab of {vocab.size} tokens written to {args.out}")
    return 0


def cmd_pretrain(args) -> int:
    cfg = _load_config(args)
    _model, reports = stage_pretrain(cfg)
    print(f"pre-trained {cfg.train.steps} steps; "
          f"final total loss {reports[-1].total:.4f}")
    return 0


def cmd_index(args) -> int:
    cfg = _load_config(args)
    store = stage_index(cfg, which=args.which,
                        include_augmented=args.include_augmented)
    print(f"indexed {len(store)} entries into {cfg.path('store_prefix')}")
    return 0


def cmd_retrieve(args) -> int:
    cfg = _load_config(args)
    hits = stage_retrieve(cfg, args.id, k=args.k)
    for entry, sim in hits:
        print(f"{entry.id}  sim={sim:.6f}  {entry.design}.{entry.register}")
    return 0


def cmd_predict(args) -> int:
    cfg = _load_config(args)
    if not args.zero_shot:
        raise RtlFuseError("only --zero-shot prediction is supported here; "
                           "use finetune/evaluate for fitted heads")
    rows, summaries = stage_predict_zero_shot(cfg, out_path=args.out)
    for task, value in summaries:
        print(f"{task}: zero-shot MAPE {value:.6g}%")
    if args.out:
        print(f"wrote {len(rows)} predictions to {args.out}")
    return 0


def cmd_finetune(args) -> int:
    cfg = _load_config(args)
    rows = stage_finetune_and_evaluate(cfg, head_kind=args.head,
                                       save_heads=True)
    print(f"fitted heads for {len(rows)} tasks; saved to {cfg.path('heads_path')}")
    return 0


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    rows = stage_finetune_and_evaluate(cfg, out_path=args.out or
                                       cfg.path("report_path"),
                                       head_kind=args.head)
    for task, ablation, r, m in rows:
        print(f"{task:12s} ablation={ablation:14s} R={r:.4f} MAPE={m:.4g}%")
    return 0


def cmd_ablate(args) -> int:
    cfg = _load_config(args)
    tasks = tuple(args.tasks.split(",")) if args.tasks else ()
    rows = stage_ablate(cfg, out_path=args.out or cfg.path("report_path"),
                        tasks=tasks)
    print(f"wrote {len(rows)} ablation rows")
    return 0


def cmd_init_toy(args) -> int:
    cfg = write_toy_workspace(args.dir, seed=args.seed or 0)
    print(f"toy workspace ready at {args.dir} (config.json, "
          f"{len(cfg.designs)} designs)")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rtlfuse",
        description="Multimodal RTL sub-circuit embeddings and "
                    "retrieval-augmented quality prediction")
    sub = parser.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("--config", required=True, help="pipeline config JSON")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--ablate", default=None,
                       help="graph|code|summary|retrieval|task:<name>")
        return p

    p = sub.add_parser("parse", help="parse a .v file and emit the graph JSON")
    p.add_argument("source")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_parse)

    p = sub.add_parser("split", help="split a design into sub-circuit bundles")
    p.add_argument("source")
    p.add_argument("--netlist", default=None, help="gate-level graph JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--include-outputs", action="store_true")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("augment", help="append rewrite variants to a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--count", type=int, default=7)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("summarize", help="fill bundle summaries")
    p.add_argument("--corpus", required=True)
    p.add_argument("--offline", action="store_true",
                   help="force the deterministic template summarizer")
    p.add_argument("--max-tokens", type=int, default=128)
    p.set_defaults(func=cmd_summarize)

    p = with_config(sub.add_parser("build-corpus",
                                   help="split + augment + summarize + vocab"))
    p.set_defaults(func=cmd_build_corpus)

    p = sub.add_parser("build-vocab", help="build a vocab file from a corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--min-count", type=int, default=1)
    p.set_defaults(func=cmd_build_vocab)

    p = with_config(sub.add_parser("pretrain", help="run joint pre-training"))
    p.set_defaults(func=cmd_pretrain)

    p = with_config(sub.add_parser("index", help="embed and index bundles"))
    p.add_argument("--which", choices=("train", "test", "all"), default="train")
    p.add_argument("--include-augmented", action="store_true")
    p.set_defaults(func=cmd_index)

    p = with_config(sub.add_parser("retrieve", help="top-k similar sub-circuits"))
    p.add_argument("--id", required=True)
    p.add_argument("--k", type=int, default=None)
    p.set_defaults(func=cmd_retrieve)

    p = with_config(sub.add_parser("predict", help="zero-shot metric prediction"))
    p.add_argument("--zero-shot", action="store_true")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = with_config(sub.add_parser("finetune", help="fit regression heads"))
    p.add_argument("--head", choices=("perceptron", "tree_ensemble"),
                   default="perceptron")
    p.set_defaults(func=cmd_finetune)

    p = with_config(sub.add_parser("evaluate", help="R/MAPE report CSV"))
    p.add_argument("--out", default=None)
    p.add_argument("--head", choices=("perceptron", "tree_ensemble"),
                   default="perceptron")
    p.set_defaults(func=cmd_evaluate)

    p = with_config(sub.add_parser("ablate", help="evaluate under each ablation"))
    p.add_argument("--out", default=None)
    p.add_argument("--tasks", default="",
                   help="comma-separated task ablations (re-runs pre-training)")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("init-toy", help="write the toy workspace and config")
    p.add_argument("dir")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_init_toy)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except RtlFuseError as exc:
        print(f"error in stage '{args.command}': {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
