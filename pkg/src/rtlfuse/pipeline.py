"""Stage drivers shared by the CLI: each reads and writes only its declared
artifacts, so stages compose into a reproducible end-to-end run."""

from __future__ import annotations

import os
import pickle

import numpy as np

from .cdfg import CdfGraph, elaborate
from .cones import align_netlist, bundle_from_cone, split_design, variant_bundle
from .config import PipelineConfig
from .corpus import (
    SummarizerClient,
    build_vocab,
    offline_summary,
    read_corpus,
    summarize_bundles,
    write_corpus,
)
from .errors import RtlFuseError
from .gatemap import lower_to_gates
from .losses import LossWeights
from .metrics import QualityMetrics, load_labels
from .pretrain import load_model, run_pretraining
from .quality import (
    aggregate_circuit,
    build_features,
    fit_head,
    graph_count_features,
    mape,
    pearson_r,
)
from .retrieval import StoreEntry, VectorStore
from .rewrites import apply_rewrites
from .toydata import TOY_SOURCES, toy_full_labels
from .verilog import parse_verilog

SUBCIRCUIT_TASKS = ("slack", "power", "area")
CIRCUIT_TASKS = ("wns", "tns", "total_power", "total_area")


def _read_design(path: str):
    with open(path, "r", encoding="utf-8") as fh:
        return parse_verilog(fh.read())


def _netlist_for(cfg: PipelineConfig, name: str, rtl_graph) -> CdfGraph | None:
    if name in cfg.netlists:
        path = cfg.netlists[name]
        if not os.path.isabs(path):
            path = os.path.join(cfg.work_dir, path)
        with open(path, "r", encoding="utf-8") as fh:
            return CdfGraph.from_json(fh.read())
    if cfg.auto_netlist:
        return lower_to_gates(rtl_graph)
    return None


def stage_build_corpus(cfg: PipelineConfig) -> int:
    """designs (+labels) -> JSONL corpus with augmented variants and summaries."""
    labels = load_labels(cfg.path("labels_path")) if cfg.labels_path else {}
    bundles = []
    for dpath in cfg.designs:
        full = dpath if os.path.isabs(dpath) else os.path.join(cfg.work_dir, dpath)
        design = _read_design(full)
        graph = elaborate(design)
        netlist = _netlist_for(cfg, design.name, graph)
        reg_labels = labels.get(design.name, {}).get("registers", {})
        for ci, cone in enumerate(split_design(
                graph, include_outputs=cfg.include_output_cones,
                workers=cfg.workers)):
            net_cone = None
            if netlist is not None and not cone.is_output_cone:
                net_cone = align_netlist(cone, netlist)
            anchor = bundle_from_cone(
                design, cone, netlist_cone=net_cone,
                labels=reg_labels.get(cone.root_name))
            bundles.append(anchor)
            if cone.is_output_cone:
                continue
            variants = apply_rewrites(cone, cfg.positives_per_anchor,
                                      seed=cfg.seed * 1000003 + ci)
            for vi, variant in enumerate(variants):
                bundles.append(variant_bundle(anchor, variant, vi))
    client = SummarizerClient.from_env()
    summarize_bundles(bundles, client, max_tokens=cfg.summary_max_tokens)
    write_corpus(cfg.path("corpus_path"), bundles)
    vocab = build_vocab(cfg.path("corpus_path"), min_count=1)
    vocab.save(cfg.path("vocab_path"))
    return len(bundles)


def stage_pretrain(cfg: PipelineConfig):
    from .corpus import Vocab

    bundles = read_corpus(cfg.path("corpus_path"))
    vocab = Vocab.load(cfg.path("vocab_path"))
    train_cfg = cfg.train
    if cfg.ablation_drop_task:
        # the four pre-training tasks map onto the four weight groups
        task = cfg.ablation_drop_task
        if task not in ("intra", "cross", "fusion", "impl"):
            raise RtlFuseError(f"unknown task ablation {task!r}")
        train_cfg = cfg.train.__class__.from_dict(cfg.train.to_dict())
        w = train_cfg.weights
        train_cfg.weights = LossWeights(
            0.0 if task == "intra" else w.intra,
            0.0 if task == "cross" else w.cross_modal,
            0.0 if task == "fusion" else w.fusion,
            0.0 if task == "impl" else w.impl,
        )
    model, reports = run_pretraining(bundles, cfg.encoder, train_cfg,
                                     out_dir=cfg.path("checkpoint_dir"),
                                     vocab=vocab)
    return model, reports


def _split_bundles(cfg: PipelineConfig, bundles):
    test_set = set(cfg.test_designs)
    train = [b for b in bundles if b.design not in test_set]
    test = [b for b in bundles if b.design in test_set]
    return train, test


def stage_index(cfg: PipelineConfig, which: str = "train",
                include_augmented: bool = False) -> VectorStore:
    bundles = read_corpus(cfg.path("corpus_path"))
    model = load_model(cfg.path("checkpoint_dir"))
    train, test = _split_bundles(cfg, bundles)
    chosen = {"train": train, "test": test, "all": bundles}[which]
    store = VectorStore()
    for b in chosen:
        if b.is_augmented and not include_augmented:
            continue
        if b.rtl_graph.is_output_cone:
            continue
        store.add(StoreEntry(
            b.id, model.embed(b, drop_modality=cfg.ablation_drop_modality),
            b.labels or QualityMetrics(), b.design, b.register))
    store.save(cfg.path("store_prefix"))
    return store


def stage_retrieve(cfg: PipelineConfig, bundle_id: str, k: int | None = None):
    bundles = read_corpus(cfg.path("corpus_path"))
    model = load_model(cfg.path("checkpoint_dir"))
    store = VectorStore.load(cfg.path("store_prefix"))
    by_id = {b.id: b for b in bundles}
    if bundle_id not in by_id:
        raise RtlFuseError(f"bundle {bundle_id!r} is not in the corpus")
    emb = model.embed(by_id[bundle_id],
                      drop_modality=cfg.ablation_drop_modality)
    return store.query_topk(emb, k or cfg.retrieval_k)


def stage_predict_zero_shot(cfg: PipelineConfig, out_path: str | None = None
                            ) -> list[tuple]:
    """Zero-shot metric prediction for test-design sub-circuits; returns and
    writes (id, task, label, prediction) rows plus per-task MAPE summaries."""
    bundles = read_corpus(cfg.path("corpus_path"))
    model = load_model(cfg.path("checkpoint_dir"))
    store = VectorStore.load(cfg.path("store_prefix"))
    _, test = _split_bundles(cfg, bundles)
    eval_bundles = [b for b in test
                    if not b.is_augmented and not b.rtl_graph.is_output_cone
                    and b.labels is not None]
    rows = []
    summaries = []
    for task in SUBCIRCUIT_TASKS:
        labels, preds = [], []
        for b in eval_bundles:
            label = b.labels.get(task)
            if label is None:
                continue
            pred = store.zero_shot_predict(
                model.embed(b, drop_modality=cfg.ablation_drop_modality),
                task, k=cfg.retrieval_k)
            rows.append((b.id, task, label, pred))
            labels.append(label)
            preds.append(pred)
        if labels:
            summaries.append((task, mape(labels, preds)))
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("id,task,label,prediction\n")
            for rid, task, label, pred in rows:
                fh.write(f"{rid},{task},{label:.10g},{pred:.10g}\n")
            fh.write("task,mape\n")
            for task, value in summaries:
                fh.write(f"{task},{value:.10g}\n")
    return rows, summaries


def _design_graphs(cfg: PipelineConfig) -> dict[str, CdfGraph]:
    out = {}
    for dpath in cfg.designs:
        full = dpath if os.path.isabs(dpath) else os.path.join(cfg.work_dir, dpath)
        design = _read_design(full)
        out[design.name] = elaborate(design)
    return out


def _collect_features(cfg: PipelineConfig, model, store, bundles,
                      task: str):
    feats, labels = [], []
    for b in bundles:
        if b.is_augmented or b.rtl_graph.is_output_cone or b.labels is None:
            continue
        label = b.labels.get(task)
        if label is None:
            continue
        emb = model.embed(b, drop_modality=cfg.ablation_drop_modality)
        feats.append(build_features(
            b, emb, store, task, drop_retrieval=cfg.ablation_drop_retrieval))
        labels.append(label)
    return feats, labels


def stage_finetune_and_evaluate(cfg: PipelineConfig, out_path: str | None = None,
                                head_kind: str = "perceptron",
                                save_heads: bool = False) -> list[tuple]:
    """Fit heads on train designs, score test designs; rows (task, R, MAPE)."""
    bundles = read_corpus(cfg.path("corpus_path"))
    model = load_model(cfg.path("checkpoint_dir"))
    labels = load_labels(cfg.path("labels_path")) if cfg.labels_path else {}
    train, test = _split_bundles(cfg, bundles)

    store = VectorStore()
    for b in train:
        if b.is_augmented or b.rtl_graph.is_output_cone or b.labels is None:
            continue
        store.add(StoreEntry(
            b.id, model.embed(b, drop_modality=cfg.ablation_drop_modality),
            b.labels, b.design, b.register))

    heads = {}
    rows = []
    ablation = _ablation_name(cfg)
    for task in SUBCIRCUIT_TASKS:
        xtr, ytr = _collect_features(cfg, model, store, train, task)
        xte, yte = _collect_features(cfg, model, store, test, task)
        if len(xtr) < 2 or not xte:
            continue
        head = fit_head(np.stack(xtr), np.asarray(ytr), head_kind, seed=cfg.seed)
        heads[task] = head
        preds = head.predict(np.stack(xte))
        rows.append((task, ablation, _safe_r(yte, preds), mape(yte, preds)))

    graphs = _design_graphs(cfg)
    for task in CIRCUIT_TASKS:
        xs, ys, names = [], [], []
        for design, entry in sorted(labels.items()):
            value = entry["circuit"].get(task)
            if value is None or design not in graphs:
                continue
            design_bundles = [b for b in bundles
                              if b.design == design and not b.is_augmented
                              and not b.rtl_graph.is_output_cone]
            feats = []
            for b in design_bundles:
                emb = model.embed(b, drop_modality=cfg.ablation_drop_modality)
                feats.append(build_features(
                    b, emb, store, "slack",
                    drop_retrieval=cfg.ablation_drop_retrieval))
            if not feats:
                continue
            xs.append(aggregate_circuit(feats, graph_count_features(graphs[design])))
            ys.append(value)
            names.append(design)
        train_idx = [i for i, n in enumerate(names) if n not in set(cfg.test_designs)]
        test_idx = [i for i, n in enumerate(names) if n in set(cfg.test_designs)]
        if len(train_idx) < 2 or not test_idx:
            continue
        head = fit_head(np.stack([xs[i] for i in train_idx]),
                        np.asarray([ys[i] for i in train_idx]),
                        head_kind, seed=cfg.seed)
        heads[task] = head
        preds = head.predict(np.stack([xs[i] for i in test_idx]))
        yte = [ys[i] for i in test_idx]
        rows.append((task, ablation, _safe_r(yte, preds), mape(yte, preds)))

    if save_heads:
        with open(cfg.path("heads_path"), "wb") as fh:
            pickle.dump(heads, fh)
    if out_path:
        _write_report(out_path, rows)
    return rows


def _safe_r(labels, preds) -> float:
    try:
        return pearson_r(labels, preds)
    except RtlFuseError:
        return float("nan")


def _ablation_name(cfg: PipelineConfig) -> str:
    parts = []
    if cfg.ablation_drop_modality:
        parts.append(f"drop_{cfg.ablation_drop_modality}")
    if cfg.ablation_drop_retrieval:
        parts.append("drop_retrieval")
    if cfg.ablation_drop_task:
        parts.append(f"drop_task_{cfg.ablation_drop_task}")
    return "+".join(parts) if parts else "none"


def _write_report(path: str, rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("task,ablation,r,mape\n")
        for task, ablation, r, m in rows:
            fh.write(f"{task},{ablation},{r:.10g},{m:.10g}\n")


def stage_ablate(cfg: PipelineConfig, out_path: str | None = None,
                 modalities: tuple = ("graph", "code", "summary"),
                 retrieval: bool = True, tasks: tuple = ()) -> list[tuple]:
    """Re-run evaluation under each ablation flag; task ablations re-run
    pre-training with that loss weight zeroed."""
    rows = list(stage_finetune_and_evaluate(cfg))
    for modality in modalities:
        sub = PipelineConfig.from_dict(cfg.to_dict())
        sub.ablation_drop_modality = modality
        rows.extend(stage_finetune_and_evaluate(sub))
    if retrieval:
        sub = PipelineConfig.from_dict(cfg.to_dict())
        sub.ablation_drop_retrieval = True
        rows.extend(stage_finetune_and_evaluate(sub))
    for task in tasks:
        sub = PipelineConfig.from_dict(cfg.to_dict())
        sub.ablation_drop_task = task
        sub.checkpoint_dir = cfg.checkpoint_dir + f"_drop_{task}"
        stage_pretrain(sub)
        rows.extend(stage_finetune_and_evaluate(sub))
    if out_path:
        _write_report(out_path, rows)
    return rows


def write_toy_workspace(work_dir: str, n_classes: int = 5,
                        variants_per_anchor: int = 9, seed: int = 0
                        ) -> PipelineConfig:
    """Materialize the toy designs, labels, and a ready-to-run config file."""
    os.makedirs(work_dir, exist_ok=True)
    from .metrics import save_labels

    design_paths = []
    for name, src in TOY_SOURCES.items():
        path = os.path.join(work_dir, f"{name}.v")
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(src.strip() + "\n")
        design_paths.append(f"{name}.v")
    save_labels(os.path.join(work_dir, "labels.json"), toy_full_labels())
    cfg = PipelineConfig(
        designs=design_paths,
        labels_path="labels.json",
        work_dir=work_dir,
        test_designs=["gated_mux", "case_ctrl"],
        seed=seed,
        positives_per_anchor=variants_per_anchor,
    )
    cfg.save(os.path.join(work_dir, "config.json"))
    return cfg
