"""Joint self-supervised pre-training over the multimodal sub-circuit corpus.

The netlist encoder is pre-trained first (masked gate modeling plus a
contrastive task with gate-level rewrite positives) and frozen by default
while the four joint tasks train the rest of the model.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cdfg import OP_INDEX, OP_VOCAB
from .cones import Cone, SubCircuitBundle
from .corpus import CLS_ID, MASK_ID, Vocab, build_vocab_from_texts, tokenize
from .encoders import EncoderParams, GraphEncoder, NetlistEncoder, TextEncoder
from .errors import Diverged, EmptyNegatives
from .fusion import FusionEncoder, mixup, strip_cls
from .layers import AdamW, Linear, Mlp, ParamStore, save_checkpoint
from .losses import (
    ContrastiveBatch,
    LossReport,
    LossWeights,
    contrastive_loss,
    cross_modal_loss,
    impl_align_loss,
    match_loss,
    mgm_loss,
    msm_loss,
    total_loss,
)
from .rewrites import apply_rewrites


@dataclass
class MaskedGraph:
    graph_cone: Cone
    masked_ids: tuple[int, ...]
    targets: dict[int, np.ndarray]  # node id -> one-hot op-type vector


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def mask_graph(cone: Cone, ratio: float, seed) -> MaskedGraph:
    """Replace ~ratio of the nodes (at least one) with the [MASK] op."""
    if not 0.0 < ratio < 1.0:
        raise ValueError("ratio must be in (0, 1)")
    ids = [n.id for n in cone.graph.nodes]
    k = max(1, _round_half_up(ratio * len(ids)))
    rng = np.random.default_rng(seed)
    chosen = sorted(rng.choice(np.asarray(ids), size=k, replace=False).tolist())
    targets = {}
    for nid in chosen:
        one_hot = np.zeros(len(OP_VOCAB))
        one_hot[OP_INDEX[cone.graph.node(nid).op]] = 1.0
        targets[nid] = one_hot
    return MaskedGraph(cone, tuple(chosen), targets)


def mask_summary(ids: list[int], ratio: float, seed) -> tuple[list[int], list[int], list[int]]:
    """Mask summary token positions (never [CLS]); returns (masked ids,
    positions, original ids at those positions)."""
    maskable = [i for i in range(1, len(ids))]
    if not maskable:
        return list(ids), [], []
    k = max(1, _round_half_up(ratio * len(maskable)))
    rng = np.random.default_rng(seed)
    pos = sorted(rng.choice(np.asarray(maskable), size=min(k, len(maskable)),
                            replace=False).tolist())
    out = list(ids)
    originals = []
    for p in pos:
        originals.append(out[p])
        out[p] = MASK_ID
    return out, pos, originals


@dataclass
class TrainConfig:
    seed: int = 0
    steps: int = 200
    batch_size: int = 16   # paper-scale 128, scaled for the desk
    lr_peak: float = 1e-4
    lr_floor: float = 1e-5
    warmup_iters: int = 1000
    weight_decay: float = 0.01
    tau: float = 0.3
    mask_ratio: float = 0.3
    lam: float = 0.5
    lam_beta_alpha: float | None = None  # sample lam ~ Beta(a, a) when set
    weights: LossWeights = field(default_factory=LossWeights)
    netlist_steps: int = 30
    netlist_lr: float = 1e-3
    freeze_netlist: bool = True
    freeze_code: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        if "weights" in d and isinstance(d["weights"], dict):
            d["weights"] = LossWeights(**d["weights"])
        return cls(**d)


def lr_at(step: int, total_steps: int, peak: float, floor: float,
          warmup: int) -> float:
    """Linear warmup to the peak over `warmup` iterations, then cosine decay
    to the floor."""
    if warmup > 0 and step < warmup:
        return peak * step / warmup
    if total_steps <= warmup:
        return peak
    progress = min(max((step - warmup) / (total_steps - warmup), 0.0), 1.0)
    return floor + 0.5 * (peak - floor) * (1.0 + math.cos(math.pi * progress))


class MultiModalModel:
    """All encoders, the fusion stack, and the task heads behind one
    parameter store."""

    def __init__(self, params: EncoderParams, vocab: Vocab, seed: int = 0):
        self.p = params
        self.vocab = vocab
        self.store = ParamStore(np.random.default_rng([seed, 0xE17C0DE]))
        d = params.d_model
        self.graph_enc = GraphEncoder(self.store, "graph", params)
        self.summary_enc = TextEncoder(self.store, "summary", params, vocab.size,
                                       params.summary_layers, params.max_summary_len)
        self.code_enc = TextEncoder(self.store, "code", params, vocab.size,
                                    params.code_layers, params.max_code_len)
        self.fusion = FusionEncoder(self.store, "fusion", params)
        self.netlist_enc = NetlistEncoder(self.store, "netlist", params)
        self.mgm_head = Mlp(self.store, "mgm_head",
                            [d, params.mgm_hidden, params.mgm_hidden, len(OP_VOCAB)])
        self.netlist_mgm_head = Mlp(self.store, "netlist_mgm_head",
                                    [d, params.mgm_hidden, len(OP_VOCAB)])
        self.msm_head = Linear(self.store, "msm_head", d, vocab.size)
        self.match_head = Linear(self.store, "match_head", d, 2)

    # -- single-bundle forwards -------------------------------------------------

    def summary_ids(self, bundle: SubCircuitBundle) -> list[int]:
        return tokenize(bundle.summary, self.vocab, self.p.max_summary_len)

    def code_ids(self, bundle: SubCircuitBundle) -> list[int]:
        return tokenize(bundle.code, self.vocab, self.p.max_code_len)

    def fuse_bundle(self, bundle: SubCircuitBundle, lam: float | None = None,
                    drop_modality: str | None = None):
        """Full fusion forward; returns (fused, g_seq, s_seq, c_seq, mix)."""
        lam = self.default_lam() if lam is None else lam
        g_seq = self.graph_enc(bundle.rtl_graph.graph)
        s_ids = self.summary_ids(bundle)
        if drop_modality == "summary":
            s_ids = [CLS_ID]
        s_seq = self.summary_enc(np.asarray(s_ids))
        c_seq = self.code_enc(np.asarray(self.code_ids(bundle)))
        if drop_modality == "graph":
            lam = 0.0
        elif drop_modality == "code":
            lam = 1.0
        mix = mixup(strip_cls(g_seq), strip_cls(c_seq), lam)
        fused = self.fusion(s_seq, mix)
        return fused, g_seq, s_seq, c_seq, mix

    def embed(self, bundle: SubCircuitBundle, lam: float | None = None,
              drop_modality: str | None = None) -> np.ndarray:
        """Fused sub-circuit embedding (the position-0 output), as numpy."""
        with ad.no_grad():
            fused, *_ = self.fuse_bundle(bundle, lam, drop_modality)
            return np.array(fused.cls.data)

    def default_lam(self) -> float:
        return 0.5

    def parameters(self) -> dict[str, Tensor]:
        return self.store.params

    def trainable_parameters(self, freeze_netlist: bool,
                             freeze_code: bool) -> dict[str, Tensor]:
        out = {}
        for name, t in self.store.params.items():
            if freeze_netlist and (name.startswith("netlist")):
                continue
            if freeze_code and name.startswith("code"):
                continue
            out[name] = t
        return out


# --- batch construction -----------------------------------------------------------

class CorpusIndex:
    def __init__(self, bundles: list[SubCircuitBundle]):
        self.bundles = list(bundles)
        self.by_class: dict[str, list[int]] = {}
        for i, b in enumerate(self.bundles):
            if b.rtl_graph.is_output_cone:
                continue  # output cones are excluded from pre-training
            self.by_class.setdefault(b.equivalence_class, []).append(i)
        self.classes = sorted(c for c, idxs in self.by_class.items()
                              if len(idxs) >= 2)
        if len(self.classes) < 2:
            raise EmptyNegatives(
                "pre-training needs at least two equivalence classes with "
                "two members each")

    def sample_pairs(self, batch_size: int,
                     rng: np.random.Generator) -> list[tuple[int, int]]:
        n_classes = len(self.classes)
        for _ in range(64):
            picked = rng.choice(np.asarray(self.classes), size=batch_size,
                                replace=batch_size > n_classes)
            if len(set(picked.tolist())) >= 2:
                break
        pairs = []
        for cls_id in picked.tolist():
            idxs = self.by_class[cls_id]
            a, p = rng.choice(np.asarray(idxs), size=2, replace=False).tolist()
            pairs.append((a, p))
        return pairs


def batch_losses(model: MultiModalModel, index: CorpusIndex,
                 pairs: list[tuple[int, int]], cfg: TrainConfig, step: int,
                 rng: np.random.Generator):
    """All seven loss terms for one batch of (anchor, positive) pairs."""
    p = model.p
    lam = cfg.lam
    if cfg.lam_beta_alpha is not None:
        lam = float(rng.beta(cfg.lam_beta_alpha, cfg.lam_beta_alpha))

    g_cls, g_pos_cls = [], []
    s_cls, s_pos_cls = [], []
    c_cls = []
    r_cls, n_pool = [], []
    mixes, summaries = [], []
    classes = []
    mgm_preds, mgm_targets = [], []
    msm_logits_parts, msm_targets = [], []

    for bi, (ai, pi) in enumerate(pairs):
        anchor = index.bundles[ai]
        positive = index.bundles[pi]
        classes.append(anchor.equivalence_class)

        mg = mask_graph(anchor.rtl_graph, cfg.mask_ratio, [cfg.seed, step, bi, 0])
        masked_seq = model.graph_enc(anchor.rtl_graph.graph,
                                     masked_ids=frozenset(mg.masked_ids))
        node_pos = {n.id: j + 1 for j, n in enumerate(anchor.rtl_graph.graph.nodes)}
        rows = np.asarray([node_pos[nid] for nid in mg.masked_ids])
        pred = ad.softmax(model.mgm_head(masked_seq.vectors[rows]), axis=-1)
        mgm_preds.append(pred)
        mgm_targets.append(np.stack([mg.targets[nid] for nid in mg.masked_ids]))

        fused, g_seq, s_seq, c_seq, mix = model.fuse_bundle(anchor, lam=lam)
        g_cls.append(g_seq.cls)
        s_cls.append(s_seq.cls)
        c_cls.append(c_seq.cls)
        r_cls.append(fused.cls)
        mixes.append(mix)
        summaries.append(s_seq)

        g_pos = model.graph_enc(positive.rtl_graph.graph)
        g_pos_cls.append(g_pos.cls)
        s_pos = model.summary_enc(np.asarray(model.summary_ids(positive)))
        s_pos_cls.append(s_pos.cls)

        s_ids = model.summary_ids(anchor)
        m_ids, m_pos, m_orig = mask_summary(s_ids, cfg.mask_ratio,
                                            [cfg.seed, step, bi, 1])
        if m_pos:
            ms_seq = model.summary_enc(np.asarray(m_ids))
            fused_masked = model.fusion(ms_seq, mix)
            msm_logits_parts.append(
                model.msm_head(fused_masked.vectors[np.asarray(m_pos)]))
            msm_targets.extend(m_orig)

        if anchor.netlist_graph is not None:
            n_pool.append(model.netlist_enc(anchor.netlist_graph.graph).pooled)
        else:
            n_pool.append(None)

    loss_mgm = mgm_loss(ad.concatenate(mgm_preds, axis=0),
                        np.concatenate(mgm_targets, axis=0))
    loss_clg = contrastive_loss(ContrastiveBatch(g_cls, g_pos_cls, classes, cfg.tau))
    loss_cls = contrastive_loss(ContrastiveBatch(s_cls, s_pos_cls, classes, cfg.tau))
    loss_cross = cross_modal_loss(s_cls, g_cls, c_cls, classes, cfg.tau)

    if msm_logits_parts:
        loss_msm = msm_loss(ad.concatenate(msm_logits_parts, axis=0),
                            np.asarray(msm_targets))
    else:
        loss_msm = Tensor(0.0)

    # matched pairs plus one in-batch mismatched pair per sample
    probs, labels = [], []
    for i, fused_cls in enumerate(r_cls):
        probs.append(ad.softmax(model.match_head(fused_cls), axis=-1)[1])
        labels.append(1.0)
    if len(pairs) > 1:
        for i in range(len(pairs)):
            j = (i + 1) % len(pairs)
            mismatched = model.fusion(summaries[i], mixes[j])
            probs.append(ad.softmax(model.match_head(mismatched.cls), axis=-1)[1])
            labels.append(0.0)
    loss_match = match_loss(ad.stack(probs), np.asarray(labels))

    have_netlist = [i for i, n in enumerate(n_pool) if n is not None]
    if len(have_netlist) >= 2:
        loss_impl = impl_align_loss([r_cls[i] for i in have_netlist],
                                    [n_pool[i] for i in have_netlist],
                                    [classes[i] for i in have_netlist], cfg.tau)
    else:
        loss_impl = Tensor(0.0)

    total = total_loss(loss_mgm, loss_clg, loss_cls, loss_cross, loss_msm,
                       loss_match, loss_impl, cfg.weights)
    report = LossReport(
        loss_mgm.item(), loss_clg.item(), loss_cls.item(), loss_cross.item(),
        loss_msm.item(), loss_match.item(), loss_impl.item(), total.item(),
        cfg.weights.as_tuple(),
    )
    return total, report


# --- netlist encoder pre-training ---------------------------------------------------

def pretrain_netlist_encoder(model: MultiModalModel, index: CorpusIndex,
                             cfg: TrainConfig) -> list[float]:
    """Masked gate modeling + contrastive over gate-level rewrite positives."""
    anchors: dict[str, Cone] = {}
    for cls_id in index.classes:
        b = index.bundles[index.by_class[cls_id][0]]
        if b.netlist_graph is not None:
            anchors[cls_id] = b.netlist_graph
    if len(anchors) < 2 or cfg.netlist_steps <= 0:
        return []
    variants = {
        cls_id: apply_rewrites(cone, 1, seed=cfg.seed + 17)[0]
        for cls_id, cone in anchors.items()
    }
    params = {k: v for k, v in model.store.params.items()
              if k.startswith("netlist")}
    opt = AdamW(params, lr=cfg.netlist_lr, weight_decay=cfg.weight_decay)
    classes = sorted(anchors)
    history = []
    for step in range(cfg.netlist_steps):
        opt.zero_grad()
        pooled_a, pooled_v = [], []
        mgm_preds, mgm_targets = [], []
        for ci, cls_id in enumerate(classes):
            cone = anchors[cls_id]
            mg = mask_graph(cone, cfg.mask_ratio, [cfg.seed, step, ci, 2])
            emb_masked = model.netlist_enc(cone.graph,
                                           masked_ids=frozenset(mg.masked_ids))
            node_pos = {n.id: j for j, n in enumerate(cone.graph.nodes)}
            rows = np.asarray([node_pos[nid] for nid in mg.masked_ids])
            pred = ad.softmax(
                model.netlist_mgm_head(emb_masked.node_vectors[rows]), axis=-1)
            mgm_preds.append(pred)
            mgm_targets.append(np.stack([mg.targets[n] for n in mg.masked_ids]))
            pooled_a.append(model.netlist_enc(cone.graph).pooled)
            pooled_v.append(model.netlist_enc(variants[cls_id].graph).pooled)
        loss = mgm_loss(ad.concatenate(mgm_preds, axis=0),
                        np.concatenate(mgm_targets, axis=0))
        loss = loss + contrastive_loss(
            ContrastiveBatch(pooled_a, pooled_v, classes, cfg.tau))
        loss.backward()
        opt.step()
        history.append(loss.item())
    return history


# --- training loop --------------------------------------------------------------------

def run_pretraining(bundles: list[SubCircuitBundle], params: EncoderParams,
                    cfg: TrainConfig, out_dir: str | None = None,
                    vocab: Vocab | None = None):
    """Train all four tasks jointly; returns (model, reports). Deterministic
    per seed on a single worker."""
    if vocab is None:
        texts = []
        for b in bundles:
            texts.append(b.code)
            texts.append(b.summary)
        vocab = build_vocab_from_texts(texts, min_count=1)
    index = CorpusIndex(bundles)
    model = MultiModalModel(params, vocab, seed=cfg.seed)

    netlist_history = pretrain_netlist_encoder(model, index, cfg)

    trainable = model.trainable_parameters(cfg.freeze_netlist, cfg.freeze_code)
    opt = AdamW(trainable, lr=cfg.lr_peak, weight_decay=cfg.weight_decay)
    reports: list[LossReport] = []
    rng = np.random.default_rng([cfg.seed, 0xBA7C4])
    for step in range(cfg.steps):
        pairs = index.sample_pairs(cfg.batch_size, rng)
        opt.zero_grad()
        total, report = batch_losses(model, index, pairs, cfg, step, rng)
        if not report.is_finite():
            raise Diverged(step, report)
        total.backward()
        opt.step(lr_at(step, cfg.steps, cfg.lr_peak, cfg.lr_floor,
                       cfg.warmup_iters))
        reports.append(report)

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        save_model(model, out_dir)
        with open(os.path.join(out_dir, "metrics.csv"), "w", encoding="utf-8") as fh:
            fh.write(LossReport.CSV_HEADER + "\n")
            for i, r in enumerate(reports):
                fh.write(r.csv_row(i) + "\n")
        with open(os.path.join(out_dir, "train_config.json"), "w",
                  encoding="utf-8") as fh:
            json.dump(cfg.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")
        if netlist_history:
            with open(os.path.join(out_dir, "netlist_metrics.csv"), "w",
                      encoding="utf-8") as fh:
                fh.write("step,loss\n")
                for i, v in enumerate(netlist_history):
                    fh.write(f"{i},{v:.10g}\n")
    return model, reports


def save_model(model: MultiModalModel, out_dir: str) -> dict:
    os.makedirs(out_dir, exist_ok=True)
    manifest = save_checkpoint(model.store.params,
                               os.path.join(out_dir, "checkpoint"))
    model.vocab.save(os.path.join(out_dir, "vocab.json"))
    with open(os.path.join(out_dir, "encoder_params.json"), "w",
              encoding="utf-8") as fh:
        json.dump(asdict(model.p), fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_model(out_dir: str) -> MultiModalModel:
    from .layers import assign_checkpoint, load_checkpoint

    with open(os.path.join(out_dir, "encoder_params.json"), "r",
              encoding="utf-8") as fh:
        params = EncoderParams(**json.load(fh))
    vocab = Vocab.load(os.path.join(out_dir, "vocab.json"))
    model = MultiModalModel(params, vocab, seed=0)
    assign_checkpoint(model.store.params,
                      load_checkpoint(os.path.join(out_dir, "checkpoint")))
    return model
