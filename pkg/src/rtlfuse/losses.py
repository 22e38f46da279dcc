"""Pre-training objectives: masked graph/summary modeling, InfoNCE contrastive
terms within and across modalities, matching, and the weighted joint loss."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import EmptyNegatives, ShapeMismatch


def info_nce(anchor, positive, negatives, tau: float) -> Tensor:
    """-log( exp(sim(a,p)/tau) / (exp(sim(a,p)/tau) + sum exp(sim(a,n)/tau)) )
    with cosine similarity."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    negatives = list(negatives)
    if not negatives:
        raise EmptyNegatives("InfoNCE needs at least one negative")
    anchor = ad.as_tensor(anchor)
    sims = [ad.cosine_similarity(anchor, ad.as_tensor(positive))]
    sims.extend(ad.cosine_similarity(anchor, ad.as_tensor(n)) for n in negatives)
    logits = ad.stack(sims) * (1.0 / tau)
    return -ad.log_softmax(logits, axis=-1)[0]


@dataclass
class ContrastiveBatch:
    """Anchors with equivalence-class partners as positives; every other
    in-batch item of a different class is a negative."""

    anchors: list
    positives: list
    classes: list
    tau: float = 0.3
    pool: list | None = None  # negative pool; defaults to the anchors

    def __post_init__(self):
        if not (len(self.anchors) == len(self.positives) == len(self.classes)):
            raise ShapeMismatch("contrastive batch fields must align")


def contrastive_loss(batch: ContrastiveBatch) -> Tensor:
    pool = batch.pool if batch.pool is not None else batch.anchors
    losses = []
    for i, (a, p) in enumerate(zip(batch.anchors, batch.positives)):
        negs = [pool[j] for j in range(len(pool))
                if j != i and batch.classes[j] != batch.classes[i]]
        losses.append(info_nce(a, p, negs, batch.tau))
    total = losses[0]
    for piece in losses[1:]:
        total = total + piece
    return total * (1.0 / len(losses))


def intra_modal_loss(graph_batch: ContrastiveBatch,
                     summary_batch: ContrastiveBatch) -> Tensor:
    return contrastive_loss(graph_batch) + contrastive_loss(summary_batch)


def cross_modal_loss(summary_cls: list, graph_cls: list, code_cls: list,
                     classes: list, tau: float = 0.3) -> Tensor:
    """Summary anchors against same-sample graph and code positives."""
    to_graph = contrastive_loss(ContrastiveBatch(
        summary_cls, graph_cls, classes, tau, pool=graph_cls))
    to_code = contrastive_loss(ContrastiveBatch(
        summary_cls, code_cls, classes, tau, pool=code_cls))
    return to_graph + to_code


def impl_align_loss(fused_cls: list, netlist_pooled: list, classes: list,
                    tau: float = 0.3) -> Tensor:
    """Symmetric InfoNCE between fused RTL embeddings and netlist pools."""
    rtl_to_net = contrastive_loss(ContrastiveBatch(
        fused_cls, netlist_pooled, classes, tau, pool=netlist_pooled))
    net_to_rtl = contrastive_loss(ContrastiveBatch(
        netlist_pooled, fused_cls, classes, tau, pool=fused_cls))
    return rtl_to_net + net_to_rtl


def mgm_loss(pred, targets) -> Tensor:
    """Mean squared error between predicted and one-hot op-type vectors,
    averaged over masked nodes and vector components."""
    pred = ad.as_tensor(pred)
    targets = np.asarray(targets, dtype=np.float64)
    if pred.shape != targets.shape:
        raise ShapeMismatch(f"{pred.shape} vs {targets.shape}")
    diff = pred - Tensor(targets)
    return (diff * diff).mean()


def msm_loss(logits, target_ids) -> Tensor:
    """Cross-entropy at masked summary positions only; an empty mask is 0."""
    target_ids = np.asarray(target_ids, dtype=np.int64)
    if target_ids.size == 0:
        warnings.warn("msm_loss called with no masked positions", stacklevel=2)
        return Tensor(0.0)
    logits = ad.as_tensor(logits)
    logp = ad.log_softmax(logits, axis=-1)
    picked = logp[np.arange(target_ids.size), target_ids]
    return -picked.mean()


def match_loss(match_probs, labels) -> Tensor:
    """Binary cross-entropy over matched(1)/mismatched(0) pair probabilities."""
    probs = ad.as_tensor(match_probs)
    labels = np.asarray(labels, dtype=bool)
    per_pair = ad.where(labels, ad.log(probs), ad.log(1.0 - probs))
    return -per_pair.mean()


@dataclass
class LossWeights:
    intra: float = 1.0       # masked-graph + intra-modal contrastive group
    cross_modal: float = 0.2
    fusion: float = 1.0      # masked-summary + matching group
    impl: float = 0.2

    def as_tuple(self):
        return (self.intra, self.cross_modal, self.fusion, self.impl)


def total_loss(masked_graph, graph_contrast, summary_contrast, cross_modal,
               masked_summary, match, impl_align,
               weights: LossWeights = LossWeights()):
    """Weighted sum of the four task groups (weights configurable; all-ones
    recovers the plain unweighted sum)."""
    return (weights.intra * (masked_graph + graph_contrast + summary_contrast)
            + weights.cross_modal * cross_modal
            + weights.fusion * (masked_summary + match)
            + weights.impl * impl_align)


@dataclass
class LossReport:
    masked_graph: float
    graph_contrast: float
    summary_contrast: float
    cross_modal: float
    masked_summary: float
    match: float
    impl_align: float
    total: float
    weights: tuple = LossWeights().as_tuple()

    CSV_HEADER = ("step,masked_graph,graph_contrast,summary_contrast,"
                  "cross_modal,masked_summary,match,impl_align,total")

    def is_finite(self) -> bool:
        vals = (self.masked_graph, self.graph_contrast, self.summary_contrast,
                self.cross_modal, self.masked_summary, self.match,
                self.impl_align, self.total)
        return all(math.isfinite(v) for v in vals)

    def csv_row(self, step: int) -> str:
        vals = (self.masked_graph, self.graph_contrast, self.summary_contrast,
                self.cross_modal, self.masked_summary, self.match,
                self.impl_align, self.total)
        return f"{step}," + ",".join(f"{v:.10g}" for v in vals)
