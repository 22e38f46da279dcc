"""Design-quality regression: feature assembly with retrieved reference
metrics, sub-circuit to circuit aggregation, regression heads, R and MAPE."""

from __future__ import annotations

import warnings

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .cdfg import CdfGraph, OP_VOCAB
from .cones import SubCircuitBundle
from .errors import EmptyDesign, ShapeMismatch, ZeroLabel, ZeroVariance
from .layers import AdamW, Mlp, ParamStore
from .retrieval import VectorStore

OP_COUNT_DIM = len(OP_VOCAB)
DESIGN_FEATURE_DIM = OP_COUNT_DIM + 2  # op counts, register count, total bit-width


def graph_count_features(graph: CdfGraph) -> np.ndarray:
    """Fixed design-level feature block: per-op counts, register count,
    total bit-width."""
    counts = np.zeros(OP_COUNT_DIM)
    regs = 0
    total_width = 0
    for n in graph.nodes:
        counts[OP_VOCAB.index(n.op)] += 1.0
        if n.op in ("REG", "DFF"):
            regs += 1
        total_width += n.width
    return np.concatenate([counts, [float(regs), float(total_width)]])


def feature_length(d_model: int) -> int:
    return d_model + 1 + OP_COUNT_DIM + 2


def build_features(bundle: SubCircuitBundle, embedding: np.ndarray,
                   store: VectorStore | None, task: str,
                   drop_retrieval: bool = False) -> np.ndarray:
    """Embedding, top-1 retrieved metric for the task, then cone-level counts.
    The ablation flag zero-fills the retrieved slot."""
    emb = np.asarray(embedding, dtype=np.float64)
    if drop_retrieval or store is None:
        retrieved = 0.0
    else:
        retrieved = store.zero_shot_predict(emb, task, k=1)
    counts = graph_count_features(bundle.rtl_graph.graph)
    return np.concatenate([emb, [retrieved], counts])


def aggregate_circuit(features: list[np.ndarray],
                      design_counts: np.ndarray) -> np.ndarray:
    """Element-wise sum of sub-circuit features, concatenated with the
    design-level counts."""
    if not features:
        raise EmptyDesign("no sub-circuit features to aggregate")
    total = np.sum(np.stack(features), axis=0)
    return np.concatenate([total, np.asarray(design_counts, dtype=np.float64)])


# --- regression heads ----------------------------------------------------------------

class ConstantModel:
    def __init__(self, value: float):
        self.value = float(value)

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.atleast_2d(features)
        return np.full(features.shape[0], self.value)


class PerceptronHead:
    """Two-layer perceptron on standardized features, squared-error training."""

    def __init__(self, mean, std, store, mlp, y_mean, y_std):
        self._mean, self._std = mean, std
        self._store, self._mlp = store, mlp
        self._y_mean, self._y_std = y_mean, y_std

    def predict(self, features: np.ndarray) -> np.ndarray:
        x = (np.atleast_2d(features) - self._mean) / self._std
        with ad.no_grad():
            out = self._mlp(Tensor(x)).data[:, 0]
        return out * self._y_std + self._y_mean


class TreeEnsembleHead:
    def __init__(self, model):
        self._model = model

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self._model.predict(np.atleast_2d(features))


def fit_head(features, labels, head_kind: str = "perceptron", seed: int = 0,
             steps: int = 500, lr: float = 1e-2, hidden: int = 32):
    """Train a lightweight regression head; the encoder stays frozen (heads
    have their own parameters and never touch encoder weights)."""
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.shape[0]:
        raise ShapeMismatch(f"features {x.shape} vs labels {y.shape}")
    if x.shape[0] < 2:
        raise ShapeMismatch("need at least two samples")
    if np.allclose(y, y[0]):
        warnings.warn("labels are all equal; fitting a constant predictor",
                      stacklevel=2)
        return ConstantModel(y[0])
    if head_kind == "tree_ensemble":
        from sklearn.ensemble import GradientBoostingRegressor

        model = GradientBoostingRegressor(random_state=seed)
        model.fit(x, y)
        return TreeEnsembleHead(model)
    if head_kind != "perceptron":
        raise ValueError(f"unknown head kind {head_kind!r}")

    mean = x.mean(axis=0)
    std = np.where(x.std(axis=0) > 0, x.std(axis=0), 1.0)
    xs = (x - mean) / std
    y_mean, y_std = y.mean(), y.std() if y.std() > 0 else 1.0
    ys = (y - y_mean) / y_std
    store = ParamStore(np.random.default_rng([seed, 0x4EAD]))
    mlp = Mlp(store, "head", [x.shape[1], hidden, 1])
    opt = AdamW(store.params, lr=lr, weight_decay=0.0)
    target = ys[:, None]
    for _ in range(steps):
        opt.zero_grad()
        pred = mlp(Tensor(xs))
        diff = pred - Tensor(target)
        loss = (diff * diff).mean()
        loss.backward()
        opt.step()
    return PerceptronHead(mean, std, store, mlp, y_mean, y_std)


# --- evaluation metrics ---------------------------------------------------------------

def mape(labels, preds) -> float:
    """Mean absolute percentage error, in percent."""
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(preds, dtype=np.float64)
    if y.shape != p.shape:
        raise ShapeMismatch(f"{y.shape} vs {p.shape}")
    zeros = np.nonzero(y == 0.0)[0]
    if zeros.size:
        raise ZeroLabel(int(zeros[0]))
    return float(np.mean(np.abs(p - y) / np.abs(y)) * 100.0)


def pearson_r(labels, preds) -> float:
    y = np.asarray(labels, dtype=np.float64)
    p = np.asarray(preds, dtype=np.float64)
    if y.shape != p.shape:
        raise ShapeMismatch(f"{y.shape} vs {p.shape}")
    yc = y - y.mean()
    pc = p - p.mean()
    denom = np.sqrt((yc * yc).sum() * (pc * pc).sum())
    if denom == 0.0:
        raise ZeroVariance("constant labels or predictions")
    return float((yc * pc).sum() / denom)
