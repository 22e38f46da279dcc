"""Summary-centric fusion: graph/code token mixup, then cross-attention with
summary tokens as queries."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .encoders import EmbeddingSeq, EncoderParams
from .layers import LayerNorm, ParamStore, TransformerLayer


@dataclass
class MixupSeq:
    vectors: Tensor        # (L, d), L = max(graph len, code len) after padding
    lam: float
    mask: np.ndarray       # OR of the two validity masks

    def __len__(self) -> int:
        return self.vectors.shape[0]


@dataclass
class FusedEmbedding:
    vectors: Tensor        # (m, d); position 0 is the fused [CLS]
    mask: np.ndarray

    def __len__(self) -> int:
        return self.vectors.shape[0]

    @property
    def cls(self) -> Tensor:
        return self.vectors[0]


def strip_cls(seq: EmbeddingSeq) -> EmbeddingSeq:
    return EmbeddingSeq(seq.vectors[1:], seq.mask[1:])


def _pad_to(vectors: Tensor, mask: np.ndarray, length: int) -> tuple[Tensor, np.ndarray]:
    cur, d = vectors.shape
    if cur == length:
        return vectors, mask
    pad = Tensor(np.zeros((length - cur, d)))
    return (ad.concatenate([vectors, pad], axis=0),
            np.concatenate([mask, np.zeros(length - cur, dtype=bool)]))


def mixup(graph_seq: EmbeddingSeq, code_seq: EmbeddingSeq, lam: float) -> MixupSeq:
    """Elementwise lam*G + (1-lam)*C after zero-padding the shorter sequence.

    Callers pass sequences without their [CLS] position (those feed the
    contrastive losses instead).
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must be in [0, 1]")
    length = max(len(graph_seq), len(code_seq))
    g, gm = _pad_to(graph_seq.vectors, graph_seq.mask, length)
    c, cm = _pad_to(code_seq.vectors, code_seq.mask, length)
    mixed = g * lam + c * (1.0 - lam)
    return MixupSeq(mixed, lam, gm | cm)


class FusionEncoder:
    """Transformer whose self-attention runs over summary positions and whose
    cross-attention uses summary queries against mixup keys/values."""

    def __init__(self, store: ParamStore, prefix: str, p: EncoderParams):
        d = p.d_model
        self.layers = [
            TransformerLayer(store, f"{prefix}.layer{i}", d, p.heads,
                             d * p.ff_mult, cross=True)
            for i in range(p.fusion_layers)
        ]
        self.ln_f = LayerNorm(store, f"{prefix}.ln_f", d)

    def __call__(self, summary_seq: EmbeddingSeq, mix: MixupSeq) -> FusedEmbedding:
        x = summary_seq.vectors
        for layer in self.layers:
            x = layer(x, self_valid=summary_seq.mask,
                      cross_kv=mix.vectors, cross_valid=mix.mask)
        x = self.ln_f(x)
        return FusedEmbedding(x, np.asarray(summary_seq.mask, dtype=bool))
