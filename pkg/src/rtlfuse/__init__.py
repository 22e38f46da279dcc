"""Multimodal RTL sub-circuit embeddings with retrieval-augmented
design-quality prediction.

Pipeline: parse Verilog -> operator/register dataflow graph -> per-register
cones in three modalities (code, graph, summary) -> verified equivalent
variants -> contrastive multimodal pre-training -> cosine retrieval and
quality regression.
"""

from .cdfg import CdfGraph, EDGE_TYPES, OP_VOCAB, elaborate, graphs_isomorphic, parse_and_elaborate
from .cones import (
    Cone,
    SubCircuitBundle,
    align_netlist,
    bundle_from_cone,
    extract_cone,
    split_design,
)
from .corpus import (
    SummarizerClient,
    SummaryRequest,
    Vocab,
    build_vocab,
    detokenize,
    offline_summary,
    read_corpus,
    summarize,
    tokenize,
    write_corpus,
)
from .encoders import EmbeddingSeq, EncoderParams, NetlistEmbedding, spatial_encoding
from .errors import RtlFuseError
from .fusion import FusedEmbedding, MixupSeq, mixup
from .losses import (
    ContrastiveBatch,
    LossReport,
    LossWeights,
    cross_modal_loss,
    impl_align_loss,
    info_nce,
    intra_modal_loss,
    match_loss,
    mgm_loss,
    msm_loss,
    total_loss,
)
from .metrics import QualityMetrics, load_labels, save_labels
from .pretrain import (
    MultiModalModel,
    TrainConfig,
    load_model,
    lr_at,
    mask_graph,
    run_pretraining,
    save_model,
)
from .quality import aggregate_circuit, build_features, fit_head, mape, pearson_r
from .retrieval import StoreEntry, VectorStore, index_add, query_topk, zero_shot_predict
from .rewrites import RULES, apply_rewrites, verify_rule_semantics
from .sim import check_equivalence, check_equivalence_sampled, simulate_cone
from .slicing import render_cone, slice_code
from .verilog import RtlDesign, parse_verilog

__version__ = "0.1.0"
