"""Shared pipeline configuration (one JSON file, per-command flag overrides)."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field

from .encoders import EncoderParams
from .errors import IoError
from .pretrain import TrainConfig


@dataclass
class PipelineConfig:
    designs: list[str] = field(default_factory=list)       # .v source paths
    netlists: dict[str, str] = field(default_factory=dict)  # design -> graph JSON
    auto_netlist: bool = True   # derive fixture netlists when no file is given
    labels_path: str | None = None
    work_dir: str = "."
    corpus_path: str = "corpus.jsonl"
    vocab_path: str = "vocab.json"
    checkpoint_dir: str = "checkpoint"
    store_prefix: str = "store"
    heads_path: str = "heads.pkl"
    report_path: str = "report.csv"
    test_designs: list[str] = field(default_factory=list)
    seed: int = 0
    workers: int = 1
    positives_per_anchor: int = 7
    summary_max_tokens: int = 128
    retrieval_k: int = 1
    include_output_cones: bool = False
    encoder: EncoderParams = field(default_factory=EncoderParams)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablation_drop_modality: str | None = None   # graph | code | summary
    ablation_drop_retrieval: bool = False
    ablation_drop_task: str | None = None       # mgm|intra|cross|fusion|impl

    def path(self, name: str) -> str:
        p = getattr(self, name)
        if p is None:
            raise IoError(f"config field {name} is not set")
        return p if os.path.isabs(p) else os.path.join(self.work_dir, p)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "PipelineConfig":
        d = dict(d)
        if isinstance(d.get("encoder"), dict):
            d["encoder"] = EncoderParams(**d["encoder"])
        if isinstance(d.get("train"), dict):
            d["train"] = TrainConfig.from_dict(d["train"])
        return cls(**d)

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path: str) -> "PipelineConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise IoError(str(exc)) from exc
        cfg = cls.from_dict(data)
        if not os.path.isabs(cfg.work_dir):
            cfg.work_dir = os.path.normpath(
                os.path.join(os.path.dirname(os.path.abspath(path)), cfg.work_dir))
        return cfg
