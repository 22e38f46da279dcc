"""Design-quality metric records and label-file ingestion.

Labels come from a JSON file shaped as
{design: {wns, tns, total_power, total_area, registers: {name: {slack, power, area}}}}.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

from .errors import IoError


@dataclass
class QualityMetrics:
    slack: float | None = None        # ns, per sub-circuit
    power: float | None = None        # mW, per sub-circuit
    area: float | None = None         # um^2, per sub-circuit
    wns: float | None = None          # ns, per circuit
    tns: float | None = None          # ns, per circuit (<= 0 by convention)
    total_power: float | None = None  # mW, per circuit
    total_area: float | None = None   # um^2, per circuit

    def __post_init__(self):
        if self.tns is not None and self.tns > 0:
            raise ValueError(f"tns must be <= 0, got {self.tns}")
        for field_name in ("power", "area", "total_power", "total_area"):
            v = getattr(self, field_name)
            if v is not None and v < 0:
                raise ValueError(f"{field_name} must be >= 0, got {v}")

    def get(self, name: str):
        return getattr(self, name)

    def to_dict(self) -> dict:
        return {k: v for k, v in asdict(self).items() if v is not None}

    @classmethod
    def from_dict(cls, d: dict | None) -> "QualityMetrics | None":
        if d is None:
            return None
        return cls(**{k: d.get(k) for k in cls.__dataclass_fields__})


def load_labels(path) -> dict:
    """Read the label file: design -> (circuit metrics, per-register metrics)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    out = {}
    for design, entry in raw.items():
        regs = {
            name: QualityMetrics(
                slack=m.get("slack"), power=m.get("power"), area=m.get("area"))
            for name, m in entry.get("registers", {}).items()
        }
        circuit = QualityMetrics(
            wns=entry.get("wns"), tns=entry.get("tns"),
            total_power=entry.get("total_power"), total_area=entry.get("total_area"),
        )
        out[design] = {"circuit": circuit, "registers": regs}
    return out


def save_labels(path, labels: dict) -> None:
    raw = {}
    for design, entry in labels.items():
        circuit: QualityMetrics = entry["circuit"]
        raw[design] = {
            "wns": circuit.wns, "tns": circuit.tns,
            "total_power": circuit.total_power, "total_area": circuit.total_area,
            "registers": {
                name: {"slack": m.slack, "power": m.power, "area": m.area}
                for name, m in entry["registers"].items()
            },
        }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(raw, fh, indent=1, sort_keys=True)
        fh.write("\n")
