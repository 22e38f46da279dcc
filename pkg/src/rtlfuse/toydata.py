"""Small deterministic designs and synthetic labels for tests and demos.

Every design stays inside the supported Verilog subset, keeps cone boundaries
well under the exhaustive simulation budget, and lowers cleanly through the
gate-level fixture generator.
"""

from __future__ import annotations

import numpy as np

from .cdfg import elaborate
from .cones import SubCircuitBundle, align_netlist, bundle_from_cone, split_design, variant_bundle
from .corpus import offline_summary
from .gatemap import lower_to_gates
from .metrics import QualityMetrics
from .rewrites import apply_rewrites
from .verilog import parse_verilog

TOY_SOURCES: dict[str, str] = {
    "alu_lite": """
module alu_lite(input clk, input [3:0] a, input [3:0] b, input sel,
                output reg [3:0] acc, output reg flag);
  wire [3:0] sum;
  wire [3:0] mixed;
  assign sum = a + b;
  assign mixed = sel ? sum : (a & b);
  always @(posedge clk) begin
    acc <= mixed;
    flag <= a == b;
  end
endmodule
""",
    "counter": """
module counter(input clk, input rst, input en, output reg [2:0] cnt);
  always @(posedge clk) begin
    if (rst) cnt <= 3'd0;
    else if (en) cnt <= cnt + 3'd1;
  end
endmodule
""",
    "parity_tracker": """
module parity_tracker(input clk, input [3:0] d, output reg p, output reg [1:0] low);
  always @(posedge clk) begin
    p <= (d[0] ^ d[1]) ^ (d[2] ^ d[3]);
    low <= d[1:0];
  end
endmodule
""",
    "gated_mux": """
module gated_mux(input clk, input s, input [1:0] x, input [1:0] y,
                 output reg [1:0] z, output reg any_on);
  wire [1:0] picked;
  assign picked = s ? x : y;
  always @(posedge clk) begin
    z <= picked;
    any_on <= (x != 2'd0) || (y != 2'd0);
  end
endmodule
""",
    "case_ctrl": """
module case_ctrl(input clk, input [1:0] mode, input [2:0] v, output reg [2:0] r);
  always @(posedge clk) begin
    case (mode)
      2'd0: r <= v;
      2'd1: r <= v + 3'd1;
      2'd2: r <= ~v;
      default: r <= 3'd0;
    endcase
  end
endmodule
""",
}


def toy_register_metrics(n_members: int, total_width: int) -> QualityMetrics:
    slack = round(2.0 - 0.45 * n_members + 0.03 * total_width, 4)
    power = round(0.1 + 0.02 * n_members + 0.005 * total_width, 4)
    area = round(8.0 + 3.0 * n_members + 0.5 * total_width, 4)
    return QualityMetrics(slack=slack, power=power, area=area)


def toy_labels(per_design: dict[str, list[QualityMetrics]]) -> dict:
    labels = {}
    for design, reg_metrics in per_design.items():
        slacks = [m.slack for m in reg_metrics]
        violations = sum(min(s, 0.0) for s in slacks)
        circuit = QualityMetrics(
            wns=round(min(slacks), 4),
            tns=round(violations - 0.1, 4),
            total_power=round(sum(m.power for m in reg_metrics), 4),
            total_area=round(sum(m.area for m in reg_metrics), 4),
        )
        labels[design] = {"circuit": circuit, "registers": {}}
    return labels


def toy_full_labels(sources: dict[str, str] | None = None) -> dict:
    """Synthetic quality labels for every register cone of every design."""
    sources = sources or TOY_SOURCES
    per_design: dict[str, list[QualityMetrics]] = {}
    reg_names: dict[str, list[str]] = {}
    for name, src in sources.items():
        graph = elaborate(parse_verilog(src))
        for cone in split_design(graph):
            m = toy_register_metrics(len(cone.members),
                                     sum(n.width for n in cone.graph.nodes))
            per_design.setdefault(name, []).append(m)
            reg_names.setdefault(name, []).append(cone.root_name)
    labels = toy_labels(per_design)
    for design, names in reg_names.items():
        for reg, m in zip(names, per_design[design]):
            labels[design]["registers"][reg] = m
    return labels


def build_toy_bundles(n_classes: int = 5, variants_per_anchor: int = 9,
                      seed: int = 0,
                      sources: dict[str, str] | None = None
                      ) -> tuple[list[SubCircuitBundle], dict]:
    """Anchors plus rewrite variants for the first n_classes register cones,
    with synthetic quality labels. Returns (bundles, labels_by_design)."""
    sources = sources or TOY_SOURCES
    bundles: list[SubCircuitBundle] = []
    per_design_metrics: dict[str, list[QualityMetrics]] = {}
    reg_names: dict[str, list[str]] = {}
    n_taken = 0
    for name, src in sources.items():
        if n_taken >= n_classes:
            break
        design = parse_verilog(src)
        graph = elaborate(design)
        netlist = lower_to_gates(graph)
        for cone in split_design(graph):
            if n_taken >= n_classes:
                break
            net_cone = align_netlist(cone, netlist)
            metrics = toy_register_metrics(
                len(cone.members),
                sum(n.width for n in cone.graph.nodes))
            anchor = bundle_from_cone(design, cone, netlist_cone=net_cone,
                                      labels=metrics)
            anchor.summary = offline_summary(cone)
            bundles.append(anchor)
            per_design_metrics.setdefault(name, []).append(metrics)
            reg_names.setdefault(name, []).append(anchor.register)
            rng_seed = int(np.random.default_rng([seed, n_taken]).integers(0, 2**31))
            for vi, variant in enumerate(
                    apply_rewrites(cone, variants_per_anchor, seed=rng_seed)):
                vb = variant_bundle(anchor, variant, vi)
                vb.summary = offline_summary(variant)
                bundles.append(vb)
            n_taken += 1
    labels = toy_labels(per_design_metrics)
    for design, names in reg_names.items():
        for reg, m in zip(names, per_design_metrics[design]):
            labels[design]["registers"][reg] = m
    return bundles, labels
