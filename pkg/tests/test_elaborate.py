import json

import pytest

from rtlfuse import cdfg
from rtlfuse.cdfg import CdfGraph, elaborate, graphs_isomorphic, parse_and_elaborate
from rtlfuse.errors import CombinationalLoop, WidthMismatch
from rtlfuse.verilog import parse_verilog


def ops_of(graph):
    return sorted(n.op for n in graph.nodes)


def test_wire_through():
    g = parse_and_elaborate("module m(input a, output b); assign b = a; endmodule")
    assert len(g.nodes) == 2 and len(g.edges) == 1
    assert ops_of(g) == ["INPUT", "OUTPUT"]
    e = g.edges[0]
    assert g.node(e.src).op == "INPUT" and g.node(e.dst).op == "OUTPUT"


def test_mux_lowering_matches_hand_built_graph():
    src = ("module m(input clk, input sel, input x, input y, output reg q); "
           "always @(posedge clk) q <= sel ? x : y; endmodule")
    g = parse_and_elaborate(src)
    mux = [n for n in g.nodes if n.op == "MUX"]
    assert len(mux) == 1
    ins = g.operands(mux[0].id)
    names = [g.node(i).name for i in ins]
    assert names == ["sel", "x", "y"]  # select, then, else
    reg = g.named_node("q")
    assert [e.src for e in g.in_edges(reg.id)] == [mux[0].id]
    # hand-built expected graph up to relabeling
    expected = CdfGraph.from_json_obj({
        "nodes": [
            {"id": 0, "op": "INPUT", "width": 1, "name": "clk"},
            {"id": 1, "op": "INPUT", "width": 1, "name": "sel"},
            {"id": 2, "op": "INPUT", "width": 1, "name": "x"},
            {"id": 3, "op": "INPUT", "width": 1, "name": "y"},
            {"id": 4, "op": "REG", "width": 1, "name": "q"},
            {"id": 5, "op": "MUX", "width": 1},
            {"id": 6, "op": "OUTPUT", "width": 1, "name": "q"},
        ],
        "edges": [
            {"src": 1, "dst": 5}, {"src": 2, "dst": 5}, {"src": 3, "dst": 5},
            {"src": 5, "dst": 4}, {"src": 4, "dst": 6},
        ],
    })
    assert graphs_isomorphic(g, expected)


def test_two_assign_loop():
    with pytest.raises(CombinationalLoop) as exc:
        parse_and_elaborate(
            "module m(output a); wire b; assign a = b; assign b = a; endmodule")
    assert set(exc.value.cycle) == {"a", "b"}


def test_hold_becomes_self_mux():
    src = ("module m(input clk, input en, input d, output reg q); "
           "always @(posedge clk) if (en) q <= d; endmodule")
    g = parse_and_elaborate(src)
    mux = [n for n in g.nodes if n.op == "MUX"][0]
    sel, then, other = g.operands(mux.id)
    assert g.node(sel).name == "en"
    assert g.node(then).name == "d"
    assert g.node(other).op == "REG"  # hold path reads the register itself


def test_case_lowering_order_and_count():
    src = """
module m(input clk, input [1:0] s, input [1:0] v, output reg [1:0] r);
  always @(posedge clk) begin
    case (s)
      2'd0: r <= v;
      2'd1: r <= ~v;
      default: r <= 2'd0;
    endcase
  end
endmodule
"""
    g = parse_and_elaborate(src)
    assert len([n for n in g.nodes if n.op == "MUX"]) == 2
    assert len([n for n in g.nodes if n.op == "EQ"]) == 2


def test_logical_ops_reduce_multibit_operands():
    g = parse_and_elaborate(
        "module m(input [1:0] a, input b, output c); assign c = a && b; endmodule")
    assert len([n for n in g.nodes if n.op == "NEQ"]) == 1  # only the wide side
    and_node = [n for n in g.nodes if n.op == "AND"][0]
    assert and_node.width == 1


def test_width_rules():
    g = parse_and_elaborate(
        "module m(input [1:0] a, input [3:0] b, output [3:0] c);"
        " assign c = a + b; endmodule")
    add = [n for n in g.nodes if n.op == "ADD"][0]
    assert add.width == 4
    g2 = parse_and_elaborate(
        "module m(input [3:0] a, input [3:0] b, output c); assign c = a < b; endmodule")
    assert [n for n in g2.nodes if n.op == "LT"][0].width == 1


def test_out_of_range_select():
    with pytest.raises(WidthMismatch):
        parse_and_elaborate(
            "module m(input [1:0] a, output b); assign b = a[5]; endmodule")


def test_narrow_wire_inserts_truncation():
    g = parse_and_elaborate(
        "module m(input [3:0] a, input [3:0] b, output [1:0] c);"
        " wire [1:0] t; assign t = a + b; assign c = t; endmodule")
    assert any(n.op == "SLICE" and n.width == 2 for n in g.nodes)


def test_determinism_including_ids():
    src = ("module m(input clk, input [3:0] a, input [3:0] b, output reg [3:0] q);"
           " wire [3:0] s; assign s = a + b;"
           " always @(posedge clk) q <= s & a; endmodule")
    g1 = parse_and_elaborate(src)
    g2 = parse_and_elaborate(src)
    assert g1.to_json() == g2.to_json()


def test_json_round_trip():
    src = ("module m(input clk, input [2:0] v, output reg [2:0] r);"
           " always @(posedge clk) r <= v + 3'd1; endmodule")
    g = parse_and_elaborate(src)
    back = CdfGraph.from_json(g.to_json())
    assert back.to_json() == g.to_json()
    obj = json.loads(g.to_json())
    assert set(obj) == {"nodes", "edges"}
    assert all({"id", "op", "width"} <= set(n) for n in obj["nodes"])
    assert all(set(e) == {"src", "dst", "etype"} for e in obj["edges"])


def test_edge_type_vocabulary_is_twelve():
    assert len(cdfg.EDGE_TYPES) == 12
    assert len(set(cdfg.EDGE_TYPES)) == 12
    assert all("CONST" not in et.split("->")[1] for et in cdfg.EDGE_TYPES)


def test_combinational_subgraph_acyclic_on_counter():
    src = ("module m(input clk, output reg [2:0] c);"
           " always @(posedge clk) c <= c + 3'd1; endmodule")
    g = parse_and_elaborate(src)
    assert g.combinational_cycle() == []
    # but the register participates in a sequential cycle
    reg = g.named_node("c")
    assert any(e.src == reg.id for e in g.edges)


def test_validate_rejects_bad_mux():
    bad = CdfGraph.from_json_obj({
        "nodes": [{"id": 0, "op": "INPUT", "width": 1, "name": "a"},
                  {"id": 1, "op": "MUX", "width": 1}],
        "edges": [{"src": 0, "dst": 1}],
    })
    with pytest.raises(Exception):
        bad.validate()


def test_every_ast_operator_instance_is_a_node():
    g = parse_and_elaborate(
        "module m(input [1:0] a, output [1:0] b, output [1:0] c);"
        " assign b = a ^ a; assign c = a ^ a; endmodule")
    assert len([n for n in g.nodes if n.op == "XOR"]) == 2


def test_shared_wire_is_one_node():
    g = parse_and_elaborate(
        "module m(input [1:0] a, output [1:0] b, output [1:0] c);"
        " wire [1:0] t; assign t = a ^ a; assign b = t; assign c = t; endmodule")
    xor = [n for n in g.nodes if n.op == "XOR"]
    assert len(xor) == 1
    assert len(g.out_edges(xor[0].id)) == 2
