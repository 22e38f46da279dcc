"""The gate-level fixture lowering must agree with the RTL by simulation."""

import numpy as np
import pytest

from rtlfuse.cdfg import parse_and_elaborate
from rtlfuse.cones import Cone, align_netlist, split_design
from rtlfuse.gatemap import UnsupportedGateLowering, lower_to_gates
from rtlfuse.sim import simulate_cone_batch
from rtlfuse.toydata import TOY_SOURCES

SINGLE_OUTPUT_GATES = {"INV", "BUF", "AND2", "OR2", "NAND2", "NOR2", "XOR2",
                       "XNOR2", "MUX2", "DFF", "INPUT", "OUTPUT",
                       "CONST0", "CONST1"}


def bit_lanes(values, name, node_name, width):
    if node_name == name:
        return values & np.uint64(1)
    bit = int(node_name[len(name) + 1:-1])
    return (values >> np.uint64(bit)) & np.uint64(1)


def cross_check(src, samples=200, seed=11):
    rng = np.random.default_rng(seed)
    g = parse_and_elaborate(src)
    netlist = lower_to_gates(g)
    assert all(n.op in SINGLE_OUTPUT_GATES for n in netlist.nodes)
    for cone in split_design(g):
        net_cone = align_netlist(cone, netlist)
        rtl_assign, net_assign = {}, {}
        for b in sorted(cone.boundary):
            node = cone.graph.node(b)
            vals = rng.integers(0, 1 << node.width, size=samples, dtype=np.uint64)
            rtl_assign[b] = vals
            for nb in sorted(net_cone.boundary):
                nn = net_cone.graph.node(nb)
                if nn.name == node.name or (
                        nn.name and nn.name.startswith(node.name + "[")):
                    net_assign[nb] = bit_lanes(vals, node.name, nn.name, node.width)
        rtl_out = simulate_cone_batch(cone, rtl_assign)
        net_out = np.zeros(samples, dtype=np.uint64)
        for rid in net_cone.all_roots():
            rname = net_cone.graph.node(rid).name
            sub = Cone(rid, net_cone.members, net_cone.boundary, net_cone.graph)
            bit = int(rname[rname.index("[") + 1:-1]) if "[" in rname else 0
            net_out |= simulate_cone_batch(sub, net_assign) << np.uint64(bit)
        assert np.array_equal(rtl_out, net_out), cone.root_name


@pytest.mark.parametrize("name", sorted(TOY_SOURCES))
def test_toy_designs_cross_simulate(name):
    cross_check(TOY_SOURCES[name])


def test_subtraction_and_compare():
    cross_check("""
module cmp(input clk, input [3:0] a, input [3:0] b,
           output reg [3:0] d, output reg lt, output reg ge);
  always @(posedge clk) begin
    d <= a - b;
    lt <= a < b;
    ge <= a >= b;
  end
endmodule
""")


def test_variable_shift_barrel():
    cross_check("""
module sh(input clk, input [3:0] a, input [1:0] k,
          output reg [3:0] l, output reg [3:0] r);
  always @(posedge clk) begin
    l <= a << k;
    r <= a >> k;
  end
endmodule
""")


def test_constant_shift_rewires():
    cross_check("""
module shc(input clk, input [3:0] a, output reg [3:0] q);
  always @(posedge clk) q <= (a << 4'd2) | (a >> 4'd1);
endmodule
""")


def test_multiply_is_not_lowered():
    g = parse_and_elaborate(
        "module m(input clk, input [1:0] a, output reg [1:0] q);"
        " always @(posedge clk) q <= a * a; endmodule")
    with pytest.raises(UnsupportedGateLowering):
        lower_to_gates(g)


def test_register_names_preserved_per_bit():
    g = parse_and_elaborate(
        "module m(input clk, input [2:0] d, output reg [2:0] q);"
        " always @(posedge clk) q <= d; endmodule")
    netlist = lower_to_gates(g)
    dffs = sorted(n.name for n in netlist.nodes if n.op == "DFF")
    assert dffs == ["q[0]", "q[1]", "q[2]"]
