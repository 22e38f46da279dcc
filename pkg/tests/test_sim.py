import numpy as np
import pytest

from rtlfuse.cdfg import parse_and_elaborate
from rtlfuse.cones import split_design
from rtlfuse.errors import BoundaryMismatch, BudgetExceeded, MissingAssignment
from rtlfuse.sim import (
    boundary_bits,
    check_equivalence,
    check_equivalence_sampled,
    simulate_cone,
)


def cone_of(src):
    return split_design(parse_and_elaborate(src))[0]


def by_name(cone):
    return {cone.graph.node(b).name: b for b in cone.boundary}


def test_wire_through():
    cone = cone_of("module m(input clk, input a, output reg q);"
                   " always @(posedge clk) q <= a; endmodule")
    ids = by_name(cone)
    assert simulate_cone(cone, {ids["a"]: 1}) == 1
    assert simulate_cone(cone, {ids["a"]: 0}) == 0


def test_and_cone():
    cone = cone_of("module m(input clk, input a, input b, output reg q);"
                   " always @(posedge clk) q <= a & b; endmodule")
    ids = by_name(cone)
    assert simulate_cone(cone, {ids["a"]: 1, ids["b"]: 0}) == 0
    assert simulate_cone(cone, {ids["a"]: 1, ids["b"]: 1}) == 1


def test_three_bit_add_truncates():
    cone = cone_of("module m(input clk, input [2:0] a, input [2:0] b,"
                   " output reg [2:0] s); always @(posedge clk) s <= a + b;"
                   " endmodule")
    ids = by_name(cone)
    assert simulate_cone(cone, {ids["a"]: 3, ids["b"]: 6}) == 1  # 9 mod 8


def test_operator_semantics():
    cases = [
        ("q <= a - b", {"a": 1, "b": 3}, (1 - 3) % 8),
        ("q <= a * b", {"a": 3, "b": 5}, 15 % 8),
        ("q <= a ^ b", {"a": 5, "b": 3}, 6),
        ("q <= ~a", {"a": 5, "b": 0}, 2),
        ("q <= {a[0], b[1:0]}", {"a": 1, "b": 2}, 0b110),
        ("q <= a << b[0]", {"a": 3, "b": 1}, 6),
        ("q <= a >> b[0]", {"a": 5, "b": 1}, 2),
    ]
    for stmt, assign, expected in cases:
        cone = cone_of(
            "module m(input clk, input [2:0] a, input [2:0] b,"
            f" output reg [2:0] q); always @(posedge clk) {stmt}; endmodule")
        ids = by_name(cone)
        got = simulate_cone(
            cone, {ids[k]: v for k, v in assign.items() if k in ids})
        assert got == expected, stmt


def test_comparison_semantics():
    for op, expected in (("<", 1), (">", 0), ("==", 0), ("!=", 1)):
        cone = cone_of(
            "module m(input clk, input [2:0] a, input [2:0] b, output reg q);"
            f" always @(posedge clk) q <= a {op} b; endmodule")
        ids = by_name(cone)
        assert simulate_cone(cone, {ids["a"]: 2, ids["b"]: 5}) == expected


def test_missing_assignment():
    cone = cone_of("module m(input clk, input a, input b, output reg q);"
                   " always @(posedge clk) q <= a & b; endmodule")
    ids = by_name(cone)
    with pytest.raises(MissingAssignment):
        simulate_cone(cone, {ids["a"]: 1})


def test_budget_exceeded():
    cone = cone_of("module m(input clk, input [20:0] a, output reg [20:0] q);"
                   " always @(posedge clk) q <= ~a; endmodule")
    assert boundary_bits(cone) == 21
    with pytest.raises(BudgetExceeded):
        simulate_cone(cone, {b: 0 for b in cone.boundary})


def test_self_equivalence_and_counterexample():
    and_cone = cone_of("module m(input clk, input a, input b, output reg q);"
                       " always @(posedge clk) q <= a & b; endmodule")
    de_morgan = cone_of("module m(input clk, input a, input b, output reg q);"
                        " always @(posedge clk) q <= ~((~a) | (~b)); endmodule")
    or_cone = cone_of("module m(input clk, input a, input b, output reg q);"
                      " always @(posedge clk) q <= a | b; endmodule")
    assert check_equivalence(and_cone, and_cone)
    assert check_equivalence(and_cone, de_morgan)   # 4-case exhaustive
    assert not check_equivalence(and_cone, or_cone)  # differs at a=1,b=0


def test_boundary_mismatch():
    a = cone_of("module m(input clk, input a, output reg q);"
                " always @(posedge clk) q <= a; endmodule")
    b = cone_of("module m(input clk, input x, output reg q);"
                " always @(posedge clk) q <= x; endmodule")
    with pytest.raises(BoundaryMismatch):
        check_equivalence(a, b)


def test_sampled_equivalence_on_wide_cone():
    wide_a = cone_of("module m(input clk, input [20:0] a, input [20:0] b,"
                     " output reg [20:0] q);"
                     " always @(posedge clk) q <= a & b; endmodule")
    wide_b = cone_of("module m(input clk, input [20:0] a, input [20:0] b,"
                     " output reg [20:0] q);"
                     " always @(posedge clk) q <= ~((~a) | (~b)); endmodule")
    with pytest.raises(BudgetExceeded):
        check_equivalence(wide_a, wide_b)
    assert check_equivalence_sampled(wide_a, wide_b, samples=4096, seed=3)


def test_hold_path_simulation():
    cone = cone_of("module m(input clk, input en, input d, output reg q);"
                   " always @(posedge clk) if (en) q <= d; endmodule")
    ids = by_name(cone)
    # en=0 holds the current value of q, which is itself a boundary input
    assert simulate_cone(cone, {ids["en"]: 0, ids["d"]: 1, ids["q"]: 0}) == 0
    assert simulate_cone(cone, {ids["en"]: 1, ids["d"]: 1, ids["q"]: 0}) == 1


def test_exhaustive_matches_reference_evaluator():
    """Semantic fidelity: brute-force Python evaluation over all assignments."""
    src = ("module m(input clk, input [1:0] a, input [1:0] b, input s,"
           " output reg [1:0] q);"
           " always @(posedge clk) q <= s ? (a + b) : (a ^ b); endmodule")
    cone = cone_of(src)
    ids = by_name(cone)
    for a in range(4):
        for b in range(4):
            for s in range(2):
                expected = ((a + b) if s else (a ^ b)) & 3
                got = simulate_cone(cone, {ids["a"]: a, ids["b"]: b, ids["s"]: s})
                assert got == expected
