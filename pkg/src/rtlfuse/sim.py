"""Bit-accurate cone simulation and exhaustive equivalence checking.

Semantics: unsigned, width-truncating, zero-extended operands. Evaluation is
vectorized over assignment batches so the full 2^20 exhaustive space stays
cheap. Node widths are limited to 63 bits (values are uint64 lanes).
"""

from __future__ import annotations

import numpy as np

from .cones import Cone
from .errors import (
    BoundaryMismatch,
    BudgetExceeded,
    MissingAssignment,
    WidthMismatch,
)

EXHAUSTIVE_BUDGET_BITS = 20


def _mask(width: int) -> np.uint64:
    if width > 63:
        raise WidthMismatch(width, "simulation supports widths up to 63 bits")
    return np.uint64((1 << width) - 1)


def boundary_bits(cone: Cone) -> int:
    return sum(cone.graph.node(b).width for b in cone.boundary)


def _eval_nodes(cone: Cone, values: dict[int, np.ndarray],
                lanes: int) -> dict[int, np.ndarray]:
    """Fill `values` (boundary pre-assigned) for all members, topologically."""
    graph = cone.graph

    def ev(nid: int) -> np.ndarray:
        if nid in values:
            return values[nid]
        node = graph.node(nid)
        m = _mask(node.width)
        ops = graph.operands(nid)
        if node.op == "CONST":
            out = np.full(lanes, np.uint64(node.value or 0) & m, dtype=np.uint64)
        elif node.op == "CONST0":
            out = np.zeros(lanes, dtype=np.uint64)
        elif node.op == "CONST1":
            out = np.ones(lanes, dtype=np.uint64)
        elif node.op in ("NOT", "INV"):
            out = (~ev(ops[0])) & m
        elif node.op == "BUF":
            out = ev(ops[0]) & m
        elif node.op in ("AND", "AND2"):
            out = (ev(ops[0]) & ev(ops[1])) & m
        elif node.op in ("OR", "OR2"):
            out = (ev(ops[0]) | ev(ops[1])) & m
        elif node.op in ("XOR", "XOR2"):
            out = (ev(ops[0]) ^ ev(ops[1])) & m
        elif node.op == "NAND2":
            out = (~(ev(ops[0]) & ev(ops[1]))) & m
        elif node.op == "NOR2":
            out = (~(ev(ops[0]) | ev(ops[1]))) & m
        elif node.op == "XNOR2":
            out = (~(ev(ops[0]) ^ ev(ops[1]))) & m
        elif node.op == "ADD":
            out = (ev(ops[0]) + ev(ops[1])) & m
        elif node.op == "SUB":
            out = (ev(ops[0]) - ev(ops[1])) & m
        elif node.op == "MUL":
            out = (ev(ops[0]) * ev(ops[1])) & m
        elif node.op in ("MUX", "MUX2"):
            sel, then, other = ev(ops[0]), ev(ops[1]), ev(ops[2])
            out = np.where(sel != 0, then, other).astype(np.uint64) & m
        elif node.op == "EQ":
            out = (ev(ops[0]) == ev(ops[1])).astype(np.uint64)
        elif node.op == "NEQ":
            out = (ev(ops[0]) != ev(ops[1])).astype(np.uint64)
        elif node.op == "LT":
            out = (ev(ops[0]) < ev(ops[1])).astype(np.uint64)
        elif node.op == "GT":
            out = (ev(ops[0]) > ev(ops[1])).astype(np.uint64)
        elif node.op == "LE":
            out = (ev(ops[0]) <= ev(ops[1])).astype(np.uint64)
        elif node.op == "GE":
            out = (ev(ops[0]) >= ev(ops[1])).astype(np.uint64)
        elif node.op == "SHL":
            a, s = ev(ops[0]), ev(ops[1])
            sh = np.minimum(s, np.uint64(63))
            out = np.where(s > np.uint64(63), np.uint64(0), a << sh) & m
        elif node.op == "SHR":
            a, s = ev(ops[0]), ev(ops[1])
            sh = np.minimum(s, np.uint64(63))
            out = np.where(s > np.uint64(63), np.uint64(0), a >> sh) & m
        elif node.op == "CONCAT":
            acc = None
            for o in ops:  # MSB first
                w = graph.node(o).width
                v = ev(o)
                acc = v if acc is None else ((acc << np.uint64(w)) | v)
            out = acc & m
        elif node.op == "SLICE":
            out = (ev(ops[0]) >> np.uint64(node.lo or 0)) & m
        else:
            raise WidthMismatch(nid, f"cannot simulate op {node.op}")
        values[nid] = out
        return out

    order = sorted(set(cone.members) | set(cone.all_roots()))
    for nid in order:
        if nid in cone.boundary and nid not in cone.all_roots():
            continue
        if graph.node(nid).op in ("REG", "DFF", "OUTPUT"):
            continue
        ev(nid)
    return values


def simulate_cone_batch(cone: Cone, assignment: dict[int, np.ndarray]) -> np.ndarray:
    """Vectorized evaluation; assignment maps boundary node id -> uint64 lane."""
    values: dict[int, np.ndarray] = {}
    lanes = 1
    for b in sorted(cone.boundary):
        if b not in assignment:
            raise MissingAssignment(b)
        lane = np.atleast_1d(np.asarray(assignment[b], dtype=np.uint64))
        values[b] = lane & _mask(cone.graph.node(b).width)
        lanes = max(lanes, lane.shape[0])
    _eval_nodes(cone, values, lanes)
    root = cone.root
    in_edges = cone.graph.in_edges(root)
    if not in_edges:
        raise MissingAssignment(root)
    src = in_edges[0].src
    if src not in values:
        raise MissingAssignment(src)
    return values[src] & _mask(cone.graph.node(root).width)


def simulate_cone(cone: Cone, boundary_assignment: dict[int, int]) -> int:
    """Value entering the root register under one boundary assignment."""
    bits = boundary_bits(cone)
    if bits > EXHAUSTIVE_BUDGET_BITS:
        raise BudgetExceeded(bits, EXHAUSTIVE_BUDGET_BITS)
    batch = {
        nid: np.asarray([val], dtype=np.uint64)
        for nid, val in boundary_assignment.items()
    }
    return int(simulate_cone_batch(cone, batch)[0])


def _assignment_space(cone: Cone) -> dict[str, np.ndarray]:
    """All boundary assignments, keyed by boundary signal name."""
    sig = cone.boundary_signature()
    total = sum(w for _, w in sig)
    space = np.arange(1 << total, dtype=np.uint64)
    out = {}
    offset = 0
    for name, width in sig:
        out[name] = (space >> np.uint64(offset)) & _mask(width)
        offset += width
    return out


def _by_name(cone: Cone) -> dict[str, int]:
    return {cone.graph.node(b).name or f"#{b}": b for b in cone.boundary}


def check_equivalence(a: Cone, b: Cone) -> bool:
    """Exhaustive equivalence over every boundary assignment (<= 20 bits)."""
    sig_a, sig_b = a.boundary_signature(), b.boundary_signature()
    if sig_a != sig_b:
        raise BoundaryMismatch(sig_a, sig_b)
    ra, rb = a.graph.node(a.root), b.graph.node(b.root)
    if (ra.name, ra.width) != (rb.name, rb.width):
        raise BoundaryMismatch((ra.name, ra.width), (rb.name, rb.width))
    bits = boundary_bits(a)
    if bits > EXHAUSTIVE_BUDGET_BITS:
        raise BudgetExceeded(bits, EXHAUSTIVE_BUDGET_BITS)
    lanes = _assignment_space(a)
    map_a, map_b = _by_name(a), _by_name(b)
    out_a = simulate_cone_batch(a, {map_a[n]: v for n, v in lanes.items()})
    out_b = simulate_cone_batch(b, {map_b[n]: v for n, v in lanes.items()})
    return bool(np.array_equal(out_a, out_b))


def check_equivalence_sampled(a: Cone, b: Cone, samples: int = 4096,
                              seed: int = 0) -> bool:
    """Spot-check on random assignments for cones over the exhaustive budget."""
    sig_a, sig_b = a.boundary_signature(), b.boundary_signature()
    if sig_a != sig_b:
        raise BoundaryMismatch(sig_a, sig_b)
    rng = np.random.default_rng(seed)
    lanes = {
        name: rng.integers(0, 1 << width, size=samples, dtype=np.uint64)
        for name, width in sig_a
    }
    map_a, map_b = _by_name(a), _by_name(b)
    out_a = simulate_cone_batch(a, {map_a[n]: v for n, v in lanes.items()})
    out_b = simulate_cone_batch(b, {map_b[n]: v for n, v in lanes.items()})
    return bool(np.array_equal(out_a, out_b))
