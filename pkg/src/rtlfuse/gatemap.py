"""Naive bit-blasting of an RTL graph into a 2-input gate netlist graph.

This is a fixture generator: it gives the pipeline functionally aligned
gate-level cones (DFF per register bit, named "reg[i]") without any synthesis
tooling, and its output is validated against the RTL by cross-simulation in
the test suite. It makes no attempt at optimization.
"""

from __future__ import annotations

from .cdfg import CdfEdge, CdfGraph, CdfNode, edge_type
from .errors import RtlFuseError


class UnsupportedGateLowering(RtlFuseError):
    pass


class _GateBuilder:
    def __init__(self):
        self.nodes: list[CdfNode] = []
        self.edges: list[CdfEdge] = []
        self._const0: int | None = None
        self._const1: int | None = None

    def add(self, op: str, name: str | None = None, operands: tuple[int, ...] = ()) -> int:
        nid = len(self.nodes)
        self.nodes.append(CdfNode(nid, op, 1, name))
        for src in operands:
            self.edges.append(CdfEdge(src, nid, edge_type(self.nodes[src].op, op)))
        return nid

    def const(self, bit: int) -> int:
        if bit:
            if self._const1 is None:
                self._const1 = self.add("CONST1")
            return self._const1
        if self._const0 is None:
            self._const0 = self.add("CONST0")
        return self._const0

    def graph(self) -> CdfGraph:
        return CdfGraph(self.nodes, self.edges)


def _bit_name(name: str, i: int, width: int) -> str:
    return name if width == 1 else f"{name}[{i}]"


def lower_to_gates(graph: CdfGraph) -> CdfGraph:
    """Bit-blast every node of an RTL graph; register names are preserved
    per-bit so cones align by name."""
    b = _GateBuilder()
    bits: dict[int, list[int]] = {}  # rtl node id -> gate ids, LSB first

    def zext(v: list[int], width: int) -> list[int]:
        if len(v) >= width:
            return v[:width]
        return v + [b.const(0)] * (width - len(v))

    for n in graph.nodes:
        if n.op == "INPUT":
            bits[n.id] = [
                b.add("INPUT", _bit_name(n.name or f"n{n.id}", i, n.width))
                for i in range(n.width)
            ]
        elif n.op == "REG":
            bits[n.id] = [
                b.add("DFF", _bit_name(n.name or f"n{n.id}", i, n.width))
                for i in range(n.width)
            ]

    def ripple_add(a: list[int], v: list[int], carry: int) -> list[int]:
        out = []
        for ai, vi in zip(a, v):
            axv = b.add("XOR2", operands=(ai, vi))
            out.append(b.add("XOR2", operands=(axv, carry)))
            and1 = b.add("AND2", operands=(ai, vi))
            and2 = b.add("AND2", operands=(carry, axv))
            carry = b.add("OR2", operands=(and1, and2))
        return out

    def borrow_less(a: list[int], v: list[int]) -> int:
        """Unsigned a < v via the subtraction borrow chain."""
        borrow = b.const(0)
        for ai, vi in zip(a, v):
            na = b.add("INV", operands=(ai,))
            t1 = b.add("AND2", operands=(na, vi))
            eq = b.add("XNOR2", operands=(ai, vi))
            t2 = b.add("AND2", operands=(eq, borrow))
            borrow = b.add("OR2", operands=(t1, t2))
        return borrow

    def lower(n: CdfNode) -> list[int]:
        ops = graph.operands(n.id)
        w = n.width

        def arg(k: int, width: int | None = None) -> list[int]:
            return zext(bits[ops[k]], width if width is not None else w)

        if n.op == "CONST":
            return [b.const((int(n.value or 0) >> i) & 1) for i in range(w)]
        if n.op == "NOT":
            return [b.add("INV", operands=(x,)) for x in arg(0)]
        if n.op in ("AND", "OR", "XOR"):
            gate = {"AND": "AND2", "OR": "OR2", "XOR": "XOR2"}[n.op]
            return [b.add(gate, operands=(x, y)) for x, y in zip(arg(0), arg(1))]
        if n.op == "MUX":
            sel = bits[ops[0]][0]
            return [b.add("MUX2", operands=(sel, t, e))
                    for t, e in zip(arg(1), arg(2))]
        if n.op == "ADD":
            return ripple_add(arg(0), arg(1), b.const(0))
        if n.op == "SUB":
            nb = [b.add("INV", operands=(x,)) for x in arg(1)]
            return ripple_add(arg(0), nb, b.const(1))
        if n.op in ("EQ", "NEQ"):
            wide = max(graph.node(ops[0]).width, graph.node(ops[1]).width)
            same = [b.add("XNOR2", operands=(x, y))
                    for x, y in zip(arg(0, wide), arg(1, wide))]
            acc = same[0]
            for s in same[1:]:
                acc = b.add("AND2", operands=(acc, s))
            if n.op == "NEQ":
                acc = b.add("INV", operands=(acc,))
            return [acc]
        if n.op in ("LT", "GT", "LE", "GE"):
            wide = max(graph.node(ops[0]).width, graph.node(ops[1]).width)
            a, v = arg(0, wide), arg(1, wide)
            if n.op == "LT":
                return [borrow_less(a, v)]
            if n.op == "GT":
                return [borrow_less(v, a)]
            if n.op == "GE":
                return [b.add("INV", operands=(borrow_less(a, v),))]
            return [b.add("INV", operands=(borrow_less(v, a),))]
        if n.op == "CONCAT":
            out: list[int] = []
            for o in reversed(ops):  # last operand is the LSB part
                out.extend(bits[o][: graph.node(o).width])
            return zext(out, w)
        if n.op == "SLICE":
            lo = n.lo or 0
            src = bits[ops[0]]
            return zext(src[lo:lo + w], w)
        if n.op in ("SHL", "SHR"):
            amt_node = graph.node(ops[1])
            value = arg(0)
            if amt_node.op == "CONST":
                k = int(amt_node.value or 0)
                if n.op == "SHL":
                    shifted = [b.const(0)] * min(k, w) + value
                else:
                    shifted = value[k:] if k < w else []
                return zext(shifted, w)
            # barrel shifter over the shift-amount bits
            amt = bits[ops[1]]
            cur = value
            for kbit, sel in enumerate(amt):
                step = 1 << kbit
                if step >= w:
                    # selecting any higher bit zeroes the result
                    zeroed = [b.add("AND2", operands=(x, b.add("INV", operands=(sel,))))
                              for x in cur]
                    cur = zeroed
                    continue
                if n.op == "SHL":
                    moved = [b.const(0)] * step + cur[: w - step]
                else:
                    moved = cur[step:] + [b.const(0)] * step
                cur = [b.add("MUX2", operands=(sel, m, c))
                       for m, c in zip(moved, cur)]
            return zext(cur, w)
        raise UnsupportedGateLowering(f"cannot lower op {n.op}")

    for n in graph.nodes:
        if n.id in bits or n.op == "OUTPUT":
            continue
        bits[n.id] = lower(n)

    for n in graph.nodes:
        if n.op == "REG":
            srcs = graph.operands(n.id)
            if not srcs:
                continue
            driver = zext(bits[srcs[0]], n.width)
            for i, dff in enumerate(bits[n.id]):
                b.edges.append(CdfEdge(driver[i], dff,
                                       edge_type(b.nodes[driver[i]].op, "DFF")))
        elif n.op == "OUTPUT":
            srcs = graph.operands(n.id)
            driver = zext(bits[srcs[0]], n.width)
            for i in range(n.width):
                b.add("OUTPUT", _bit_name(n.name or f"o{n.id}", i, n.width),
                      operands=(driver[i],))
    return b.graph()
