"""Functionally equivalent cone variants via verified local rewrites.

Each rule is semantics-preserving on every bit pattern; `verify_rule_semantics`
checks 1-bit instantiations of every rule against exhaustive simulation.
Rewrites never touch the root or boundary, so the boundary signature (names,
widths, root) is preserved and variants remain drop-in positives.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cdfg import CdfEdge, CdfGraph, CdfNode, edge_type
from .cones import Cone

_NOT_OPS = {"NOT", "INV"}
_AND_OPS = {"AND", "AND2"}
_OR_OPS = {"OR", "OR2"}
_XOR_OPS = {"XOR", "XOR2"}
_MUX_OPS = {"MUX", "MUX2"}
_COMMUTATIVE = _AND_OPS | _OR_OPS | _XOR_OPS | {"ADD", "MUL", "EQ", "NEQ",
                                                "NAND2", "NOR2", "XNOR2"}


class _Edit:
    """Mutable view of a cone graph: nodes by id plus ordered operand lists."""

    def __init__(self, cone: Cone):
        g = cone.graph
        self.nodes: dict[int, CdfNode] = {n.id: n for n in g.nodes}
        self.ops: dict[int, list[int]] = {n.id: list(g.operands(n.id)) for n in g.nodes}
        self.root = cone.root
        self.roots = set(cone.all_roots())
        self.boundary = set(cone.boundary)
        self.gate_level = any(n.op in ("DFF", "AND2", "OR2", "INV") for n in g.nodes)
        self.next_id = max(self.nodes) + 1

    def width(self, nid: int) -> int:
        return self.nodes[nid].width

    def op(self, nid: int) -> str:
        return self.nodes[nid].op

    def new_node(self, op: str, width: int, operands: list[int],
                 value: int | None = None, lo: int | None = None) -> int:
        nid = self.next_id
        self.next_id += 1
        self.nodes[nid] = CdfNode(nid, op, width, None, None, value, lo)
        self.ops[nid] = list(operands)
        return nid

    def redirect(self, old: int, new: int) -> None:
        """Point every consumer of `old` at `new` instead."""
        for nid in self.ops:
            self.ops[nid] = [new if s == old else s for s in self.ops[nid]]

    def consumers(self, nid: int) -> list[int]:
        return [c for c, srcs in self.ops.items() if nid in srcs]

    def collect_garbage(self) -> None:
        changed = True
        while changed:
            changed = False
            for nid in sorted(self.nodes):
                if nid in self.roots or nid in self.boundary:
                    continue
                if not self.consumers(nid):
                    del self.nodes[nid]
                    del self.ops[nid]
                    changed = True

    def signature(self):
        return tuple(
            (nid, self.nodes[nid].op, self.nodes[nid].width,
             self.nodes[nid].value, self.nodes[nid].lo, tuple(self.ops[nid]))
            for nid in sorted(self.nodes)
        )

    def ext(self, nid: int, width: int) -> int:
        """Zero-extend by concatenating a zero constant above (a no-op at
        equal widths)."""
        w = self.width(nid)
        if w == width:
            return nid
        z = self.new_node("CONST", width - w, [], value=0)
        return self.new_node("CONCAT", width, [z, nid])

    def to_cone(self, template: Cone, trail: tuple[str, ...]) -> Cone:
        nodes = [self.nodes[nid] for nid in sorted(self.nodes)]
        edges = []
        for nid in sorted(self.nodes):
            for src in self.ops[nid]:
                edges.append(CdfEdge(src, nid, edge_type(self.nodes[src].op,
                                                         self.nodes[nid].op)))
        graph = CdfGraph(nodes, edges)
        members = frozenset(
            nid for nid in self.nodes
            if nid not in self.roots and nid not in self.boundary
        )
        return Cone(template.root, members, frozenset(self.boundary), graph,
                    merged_roots=template.merged_roots,
                    is_output_cone=template.is_output_cone,
                    rewrite_trail=trail)


def _not_node(edit: _Edit, x: int, width: int) -> int:
    op = "INV" if edit.gate_level else "NOT"
    return edit.new_node(op, width, [edit.ext(x, width)])


def _bin_node(edit: _Edit, kind: str, a: int, b: int, width: int) -> int:
    table = {"AND": "AND2", "OR": "OR2", "XOR": "XOR2"}
    op = table[kind] if edit.gate_level else kind
    return edit.new_node(op, width, [edit.ext(a, width), edit.ext(b, width)])


# --- rules ----------------------------------------------------------------------

def _m_double_negation(edit: _Edit, nid: int) -> bool:
    if edit.op(nid) not in _NOT_OPS:
        return False
    inner = edit.ops[nid][0]
    if edit.op(inner) not in _NOT_OPS or inner in edit.boundary:
        return False
    target = edit.ops[inner][0]
    return edit.width(nid) == edit.width(inner) == edit.width(target)

def _a_double_negation(edit: _Edit, nid: int) -> None:
    target = edit.ops[edit.ops[nid][0]][0]
    edit.redirect(nid, target)


def _m_de_morgan_and(edit: _Edit, nid: int) -> bool:
    return edit.op(nid) in _AND_OPS and len(edit.ops[nid]) == 2

def _a_de_morgan_and(edit: _Edit, nid: int) -> None:
    a, b = edit.ops[nid]
    w = edit.width(nid)
    na, nb = _not_node(edit, a, w), _not_node(edit, b, w)
    orn = _bin_node(edit, "OR", na, nb, w)
    out = _not_node(edit, orn, w)
    edit.redirect(nid, out)


def _m_de_morgan_or(edit: _Edit, nid: int) -> bool:
    return edit.op(nid) in _OR_OPS and len(edit.ops[nid]) == 2

def _a_de_morgan_or(edit: _Edit, nid: int) -> None:
    a, b = edit.ops[nid]
    w = edit.width(nid)
    na, nb = _not_node(edit, a, w), _not_node(edit, b, w)
    andn = _bin_node(edit, "AND", na, nb, w)
    out = _not_node(edit, andn, w)
    edit.redirect(nid, out)


def _m_commute(edit: _Edit, nid: int) -> bool:
    return (edit.op(nid) in _COMMUTATIVE and len(edit.ops[nid]) == 2
            and edit.ops[nid][0] != edit.ops[nid][1])

def _a_commute(edit: _Edit, nid: int) -> None:
    a, b = edit.ops[nid]
    edit.ops[nid] = [b, a]


def _m_mux_to_boolean(edit: _Edit, nid: int) -> bool:
    return edit.op(nid) in _MUX_OPS and edit.width(edit.ops[nid][0]) == 1

def _a_mux_to_boolean(edit: _Edit, nid: int) -> None:
    sel, then, other = edit.ops[nid]
    w = edit.width(nid)
    if w == 1:
        srep = sel
    else:
        srep = edit.new_node("CONCAT", w, [sel] * w)
    nsel = _not_node(edit, srep, w)
    t_arm = _bin_node(edit, "AND", srep, then, w)
    e_arm = _bin_node(edit, "AND", nsel, other, w)
    out = _bin_node(edit, "OR", t_arm, e_arm, w)
    edit.redirect(nid, out)


def _m_xor_expand(edit: _Edit, nid: int) -> bool:
    return edit.op(nid) in _XOR_OPS and len(edit.ops[nid]) == 2

def _a_xor_expand(edit: _Edit, nid: int) -> None:
    a, b = edit.ops[nid]
    w = edit.width(nid)
    na, nb = _not_node(edit, a, w), _not_node(edit, b, w)
    left = _bin_node(edit, "AND", a, nb, w)
    right = _bin_node(edit, "AND", na, b, w)
    out = _bin_node(edit, "OR", left, right, w)
    edit.redirect(nid, out)


def _m_and_absorb_inverse(edit: _Edit, nid: int) -> bool:
    if edit.op(nid) not in _AND_OPS or len(edit.ops[nid]) != 2:
        return False
    a, b = edit.ops[nid]
    return ((edit.op(b) in _NOT_OPS and edit.ops[b][0] == a)
            or (edit.op(a) in _NOT_OPS and edit.ops[a][0] == b))

def _a_and_absorb_inverse(edit: _Edit, nid: int) -> None:
    zero = edit.new_node("CONST", edit.width(nid), [], value=0)
    edit.redirect(nid, zero)


@dataclass(frozen=True)
class RewriteRule:
    name: str
    matches: callable
    apply: callable


RULES: tuple[RewriteRule, ...] = (
    RewriteRule("double_negation", _m_double_negation, _a_double_negation),
    RewriteRule("de_morgan_and", _m_de_morgan_and, _a_de_morgan_and),
    RewriteRule("de_morgan_or", _m_de_morgan_or, _a_de_morgan_or),
    RewriteRule("commute_operands", _m_commute, _a_commute),
    RewriteRule("mux_to_boolean", _m_mux_to_boolean, _a_mux_to_boolean),
    RewriteRule("xor_expand", _m_xor_expand, _a_xor_expand),
    RewriteRule("and_absorb_inverse", _m_and_absorb_inverse, _a_and_absorb_inverse),
)
RULES_BY_NAME = {r.name: r for r in RULES}


def _sites(edit: _Edit) -> list[tuple[int, int]]:
    """(rule index, member node id) pairs, in deterministic order."""
    found = []
    for ri, rule in enumerate(RULES):
        for nid in sorted(edit.nodes):
            if nid in edit.roots or nid in edit.boundary:
                continue
            if rule.matches(edit, nid):
                found.append((ri, nid))
    return found


def _one_variant(cone: Cone, rng: np.random.Generator) -> Cone:
    base_sig = _Edit(cone).signature()
    for _attempt in range(8):
        edit = _Edit(cone)
        trail: list[str] = []
        n_rewrites = int(rng.integers(1, 4))
        for _ in range(n_rewrites):
            sites = _sites(edit)
            if not sites:
                break
            ri, nid = sites[int(rng.integers(0, len(sites)))]
            RULES[ri].apply(edit, nid)
            edit.collect_garbage()
            trail.append(f"{RULES[ri].name}@{nid}")
        if not trail:
            return _unchanged(cone)
        if edit.signature() != base_sig:
            return edit.to_cone(cone, tuple(trail))
    return _unchanged(cone)


def _unchanged(cone: Cone) -> Cone:
    return Cone(cone.root, cone.members, cone.boundary, cone.graph,
                merged_roots=cone.merged_roots,
                is_output_cone=cone.is_output_cone,
                rewrite_trail=())


def apply_rewrites(cone: Cone, count: int, seed: int) -> list[Cone]:
    """`count` equivalent variants, bitwise-reproducible for a given seed.

    A variant with an empty rewrite_trail signals that no rule applied and the
    structure is unchanged.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    out = []
    for i in range(count):
        rng = np.random.default_rng([int(seed) & 0x7FFFFFFF, i])
        out.append(_one_variant(cone, rng))
    return out


def verify_rule_semantics() -> dict[str, bool]:
    """Exhaustively check 1-bit instantiations of every rule (the build-time
    oracle for the rule table)."""
    from .sim import check_equivalence

    fixtures = {
        "double_negation": "module f(input clk, input a, output reg q);"
                           " always @(posedge clk) q <= ~(~a); endmodule",
        "de_morgan_and": "module f(input clk, input a, input b, output reg q);"
                         " always @(posedge clk) q <= a & b; endmodule",
        "de_morgan_or": "module f(input clk, input a, input b, output reg q);"
                        " always @(posedge clk) q <= a | b; endmodule",
        "commute_operands": "module f(input clk, input a, input b, output reg q);"
                            " always @(posedge clk) q <= a & b; endmodule",
        "mux_to_boolean": "module f(input clk, input s, input a, input b,"
                          " output reg q); always @(posedge clk)"
                          " q <= s ? a : b; endmodule",
        "xor_expand": "module f(input clk, input a, input b, output reg q);"
                      " always @(posedge clk) q <= a ^ b; endmodule",
        "and_absorb_inverse": "module f(input clk, input a, output reg q);"
                              " always @(posedge clk) q <= a & (~a); endmodule",
    }
    from .cdfg import parse_and_elaborate
    from .cones import split_design

    results = {}
    for name, src in fixtures.items():
        cone = split_design(parse_and_elaborate(src))[0]
        edit = _Edit(cone)
        rule = RULES_BY_NAME[name]
        applied = False
        for nid in sorted(edit.nodes):
            if nid in edit.roots or nid in edit.boundary:
                continue
            if rule.matches(edit, nid):
                rule.apply(edit, nid)
                edit.collect_garbage()
                applied = True
                break
        variant = edit.to_cone(cone, (name,))
        results[name] = applied and check_equivalence(cone, variant)
    return results
