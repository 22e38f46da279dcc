"""Register-cone extraction and the multimodal sub-circuit bundle.

A cone is one register plus the combinational fan-in computing its next
state within a clock cycle. Extraction walks in-edges breadth-first and
stops at (and records) sequential elements and primary inputs.
"""

from __future__ import annotations

import hashlib
import json
from collections import deque
from dataclasses import dataclass, field, replace

from . import verilog as V
from .cdfg import CdfEdge, CdfGraph, CdfNode, edge_type, elaborate, graphs_isomorphic
from .errors import NotARegister, RegisterNotFound
from .metrics import QualityMetrics
from .slicing import render_cone, slice_code

_STOP_OPS = {"REG", "DFF", "INPUT"}


@dataclass
class Cone:
    root: int
    members: frozenset[int]
    boundary: frozenset[int]
    graph: CdfGraph
    merged_roots: tuple[int, ...] = ()   # all roots of a bit-blasted merge
    is_output_cone: bool = False
    rewrite_trail: tuple[str, ...] = ()  # empty means structurally unchanged

    @property
    def root_name(self) -> str | None:
        return self.graph.node(self.root).name

    def all_roots(self) -> tuple[int, ...]:
        return self.merged_roots if self.merged_roots else (self.root,)

    def boundary_signature(self) -> tuple[tuple[str, int], ...]:
        """Sorted (name, width) pairs; the contract for equivalence checks."""
        sig = []
        for nid in sorted(self.boundary):
            n = self.graph.node(nid)
            sig.append((n.name or f"#{nid}", n.width))
        return tuple(sorted(sig))

    def to_json_obj(self) -> dict:
        return {
            "root": self.root,
            "members": sorted(self.members),
            "boundary": sorted(self.boundary),
            "graph": self.graph.to_json_obj(),
            "merged_roots": list(self.merged_roots),
            "is_output_cone": self.is_output_cone,
            "rewrite_trail": list(self.rewrite_trail),
        }

    @classmethod
    def from_json_obj(cls, obj: dict) -> "Cone":
        return cls(
            root=int(obj["root"]),
            members=frozenset(obj["members"]),
            boundary=frozenset(obj["boundary"]),
            graph=CdfGraph.from_json_obj(obj["graph"]),
            merged_roots=tuple(obj.get("merged_roots", [])),
            is_output_cone=bool(obj.get("is_output_cone", False)),
            rewrite_trail=tuple(obj.get("rewrite_trail", [])),
        )


def induced_cone_graph(graph: CdfGraph, roots: tuple[int, ...],
                       members: frozenset[int], boundary: frozenset[int]) -> CdfGraph:
    """Subgraph with the in-edges of the roots and members; boundary in-edges
    are cut, so boundary nodes act as sources."""
    keep = set(roots) | set(members) | set(boundary)
    nodes = [graph.node(nid) for nid in sorted(keep)]
    edges = []
    for t in sorted(set(roots) | set(members)):
        edges.extend(e for e in graph.in_edges(t) if e.src in keep)
    return CdfGraph(nodes, edges)


def _fanin_cone(graph: CdfGraph, root: int) -> tuple[frozenset[int], frozenset[int]]:
    members: set[int] = set()
    boundary: set[int] = set()
    seen = {root}
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for e in graph.in_edges(u):
            src = e.src
            op = graph.node(src).op
            if op in _STOP_OPS:
                boundary.add(src)
            elif src not in seen:
                seen.add(src)
                members.add(src)
                queue.append(src)
    return frozenset(members), frozenset(boundary)


def extract_cone(graph: CdfGraph, root: int) -> Cone:
    """Fan-in cone of one register: BFS over incoming edges, stopping at
    sequential elements and inputs."""
    if not graph.has_node(root) or graph.node(root).op not in ("REG", "DFF"):
        raise NotARegister(root)
    members, boundary = _fanin_cone(graph, root)
    sub = induced_cone_graph(graph, (root,), members, boundary)
    return Cone(root, members, boundary, sub)


def _extract_output_cone(graph: CdfGraph, root: int) -> Cone:
    members, boundary = _fanin_cone(graph, root)
    sub = induced_cone_graph(graph, (root,), members, boundary)
    return Cone(root, members, boundary, sub, is_output_cone=True)


def split_design(graph: CdfGraph, include_outputs: bool = False,
                 workers: int = 1) -> list[Cone]:
    """One cone per register, ordered by root node id. With include_outputs,
    OUTPUT-port cones are appended (tagged, excluded from pre-training).

    Extraction is independent per register; results are merged in root-id
    order, so parallel and serial runs are identical.
    """
    reg_ids = sorted(graph.reg_ids())
    if workers > 1 and len(reg_ids) > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=workers) as pool:
            cones = list(pool.map(lambda r: extract_cone(graph, r), reg_ids))
    else:
        cones = [extract_cone(graph, rid) for rid in reg_ids]
    if include_outputs:
        for oid in sorted(graph.ids_with_op("OUTPUT")):
            cones.append(_extract_output_cone(graph, oid))
    return cones


def align_netlist(rtl: Cone, netlist_graph: CdfGraph) -> Cone:
    """Cone of the gate-level DFF(s) matching the RTL root register name.

    Bit-blasted registers match by the "name[i]" prefix; their per-bit cones
    are merged with every matched DFF recorded as a root.
    """
    name = rtl.root_name
    if name is None:
        raise RegisterNotFound("<unnamed>")
    exact = []
    blasted = []
    for n in netlist_graph.nodes:
        if n.op != "DFF" or n.name is None:
            continue
        if n.name == name:
            exact.append(n.id)
        elif n.name.startswith(name + "["):
            blasted.append(n.id)
    roots = sorted(exact) if exact else sorted(blasted)
    if not roots:
        raise RegisterNotFound(name)
    members: set[int] = set()
    boundary: set[int] = set()
    for rid in roots:
        m, b = _fanin_cone(netlist_graph, rid)
        members |= m
        boundary |= b
    # self-feeding registers stay in the boundary: their current state is a
    # cone input, exactly as in the RTL cone
    sub = induced_cone_graph(netlist_graph, tuple(roots), frozenset(members),
                             frozenset(boundary))
    if len(roots) == 1:
        return Cone(roots[0], frozenset(members), frozenset(boundary), sub)
    return Cone(roots[0], frozenset(members), frozenset(boundary), sub,
                merged_roots=tuple(roots))


# --- bundles -------------------------------------------------------------------

def bundle_id(design: str, register: str, variant: int | None = None) -> str:
    key = f"{design}\x00{register}"
    if variant is not None:
        key += f"\x00aug{variant}"
    return hashlib.sha256(key.encode()).hexdigest()[:16]


@dataclass
class SubCircuitBundle:
    id: str
    design: str
    register: str
    code: str
    rtl_graph: Cone
    netlist_graph: Cone | None = None
    summary: str = ""
    labels: QualityMetrics | None = None
    is_augmented: bool = False
    equivalence_class: str = ""

    def to_json_obj(self) -> dict:
        return {
            "id": self.id,
            "design": self.design,
            "register": self.register,
            "code": self.code,
            "rtl_graph": self.rtl_graph.to_json_obj(),
            "netlist_graph": (
                self.netlist_graph.to_json_obj() if self.netlist_graph else None),
            "summary": self.summary,
            "labels": self.labels.to_dict() if self.labels else None,
            "is_augmented": self.is_augmented,
            "equivalence_class": self.equivalence_class,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), separators=(",", ":"))

    @classmethod
    def from_json_obj(cls, obj: dict) -> "SubCircuitBundle":
        return cls(
            id=obj["id"],
            design=obj["design"],
            register=obj["register"],
            code=obj["code"],
            rtl_graph=Cone.from_json_obj(obj["rtl_graph"]),
            netlist_graph=(
                Cone.from_json_obj(obj["netlist_graph"])
                if obj.get("netlist_graph") else None),
            summary=obj.get("summary", ""),
            labels=QualityMetrics.from_dict(obj.get("labels")),
            is_augmented=bool(obj.get("is_augmented", False)),
            equivalence_class=obj.get("equivalence_class", ""),
        )

    @classmethod
    def from_json(cls, line: str) -> "SubCircuitBundle":
        return cls.from_json_obj(json.loads(line))


def bundle_from_cone(design: V.RtlDesign, cone: Cone,
                     netlist_cone: Cone | None = None,
                     labels: QualityMetrics | None = None) -> SubCircuitBundle:
    reg = cone.root_name or f"n{cone.root}"
    node_ids = {cone.root} | set(cone.members)
    code = slice_code(design, node_ids, module_name=f"{design.name}_{reg}")
    bid = bundle_id(design.name, reg)
    return SubCircuitBundle(
        id=bid, design=design.name, register=reg, code=code,
        rtl_graph=cone, netlist_graph=netlist_cone, labels=labels,
        is_augmented=False, equivalence_class=bid,
    )


def variant_bundle(anchor: SubCircuitBundle, variant_cone: Cone,
                   index: int) -> SubCircuitBundle:
    name = f"{anchor.design}_{anchor.register}_v{index}"
    code = render_cone(variant_cone.graph, variant_cone.root,
                       set(variant_cone.boundary), set(variant_cone.members), name)
    return SubCircuitBundle(
        id=bundle_id(anchor.design, anchor.register, index),
        design=anchor.design, register=anchor.register, code=code,
        rtl_graph=variant_cone, netlist_graph=anchor.netlist_graph,
        labels=anchor.labels, is_augmented=True,
        equivalence_class=anchor.equivalence_class,
    )


# --- bundle invariant: code re-elaborates to the cone graph ---------------------

def cone_module_graph(cone: Cone) -> CdfGraph:
    """The cone graph as a standalone module would elaborate it: boundary
    registers become inputs (their state arrives through ports)."""
    roots = set(cone.all_roots())
    nodes = []
    for n in cone.graph.nodes:
        if n.id in cone.boundary and n.id not in roots and n.op in ("REG", "DFF"):
            nodes.append(CdfNode(n.id, "INPUT", n.width, n.name, n.span))
        else:
            nodes.append(n)
    by_id = {n.id: n for n in nodes}
    edges = [
        CdfEdge(e.src, e.dst, edge_type(by_id[e.src].op, by_id[e.dst].op))
        for e in cone.graph.edges
    ]
    return CdfGraph(nodes, edges)


def reelaborated_graph(code: str) -> CdfGraph:
    """Elaborate slice code and strip slice artifacts: the clock input node and
    OUTPUT nodes that merely re-export a register."""
    design = V.parse_verilog(code)
    graph = elaborate(design)
    regs = {graph.node(r).name for r in graph.reg_ids()}
    drop = {
        n.id for n in graph.nodes
        if (n.op == "OUTPUT" and n.name in regs)
        or (n.op == "INPUT" and n.name == design.clock)
    }
    nodes = [n for n in graph.nodes if n.id not in drop]
    edges = [e for e in graph.edges if e.src not in drop and e.dst not in drop]
    return CdfGraph(nodes, edges)


def code_matches_cone(code: str, cone: Cone) -> bool:
    return graphs_isomorphic(reelaborated_graph(code), cone_module_graph(cone))
