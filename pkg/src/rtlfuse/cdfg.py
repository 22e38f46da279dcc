"""Control-dataflow graph IR: elaboration of parsed designs into operator graphs.

Nodes are ports, registers, constants, and one operator per AST operator
instance; wires are aliases and never become nodes. Edge types encode the
(source class, destination class) pair over {IO, SEQ, CONST, COMB}, which
yields exactly 12 valid combinations (constants are never destinations).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace

from . import verilog as V
from .errors import (
    CombinationalLoop,
    InvalidDesign,
    UndeclaredIdentifier,
    WidthMismatch,
)

RTL_OPS = (
    "INPUT", "OUTPUT", "REG", "CONST",
    "ADD", "SUB", "MUL", "AND", "OR", "XOR", "NOT", "MUX",
    "EQ", "NEQ", "LT", "GT", "LE", "GE", "SHL", "SHR", "CONCAT", "SLICE",
)

GATE_OPS = (
    "DFF", "BUF", "INV", "AND2", "OR2", "NAND2", "NOR2", "XOR2", "XNOR2",
    "MUX2", "CONST0", "CONST1",
)

MASK_OP = "MASK"

# Shared embedding vocabulary across RTL and gate-level graphs.
OP_VOCAB = RTL_OPS + GATE_OPS + (MASK_OP,)
OP_INDEX = {op: i for i, op in enumerate(OP_VOCAB)}

_SEQ_OPS = {"REG", "DFF"}
_IO_OPS = {"INPUT", "OUTPUT"}
_CONST_OPS = {"CONST", "CONST0", "CONST1"}


def op_class(op: str) -> str:
    if op in _IO_OPS:
        return "IO"
    if op in _SEQ_OPS:
        return "SEQ"
    if op in _CONST_OPS:
        return "CONST"
    return "COMB"


EDGE_TYPES = tuple(
    f"{src}->{dst}"
    for src in ("IO", "SEQ", "CONST", "COMB")
    for dst in ("IO", "SEQ", "COMB")
)
EDGE_TYPE_INDEX = {et: i for i, et in enumerate(EDGE_TYPES)}
assert len(EDGE_TYPES) == 12


def edge_type(src_op: str, dst_op: str) -> str:
    return f"{op_class(src_op)}->{op_class(dst_op)}"


@dataclass(frozen=True)
class CdfNode:
    id: int
    op: str
    width: int
    name: str | None = None
    span: V.Span | None = None
    value: int | None = None  # CONST payload
    lo: int | None = None     # SLICE low bit


@dataclass(frozen=True)
class CdfEdge:
    src: int
    dst: int
    etype: str


class CdfGraph:
    """Directed operator graph. Edge list order preserves operand order,
    so a node's in-edges enumerate its operands (MUX: select, then, else)."""

    def __init__(self, nodes: list[CdfNode], edges: list[CdfEdge]):
        self.nodes = list(nodes)
        self.edges = list(edges)
        self._by_id = {n.id: n for n in self.nodes}
        if len(self._by_id) != len(self.nodes):
            raise InvalidDesign("duplicate node ids")
        self._in: dict[int, list[CdfEdge]] = {n.id: [] for n in self.nodes}
        self._out: dict[int, list[CdfEdge]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            if e.src not in self._by_id or e.dst not in self._by_id:
                raise InvalidDesign(f"edge {e.src}->{e.dst} references unknown node")
            self._in[e.dst].append(e)
            self._out[e.src].append(e)

    def __len__(self) -> int:
        return len(self.nodes)

    def node(self, node_id: int) -> CdfNode:
        return self._by_id[node_id]

    def has_node(self, node_id: int) -> bool:
        return node_id in self._by_id

    def in_edges(self, node_id: int) -> list[CdfEdge]:
        return self._in[node_id]

    def out_edges(self, node_id: int) -> list[CdfEdge]:
        return self._out[node_id]

    def operands(self, node_id: int) -> list[int]:
        return [e.src for e in self._in[node_id]]

    def ids_with_op(self, *ops: str) -> list[int]:
        return [n.id for n in self.nodes if n.op in ops]

    def reg_ids(self) -> list[int]:
        return self.ids_with_op("REG", "DFF")

    def named_node(self, name: str) -> CdfNode | None:
        for n in self.nodes:
            if n.name == name:
                return n
        return None

    # serialization ----------------------------------------------------------

    def to_json_obj(self) -> dict:
        nodes = []
        for n in self.nodes:
            item: dict = {"id": n.id, "op": n.op, "width": n.width}
            if n.name is not None:
                item["name"] = n.name
            if n.value is not None:
                item["value"] = n.value
            if n.lo is not None:
                item["lo"] = n.lo
            nodes.append(item)
        edges = [{"src": e.src, "dst": e.dst, "etype": e.etype} for e in self.edges]
        return {"nodes": nodes, "edges": edges}

    def to_json(self) -> str:
        return json.dumps(self.to_json_obj(), separators=(",", ":"), sort_keys=False)

    @classmethod
    def from_json_obj(cls, obj: dict) -> "CdfGraph":
        nodes = [
            CdfNode(
                int(d["id"]), str(d["op"]), int(d["width"]),
                d.get("name"), None, d.get("value"), d.get("lo"),
            )
            for d in obj["nodes"]
        ]
        by_id = {n.id: n for n in nodes}
        edges = []
        for d in obj["edges"]:
            src, dst = int(d["src"]), int(d["dst"])
            et = d.get("etype") or edge_type(by_id[src].op, by_id[dst].op)
            edges.append(CdfEdge(src, dst, et))
        return cls(nodes, edges)

    @classmethod
    def from_json(cls, text: str) -> "CdfGraph":
        return cls.from_json_obj(json.loads(text))

    # validation ---------------------------------------------------------------

    def validate(self) -> None:
        for n in self.nodes:
            if n.width < 1:
                raise WidthMismatch(n.id, f"width {n.width}")
            if n.op not in OP_INDEX:
                raise InvalidDesign(f"unknown op {n.op!r}")
            k = len(self._in[n.id])
            if n.op == "MUX" and k != 3:
                raise InvalidDesign(f"MUX {n.id} has {k} in-edges")
            if op_class(n.op) == "CONST" and k != 0:
                raise InvalidDesign(f"constant {n.id} has in-edges")
            if n.op not in ("INPUT",) and op_class(n.op) != "CONST" and k < 1:
                raise InvalidDesign(f"node {n.id} ({n.op}) has no in-edge")
        cycle = self.combinational_cycle()
        if cycle:
            raise CombinationalLoop(cycle)

    def combinational_cycle(self) -> list:
        """Return a cycle in the graph with REG/DFF out-edges removed, or []."""
        adj: dict[int, list[int]] = {n.id: [] for n in self.nodes}
        for e in self.edges:
            if self._by_id[e.src].op not in _SEQ_OPS:
                adj[e.src].append(e.dst)
        WHITE, GRAY, BLACK = 0, 1, 2
        color = {nid: WHITE for nid in adj}
        stack: list[int] = []

        def dfs(u: int) -> list | None:
            color[u] = GRAY
            stack.append(u)
            for v in adj[u]:
                if color[v] == GRAY:
                    i = stack.index(v)
                    return stack[i:]
                if color[v] == WHITE:
                    found = dfs(v)
                    if found:
                        return found
            stack.pop()
            color[u] = BLACK
            return None

        for nid in adj:
            if color[nid] == WHITE:
                found = dfs(nid)
                if found:
                    names = [self._by_id[i].name or i for i in found]
                    return names
        return []


# --- elaboration -------------------------------------------------------------

_HOLD = object()  # sentinel: register keeps its value on this path


class _Builder:
    def __init__(self):
        self.nodes: list[CdfNode] = []
        self.edges: list[CdfEdge] = []
        self.origin: dict[int, tuple] = {}

    def add_node(self, op, width, name=None, span=None, value=None, lo=None,
                 origin=None) -> int:
        nid = len(self.nodes)
        self.nodes.append(CdfNode(nid, op, width, name, span, value, lo))
        if origin is not None:
            self.origin[nid] = origin
        return nid

    def add_edge(self, src: int, dst: int):
        et = edge_type(self.nodes[src].op, self.nodes[dst].op)
        self.edges.append(CdfEdge(src, dst, et))

    def width(self, nid: int) -> int:
        return self.nodes[nid].width


@dataclass
class ElabInfo:
    """Bookkeeping linking graph nodes back to design statements (for slicing)."""

    graph: CdfGraph
    origin: dict[int, tuple] = field(default_factory=dict)
    reg_node: dict[str, int] = field(default_factory=dict)
    port_node: dict[str, int] = field(default_factory=dict)


def elaborate(design: V.RtlDesign) -> CdfGraph:
    """Lower a validated design to its operator/register dataflow graph."""
    return elaborate_full(design).graph


def elaborate_full(design: V.RtlDesign) -> ElabInfo:
    V.validate_design(design)
    signals = design._signals
    b = _Builder()

    input_node: dict[str, int] = {}
    port_node: dict[str, int] = {}
    for i, p in enumerate(design.ports):
        if p.direction == "input":
            nid = b.add_node("INPUT", p.width, name=p.name, span=p.span,
                             origin=("port", i))
            input_node[p.name] = nid
            port_node[p.name] = nid

    reg_node: dict[str, int] = {}
    for n in design.nets:
        if n.kind == "reg" and n.name not in reg_node:
            reg_node[n.name] = b.add_node("REG", n.width, name=n.name, span=n.span,
                                          origin=("reg", n.name))

    assign_for = {a.target: (j, a) for j, a in enumerate(design.assigns)}
    driver: dict[str, int] = dict(input_node)
    driver.update(reg_node)
    visiting: list[str] = []

    def resolve(name: str) -> int:
        if name in driver:
            return driver[name]
        if name in visiting:
            cycle = visiting[visiting.index(name):]
            raise CombinationalLoop(cycle)
        if name not in assign_for:
            raise InvalidDesign(f"wire {name} is referenced but never driven")
        j, a = assign_for[name]
        visiting.append(name)
        try:
            nid = build_expr(a.rhs, ("assign", j))
        finally:
            visiting.pop()
        w = signals[name].width
        if b.width(nid) > w:
            # declared wire narrower than its driver: truncate explicitly
            sl = b.add_node("SLICE", w, span=a.span, lo=0, origin=("assign", j))
            b.add_edge(nid, sl)
            nid = sl
        driver[name] = nid
        return nid

    def as_bool(nid: int, span, origin) -> int:
        """Verilog truthiness: multi-bit values compare against zero."""
        if b.width(nid) == 1:
            return nid
        z = b.add_node("CONST", b.width(nid), span=span, value=0, origin=origin)
        cmp_id = b.add_node("NEQ", 1, span=span, origin=origin)
        b.add_edge(nid, cmp_id)
        b.add_edge(z, cmp_id)
        return cmp_id

    def build_expr(expr: V.Expr, origin: tuple) -> int:
        if isinstance(expr, V.Ident):
            if expr.name not in signals:
                raise UndeclaredIdentifier(expr.name)
            return resolve(expr.name)
        if isinstance(expr, V.Const):
            return b.add_node("CONST", expr.width, span=expr.span,
                              value=expr.value, origin=origin)
        if isinstance(expr, V.Select):
            base = build_expr(expr.base, origin)
            base_w = signals[expr.base.name].width
            if expr.hi >= base_w:
                raise WidthMismatch(expr.base.name,
                                    f"select [{expr.hi}:{expr.lo}] of {base_w}-bit signal")
            nid = b.add_node("SLICE", expr.hi - expr.lo + 1, span=expr.span,
                             lo=expr.lo, origin=origin)
            b.add_edge(base, nid)
            return nid
        if isinstance(expr, V.Unary):
            x = build_expr(expr.operand, origin)
            if expr.op == "~":
                nid = b.add_node("NOT", b.width(x), span=expr.span, origin=origin)
                b.add_edge(x, nid)
                return nid
            if expr.op == "!":
                z = b.add_node("CONST", b.width(x), span=expr.span, value=0, origin=origin)
                nid = b.add_node("EQ", 1, span=expr.span, origin=origin)
                b.add_edge(x, nid)
                b.add_edge(z, nid)
                return nid
            if expr.op == "-":
                z = b.add_node("CONST", b.width(x), span=expr.span, value=0, origin=origin)
                nid = b.add_node("SUB", b.width(x), span=expr.span, origin=origin)
                b.add_edge(z, nid)
                b.add_edge(x, nid)
                return nid
            raise InvalidDesign(f"unknown unary {expr.op}")
        if isinstance(expr, V.Binary):
            if expr.op in ("&&", "||"):
                lx = as_bool(build_expr(expr.lhs, origin), expr.span, origin)
                rx = as_bool(build_expr(expr.rhs, origin), expr.span, origin)
                nid = b.add_node("AND" if expr.op == "&&" else "OR", 1,
                                 span=expr.span, origin=origin)
                b.add_edge(lx, nid)
                b.add_edge(rx, nid)
                return nid
            lx = build_expr(expr.lhs, origin)
            rx = build_expr(expr.rhs, origin)
            wl, wr = b.width(lx), b.width(rx)
            table = {
                "+": ("ADD", max(wl, wr)), "-": ("SUB", max(wl, wr)),
                "*": ("MUL", max(wl, wr)),
                "&": ("AND", max(wl, wr)), "|": ("OR", max(wl, wr)),
                "^": ("XOR", max(wl, wr)),
                "==": ("EQ", 1), "!=": ("NEQ", 1),
                "<": ("LT", 1), ">": ("GT", 1), "<=": ("LE", 1), ">=": ("GE", 1),
                "<<": ("SHL", wl), ">>": ("SHR", wl),
            }
            op, w = table[expr.op]
            nid = b.add_node(op, w, span=expr.span, origin=origin)
            b.add_edge(lx, nid)
            b.add_edge(rx, nid)
            return nid
        if isinstance(expr, V.Ternary):
            sel = as_bool(build_expr(expr.cond, origin), expr.span, origin)
            tx = build_expr(expr.then, origin)
            ex = build_expr(expr.other, origin)
            nid = b.add_node("MUX", max(b.width(tx), b.width(ex)),
                             span=expr.span, origin=origin)
            b.add_edge(sel, nid)
            b.add_edge(tx, nid)
            b.add_edge(ex, nid)
            return nid
        if isinstance(expr, V.Concat):
            parts = [build_expr(p, origin) for p in expr.parts]
            nid = b.add_node("CONCAT", sum(b.width(p) for p in parts),
                             span=expr.span, origin=origin)
            for p in parts:  # MSB-first, as written
                b.add_edge(p, nid)
            return nid
        raise InvalidDesign(f"unknown expression {expr!r}")

    # force evaluation of every assign in source order so node ids are stable
    for j, a in enumerate(design.assigns):
        resolve(a.target)

    for bi, blk in enumerate(design.always_blocks):
        guard_cache: dict[int, int] = {}

        def guard(expr: V.Expr, want_bool: bool) -> int:
            key = id(expr)
            if key not in guard_cache:
                nid = build_expr(expr, ("guard", bi))
                if want_bool:
                    nid = as_bool(nid, expr.span, ("guard", bi))
                guard_cache[key] = nid
            return guard_cache[key]

        def as_node(val, reg: str) -> int:
            return reg_node[reg] if val is _HOLD else val

        def merge(sel: int, t_env: dict, e_env: dict, env: dict, span) -> dict:
            merged = dict(env)
            everywhere = sorted(set(t_env) | set(e_env), key=lambda r: reg_node[r])
            affected = [
                r for r in everywhere
                if t_env.get(r, env.get(r, _HOLD)) != e_env.get(r, env.get(r, _HOLD))
            ]
            for r in everywhere:
                if r not in affected:
                    merged[r] = t_env.get(r, e_env.get(r, env.get(r, _HOLD)))
            for r in affected:
                tv = as_node(t_env.get(r, env.get(r, _HOLD)), r)
                ev = as_node(e_env.get(r, env.get(r, _HOLD)), r)
                m = b.add_node("MUX", max(b.width(tv), b.width(ev)), span=span,
                               origin=("always", bi, r))
                b.add_edge(sel, m)
                b.add_edge(tv, m)
                b.add_edge(ev, m)
                merged[r] = m
            return merged

        def exec_stmts(stmts, env: dict) -> dict:
            env = dict(env)
            for s in stmts:
                if isinstance(s, V.NbAssign):
                    env[s.target] = build_expr(s.rhs, ("always", bi, s.target))
                elif isinstance(s, V.IfStmt):
                    sel = guard(s.cond, want_bool=True)
                    t_env = exec_stmts(s.then, env)
                    e_env = exec_stmts(s.other, env)
                    env = merge(sel, t_env, e_env, env, s.span)
                elif isinstance(s, V.CaseStmt):
                    subj = guard(s.subject, want_bool=False)
                    base = exec_stmts(s.default, env) if s.default is not None else dict(env)
                    for values, body in reversed(s.items):
                        item_env = exec_stmts(body, env)
                        # multiple labels on one item OR together
                        sel = None
                        for c in values:
                            cn = b.add_node("CONST", c.width, span=c.span,
                                            value=c.value, origin=("guard", bi))
                            eq = b.add_node("EQ", 1, span=s.span, origin=("guard", bi))
                            b.add_edge(subj, eq)
                            b.add_edge(cn, eq)
                            if sel is None:
                                sel = eq
                            else:
                                orn = b.add_node("OR", 1, span=s.span, origin=("guard", bi))
                                b.add_edge(sel, orn)
                                b.add_edge(eq, orn)
                                sel = orn
                        base = merge(sel, item_env, base, env, s.span)
                    env = base
                else:
                    raise InvalidDesign(f"unknown statement {s!r}")
            return env

        final_env = exec_stmts(blk.body, {})
        for reg in sorted(final_env, key=lambda r: reg_node[r]):
            val = final_env[reg]
            if val is _HOLD:
                continue
            b.add_edge(val, reg_node[reg])

    for i, p in enumerate(design.ports):
        if p.direction != "output":
            continue
        src = resolve(p.name)
        out = b.add_node("OUTPUT", p.width, name=p.name, span=p.span,
                         origin=("port", i))
        port_node[p.name] = out
        b.add_edge(src, out)

    graph = CdfGraph(b.nodes, b.edges)
    graph.validate()
    info = ElabInfo(graph, b.origin, dict(reg_node), port_node)
    return info


def parse_and_elaborate(source: str) -> CdfGraph:
    return elaborate(V.parse_verilog(source))


# --- isomorphism --------------------------------------------------------------

def _nx_graph(graph: CdfGraph):
    import networkx as nx

    g = nx.MultiDiGraph()
    for n in graph.nodes:
        g.add_node(n.id, op=n.op, width=n.width, value=n.value, lo=n.lo)
    for nid in (n.id for n in graph.nodes):
        for pos, e in enumerate(graph.in_edges(nid)):
            g.add_edge(e.src, e.dst, etype=e.etype, pos=pos)
    return g


def graphs_isomorphic(a: CdfGraph, b: CdfGraph) -> bool:
    """Exact structural match up to node relabeling.

    Node attributes (op, width, const value, slice offset) and edge operand
    positions must match, so non-commutative operand order is respected.
    """
    import networkx as nx
    from networkx.algorithms.isomorphism import (
        MultiDiGraphMatcher,
        categorical_multiedge_match,
        categorical_node_match,
    )

    ga, gb = _nx_graph(a), _nx_graph(b)
    nm = categorical_node_match(["op", "width", "value", "lo"], [None] * 4)
    em = categorical_multiedge_match(["etype", "pos"], [None, None])
    return MultiDiGraphMatcher(ga, gb, node_match=nm, edge_match=em).is_isomorphic()
