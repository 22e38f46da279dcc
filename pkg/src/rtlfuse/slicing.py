"""Code generation: standalone module slices and graph-to-Verilog rendering.

slice_code rebuilds a compilable module from the design statements that
produced a given node set, synthesizing ports for boundary signals.
render_cone prints a rewritten cone graph (which has no source text) as one
assign per operator node, so re-elaboration reproduces the graph.
"""

from __future__ import annotations

from . import verilog as V
from .cdfg import CdfGraph, elaborate_full
from .errors import DanglingReference


def const_text(value: int, width: int) -> str:
    return f"{width}'d{value}"


def expr_text(e: V.Expr) -> str:
    if isinstance(e, V.Ident):
        return e.name
    if isinstance(e, V.Const):
        return const_text(e.value, e.width)
    if isinstance(e, V.Select):
        if e.hi == e.lo:
            return f"{e.base.name}[{e.hi}]"
        return f"{e.base.name}[{e.hi}:{e.lo}]"
    if isinstance(e, V.Unary):
        return f"{e.op}({expr_text(e.operand)})"
    if isinstance(e, V.Binary):
        return f"({expr_text(e.lhs)} {e.op} {expr_text(e.rhs)})"
    if isinstance(e, V.Ternary):
        return f"({expr_text(e.cond)} ? {expr_text(e.then)} : {expr_text(e.other)})"
    if isinstance(e, V.Concat):
        return "{" + ", ".join(expr_text(p) for p in e.parts) + "}"
    raise DanglingReference(f"cannot print expression {e!r}")


def _filter_stmts(stmts, keep_regs: set[str]):
    """Keep only assignments to keep_regs; preserve guard structure, including
    empty branches (dropping a present-but-empty branch would change hold
    semantics)."""
    kept = []
    for s in stmts:
        if isinstance(s, V.NbAssign):
            if s.target in keep_regs:
                kept.append(s)
        elif isinstance(s, V.IfStmt):
            then = _filter_stmts(s.then, keep_regs)
            other = _filter_stmts(s.other, keep_regs)
            if then or other:
                kept.append(V.IfStmt(s.span, s.cond, tuple(then), tuple(other)))
        elif isinstance(s, V.CaseStmt):
            items = tuple(
                (values, tuple(_filter_stmts(body, keep_regs)))
                for values, body in s.items
            )
            default = (
                tuple(_filter_stmts(s.default, keep_regs))
                if s.default is not None else None
            )
            if any(body for _, body in items) or default:
                kept.append(V.CaseStmt(s.span, s.subject, items, default))
    return kept


def _stmt_lines(s: V.Stmt, indent: str) -> list[str]:
    if isinstance(s, V.NbAssign):
        return [f"{indent}{s.target} <= {expr_text(s.rhs)};"]
    if isinstance(s, V.IfStmt):
        lines = [f"{indent}if ({expr_text(s.cond)}) begin"]
        for t in s.then:
            lines.extend(_stmt_lines(t, indent + "  "))
        if s.other:
            lines.append(f"{indent}end else begin")
            for t in s.other:
                lines.extend(_stmt_lines(t, indent + "  "))
        lines.append(f"{indent}end")
        return lines
    if isinstance(s, V.CaseStmt):
        lines = [f"{indent}case ({expr_text(s.subject)})"]
        for values, body in s.items:
            label = ", ".join(const_text(c.value, c.width) for c in values)
            lines.append(f"{indent}  {label}: begin")
            for t in body:
                lines.extend(_stmt_lines(t, indent + "    "))
            lines.append(f"{indent}  end")
        if s.default is not None:
            lines.append(f"{indent}  default: begin")
            for t in s.default:
                lines.extend(_stmt_lines(t, indent + "    "))
            lines.append(f"{indent}  end")
        lines.append(f"{indent}endcase")
        return lines
    raise DanglingReference(f"cannot print statement {s!r}")


def _range_text(width: int) -> str:
    return f"[{width - 1}:0] " if width > 1 else ""


def slice_code(design: V.RtlDesign, node_ids: set, module_name: str | None = None) -> str:
    """Standalone module containing exactly the statements that produced node_ids.

    Callers slicing a register cone pass the root plus its combinational
    members; boundary registers and inputs are synthesized as input ports.
    """
    if not node_ids:
        raise DanglingReference("empty node set")
    info = elaborate_full(design)
    graph = info.graph
    for nid in node_ids:
        if not graph.has_node(nid):
            raise DanglingReference(f"node {nid} is not in the design graph")
        if graph.node(nid).op != "CONST" and nid not in info.origin:
            raise DanglingReference(f"node {nid} has no source statement")

    signals = design._signals
    kept_assigns = {
        info.origin[nid][1]
        for nid in node_ids
        if info.origin.get(nid, ("",))[0] == "assign"
    }
    kept_regs = {
        graph.node(nid).name
        for nid in node_ids
        if graph.node(nid).op == "REG"
    }
    kept_ports = {
        graph.node(nid).name
        for nid in node_ids
        if graph.node(nid).op in ("INPUT", "OUTPUT")
    }

    # resolve alias-only assigns needed by the kept statements
    refs: list[str] = []
    for j in sorted(kept_assigns):
        a = design.assigns[j]
        refs.append(a.target)
        V._collect_idents(a.rhs, refs)
    blocks: list[tuple[V.AlwaysBlock, list[V.Stmt]]] = []
    for blk in design.always_blocks:
        body = _filter_stmts(blk.body, kept_regs)
        if body:
            blocks.append((blk, body))
            targets: list[str] = []
            V._stmt_targets_and_refs(body, targets, refs)
            refs.extend(targets)

    assign_for = {a.target: (j, a) for j, a in enumerate(design.assigns)}
    queue = list(dict.fromkeys(refs))
    needed: list[str] = []
    seen: set[str] = set()
    while queue:
        name = queue.pop(0)
        if name in seen:
            continue
        seen.add(name)
        needed.append(name)
        sig = signals[name]
        if sig.is_input or sig.is_reg:
            continue
        if name in assign_for:
            j, a = assign_for[name]
            if j not in kept_assigns:
                if isinstance(a.rhs, V.Ident):
                    kept_assigns.add(j)  # pure alias, no node of its own
                else:
                    raise DanglingReference(
                        f"{name} is driven by logic outside the sliced node set")
            sub: list[str] = []
            V._collect_idents(a.rhs, sub)
            queue.extend(sub)

    clock = design.clock if blocks else None
    if clock is not None and clock not in seen:
        seen.add(clock)
        needed.append(clock)

    # assemble the port list: original ports first (original order), then
    # synthesized boundary ports in name order
    port_decls: list[str] = []
    declared: set[str] = set()
    for p in design.ports:
        used = p.name in seen or p.name in kept_ports
        if not used:
            continue
        if p.direction == "output" and (p.name in kept_regs or p.name in kept_ports):
            kw = "output reg " if p.name in kept_regs else "output "
            port_decls.append(f"{kw}{_range_text(p.width)}{p.name}")
            declared.add(p.name)
        elif p.direction == "input":
            port_decls.append(f"input {_range_text(p.width)}{p.name}")
            declared.add(p.name)
        # an output port merely read by the slice becomes an internal wire
    for name in sorted(seen | kept_regs):
        if name in declared:
            continue
        sig = signals[name]
        if sig.is_reg and name in kept_regs:
            port_decls.append(f"output reg {_range_text(sig.width)}{name}")
            declared.add(name)
        elif sig.is_reg or sig.is_input:
            port_decls.append(f"input {_range_text(sig.width)}{name}")
            declared.add(name)
        elif name not in assign_for and not sig.is_output:
            # referenced wire without a driver: boundary input
            port_decls.append(f"input {_range_text(sig.width)}{name}")
            declared.add(name)

    body_lines: list[str] = []
    for name in needed:
        sig = signals[name]
        if name in declared or sig.is_input or (sig.is_reg and name in kept_regs):
            continue
        if name in assign_for and assign_for[name][0] in kept_assigns:
            body_lines.append(f"  wire {_range_text(sig.width)}{name};")
        elif sig.is_reg:
            continue
        else:
            body_lines.append(f"  wire {_range_text(sig.width)}{name};")
    for j in sorted(kept_assigns):
        a = design.assigns[j]
        body_lines.append(f"  assign {a.target} = {expr_text(a.rhs)};")
    for blk, body in blocks:
        body_lines.append(f"  always @(posedge {blk.clock}) begin")
        for s in body:
            body_lines.extend(_stmt_lines(s, "    "))
        body_lines.append("  end")

    name = module_name or design.name
    lines = [f"module {name}(" + ", ".join(port_decls) + ");"]
    lines.extend(body_lines)
    lines.append("endmodule")
    text = "\n".join(lines) + "\n"
    V.parse_verilog(text)  # post-condition: the slice must be valid subset code
    return text


_INFIX = {
    "ADD": "+", "SUB": "-", "MUL": "*", "AND": "&", "OR": "|", "XOR": "^",
    "EQ": "==", "NEQ": "!=", "LT": "<", "GT": ">", "LE": "<=", "GE": ">=",
    "SHL": "<<", "SHR": ">>",
    "AND2": "&", "OR2": "|", "XOR2": "^",
}
_NEG_INFIX = {"NAND2": "&", "NOR2": "|", "XNOR2": "^"}


def _node_expr(graph: CdfGraph, nid: int, ref) -> str:
    node = graph.node(nid)
    ops = graph.operands(nid)
    if node.op in ("CONST",):
        return const_text(node.value or 0, node.width)
    if node.op == "CONST0":
        return "1'd0"
    if node.op == "CONST1":
        return "1'd1"
    if node.op in _INFIX:
        return f"{ref(ops[0])} {_INFIX[node.op]} {ref(ops[1])}"
    if node.op in _NEG_INFIX:
        return f"~({ref(ops[0])} {_NEG_INFIX[node.op]} {ref(ops[1])})"
    if node.op in ("NOT", "INV"):
        return f"~({ref(ops[0])})"
    if node.op == "BUF":
        return ref(ops[0])
    if node.op in ("MUX", "MUX2"):
        return f"{ref(ops[0])} ? {ref(ops[1])} : {ref(ops[2])}"
    if node.op == "CONCAT":
        return "{" + ", ".join(ref(o) for o in ops) + "}"
    if node.op == "SLICE":
        lo = node.lo or 0
        hi = lo + node.width - 1
        if hi == lo:
            return f"{ref(ops[0])}[{hi}]"
        return f"{ref(ops[0])}[{hi}:{lo}]"
    raise DanglingReference(f"cannot render op {node.op}")


def render_cone(graph: CdfGraph, root: int, boundary: set[int],
                members: set[int], module_name: str, clock: str = "clk") -> str:
    """Print a cone graph as a standalone module, one assign per member node.

    Boundary nodes (other than a self-referencing root) become input ports;
    the root becomes an output reg driven in a single always block, or a
    plain output for OUTPUT-rooted cones.
    """
    root_node = graph.node(root)
    is_reg_root = root_node.op in ("REG", "DFF")
    names: dict[int, str] = {}
    for nid in sorted(boundary):
        node = graph.node(nid)
        if node.name is None:
            raise DanglingReference(f"boundary node {nid} has no name")
        names[nid] = node.name
    if root_node.name is None:
        raise DanglingReference(f"root node {root} has no name")
    names[root] = root_node.name

    def ref(nid: int) -> str:
        if nid in names:
            return names[nid]
        return f"t{nid}"

    # members in topological order (operands before consumers)
    order: list[int] = []
    state: dict[int, int] = {}

    def visit(nid: int):
        if nid in boundary or nid == root or state.get(nid) == 2:
            return
        state[nid] = 1
        for src in graph.operands(nid):
            if state.get(src) != 1:
                visit(src)
        state[nid] = 2
        order.append(nid)

    root_driver = None
    root_in = graph.in_edges(root)
    if root_in:
        root_driver = root_in[0].src
        visit(root_driver)
    for m in sorted(members):
        visit(m)

    ports: list[str] = [f"input {clock}"] if is_reg_root else []
    for nid in sorted(boundary):
        if nid == root:
            continue  # the register reads its own current value by name
        node = graph.node(nid)
        ports.append(f"input {_range_text(node.width)}{names[nid]}")
    if is_reg_root:
        ports.append(f"output reg {_range_text(root_node.width)}{names[root]}")
    else:
        ports.append(f"output {_range_text(root_node.width)}{names[root]}")

    lines = [f"module {module_name}(" + ", ".join(ports) + ");"]
    for nid in order:
        node = graph.node(nid)
        lines.append(f"  wire {_range_text(node.width)}t{nid};")
    for nid in order:
        lines.append(f"  assign t{nid} = {_node_expr(graph, nid, ref)};")
    if root_driver is None:
        raise DanglingReference(f"root {root} has no driver")
    if is_reg_root:
        lines.append(f"  always @(posedge {clock}) {names[root]} <= {ref(root_driver)};")
    else:
        lines.append(f"  assign {names[root]} = {ref(root_driver)};")
    lines.append("endmodule")
    text = "\n".join(lines) + "\n"
    V.parse_verilog(text)
    return text
