"""Parser for a small synthesizable Verilog subset.

Supported: one module per file, ANSI or non-ANSI port declarations with
[msb:0] ranges, wire/reg declarations, continuous assigns, single-clock
``always @(posedge clk)`` blocks with nonblocking assignments guarded by
if/else and case, the usual unary/binary/ternary operators, concatenation,
constant bit/part selects, and sized constants.

Everything else raises UnsupportedConstruct with a byte position.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

from .errors import (
    InvalidDesign,
    UndeclaredIdentifier,
    UnsupportedConstruct,
    VerilogSyntaxError,
)

Span = tuple[int, int]  # (byte offset, length)

KEYWORDS = {
    "module", "endmodule", "input", "output", "wire", "reg", "assign",
    "always", "posedge", "begin", "end", "if", "else", "case", "endcase",
    "default",
}

# Recognized so they fail loudly instead of as syntax noise.
UNSUPPORTED_KEYWORDS = {
    "initial", "generate", "endgenerate", "function", "endfunction",
    "task", "endtask", "for", "while", "repeat", "forever", "negedge",
    "inout", "parameter", "localparam", "integer", "real", "genvar",
    "casex", "casez", "signed", "fork", "join", "wait", "specify",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<lcomment>//[^\n]*)
  | (?P<bcomment>/\*.*?\*/)
  | (?P<number>\d+'[bBdDhHoO][0-9a-fA-FxXzZ_]+|\d+)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_$]*)
  | (?P<op><=|>=|==|!=|&&|\|\||<<|>>|[-+*/%&|^~!<>?:;,.=(){}\[\]@#])
    """,
    re.VERBOSE | re.DOTALL,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'ident', 'number', 'op', 'kw', 'eof'
    text: str
    pos: int


def tokenize(source: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    n = len(source)
    while pos < n:
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            raise VerilogSyntaxError(pos, "a token", source[pos])
        kind = m.lastgroup
        text = m.group()
        if kind in ("ws", "lcomment", "bcomment"):
            pos = m.end()
            continue
        if kind == "ident":
            if text in UNSUPPORTED_KEYWORDS:
                raise UnsupportedConstruct(text, pos)
            if text in KEYWORDS:
                kind = "kw"
        tokens.append(Token(kind, text, pos))
        pos = m.end()
    tokens.append(Token("eof", "", n))
    return tokens


# --- AST -------------------------------------------------------------------

@dataclass(frozen=True)
class Expr:
    span: Span


@dataclass(frozen=True)
class Ident(Expr):
    name: str


@dataclass(frozen=True)
class Const(Expr):
    value: int
    width: int  # bare decimals default to 32, like Verilog


@dataclass(frozen=True)
class Unary(Expr):
    op: str  # '~', '!', '-'
    operand: Expr


@dataclass(frozen=True)
class Binary(Expr):
    op: str
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Ternary(Expr):
    cond: Expr
    then: Expr
    other: Expr


@dataclass(frozen=True)
class Concat(Expr):
    parts: tuple[Expr, ...]


@dataclass(frozen=True)
class Select(Expr):
    base: Ident
    hi: int
    lo: int


@dataclass(frozen=True)
class Stmt:
    span: Span


@dataclass(frozen=True)
class NbAssign(Stmt):
    target: str
    rhs: Expr


@dataclass(frozen=True)
class IfStmt(Stmt):
    cond: Expr
    then: tuple[Stmt, ...]
    other: tuple[Stmt, ...]  # empty tuple when no else branch


@dataclass(frozen=True)
class CaseStmt(Stmt):
    subject: Expr
    items: tuple[tuple[tuple[Const, ...], tuple[Stmt, ...]], ...]
    default: tuple[Stmt, ...] | None


@dataclass(frozen=True)
class Port:
    name: str
    direction: str  # 'input' | 'output'
    width: int
    is_reg: bool
    span: Span


@dataclass(frozen=True)
class Net:
    name: str
    kind: str  # 'wire' | 'reg'
    width: int
    span: Span


@dataclass(frozen=True)
class Assign:
    target: str
    rhs: Expr
    span: Span


@dataclass(frozen=True)
class AlwaysBlock:
    clock: str
    body: tuple[Stmt, ...]
    span: Span


@dataclass
class RtlDesign:
    """Elaboration-ready module: declarations plus behavioral statements."""

    name: str
    ports: list[Port]
    nets: list[Net]
    assigns: list[Assign]
    always_blocks: list[AlwaysBlock]
    source: str = ""
    _signals: dict = field(default_factory=dict, repr=False)

    def signal(self, name: str):
        return self._signals.get(name)

    @property
    def clock(self) -> str | None:
        return self.always_blocks[0].clock if self.always_blocks else None


@dataclass(frozen=True)
class SignalInfo:
    name: str
    width: int
    is_input: bool
    is_output: bool
    is_reg: bool
    span: Span


def parse_const(text: str, pos: int) -> tuple[int, int]:
    """Return (value, width) for a Verilog literal token."""
    if "'" not in text:
        return int(text), 32
    size_s, rest = text.split("'")
    base_c = rest[0].lower()
    digits = rest[1:].replace("_", "")
    if re.search(r"[xXzZ]", digits):
        raise UnsupportedConstruct("x/z constant digits", pos)
    base = {"b": 2, "d": 10, "h": 16, "o": 8}[base_c]
    width = int(size_s)
    if width < 1:
        raise VerilogSyntaxError(pos, "a positive constant width", text)
    value = int(digits, base) & ((1 << width) - 1)
    return value, width


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = tokenize(source)
        self.i = 0

    # token helpers ---------------------------------------------------------

    def peek(self, ahead: int = 0) -> Token:
        return self.tokens[min(self.i + ahead, len(self.tokens) - 1)]

    def next(self) -> Token:
        tok = self.tokens[self.i]
        if self.i < len(self.tokens) - 1:
            self.i += 1
        return tok

    def expect(self, text: str, kind: str | None = None) -> Token:
        tok = self.next()
        if tok.text != text or (kind and tok.kind != kind):
            raise VerilogSyntaxError(tok.pos, repr(text), tok.text or "<eof>")
        return tok

    def expect_ident(self) -> Token:
        tok = self.next()
        if tok.kind != "ident":
            raise VerilogSyntaxError(tok.pos, "an identifier", tok.text or "<eof>")
        return tok

    def at(self, text: str) -> bool:
        return self.peek().text == text

    def _span_from(self, start_pos: int) -> Span:
        end = self.tokens[self.i - 1] if self.i > 0 else self.tokens[0]
        return (start_pos, end.pos + len(end.text) - start_pos)

    # grammar ---------------------------------------------------------------

    def parse_module(self) -> RtlDesign:
        self.expect("module")
        name = self.expect_ident().text
        ports: list[Port] = []
        nets: list[Net] = []
        assigns: list[Assign] = []
        always_blocks: list[AlwaysBlock] = []
        bare_port_names: list[tuple[str, int]] = []

        if self.at("("):
            self.next()
            if not self.at(")"):
                self._parse_port_list(ports, nets, bare_port_names)
            self.expect(")")
        self.expect(";")

        while not self.at("endmodule"):
            tok = self.peek()
            if tok.kind == "eof":
                raise VerilogSyntaxError(tok.pos, "'endmodule'", "<eof>")
            if tok.text in ("input", "output"):
                self._parse_port_decl(ports, nets, bare_port_names)
            elif tok.text in ("wire", "reg"):
                self._parse_net_decl(nets)
            elif tok.text == "assign":
                assigns.append(self._parse_assign())
            elif tok.text == "always":
                always_blocks.append(self._parse_always())
            elif tok.kind == "ident" and self.peek(1).kind == "ident":
                # looks like a module instantiation
                raise UnsupportedConstruct("module instantiation", tok.pos)
            else:
                raise VerilogSyntaxError(tok.pos, "a declaration or statement", tok.text)
        self.expect("endmodule")
        tok = self.peek()
        if tok.kind != "eof":
            if tok.text == "module":
                raise UnsupportedConstruct("multiple modules", tok.pos)
            raise VerilogSyntaxError(tok.pos, "<eof>", tok.text)

        # non-ANSI bare port names must have been declared in the body
        declared = {p.name for p in ports}
        for pname, ppos in bare_port_names:
            if pname not in declared:
                raise UndeclaredIdentifier(pname, ppos)
        return _finish_design(name, ports, nets, assigns, always_blocks, self.source)

    def _parse_range(self) -> int:
        """Parse an optional [msb:lsb]; returns the width."""
        if not self.at("["):
            return 1
        self.next()
        msb_tok = self.next()
        if msb_tok.kind != "number":
            raise VerilogSyntaxError(msb_tok.pos, "a constant msb", msb_tok.text)
        self.expect(":")
        lsb_tok = self.next()
        if lsb_tok.kind != "number":
            raise VerilogSyntaxError(lsb_tok.pos, "a constant lsb", lsb_tok.text)
        self.expect("]")
        msb, lsb = int(msb_tok.text), int(lsb_tok.text)
        if lsb != 0:
            raise UnsupportedConstruct("nonzero range lsb", lsb_tok.pos)
        if msb < lsb:
            raise VerilogSyntaxError(msb_tok.pos, "msb >= lsb", f"[{msb}:{lsb}]")
        return msb - lsb + 1

    def _parse_port_list(self, ports, nets, bare_names):
        direction = None
        is_reg = False
        width = 1
        while True:
            start = self.peek().pos
            if self.peek().text in ("input", "output"):
                direction = self.next().text
                is_reg = False
                if self.at("wire"):
                    self.next()
                elif self.at("reg"):
                    self.next()
                    is_reg = True
                width = self._parse_range()
            name_tok = self.expect_ident()
            if direction is None:
                bare_names.append((name_tok.text, name_tok.pos))
            else:
                span = self._span_from(start)
                ports.append(Port(name_tok.text, direction, width, is_reg, span))
                if is_reg:
                    nets.append(Net(name_tok.text, "reg", width, span))
            if self.at(","):
                self.next()
                continue
            break

    def _parse_port_decl(self, ports, nets, bare_names):
        start = self.peek().pos
        direction = self.next().text
        is_reg = False
        if self.at("wire"):
            self.next()
        elif self.at("reg"):
            self.next()
            is_reg = True
        width = self._parse_range()
        while True:
            name_tok = self.expect_ident()
            span = self._span_from(start)
            ports.append(Port(name_tok.text, direction, width, is_reg, span))
            if is_reg:
                nets.append(Net(name_tok.text, "reg", width, span))
            if self.at(","):
                self.next()
                continue
            break
        self.expect(";")

    def _parse_net_decl(self, nets):
        start = self.peek().pos
        kind = self.next().text
        width = self._parse_range()
        while True:
            name_tok = self.expect_ident()
            if self.at("["):
                raise UnsupportedConstruct("memory array", self.peek().pos)
            nets.append(Net(name_tok.text, kind, width, self._span_from(start)))
            if self.at(","):
                self.next()
                continue
            break
        self.expect(";")

    def _parse_assign(self) -> Assign:
        start = self.peek().pos
        self.expect("assign")
        target = self.expect_ident().text
        if self.at("["):
            raise UnsupportedConstruct("assignment to a bit/part select", self.peek().pos)
        self.expect("=")
        rhs = self._parse_expr()
        self.expect(";")
        return Assign(target, rhs, self._span_from(start))

    def _parse_always(self) -> AlwaysBlock:
        start = self.peek().pos
        self.expect("always")
        self.expect("@")
        self.expect("(")
        self.expect("posedge")
        clock = self.expect_ident().text
        if self.at("or") or self.at(","):
            raise UnsupportedConstruct("multiple events in sensitivity list", self.peek().pos)
        self.expect(")")
        body = self._parse_stmt_block()
        return AlwaysBlock(clock, body, self._span_from(start))

    def _parse_stmt_block(self) -> tuple[Stmt, ...]:
        if self.at("begin"):
            self.next()
            stmts = []
            while not self.at("end"):
                if self.peek().kind == "eof":
                    raise VerilogSyntaxError(self.peek().pos, "'end'", "<eof>")
                stmts.append(self._parse_stmt())
            self.expect("end")
            return tuple(stmts)
        return (self._parse_stmt(),)

    def _parse_stmt(self) -> Stmt:
        tok = self.peek()
        if tok.text == "if":
            return self._parse_if()
        if tok.text == "case":
            return self._parse_case()
        if tok.kind == "ident":
            start = tok.pos
            target = self.next().text
            if self.at("="):
                raise UnsupportedConstruct("blocking assignment in always block", self.peek().pos)
            self.expect("<=")
            rhs = self._parse_expr()
            self.expect(";")
            return NbAssign(self._span_from(start), target, rhs)
        raise VerilogSyntaxError(tok.pos, "a statement", tok.text or "<eof>")

    def _parse_if(self) -> IfStmt:
        start = self.peek().pos
        self.expect("if")
        self.expect("(")
        cond = self._parse_expr()
        self.expect(")")
        then = self._parse_stmt_block()
        other: tuple[Stmt, ...] = ()
        if self.at("else"):
            self.next()
            other = self._parse_stmt_block()
        return IfStmt(self._span_from(start), cond, then, other)

    def _parse_case(self) -> CaseStmt:
        start = self.peek().pos
        self.expect("case")
        self.expect("(")
        subject = self._parse_expr()
        self.expect(")")
        items = []
        default = None
        while not self.at("endcase"):
            if self.peek().kind == "eof":
                raise VerilogSyntaxError(self.peek().pos, "'endcase'", "<eof>")
            if self.at("default"):
                self.next()
                if self.at(":"):
                    self.next()
                default = self._parse_stmt_block()
                continue
            values = []
            while True:
                vtok = self.next()
                if vtok.kind != "number":
                    raise VerilogSyntaxError(vtok.pos, "a constant case label", vtok.text)
                value, width = parse_const(vtok.text, vtok.pos)
                values.append(Const((vtok.pos, len(vtok.text)), value, width))
                if self.at(","):
                    self.next()
                    continue
                break
            self.expect(":")
            body = self._parse_stmt_block()
            items.append((tuple(values), body))
        self.expect("endcase")
        return CaseStmt(self._span_from(start), subject, tuple(items), default)

    # expressions, precedence climbing --------------------------------------

    _BINARY_LEVELS = [
        ["||"],
        ["&&"],
        ["|"],
        ["^"],
        ["&"],
        ["==", "!="],
        ["<", "<=", ">", ">="],
        ["<<", ">>"],
        ["+", "-"],
        ["*"],
    ]

    def _parse_expr(self) -> Expr:
        return self._parse_ternary()

    def _parse_ternary(self) -> Expr:
        start = self.peek().pos
        cond = self._parse_binary(0)
        if self.at("?"):
            self.next()
            then = self._parse_ternary()
            self.expect(":")
            other = self._parse_ternary()
            return Ternary(self._span_from(start), cond, then, other)
        return cond

    def _parse_binary(self, level: int) -> Expr:
        if level >= len(self._BINARY_LEVELS):
            return self._parse_unary()
        start = self.peek().pos
        lhs = self._parse_binary(level + 1)
        ops = self._BINARY_LEVELS[level]
        while self.peek().text in ops:
            op = self.next().text
            rhs = self._parse_binary(level + 1)
            lhs = Binary(self._span_from(start), op, lhs, rhs)
        return lhs

    def _parse_unary(self) -> Expr:
        tok = self.peek()
        if tok.text in ("~", "!", "-"):
            self.next()
            operand = self._parse_unary()
            return Unary(self._span_from(tok.pos), tok.text, operand)
        if tok.text in ("&", "|", "^"):
            raise UnsupportedConstruct(f"reduction operator {tok.text}", tok.pos)
        return self._parse_primary()

    def _parse_primary(self) -> Expr:
        tok = self.next()
        if tok.kind == "number":
            value, width = parse_const(tok.text, tok.pos)
            return Const((tok.pos, len(tok.text)), value, width)
        if tok.kind == "ident":
            ident = Ident((tok.pos, len(tok.text)), tok.text)
            if self.at("["):
                self.next()
                hi_tok = self.next()
                if hi_tok.kind != "number":
                    raise UnsupportedConstruct("variable bit-select", hi_tok.pos)
                hi = int(hi_tok.text)
                lo = hi
                if self.at(":"):
                    self.next()
                    lo_tok = self.next()
                    if lo_tok.kind != "number":
                        raise VerilogSyntaxError(lo_tok.pos, "a constant lsb", lo_tok.text)
                    lo = int(lo_tok.text)
                self.expect("]")
                if hi < lo:
                    raise VerilogSyntaxError(tok.pos, "msb >= lsb in select", f"[{hi}:{lo}]")
                return Select(self._span_from(tok.pos), ident, hi, lo)
            return ident
        if tok.text == "(":
            expr = self._parse_expr()
            self.expect(")")
            return expr
        if tok.text == "{":
            parts = [self._parse_expr()]
            if self.at("{"):
                raise UnsupportedConstruct("replication", self.peek().pos)
            while self.at(","):
                self.next()
                parts.append(self._parse_expr())
            self.expect("}")
            return Concat(self._span_from(tok.pos), tuple(parts))
        raise VerilogSyntaxError(tok.pos, "an expression", tok.text or "<eof>")


def _collect_idents(expr: Expr, out: list[str]):
    if isinstance(expr, Ident):
        out.append(expr.name)
    elif isinstance(expr, Select):
        out.append(expr.base.name)
    elif isinstance(expr, Unary):
        _collect_idents(expr.operand, out)
    elif isinstance(expr, Binary):
        _collect_idents(expr.lhs, out)
        _collect_idents(expr.rhs, out)
    elif isinstance(expr, Ternary):
        _collect_idents(expr.cond, out)
        _collect_idents(expr.then, out)
        _collect_idents(expr.other, out)
    elif isinstance(expr, Concat):
        for p in expr.parts:
            _collect_idents(p, out)


def _stmt_targets_and_refs(stmts, targets: list[str], refs: list[str]):
    for s in stmts:
        if isinstance(s, NbAssign):
            targets.append(s.target)
            _collect_idents(s.rhs, refs)
        elif isinstance(s, IfStmt):
            _collect_idents(s.cond, refs)
            _stmt_targets_and_refs(s.then, targets, refs)
            _stmt_targets_and_refs(s.other, targets, refs)
        elif isinstance(s, CaseStmt):
            _collect_idents(s.subject, refs)
            for _, body in s.items:
                _stmt_targets_and_refs(body, targets, refs)
            if s.default is not None:
                _stmt_targets_and_refs(s.default, targets, refs)


def _finish_design(name, ports, nets, assigns, always_blocks, source) -> RtlDesign:
    design = RtlDesign(name, ports, nets, assigns, always_blocks, source)
    validate_design(design)
    return design


def validate_design(design: RtlDesign) -> None:
    """Check RtlDesign invariants; populates the design's signal table."""
    signals: dict[str, SignalInfo] = {}
    for p in design.ports:
        if p.width < 1:
            raise InvalidDesign(f"port {p.name} has width {p.width}")
        if p.name in signals:
            raise InvalidDesign(f"duplicate declaration of {p.name}")
        signals[p.name] = SignalInfo(
            p.name, p.width, p.direction == "input", p.direction == "output",
            p.is_reg, p.span,
        )
    for n in design.nets:
        if n.name in signals:
            prev = signals[n.name]
            if prev.is_reg and n.kind == "reg" and prev.width == n.width:
                continue  # output reg declared in the port list
            raise InvalidDesign(f"duplicate declaration of {n.name}")
        if n.width < 1:
            raise InvalidDesign(f"net {n.name} has width {n.width}")
        signals[n.name] = SignalInfo(n.name, n.width, False, False, n.kind == "reg", n.span)

    def require(name: str):
        if name not in signals:
            raise UndeclaredIdentifier(name)

    clocks = {blk.clock for blk in design.always_blocks}
    if len(clocks) > 1:
        raise UnsupportedConstruct("multiple clocks", design.always_blocks[0].span[0])
    clock = next(iter(clocks)) if clocks else None
    if clock is not None:
        require(clock)
        if not signals[clock].is_input:
            raise InvalidDesign(f"clock {clock} must be an input port")

    assigned_wires: dict[str, int] = {}
    for a in design.assigns:
        require(a.target)
        info = signals[a.target]
        if info.is_reg:
            raise InvalidDesign(f"continuous assign drives reg {a.target}")
        if info.is_input:
            raise InvalidDesign(f"continuous assign drives input {a.target}")
        if a.target in assigned_wires:
            raise InvalidDesign(f"{a.target} has multiple continuous drivers")
        assigned_wires[a.target] = 1
        refs: list[str] = []
        _collect_idents(a.rhs, refs)
        for r in refs:
            require(r)

    reg_driver_block: dict[str, int] = {}
    for bi, blk in enumerate(design.always_blocks):
        targets: list[str] = []
        refs: list[str] = []
        _stmt_targets_and_refs(blk.body, targets, refs)
        for t in targets:
            require(t)
            if not signals[t].is_reg:
                raise InvalidDesign(f"nonblocking assignment to non-reg {t}")
            if t in reg_driver_block and reg_driver_block[t] != bi:
                raise InvalidDesign(f"reg {t} driven by more than one always block")
            reg_driver_block[t] = bi
        for r in refs:
            require(r)

    for name, info in signals.items():
        if info.is_reg and name not in reg_driver_block:
            raise InvalidDesign(f"reg {name} is never assigned in an always block")

    design._signals = signals


def parse_verilog(source: str) -> RtlDesign:
    """Parse and validate one module of the supported subset."""
    parser = _Parser(source)
    tok = parser.peek()
    if tok.text != "module":
        raise VerilogSyntaxError(tok.pos, "'module'", tok.text or "<eof>")
    return parser.parse_module()
