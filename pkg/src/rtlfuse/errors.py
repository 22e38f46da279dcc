"""Exception types shared across the pipeline stages."""


class RtlFuseError(Exception):
    """Base class for all errors raised by this package."""


# --- HDL frontend ---------------------------------------------------------

class VerilogSyntaxError(RtlFuseError):
    """Source text does not parse; carries byte position and what was expected."""

    def __init__(self, position: int, expected: str, found: str = ""):
        self.position = position
        self.expected = expected
        self.found = found
        msg = f"syntax error at byte {position}: expected {expected}"
        if found:
            msg += f", found {found!r}"
        super().__init__(msg)


class UnsupportedConstruct(RtlFuseError):
    """Out-of-subset Verilog feature (generate, functions, memories, multiple clocks, ...)."""

    def __init__(self, construct: str, position: int = -1):
        self.construct = construct
        self.position = position
        super().__init__(f"unsupported construct {construct!r} at byte {position}")


class UndeclaredIdentifier(RtlFuseError):
    def __init__(self, name: str, position: int = -1):
        self.name = name
        self.position = position
        super().__init__(f"undeclared identifier {name!r}")


class InvalidDesign(RtlFuseError):
    """RtlDesign invariant violation (e.g. a reg driven by two always blocks)."""


class CombinationalLoop(RtlFuseError):
    def __init__(self, cycle: list):
        self.cycle = list(cycle)
        super().__init__(f"combinational loop through {self.cycle}")


class WidthMismatch(RtlFuseError):
    def __init__(self, where, detail: str = ""):
        self.where = where
        super().__init__(f"width mismatch at {where}: {detail}")


class DanglingReference(RtlFuseError):
    """A requested slice node cannot be attributed to any source statement."""


# --- sub-circuit extraction ------------------------------------------------

class NotARegister(RtlFuseError):
    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"node {node_id} is not a register")


class RegisterNotFound(RtlFuseError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no netlist register matches {name!r}")


# --- simulation / equivalence ---------------------------------------------

class BudgetExceeded(RtlFuseError):
    def __init__(self, bits: int, budget: int):
        self.bits = bits
        self.budget = budget
        super().__init__(f"boundary has {bits} bits, exhaustive budget is {budget}")


class MissingAssignment(RtlFuseError):
    def __init__(self, node_id):
        self.node_id = node_id
        super().__init__(f"no value assigned for boundary node {node_id}")


class BoundaryMismatch(RtlFuseError):
    def __init__(self, a, b):
        super().__init__(f"boundary signatures differ: {a} vs {b}")


# --- corpus / summarizer ----------------------------------------------------

class IoError(RtlFuseError):
    pass


class HttpError(RtlFuseError):
    def __init__(self, status: int, detail: str = ""):
        self.status = status
        super().__init__(f"summarizer endpoint returned {status} {detail}".rstrip())


class SummarizerTimeout(RtlFuseError):
    pass


class MalformedResponse(RtlFuseError):
    pass


# --- training ---------------------------------------------------------------

class ShapeMismatch(RtlFuseError):
    pass


class EmptyNegatives(RtlFuseError):
    """Contrastive batch where some anchor has no valid negative."""


class Diverged(RtlFuseError):
    def __init__(self, step: int, report):
        self.step = step
        self.report = report
        super().__init__(f"non-finite loss at step {step}: {report}")


# --- retrieval / quality -----------------------------------------------------

class DuplicateId(RtlFuseError):
    def __init__(self, entry_id: str):
        self.entry_id = entry_id
        super().__init__(f"store already contains id {entry_id!r}")


class EmptyStore(RtlFuseError):
    pass


class MetricMissing(RtlFuseError):
    def __init__(self, metric: str, entry_id: str = ""):
        self.metric = metric
        super().__init__(f"entry {entry_id!r} has no metric {metric!r}")


class EmptyDesign(RtlFuseError):
    pass


class ZeroLabel(RtlFuseError):
    def __init__(self, index: int):
        self.index = index
        super().__init__(f"label at index {index} is zero; MAPE undefined")


class ZeroVariance(RtlFuseError):
    pass


class DegenerateLabels(RtlFuseError):
    pass
