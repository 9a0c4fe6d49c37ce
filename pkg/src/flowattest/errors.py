"""Exception hierarchy shared across the package."""


class FlowAttestError(Exception):
    """Base class for all errors raised by this package."""


class SchemaError(FlowAttestError):
    """A document violates its schema or an internal consistency rule."""


class RecursionDetectedError(SchemaError):
    """The function-level call graph contains a cycle.

    The offending cycle is available as ``cycle`` (tuple of function names
    in call order).
    """

    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__("recursion detected: " + ",".join(self.cycle))


class UnknownBlockError(FlowAttestError):
    """A referenced block id does not exist in the graph."""


class UnknownMnemonicError(FlowAttestError):
    """An instruction mnemonic has no entry in the event table."""


class BudgetError(FlowAttestError):
    """An enumeration exceeded its configured budget.

    Carries ``budget`` and ``reached`` so callers can report both.
    """

    def __init__(self, message, budget, reached):
        self.budget = budget
        self.reached = reached
        super().__init__(message)


class DigestMismatchError(FlowAttestError):
    """Two artifacts that must refer to the same graph do not."""


class WalkError(FlowAttestError):
    """A random walk could not satisfy its constraints within budget."""
