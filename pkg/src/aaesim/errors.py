"""Exception types raised by the estimation pipelines."""

from __future__ import annotations


class ShapeError(ValueError):
    """Operand dimensions or register layouts do not line up."""


class ResourceLimitError(RuntimeError):
    """A requested simulation exceeds a configured size cap."""


class ContractError(RuntimeError):
    """An input violates a structural precondition of an algorithm."""


class PriorViolationError(ValueError):
    """The measured data contradicts the supplied prior upper bound.

    Attributes:
        measured: the offending measured quantity (boosted probability or
            inverted estimate).
        group: group index inside a projector sum, if known.
        node: quadrature node index, if known.
    """

    def __init__(self, message: str, *, measured: float | None = None,
                 group: int | None = None, node: int | None = None) -> None:
        self.measured = measured
        self.group = group
        self.node = node
        where = []
        if node is not None:
            where.append(f"node {node}")
        if group is not None:
            where.append(f"group {group}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)

    def located(self, *, group: int | None = None, node: int | None = None) -> PriorViolationError:
        base = str(self.args[0]).split(" (")[0]
        return PriorViolationError(
            base,
            measured=self.measured,
            group=self.group if group is None else group,
            node=self.node if node is None else node,
        )


class EstimationRegimeError(ValueError):
    """The requested tolerance lies outside the regime where AAE is valid."""


class GapError(ValueError):
    """The spectral gap closed (or nearly closed) somewhere along a path."""

    def __init__(self, message: str, x: float | None = None) -> None:
        self.x = x
        super().__init__(message)


class DegeneracyError(GapError):
    """The ground space is degenerate."""


class OverlapError(ValueError):
    """The reference state has no overlap with the target ground state."""
