"""Shared exception types."""


class BudgetError(RuntimeError):
    """An enumeration or construction would exceed its configured budget."""


class StructureMismatch(ValueError):
    """Two lattice polynomials do not share a clause structure."""


class OrderTypeMissing(LookupError):
    """A selector table has no entry for the realized order type."""
