"""Exception taxonomy shared by all pseudocal modules."""

from __future__ import annotations


class PseudocalError(Exception):
    """Base class for all library errors."""


class InvalidArityError(PseudocalError):
    """Predicate arity outside the supported range."""


class InvalidDensityError(PseudocalError):
    """Fourier table does not reconstruct a nonnegative normalized density."""


class InvalidInputError(PseudocalError):
    """Dimension mismatch or malformed argument."""


class ResourceLimitError(PseudocalError):
    """An enumeration or search would exceed its configured guard."""


class SingularBasisError(PseudocalError):
    """Biased instance basis is undefined at p in {0, 1}."""


class InvalidRestrictionError(PseudocalError):
    """Restricted instance data inconsistent with the named scope block."""


class DegreeUnderflowError(PseudocalError):
    """Requested degree cap went negative after block adjustment."""


class OutOfRegimeError(PseudocalError):
    """Parameters violate the validity range of an analytic bound."""


class InvalidIndexError(PseudocalError):
    """Basis index touches coordinates excluded by the operation."""


class UndefinedConditionalError(PseudocalError):
    """Conditioning event has zero probability mass."""


class InvalidFactorizationError(PseudocalError):
    """Factor tables violate nonnegativity or shape requirements."""


class InternalCheckError(PseudocalError):
    """A self-certification step failed; indicates an algorithm bug."""
