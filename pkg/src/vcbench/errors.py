"""Exception types shared across the toolkit."""


class VcbenchError(Exception):
    """Base class for all toolkit errors."""


class FormatError(VcbenchError):
    """A file does not conform to the expected on-disk layout."""


class ValidationError(VcbenchError):
    """Input data violates a documented contract."""


class DimError(VcbenchError):
    """Descriptor dimensionalities are inconsistent."""
