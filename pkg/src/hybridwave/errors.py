"""Exception types shared across the package."""


class HybridWaveError(Exception):
    """Base class for all errors raised by hybridwave."""


class InvalidGeometryError(HybridWaveError):
    """Degenerate or inverted geometry (zero-area element, bad bbox, ...)."""


class MeshFormatError(HybridWaveError):
    """Malformed mesh file; message carries the offending line number."""


class MeshConformityError(HybridWaveError):
    """Topological or conformity defect (hanging node, overlap, bad edge use)."""


class LumpingError(HybridWaveError):
    """Mass lumping produced a non-positive diagonal entry."""


class BlowUpError(HybridWaveError):
    """Time integration produced non-finite values; message names the step."""


class ConfigError(HybridWaveError):
    """Invalid run configuration (unknown key, missing section, bad name)."""
