"""Exception hierarchy for the reduced Schwarz solver.

Configuration problems derive from `ConfigError` (CLI exit code 2) and
numerical failures from `NumericalError` (CLI exit code 3).
"""

import numpy as np


class SolverError(Exception):
    """Base class for all solver errors."""


class ConfigError(SolverError, ValueError):
    """Invalid geometry, media, boundary data or experiment settings."""


class NonConformingGrid(ConfigError):
    """Domain lengths are not integer multiples of the grid spacing."""


class NonConformingLayout(ConfigError):
    """Patch widths or strides are misaligned or do not cover the domain."""


class OutOfDomain(ConfigError):
    """A coordinate lies outside the domain or raster extent."""


class ParseError(ConfigError):
    """A raster, boundary or archive file is malformed."""


class NonPositiveMedia(ConfigError):
    """The media coefficient is not strictly positive."""


class InvalidPatch(ConfigError):
    """A patch index is outside the layout."""


class FingerprintMismatch(ConfigError):
    """Compressed maps were built for a different grid, media or layout."""


class NumericalError(SolverError, ArithmeticError):
    """Base class for numerical failures."""


class FactorizationFailure(NumericalError):
    """Cholesky factorization of a stiffness block failed."""


class NoConvergence(NumericalError):
    """An iterative kernel exhausted its sweep budget."""


class MissingOwner(NumericalError):
    """An interior patch edge has no owning neighbor in the layout."""


class ZeroReference(NumericalError):
    """Relative error requested against a zero reference field."""


class RankDeficient(NumericalError):
    """Columns were dropped during orthonormalization.

    Attributes:
        q: The orthonormal basis built from the kept columns.
        dropped: Indices of the dropped input columns.
    """

    def __init__(self, q: np.ndarray, dropped: list[int]):
        self.q = q
        self.dropped = dropped
        super().__init__(
            f"{len(dropped)} column(s) dropped as numerically dependent: "
            f"{dropped}"
        )


class AdjointInconsistent(NumericalError):
    """Forward and adjoint callbacks are not transposes of each other.

    Attributes:
        defect: Largest relative defect observed on the probe pairs.
        patch_id: Patch whose operator failed, when known.
    """

    def __init__(self, defect: float, patch_id: int | None = None):
        self.defect = defect
        self.patch_id = patch_id
        where = "" if patch_id is None else f" on patch {patch_id}"
        super().__init__(
            f"adjoint check failed{where}: relative defect {defect:.3e}"
        )
