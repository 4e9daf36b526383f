"""Exception hierarchy shared across the toolkit.

The CLI maps these onto its exit codes: DataError -> 1, UsageError -> 2,
plain OSError -> 3.
"""

from __future__ import annotations


class SegEnsembleError(Exception):
    """Base class for all toolkit-specific errors."""


class DataError(SegEnsembleError):
    """Input data violates a corpus or format contract."""


class MaskFormatError(DataError):
    """A mask file is malformed or holds out-of-range class indices."""


class ManifestError(DataError):
    """A dataset manifest is malformed or internally inconsistent."""


class UsageError(SegEnsembleError):
    """The invocation or an input file is structurally unusable."""
