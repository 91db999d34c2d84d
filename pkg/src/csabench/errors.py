"""Exception taxonomy shared across the benchmark harness.

Every error a caller is expected to handle has a named class so that tests
and manifests can distinguish failure modes without string matching.
"""

from __future__ import annotations


class CsabenchError(Exception):
    """Base class for all harness errors."""


# --- curve fitting ---------------------------------------------------------

class TooFewPoints(CsabenchError):
    """A cell-drug pair has fewer measurements than the fit requires."""


class DegenerateVariance(CsabenchError):
    """All observed values are equal; R² (and rank metrics) are undefined."""


# --- benchmark data --------------------------------------------------------

class MissingColumn(CsabenchError):
    """A required column is absent from a table header."""


class DuplicatePairWithinDataset(CsabenchError):
    """The same (cell_id, drug_id) pair appears twice in one response table."""


class EmptyTable(CsabenchError):
    """A feature or response table contains no data rows."""


class AllRowsRejected(CsabenchError):
    """Every row of a feature table failed validation."""


class SchemaMismatch(CsabenchError):
    """A file's shape or header contradicts its declared schema."""


class TooSmall(CsabenchError):
    """Not enough samples to generate the requested number of splits."""


class IndexOutOfRange(CsabenchError):
    """A split file references a row index outside the response table."""


class EmptyPartition(CsabenchError):
    """A split partition (train/val/test) is empty."""


class UnknownEntity(CsabenchError):
    """Response rows reference cell or drug ids absent from feature tables."""

    def __init__(self, missing_cells=(), missing_drugs=()):
        self.missing_cells = sorted(missing_cells)
        self.missing_drugs = sorted(missing_drugs)
        super().__init__(
            f"unknown entities: cells={self.missing_cells} drugs={self.missing_drugs}"
        )


# --- stage contract --------------------------------------------------------

class UnknownKey(CsabenchError):
    """A parameter key is not declared in the stage schema."""


class TypeMismatch(CsabenchError):
    """A parameter value cannot be coerced to its declared type."""


class MissingRequired(CsabenchError):
    """A required parameter was not supplied by any tier."""


class LaunchFailure(CsabenchError):
    """A stage executable could not be started."""


class StageTimeout(CsabenchError):
    """A stage process exceeded its wall-clock budget."""


class ContractViolation(CsabenchError):
    """A stage exited 0 but its required artifacts are missing or invalid."""


class DuplicateSampleId(CsabenchError):
    """A predictions file repeats a sample_id."""


# --- scheduler / metrics ---------------------------------------------------

class MissingSplits(CsabenchError):
    """A dataset lacks the split files a run plan requires."""


class UnknownModel(CsabenchError):
    """A model spec name or manifest could not be resolved."""


class DatasetOrderMismatch(CsabenchError):
    """Models being summarized disagree on dataset ordering."""


class SingularSystem(CsabenchError):
    """A linear solve failed; cannot occur for ridge with lambda > 0."""
