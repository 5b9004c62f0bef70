"""Exception types shared across the library.

Plain argument errors use the built-in ValueError; the classes here mark
conditions that callers may want to catch and handle separately (for
example, the simulation harness re-draws a replicate on a degenerate
sample but aborts the run on excessive bootstrap degeneracy).
"""


class UStatError(Exception):
    """Base class for library-specific errors."""


class DegenerateSampleError(UStatError):
    """A variance estimate came out exactly zero, so no Studentized
    statistic exists for this sample."""


class ExcessiveDegeneracyError(UStatError):
    """More than the tolerated share of bootstrap replicates were
    degenerate and had to be discarded."""


class UnsupportedKernelError(UStatError):
    """The kernel is missing a field required by the requested operation
    (projections, regularity constants, ...)."""


class NoValidConstantError(UStatError):
    """Cross-validation could not score any candidate truncation
    constant (all produced degenerate nulls)."""


class WorkBudgetError(UStatError):
    """Brute-force enumeration would exceed the configured evaluation
    budget."""
