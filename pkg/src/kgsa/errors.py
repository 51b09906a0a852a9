"""Exception taxonomy shared across the package.

The CLI maps these onto exit codes: degenerate outputs exit 2, violated
estimator assumptions exit 3, usage problems exit 1.
"""


class KgsaError(Exception):
    """Base class for all package errors."""


class VariantMismatchError(KgsaError, TypeError):
    """A kernel was applied to an output variant it does not accept."""

    def __init__(self, kernel_kind: str, value_kind: str):
        super().__init__(
            f"kernel kind {kernel_kind!r} cannot evaluate output variant {value_kind!r}"
        )
        self.kernel_kind = kernel_kind
        self.value_kind = value_kind


class DomainError(KgsaError, ValueError):
    """An input point lies outside the kernel's or model's domain."""


class DegenerateKernelError(KgsaError, ValueError):
    """Kernel construction collapsed (zero normalizer, empty sample, ...)."""


class DegenerateOutputError(KgsaError, ValueError):
    """Output variance / total MMD is not positive; indices are undefined."""


class AssumptionViolatedError(KgsaError, ValueError):
    """A statistical precondition failed (zero-mean input kernels, independence)."""


class CapabilityError(KgsaError, ValueError):
    """The requested operation is not supported for this sampler/model combination."""


class IncompleteTableError(KgsaError, KeyError):
    """A closed-value table is missing a subset required by the operation."""

    def __init__(self, subset_members: tuple[int, ...]):
        shown = set(l + 1 for l in subset_members)  # 1-based, as printed elsewhere
        super().__init__(f"value table is missing subset {shown or '{}'}")
        self.subset_members = subset_members


class InfeasibleAlignmentError(KgsaError, ValueError):
    """The alignment band is too narrow for the given sequence lengths."""


class NotPsdError(KgsaError, ValueError):
    """A correlation matrix is not positive semi-definite."""


class InstabilityError(KgsaError, ValueError):
    """Numerical integration produced an invalid state (e.g. negative compartment)."""


class ParseError(KgsaError, ValueError):
    """CSV ingestion failed; carries the 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
