"""Exception hierarchy shared across the pipeline."""


class OsceBenchError(Exception):
    """Base class for all domain errors."""


class UsageError(OsceBenchError):
    """Caller violated an operation precondition."""


class ParseError(OsceBenchError):
    """A file or payload is malformed."""


class ValidationError(OsceBenchError):
    """A value violates a documented invariant."""


class IoError(OsceBenchError):
    """Filesystem read/write failure."""


class ConsistencyError(OsceBenchError):
    """Cross-references between corpus files do not line up."""


# --- criterion expressions ---------------------------------------------------

class ExprSyntaxError(ParseError):
    """Expression string does not match the canonical grammar."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte offset {offset})")
        self.offset = offset


class ArityError(ValidationError):
    """Operator has too few children, or an out-of-range N-of-K count."""


class MissingAssignment(OsceBenchError):
    def __init__(self, atom_id: str):
        super().__init__(f"no assignment for atom {atom_id!r}")
        self.atom_id = atom_id


class DecompositionError(OsceBenchError):
    """Model output never yielded a valid decomposition."""


# --- gateway -----------------------------------------------------------------

class TransportError(OsceBenchError):
    """Backend unreachable after exhausting retries."""


class BudgetExceeded(OsceBenchError):
    """Per-minute request budget exhausted."""


class AuthError(OsceBenchError):
    """Backend rejected the configured credentials."""


class StructuredOutputError(OsceBenchError):
    """No schema-conforming response after the repair loop.

    Carries every raw attempt for diagnostics.
    """

    def __init__(self, message: str, attempts: list[str]):
        super().__init__(message)
        self.attempts = attempts


# --- generation / labeling ---------------------------------------------------

class GatewayError(OsceBenchError):
    """Wrapper for errors propagated out of the LLM gateway."""


class EmptyLeafSet(OsceBenchError):
    """Perturbation requested but the station has no leaf criteria."""


class EmptySegment(OsceBenchError):
    """Generator returned no turns for a slice, twice."""


class UnknownCriterion(OsceBenchError):
    def __init__(self, criterion_id: str):
        super().__init__(f"unknown criterion {criterion_id!r}")
        self.criterion_id = criterion_id


# --- evaluation --------------------------------------------------------------

class ExemplarLeakage(OsceBenchError):
    """A few-shot exemplar comes from the transcript under evaluation."""


class MissingReference(OsceBenchError):
    def __init__(self, criterion_id: str):
        super().__init__(f"no reference label for criterion {criterion_id!r}")
        self.criterion_id = criterion_id


class MissingJudgment(OsceBenchError):
    def __init__(self, criterion_id: str):
        super().__init__(f"no judgment for criterion {criterion_id!r}")
        self.criterion_id = criterion_id


# --- metrics -----------------------------------------------------------------

class LengthMismatch(OsceBenchError):
    """Decision vectors have different lengths."""


class PartialCoverage(OsceBenchError):
    def __init__(self, station_id: str):
        super().__init__(f"label sets do not cover station {station_id!r} completely")
        self.station_id = station_id


# --- med definitions ---------------------------------------------------------

class DuplicateSurface(ParseError):
    def __init__(self, surface: str):
        super().__init__(f"duplicate lexicon surface form {surface!r}")
        self.surface = surface


class UnknownConcept(OsceBenchError):
    def __init__(self, concept_id: str):
        super().__init__(f"unknown concept {concept_id!r}")
        self.concept_id = concept_id
