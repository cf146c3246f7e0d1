"""Exception types shared across the pipeline."""

from __future__ import annotations


class ThermoHarvestError(Exception):
    """Base class for all pipeline errors."""


class CorpusError(ThermoHarvestError):
    """Corpus directory missing, unreadable, or malformed."""


class ParseError(ThermoHarvestError):
    """A document could not be parsed into an article."""


class PatternError(ThermoHarvestError):
    """A pattern set failed to load or compile."""


class UnknownModel(ThermoHarvestError):
    """Model name absent from the model registry."""


class ContextOverflow(ThermoHarvestError):
    """Prompt plus requested output exceeds the model context limit."""


class BudgetInfeasible(ThermoHarvestError):
    """No output budget fits: context limit minus input is below the floor."""


class TransportError(ThermoHarvestError):
    """Network-level failure talking to a provider. Retryable."""


class RateLimited(TransportError):
    """Provider signalled rate limiting. Retryable."""


class ProviderError(ThermoHarvestError):
    """Provider returned a non-retryable error response."""


class MissingCredentials(ThermoHarvestError):
    """No API key found in the environment for the selected provider."""


class ParseFailed(ThermoHarvestError):
    """JSON repair exhausted every stage without producing valid JSON."""


class SchemaViolation(ThermoHarvestError):
    """Agent payload failed schema validation after repair."""


class UnknownUnit(ThermoHarvestError):
    """No normalization rule covers the reported unit spelling."""


class ManifestMismatch(ThermoHarvestError):
    """Entry provenance disagrees with the dataset manifest in strict mode."""


class MockScriptMiss(ThermoHarvestError):
    """Mock backend had no scripted response for a request."""
