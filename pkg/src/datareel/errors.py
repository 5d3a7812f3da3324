"""Exception hierarchy shared across the pipeline.

Three broad families map onto the CLI exit codes: precondition failures
(bad or missing inputs, exit 2), contract failures (an agent reply that
cannot be parsed or repaired, exit 3), and adapter failures (an external
tool misbehaving, exit 4).
"""


class PipelineError(Exception):
    """Base class for all errors raised by this package."""


class PreconditionError(PipelineError):
    """Input or configuration is invalid before any work starts."""


class ContractError(PipelineError):
    """An agent reply violates its output contract."""


class AdapterError(PipelineError):
    """An external tool (backend, renderer, TTS, synthesizer) failed."""


class StageError(PipelineError):
    """Wraps any error with the pipeline stage it occurred in."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
