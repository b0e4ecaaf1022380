"""Exception types shared across the engine."""


class EngineError(Exception):
    """Base class for all engine errors."""


class ValidationError(EngineError):
    """Invalid user input: model parameters, config fields, shapes."""


class ConfigurationError(ValidationError):
    """Config file failed validation; message carries the field path."""


class UnsupportedModelError(EngineError):
    """Requested combination of model and backend is not supported."""


class PicardConvergenceError(EngineError):
    """Per-step fixed point did not converge within the iteration cap."""

    def __init__(self, step: int, residual: float, iterations: int):
        self.step = step
        self.residual = residual
        self.iterations = iterations
        super().__init__(
            f"Picard iteration failed at step {step}: "
            f"residual {residual:.3e} after {iterations} iterations"
        )


class RegressionError(EngineError):
    """Least-squares projection broke down beyond the ridge fallback."""
