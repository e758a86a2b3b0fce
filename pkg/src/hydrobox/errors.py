"""Exception types shared across the engine."""


class HydroboxError(Exception):
    """Base class for all engine errors."""


class ConfigError(HydroboxError):
    """Invalid or unknown configuration input."""


class GeometryError(HydroboxError):
    """Non-finite or out-of-contract geometric input."""


class DriftError(HydroboxError):
    """A particle moved farther than the decomposition tolerates in one PM step."""


class StiffStateError(HydroboxError):
    """Required timestep level exceeds the configured hierarchy depth."""


class KernelEvalError(HydroboxError):
    """Non-finite partial or accumulator overflow inside a pair kernel evaluation."""

    def __init__(self, kernel_name: str, detail: str):
        self.kernel_name = kernel_name
        super().__init__(f"kernel '{kernel_name}': {detail}")


class CheckpointError(HydroboxError):
    """Checkpoint writing, validation, or recovery failure."""


class EnergyError(HydroboxError):
    """Internal energy became negative (timestep violation)."""
