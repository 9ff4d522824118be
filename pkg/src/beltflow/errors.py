"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Bad scenario input, configuration value, or file content."""


class MaskError(ValidationError):
    """Scene rasterization produced an unusable cell classification."""


class NumericalError(RuntimeError):
    """The scheme left its guaranteed operating envelope."""


class CflError(NumericalError):
    """Explicit step rejected because the CFL number exceeds the limit."""

    def __init__(self, cfl, limit, max_speed, cell):
        self.cfl = cfl
        self.limit = limit
        self.max_speed = max_speed
        self.cell = cell
        super().__init__(
            f"CFL number {cfl:.4f} exceeds limit {limit:.4f} "
            f"(max speed {max_speed:.4f} m/s at cell {cell})"
        )
