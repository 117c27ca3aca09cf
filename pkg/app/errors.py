class InpaintingError(Exception):
    """Root of every error raised by the toolkit services."""


class ConfigurationError(InpaintingError):
    """Invalid parameters or a violated construction inequality."""


class StructuralError(InpaintingError):
    """Shape, band or index mismatch between cooperating objects."""


class PGMParseError(InpaintingError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


class DegenerateMaskError(ConfigurationError):
    def __init__(self, seed: int):
        super().__init__(
            f"random mask for seed {seed} has no observed pixel; choose a different seed"
        )
        self.seed = seed
