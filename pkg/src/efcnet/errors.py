"""Exception hierarchy shared by every efcnet module."""


class EfcnetError(Exception):
    """Base class for all library errors."""


class InvalidInput(EfcnetError, ValueError):
    """Malformed array: wrong rank, too small, or non-finite values."""


class DegenerateSeries(EfcnetError, ValueError):
    def __init__(self, region: int, std: float):
        self.region = region
        self.std = std
        super().__init__(
            f"region {region} is constant or near-constant (population std {std:.3g})"
        )


class DegenerateEdge(EfcnetError, ValueError):
    def __init__(self, edge: int, norm: float, pair: tuple[int, int] | None = None):
        self.edge = edge
        self.norm = norm
        self.pair = pair
        where = f"edge {edge}" if pair is None else f"edge {edge} (regions {pair[0]}, {pair[1]})"
        super().__init__(f"{where} has a zero co-fluctuation series (norm {norm:.3g})")


class InvalidPair(EfcnetError, ValueError):
    pass


class IndexOutOfRange(EfcnetError, IndexError):
    pass


class BudgetTooSmall(EfcnetError, ValueError):
    pass


class ShapeMismatch(EfcnetError, ValueError):
    pass


class EmptyDataset(EfcnetError, ValueError):
    pass


class SingleClass(EfcnetError, ValueError):
    pass


class TooFewSamples(EfcnetError, ValueError):
    pass


class LengthMismatch(EfcnetError, ValueError):
    pass


class ConfigError(EfcnetError, ValueError):
    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(message)


class FormatError(EfcnetError, ValueError):
    """A binary file does not follow the expected layout."""


class CheckpointVersionError(FormatError):
    pass
