"""Exception types raised across the package."""


class KalError(Exception):
    pass


class ConfigError(KalError, ValueError):
    """Invalid run configuration; ``key`` names the offending entry."""

    def __init__(self, key, message):
        self.key = key
        super().__init__(f"{key}: {message}")


class DomainError(KalError, ValueError):
    pass


class AbsorbingStateError(KalError, RuntimeError):
    pass


class MajorantViolation(KalError, RuntimeError):
    """A thinning proposal produced an acceptance ratio above one."""

    def __init__(self, ratio, pair, time):
        self.ratio = ratio
        self.pair = pair
        self.time = time
        super().__init__(
            f"majorant acceptance ratio {ratio:.17g} > 1 for pair {pair} at t={time:.17g}"
        )


class FrameError(KalError, ValueError):
    pass
