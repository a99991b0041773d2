"""Exception types raised across the package."""


class InvalidArgumentError(ValueError):
    """An argument violates a documented precondition."""


class ParseError(ValueError):
    """A dataset file does not match its on-disk format."""

    def __init__(self, path, offset, message):
        self.path = str(path)
        self.offset = offset
        super().__init__(f"{self.path} @ {offset}: {message}")


class ProtocolError(RuntimeError):
    """Federated participants disagree on shapes or on values they must share."""


class ConfigError(ValueError):
    """Run configuration failed validation; ``problems`` maps field -> message."""

    def __init__(self, problems):
        self.problems = dict(problems)
        lines = "; ".join(f"{k}: {v}" for k, v in self.problems.items())
        super().__init__(f"invalid config: {lines}")
