"""Exception types shared across the package."""


class SelfEvolveError(Exception):
    pass


class ConfigError(SelfEvolveError, ValueError):
    """Invalid configuration; ``key`` holds the offending key path when known."""

    def __init__(self, message: str, key: str | None = None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class ContractViolation(SelfEvolveError, ValueError):
    pass


class ParseError(SelfEvolveError, ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(ParseError):
    pass


class DuplicationError(SelfEvolveError, ValueError):
    pass


class RoutingError(SelfEvolveError, RuntimeError):
    pass


class UnsupportedVersionError(SelfEvolveError, ValueError):
    pass
