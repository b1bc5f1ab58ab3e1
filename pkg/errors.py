from typing import Optional


class GmolError(Exception):
    """Base error; exit_code plays the role an HTTP status code would."""

    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigurationError(GmolError):
    exit_code = 2


class ParseError(ConfigurationError):
    def __init__(self, line: int, detail: str):
        super().__init__(f"line {line}: {detail}")
        self.line = line


class ConfigValidationError(ConfigurationError):
    def __init__(self, field: str, detail: str):
        super().__init__(f"invalid value for '{field}': {detail}")
        self.field = field


class NonPositiveRadius(ConfigurationError):
    pass


class ModeMismatch(ConfigurationError):
    pass


class IncompleteState(ConfigurationError):
    pass


class ShapeMismatch(ConfigurationError):
    pass


class InnerDivergence(GmolError):
    def __init__(self, line: int, iterations: int, change: float):
        super().__init__(f"line {line} diverged after {iterations} iterations (change {change:.3e})")
        self.line = line
        self.iterations = iterations
        self.change = change


class NoConvergence(GmolError):
    def __init__(self, detail: str, report=None, state=None):
        super().__init__(detail)
        self.report = report
        self.state = state


class TargetNotReached(GmolError):
    def __init__(self, detail: str, result=None):
        super().__init__(detail)
        self.result = result


class SolveFailure(GmolError):
    pass


class NotAGradient(GmolError):
    def __init__(self, defect: float, limit: float, pressure=None):
        super().__init__(f"path independence defect {defect:.3e} exceeds {limit:.3e}")
        self.defect = defect
        self.limit = limit
        self.pressure = pressure


class OutputLocked(ConfigurationError):
    def __init__(self, directory: str, holder: Optional[str] = None):
        detail = f"output directory '{directory}' is locked by another run"
        if holder:
            detail += f" ({holder})"
        super().__init__(detail)
        self.directory = directory
