"""Exception types shared by the solver library, the CLI and the HTTP routers."""


class WinMapfError(Exception):
    """Base class for every error raised by app.libs."""


class MapParseError(WinMapfError, ValueError):
    """A .map file does not follow the benchmark map format."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class ScenarioError(WinMapfError, ValueError):
    """A .scen file (or a task list) cannot be used with the given map."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


class ContractViolation(WinMapfError, AssertionError):
    """A caller or planner broke a precondition (illegal move, collision, overlap)."""


class PlannerFailure(WinMapfError):
    """A group has no windowed solution under its constraints."""


class PlannerTimeout(WinMapfError):
    """The wall-clock planning budget ran out."""


class OracleRefusal(WinMapfError):
    """The brute-force oracle refuses instances it cannot enumerate."""
