"""Exception types shared across the package and mapped by the service/CLI."""


class DataError(Exception):
    """Bad or missing input data: unreadable CSV, absent label column, etc."""


class SolverError(Exception):
    """Optimizer failure, e.g. the objective became non-finite."""


class PipelineError(Exception):
    """A pipeline stage failed; carries the stage name for diagnostics."""

    def __init__(self, stage: str, message: str, kind: str = "data"):
        super().__init__(f"stage '{stage}': {message}")
        self.stage = stage
        self.kind = kind  # "data" or "solver", drives exit code / HTTP status
