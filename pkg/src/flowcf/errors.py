"""Exception hierarchy. Every error carries a stable machine-readable code."""


class FlowcfError(Exception):
    """Base error. `code` is a stable token used by the CLI and the HTTP API."""

    code = "error"

    def __init__(self, message: str, *, code: str | None = None):
        super().__init__(message)
        if code is not None:
            self.code = code


class ShapeError(FlowcfError):
    code = "shape_mismatch"


class NonFiniteError(FlowcfError):
    code = "non_finite"


class GraphError(FlowcfError):
    code = "graph"


class DataError(FlowcfError):
    code = "bad_data"


class ConfigError(FlowcfError):
    code = "bad_config"


class MetricError(FlowcfError):
    code = "metric_undefined"


class DivergenceError(FlowcfError):
    code = "diverged"
