"""Exception hierarchy.

Every failure a service can report maps to one process exit code; the CLI
translates them in a single place.
"""


class WaveSinkError(Exception):
    exit_code = 1

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class ConfigError(WaveSinkError):
    exit_code = 1


class GeometryError(ConfigError):
    pass


class ThresholdError(ConfigError):
    """Spectral parameter sits on a transverse cut-off."""


class NonSmoothInclusionError(ConfigError):
    pass


class MeshError(WaveSinkError):
    exit_code = 2


class SolverError(WaveSinkError):
    exit_code = 3

    def __init__(self, detail: str, residual: float | None = None):
        super().__init__(detail)
        self.residual = residual


class ValidationError(WaveSinkError):
    exit_code = 4


class CollarChartError(ValidationError):
    pass
