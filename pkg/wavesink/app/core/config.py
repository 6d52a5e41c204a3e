from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    # App settings
    APP_NAME: str = "WaveSink"
    VERSION: str = "1.0.0"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Modal truncation
    DTN_TERMS: int = 15

    # Meshing
    MESH_H: float = 0.05
    LAYERS_PER_SKIN: int = 4
    MIN_H_DIVISOR: float = 64.0
    TRUNCATION_DECAY: float = 8.0  # window margin in evanescent decay lengths

    # Quadrature / solver contracts
    EDGE_QUADRATURE_POINTS: int = 6
    SOLVER_RESIDUAL_TOL: float = 1e-10
    CONDITION_LIMIT: float = 1e12
    ENERGY_RESIDUAL_TOL: float = 1e-3
    SYMMETRY_TOL: float = 1e-8

    # Sweeps
    WORKERS: int = 1

    # Absorber design
    SEPARATION_TOL: float = 1e-3
    L_POINTS_PER_PERIOD: int = 60
    ETA_REL_TOL: float = 1e-3
    L_TOL: float = 1e-4

    model_config = SettingsConfigDict(env_file=".env", env_prefix="WAVESINK_", extra="ignore")


settings = Settings()
