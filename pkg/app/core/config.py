from typing import List
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    APP_NAME: str = "ThinFlow API"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Where reports and cached artifacts go
    OUTPUT_DIR: str = "results"
    CACHE_DIR: str = ".thinflow-cache"

    # Assumption sampling
    S_MAX: float = 10.0
    SAMPLE_POINTS: int = 64

    # Solver tolerances
    CROSSING_TOL: float = 1e-3
    COMPATIBILITY_TOL: float = 1e-8
    W1_DEFECT_TOL: float = 0.25
    CG_RTOL: float = 1e-10
    CG_MAXITER: int = 5000
    CFL_MAX: float = 0.5

    # Extra CORS origins for the HTTP surface (comma separated)
    ALLOW_ORIGINS: str | None = None

    model_config = SettingsConfigDict(env_file=".env", env_file_encoding="utf-8", extra="ignore")

    def allowed_origins(self) -> List[str]:
        if not self.ALLOW_ORIGINS:
            return []
        return [origin.strip() for origin in self.ALLOW_ORIGINS.split(",") if origin.strip()]


settings = Settings()
