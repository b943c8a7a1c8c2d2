from pydantic_settings import BaseSettings
from typing import List, Optional


class Settings(BaseSettings):
    APP_NAME: str = "Audita"
    APP_VERSION: str = "1.0.0"
    DEBUG: bool = False

    LOG_LEVEL: str = "INFO"
    LOG_FILE: Optional[str] = None
    LOG_JSON: bool = False

    CHUNK_SIZE: int = 16 * 1024  # 16KB protocol chunks

    PDP_MODULUS_BITS: int = 1024
    PDP_ALLOWED_MODULUS_BITS: List[int] = [1024, 2048, 3072]
    PDP_PUBLIC_EXPONENT: int = 65537
    PDP_COEFFICIENT_BITS: int = 80
    PDP_SLACK_BITS: int = 64
    PDP_MAX_CHALLENGE: int = 65536
    PDP_PRIME_ATTEMPTS: int = 2_000_000
    PDP_MILLER_RABIN_ROUNDS: int = 40

    SIM_LATENCY_BASE_MIN_MS: float = 40.0
    SIM_LATENCY_BASE_MAX_MS: float = 60.0
    SIM_JITTER_MU: float = 3.9  # log-normal, median ~50ms
    SIM_JITTER_SIGMA: float = 0.25
    SIM_BLOCK_CREATORS: int = 20
    SIM_GENESIS_FUNDS: int = 10**12

    class Config:
        env_file = ".env"
        case_sensitive = True

settings = Settings()
