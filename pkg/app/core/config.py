from pathlib import Path
from typing import Generator, List, Optional

from pydantic_settings import BaseSettings, SettingsConfigDict
from sqlalchemy import create_engine
from sqlalchemy.engine import Engine
from sqlalchemy.orm import Session, declarative_base, sessionmaker


# =====================================================================
# SETTINGS
# =====================================================================


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    # App
    APP_NAME: str = "ROPE V2X Routing Engine"
    DEBUG: bool = False
    LOG_LEVEL: str = "INFO"

    # Database (link-record store and experiment results)
    DATABASE_URL: str = "sqlite:///./rope.db"

    # Cycle timing
    TAU: float = 1.0
    HISTORY_TICKS: int = 3
    DELTA_SCHEDULE: List[float] = [0.1, 0.07, 0.04]
    SEED: int = 0

    # QoS constraints and thresholds
    C_TH: float = 0.999
    H_TH: int = 6
    GAMMA_TH: float = -80.0
    GAMMA_M: float = -10.0
    D_I: float = 400.0
    D_V: float = 300.0

    # Radio
    BS_HEIGHT: float = 5.0
    BS_TX_POWER: float = 24.0
    VUE_TX_POWER: float = 23.0
    NOISE_FLOOR_DBM: float = -114.0
    CARRIER_FREQUENCY_HZ: float = 4.0e9
    PATHLOSS_EXP_LOS: float = 2.0
    PATHLOSS_EXP_NLOSV: float = 2.4
    PATHLOSS_EXP_NLOSB: float = 2.8
    SHADOWING_SIGMA_LOS: float = 2.0
    SHADOWING_SIGMA_NLOSV: float = 3.0
    SHADOWING_SIGMA_NLOSB: float = 5.0
    WALL_LOSS_DB: float = 15.0
    BLOCKER_LOSS_DB: float = 4.0
    MAX_BLOCKERS: int = 3
    FRESNEL_MARGIN: float = 0.3
    DENSITY_RADIUS: float = 100.0

    # World and traffic
    BLOCKS_X: int = 4
    BLOCKS_Y: int = 4
    BLOCK_SIZE: float = 160.0
    ROAD_WIDTH: float = 14.0
    BS_COUNT: int = 4
    SPEED_LIMIT: float = 13.89
    MIN_HEADWAY: float = 8.0
    MAX_ACCEL: float = 2.0
    TRUCK_SHARE: float = 0.15
    DURATION: float = 300.0

    # Link-record database sampling
    V2V_RECORDS_PER_TICK: int = 20

    # Predictor
    LEARNING_RATE: float = 0.01
    EPOCHS: int = 40
    BATCH_SIZE: int = 64
    GRAD_CLIP: float = 5.0
    KNN_K: int = 5

    # Experiments
    DENSITIES: List[float] = [200.0, 400.0, 600.0]
    GAMMA_GRID: List[float] = [-85.0, -80.0, -75.0, -70.0]
    REPLICATIONS: int = 3
    WORKERS: int = 1


settings = Settings()


def load_settings(config_path: Optional[Path] = None, **overrides) -> Settings:
    """
    Build Settings from a key-value (dotenv syntax) config file.

    Args:
        config_path: Optional path to the config file; ``.env`` is used when omitted
        overrides: Field values that win over both the file and the environment

    Returns:
        A new Settings instance
    """
    if config_path is None:
        return Settings(**overrides)
    return Settings(_env_file=str(config_path), **overrides)


# =====================================================================
# DATABASE
# =====================================================================


def make_engine(url: str) -> Engine:
    """Create an engine; sqlite connections may be shared across threads."""
    return create_engine(
        url,
        connect_args={"check_same_thread": False} if url.startswith("sqlite") else {},
    )


engine = make_engine(settings.DATABASE_URL)

SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
Base = declarative_base()


def get_db() -> Generator[Session, None, None]:
    """Database session dependency."""
    db = SessionLocal()
    try:
        yield db
    finally:
        db.close()
