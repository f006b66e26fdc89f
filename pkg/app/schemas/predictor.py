# schemas/predictor.py
from typing import List

from pydantic import BaseModel, ConfigDict, Field, field_validator

from app.core.config import settings
from app.schemas.channel import LinkType
from app.schemas.scenario import VehicleState


V2I_ARITY = 4
V2V_ARITY = 7


class FeatureVector(BaseModel):
    """Explicit features x plus the one-hot density context c."""
    model_config = ConfigDict(frozen=True)

    link_type: LinkType
    explicit: List[float]
    context: List[float] = Field(..., min_length=3, max_length=3)

    @field_validator("context")
    @classmethod
    def _one_hot(cls, value: List[float]) -> List[float]:
        if sorted(value) != [0.0, 0.0, 1.0]:
            raise ValueError("density context must be one-hot")
        return value

    @field_validator("explicit")
    @classmethod
    def _arity(cls, value: List[float], info) -> List[float]:
        expected = V2I_ARITY if info.data.get("link_type") == LinkType.V2I else V2V_ARITY
        if len(value) != expected:
            raise ValueError(f"expected {expected} explicit features, got {len(value)}")
        return value


class StrengthDistribution(BaseModel):
    """Predicted RSS mean (dBm) and variance (dB^2)."""
    model_config = ConfigDict(frozen=True)

    mu: float
    var: float = Field(..., gt=0)

    @property
    def sigma(self) -> float:
        return self.var ** 0.5


class TrainHyper(BaseModel):
    """Training hyper-parameters."""
    model_config = ConfigDict(frozen=True)

    learning_rate: float = Field(0.01, gt=0)
    epochs: int = Field(40, ge=1)
    batch_size: int = Field(64, ge=1)
    grad_clip: float = Field(5.0, gt=0)
    seed: int = 0

    @classmethod
    def from_settings(cls, settings, seed: int = None) -> "TrainHyper":
        return cls(
            learning_rate=settings.LEARNING_RATE,
            epochs=settings.EPOCHS,
            batch_size=settings.BATCH_SIZE,
            grad_clip=settings.GRAD_CLIP,
            seed=settings.SEED if seed is None else seed,
        )


class MobilityRequest(BaseModel):
    """History of one vehicle, oldest first, spaced by tau."""
    history: List[VehicleState] = Field(..., min_length=settings.HISTORY_TICKS + 1)
    horizon: float = Field(1.0, gt=0)
    tau: float = Field(1.0, gt=0)
