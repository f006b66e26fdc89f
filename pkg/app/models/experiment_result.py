# models/experiment_result.py

from datetime import datetime, timezone
from sqlalchemy import Column, DateTime, Float, Integer, String
from app.core.config import Base


class ExperimentResult(Base):
    """One cell of an experiment sweep."""
    __tablename__ = "experiment_results"

    id = Column(Integer, primary_key=True, autoincrement=True, index=True)
    method = Column(String(16), nullable=False, index=True)
    density = Column(Float, nullable=False, index=True)
    gamma_th = Column(Float, nullable=False)
    rep = Column(Integer, nullable=False)

    # Aggregates are null when the method activated no path in the cell
    P_S = Column(Float, nullable=True)
    P_C = Column(Float, nullable=True)
    P_H = Column(Float, nullable=True)
    P_Q = Column(Float, nullable=True)
    warn_ratio = Column(Float, nullable=True)
    gaps = Column(Integer, nullable=False, default=0)

    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
