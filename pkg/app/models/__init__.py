# app/models/__init__.py

from app.core.config import Base

# Import all models here so metadata.create_all sees every table
from .link_record import LinkRecordRow
from .experiment_result import ExperimentResult

__all__ = [
    "Base",
    "LinkRecordRow",
    "ExperimentResult",
]
