# crud/experiment_result.py
import math
from typing import List, Optional

import pandas as pd
from sqlalchemy.orm import Session

from app.models.experiment_result import ExperimentResult


class CRUDExperimentResult:
    """CRUD operations for stored experiment cells."""

    def create_many(self, db: Session, *, results: pd.DataFrame) -> int:
        """
        Store every row of a results frame.

        Args:
            db: Database session
            results: Frame with the results CSV columns

        Returns:
            Number of rows written
        """
        rows = []
        for record in results.to_dict(orient="records"):
            clean = {
                key: (None if isinstance(value, float) and math.isnan(value) else value)
                for key, value in record.items()
            }
            rows.append(ExperimentResult(**clean))
        db.add_all(rows)
        db.commit()
        return len(rows)

    def get_multi(
        self,
        db: Session,
        *,
        method: Optional[str] = None,
        density: Optional[float] = None,
        skip: int = 0,
        limit: int = 100,
    ) -> List[ExperimentResult]:
        """
        Get experiment cells, optionally for one method and density.

        Returns:
            List of ExperimentResult instances ordered by method, density, gamma_th, rep
        """
        query = db.query(ExperimentResult)
        if method is not None:
            query = query.filter(ExperimentResult.method == method)
        if density is not None:
            query = query.filter(ExperimentResult.density == density)
        return (
            query.order_by(
                ExperimentResult.method,
                ExperimentResult.density,
                ExperimentResult.gamma_th,
                ExperimentResult.rep,
            )
            .offset(skip)
            .limit(limit)
            .all()
        )

    def count(self, db: Session) -> int:
        return db.query(ExperimentResult).count()


# Create singleton instance
crud_experiment_result = CRUDExperimentResult()
