# crud/link_record.py
from typing import List, Optional, Sequence

from sqlalchemy.orm import Session

from app.core.exceptions import ModelFormatError
from app.data.vehicle_catalog import DensityLevel, class_for_antenna_height
from app.models.link_record import LinkRecordRow
from app.schemas.channel import BSDescriptor, LinkRecord, LinkType
from app.schemas.scenario import VehicleState


class CRUDLinkRecord:
    """CRUD operations for the link-record database."""

    # =====================================================================
    # CREATE OPERATIONS
    # =====================================================================

    def create_many(self, db: Session, *, records: Sequence[LinkRecord]) -> int:
        """
        Store link records in one transaction.

        Args:
            db: Database session
            records: Domain records, V2I and V2V mixed

        Returns:
            Number of rows written
        """
        rows = [self._to_row(record) for record in records]
        db.add_all(rows)
        db.commit()
        return len(rows)

    @staticmethod
    def _to_row(record: LinkRecord) -> LinkRecordRow:
        rx = record.rx
        if isinstance(rx, BSDescriptor):
            rx_cols = dict(rx_id=rx.index, rx_x=rx.x, rx_y=rx.y, rx_h=rx.height, rx_speed=0.0)
        else:
            rx_cols = dict(rx_id=rx.id, rx_x=rx.x, rx_y=rx.y, rx_h=rx.antenna_height,
                           rx_speed=rx.speed)
        return LinkRecordRow(
            link_type=record.link_type.value,
            density_level=record.density_level.value,
            tx_id=record.tx.id,
            tx_x=record.tx.x,
            tx_y=record.tx.y,
            tx_h=record.tx.antenna_height,
            tx_speed=record.tx.speed,
            rss=record.rss,
            **rx_cols,
        )

    # =====================================================================
    # READ OPERATIONS
    # =====================================================================

    def get_multi(
        self,
        db: Session,
        *,
        link_type: Optional[LinkType] = None,
        density_level: Optional[DensityLevel] = None,
        skip: int = 0,
        limit: int = 100,
    ) -> List[LinkRecordRow]:
        """
        Get link records with optional filters and pagination.

        Args:
            db: Database session
            link_type: Keep only this link type
            density_level: Keep only this density level
            skip: Number of records to skip
            limit: Maximum number of records to return

        Returns:
            List of LinkRecordRow instances in insertion order
        """
        query = db.query(LinkRecordRow)
        if link_type is not None:
            query = query.filter(LinkRecordRow.link_type == link_type.value)
        if density_level is not None:
            query = query.filter(LinkRecordRow.density_level == density_level.value)
        return query.order_by(LinkRecordRow.id).offset(skip).limit(limit).all()

    def count(self, db: Session, *, link_type: Optional[LinkType] = None) -> int:
        query = db.query(LinkRecordRow)
        if link_type is not None:
            query = query.filter(LinkRecordRow.link_type == link_type.value)
        return query.count()

    # =====================================================================
    # DELETE OPERATIONS
    # =====================================================================

    def delete_all(self, db: Session) -> int:
        """
        Remove every stored link record.

        Returns:
            Number of deleted rows
        """
        deleted = db.query(LinkRecordRow).delete()
        db.commit()
        return deleted

    # =====================================================================
    # UTILITY OPERATIONS
    # =====================================================================

    def to_domain(self, row: LinkRecordRow) -> LinkRecord:
        """
        Rebuild the domain record; velocities come back as (speed, 0).

        Raises:
            ModelFormatError: If a stored antenna height matches no vehicle class
        """
        tx = VehicleState(
            id=row.tx_id, x=row.tx_x, y=row.tx_y, vx=row.tx_speed, vy=0.0,
            antenna_height=row.tx_h, vclass=self._vclass(row.tx_h),
        )
        if row.link_type == LinkType.V2I.value:
            rx = BSDescriptor(index=row.rx_id, x=row.rx_x, y=row.rx_y, height=row.rx_h)
        else:
            rx = VehicleState(
                id=row.rx_id, x=row.rx_x, y=row.rx_y, vx=row.rx_speed, vy=0.0,
                antenna_height=row.rx_h, vclass=self._vclass(row.rx_h),
            )
        return LinkRecord(
            link_type=LinkType(row.link_type),
            tx=tx,
            rx=rx,
            rss=row.rss,
            density_level=DensityLevel(row.density_level),
        )

    @staticmethod
    def _vclass(height: float):
        vclass = class_for_antenna_height(height)
        if vclass is None:
            raise ModelFormatError(f"stored antenna height {height} matches no vehicle class")
        return vclass


# Create singleton instance
crud_link_record = CRUDLinkRecord()
