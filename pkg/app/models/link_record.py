# models/link_record.py

from datetime import datetime, timezone
from sqlalchemy import Column, DateTime, Float, Integer, String
from app.core.config import Base


class LinkRecordRow(Base):
    __tablename__ = "link_records"

    id = Column(Integer, primary_key=True, autoincrement=True, index=True)
    link_type = Column(String(8), nullable=False, index=True)  # "V2I" | "V2V"
    density_level = Column(String(16), nullable=False, index=True)

    # ---- Transmitter ----
    tx_id = Column(Integer, nullable=False)
    tx_x = Column(Float, nullable=False)
    tx_y = Column(Float, nullable=False)
    tx_h = Column(Float, nullable=False)
    tx_speed = Column(Float, nullable=False)

    # ---- Receiver (vehicle id, or BS index for V2I) ----
    rx_id = Column(Integer, nullable=False)
    rx_x = Column(Float, nullable=False)
    rx_y = Column(Float, nullable=False)
    rx_h = Column(Float, nullable=False)
    rx_speed = Column(Float, nullable=False, default=0.0)

    rss = Column(Float, nullable=False)

    created_at = Column(DateTime, default=lambda: datetime.now(timezone.utc))
