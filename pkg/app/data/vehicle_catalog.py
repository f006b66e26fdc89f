# app/data/vehicle_catalog.py
from enum import Enum
from typing import Any, Dict, Optional


# =====================================================================
# ENUMS
# =====================================================================

class VehicleClass(str, Enum):
    """Vehicle classes present in the synthetic traffic."""
    PASSENGER = "passenger"
    TRUCK_BUS = "truck_bus"


class DensityLevel(str, Enum):
    """Traffic density levels attached to every link record."""
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


DENSITY_LEVELS = [DensityLevel.LOW, DensityLevel.MEDIUM, DensityLevel.HIGH]


# =====================================================================
# VEHICLE CATALOG
# =====================================================================

# Outline length/width and body height in meters, antenna height in meters.
VEHICLE_CATALOG: Dict[VehicleClass, Dict[str, Any]] = {
    VehicleClass.PASSENGER: {
        "length": 4.5,
        "width": 1.8,
        "body_height": 1.5,
        "antenna_height": 1.6,
    },
    VehicleClass.TRUCK_BUS: {
        "length": 10.0,
        "width": 2.5,
        "body_height": 3.5,
        "antenna_height": 3.1,
    },
}


def density_level_for(density: float) -> DensityLevel:
    """Map a requested density (veh/h/km) onto its level."""
    if density < 300.0:
        return DensityLevel.LOW
    if density < 500.0:
        return DensityLevel.MEDIUM
    return DensityLevel.HIGH


def one_hot(level: DensityLevel) -> list:
    """One-hot encoding of a density level in low/medium/high order."""
    return [1.0 if level == candidate else 0.0 for candidate in DENSITY_LEVELS]


def class_for_antenna_height(height: float) -> Optional[VehicleClass]:
    """Vehicle class whose antenna sits at ``height``, if any."""
    for vclass, entry in VEHICLE_CATALOG.items():
        if entry["antenna_height"] == height:
            return vclass
    return None
