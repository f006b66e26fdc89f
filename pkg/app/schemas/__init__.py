# app/schemas/__init__.py

from .scenario import Road, Building, BSSite, WorldMap, VehicleState, Tick, TraceLog
from .channel import LinkClass, LinkType, BSDescriptor, LinkRecord, ChannelParams
from .predictor import FeatureVector, StrengthDistribution, TrainHyper
from .metrics import EdgeMetrics, RelativeKinematics, PathMetrics, UNBOUNDED
from .routing import BS_NODE, PathRank, RoutingParams, RankedPath
from .topology import VirtualTopology
from .warning import WarningCause, WarningDecision, V2IInference
from .verification import (
    CheckCause,
    LinkCheckReport,
    FaultSet,
    MendFlags,
    CheckedPath,
    PathCheckResult,
    ActivationKind,
    ActivationDecision,
)
from .harness import Method, CycleConfig, CycleRow, CycleLog, EvalReport


__all__ = [
    # Scenario
    "Road", "Building", "BSSite", "WorldMap", "VehicleState", "Tick", "TraceLog",

    # Channel
    "LinkClass", "LinkType", "BSDescriptor", "LinkRecord", "ChannelParams",

    # Predictor
    "FeatureVector", "StrengthDistribution", "TrainHyper",

    # Metrics and routing
    "EdgeMetrics", "RelativeKinematics", "PathMetrics", "UNBOUNDED",
    "BS_NODE", "PathRank", "RoutingParams", "RankedPath", "VirtualTopology",

    # Warning and verification
    "WarningCause", "WarningDecision", "V2IInference",
    "CheckCause", "LinkCheckReport", "FaultSet", "MendFlags", "CheckedPath",
    "PathCheckResult", "ActivationKind", "ActivationDecision",

    # Harness
    "Method", "CycleConfig", "CycleRow", "CycleLog", "EvalReport",
]
