# schemas/verification.py
from enum import Enum
from typing import Dict, FrozenSet, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.schemas.routing import RankedPath


class CheckCause(str, Enum):
    NONE = "none"
    LOW_RSS = "low_rss"
    LOW_CONNECTIVITY = "low_connectivity"
    OUT_OF_RANGE = "out_of_range"
    ABSENT = "absent"


class LinkCheckReport(BaseModel):
    """Outcome of one link check message exchange."""
    model_config = ConfigDict(frozen=True)

    link: Tuple[int, int]
    rss: float
    connectivity: float = Field(..., ge=0, le=1)
    qualified: bool
    cause: CheckCause = CheckCause.NONE
    check_time: float = 0.0

    @model_validator(mode="after")
    def _cause_matches(self):
        if self.qualified != (self.cause == CheckCause.NONE):
            raise ValueError("qualified links carry no cause")
        return self

    @property
    def key(self) -> FrozenSet[int]:
        return frozenset(self.link)


class FaultSet:
    """Unqualified links found during one verification round."""

    def __init__(self):
        self._links = set()

    def add(self, link: Tuple[int, int]) -> None:
        self._links.add(frozenset(link))

    def __contains__(self, link) -> bool:
        return frozenset(link) in self._links

    def __len__(self) -> int:
        return len(self._links)

    def touches(self, path: RankedPath) -> bool:
        return any(link in self for link in path.links)

    def links(self) -> List[Tuple[int, ...]]:
        return sorted(tuple(sorted(link)) for link in self._links)


class MendFlags(BaseModel):
    """Per interior node: source side reachable (sr) and destination side reachable (dr)."""
    model_config = ConfigDict(frozen=True)

    sr: Dict[int, bool]
    dr: Dict[int, bool]


class CheckedPath(BaseModel):
    """A path that underwent link check, with its reports and flags."""
    model_config = ConfigDict(frozen=True)

    path: RankedPath
    reports: List[LinkCheckReport]
    flags: MendFlags

    @property
    def qualified(self) -> bool:
        return all(report.qualified for report in self.reports)


class PathCheckResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    selected: Optional[RankedPath] = None
    checked: List[CheckedPath] = Field(default_factory=list)
    skipped: List[RankedPath] = Field(default_factory=list)
    fault_links: List[Tuple[int, ...]] = Field(default_factory=list)


class ActivationKind(str, Enum):
    QUALIFIED = "qualified"
    MENDED = "mended"
    DIRECT = "direct"
    UNVERIFIED = "unverified"
    NO_PATH = "no_path"


class ActivationDecision(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: ActivationKind
    path: Optional[RankedPath] = None

    @property
    def service_gap(self) -> bool:
        return self.kind == ActivationKind.NO_PATH
