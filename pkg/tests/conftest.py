import os

# Keep the module-level engine off the working directory during tests.
os.environ.setdefault("DATABASE_URL", "sqlite://")

from typing import Dict, Optional

import networkx as nx
import numpy as np
import pytest

from app.data.vehicle_catalog import VEHICLE_CATALOG, DensityLevel, VehicleClass
from app.schemas.channel import BSDescriptor, LinkRecord, LinkType
from app.schemas.metrics import UNBOUNDED
from app.schemas.predictor import V2I_ARITY, V2V_ARITY
from app.schemas.routing import BS_NODE
from app.schemas.scenario import VehicleState
from app.services import capnet
from app.services.predictor import PredictorModel
from app.services.scenario import generate_map, generate_traces
from app.services.verification import LinkMeasurement


def make_vehicle(vid: int, x: float, y: float, vx: float = 0.0, vy: float = 0.0,
                 vclass: VehicleClass = VehicleClass.PASSENGER) -> VehicleState:
    return VehicleState(
        id=vid, x=x, y=y, vx=vx, vy=vy,
        antenna_height=VEHICLE_CATALOG[vclass]["antenna_height"], vclass=vclass,
    )


def make_graph(edges, nodes=()) -> nx.Graph:
    """Graph from (u, v, l_S, l_C) tuples with unit hop counts."""
    g = nx.Graph()
    g.add_nodes_from(nodes)
    for u, v, l_s, l_c in edges:
        g.add_edge(u, v, l_S=l_s, l_C=l_c, l_H=1)
    return g


class StubWorld:
    """Verification world answering from a fixed table of link measurements."""

    def __init__(self, links: Dict[frozenset, LinkMeasurement]):
        self.links = links
        self.queries = []

    def measure(self, u: int, v: int, time: float) -> Optional[LinkMeasurement]:
        self.queries.append((u, v, time))
        return self.links.get(frozenset((u, v)))


def constant_model(link_type: LinkType, mu: float, var: float = 4.0) -> PredictorModel:
    """Model predicting the same mean for every input; all weights are zero."""
    arity = V2I_ARITY if link_type == LinkType.V2I else V2V_ARITY
    params = capnet.init_params(arity, np.random.default_rng(0))
    params = {name: np.zeros_like(value) for name, value in params.items()}
    return PredictorModel(
        link_type=link_type,
        params=params,
        x_mean=np.zeros(arity),
        x_std=np.ones(arity),
        y_mean=mu,
        y_std=1.0,
        fixed_variance=var,
    )


def good(rss: float = -60.0) -> LinkMeasurement:
    return LinkMeasurement(rss=rss, duration=UNBOUNDED)


def weak(rss: float = -95.0) -> LinkMeasurement:
    return LinkMeasurement(rss=rss, duration=UNBOUNDED)


# =====================================================================
# WORLD FIXTURES
# =====================================================================

@pytest.fixture(scope="session")
def small_map():
    """2 x 2 blocks of 60 m with 10 m roads and two base stations."""
    return generate_map(2, 2, 60.0, 10.0, 2, seed=0)


@pytest.fixture(scope="session")
def short_log(small_map):
    return generate_traces(small_map, 3000.0, 12.0, 1.0, seed=1)


@pytest.fixture
def diamond():
    """Two relay paths and a weak direct link from VUE 1 to the BS node."""
    return make_graph([
        (1, 2, 0.9, 1.0),
        (2, BS_NODE, 0.8, 1.0),
        (1, 3, 0.7, 1.0),
        (3, BS_NODE, 0.95, 1.0),
        (1, BS_NODE, 0.3, 1.0),
    ])


@pytest.fixture
def long_chain():
    """A wide six-hop relay chain beside a weak direct link."""
    chain = [1, 2, 3, 4, 5, 6, BS_NODE]
    edges = [(a, b, 0.9, 1.0) for a, b in zip(chain[:-1], chain[1:])]
    edges.append((1, BS_NODE, 0.2, 1.0))
    return make_graph(edges)


@pytest.fixture
def v2i_records():
    """Synthetic V2I records whose strength falls off with distance from (0, 0)."""
    records = []
    for i in range(120):
        x = 5.0 + 3.0 * i
        level = [DensityLevel.LOW, DensityLevel.MEDIUM, DensityLevel.HIGH][i % 3]
        records.append(LinkRecord(
            link_type=LinkType.V2I,
            tx=make_vehicle(i, x, 0.0, vx=10.0),
            rx=BSDescriptor(index=0, x=0.0, y=0.0, height=5.0),
            rss=-40.0 - 0.1 * x - (2.0 if level == DensityLevel.HIGH else 0.0),
            density_level=level,
        ))
    return records
