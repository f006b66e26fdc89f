import pandas as pd
import pytest
from fastapi.testclient import TestClient
from sqlalchemy import create_engine
from sqlalchemy.orm import sessionmaker
from sqlalchemy.pool import StaticPool

from app.core.config import Base, get_db
from app.crud.experiment_result import crud_experiment_result
from app.crud.link_record import crud_link_record
from app.schemas.routing import BS_NODE
from main import app


@pytest.fixture
def db_session():
    engine = create_engine("sqlite://", connect_args={"check_same_thread": False},
                           poolclass=StaticPool)
    Base.metadata.create_all(bind=engine)
    session = sessionmaker(autocommit=False, autoflush=False, bind=engine)()
    try:
        yield session
    finally:
        session.close()


@pytest.fixture
def client(db_session):
    app.dependency_overrides[get_db] = lambda: db_session
    with TestClient(app) as test_client:
        yield test_client
    app.dependency_overrides.clear()


def diamond_payload(**params):
    return {
        "topology": {"edges": [
            {"u": 1, "v": 2, "l_S": 0.9, "l_C": 1.0},
            {"u": 2, "v": BS_NODE, "l_S": 0.8, "l_C": 1.0},
            {"u": 1, "v": 3, "l_S": 0.7, "l_C": 1.0},
            {"u": 3, "v": BS_NODE, "l_S": 0.95, "l_C": 1.0},
            {"u": 1, "v": BS_NODE, "l_S": 0.3, "l_C": 1.0},
        ]},
        "source": 1,
        **params,
    }


# =====================================================================
# BASICS
# =====================================================================

def test_health(client):
    assert client.get("/health").json() == {"status": "healthy"}


def test_root_lists_endpoints(client):
    body = client.get("/").json()
    assert set(body["endpoints"]) == {"scenario", "links", "prediction", "routing", "metrics", "evaluation"}


# =====================================================================
# SCENARIO AND PREDICTION
# =====================================================================

def test_generate_map(client):
    response = client.post("/scenario/map", json={"blocks_x": 2, "blocks_y": 2, "block_size": 60.0,
                                                   "road_width": 10.0, "bs_count": 2})
    assert response.status_code == 200
    body = response.json()
    assert body["width"] == pytest.approx(140.0)
    assert len(body["bs_sites"]) == 2


def test_bad_map_request_is_rejected(client):
    response = client.post("/scenario/map", json={"blocks_x": 2, "blocks_y": 2, "block_size": 5.0,
                                                   "road_width": 10.0, "bs_count": 2})
    assert response.status_code == 422


def test_associate(client, small_map):
    bs = small_map.bs_sites[0]
    vehicle = {"id": 1, "x": bs.x, "y": bs.y, "antenna_height": 1.6, "vclass": "passenger"}
    response = client.post("/scenario/associate", json={
        "vehicle": vehicle, "world_map": small_map.model_dump(), "rss_per_bs": [-60.0, -70.0],
    })
    assert response.json() == {"bs_index": 0}


def test_mobility_prediction(client):
    history = [
        {"id": 1, "x": 10.0 * k, "y": 0.0, "vx": 10.0, "antenna_height": 1.6, "vclass": "passenger"}
        for k in range(4)
    ]
    body = client.post("/prediction/mobility", json={"history": history}).json()
    assert body["x"] == pytest.approx(40.0)


def test_mobility_prediction_needs_full_history(client):
    history = [{"id": 1, "x": 0.0, "y": 0.0, "antenna_height": 1.6, "vclass": "passenger"}] * 2
    assert client.post("/prediction/mobility", json={"history": history}).status_code == 422


def test_warning_rule(client):
    body = client.post("/prediction/warning", json={
        "distribution": {"mu": -78.0, "var": 4.0},
        "predicted_position": [0.0, 0.0],
        "bs_position": [10.0, 0.0],
    }).json()
    assert body["triggered"] is True
    assert body["cause"] == "low_strength"


# =====================================================================
# ROUTING AND METRICS
# =====================================================================

def test_top3(client):
    body = client.post("/routing/top3", json=diamond_payload()).json()
    assert [p["nodes"] for p in body] == [[1, 2, BS_NODE], [1, 3, BS_NODE], [1, BS_NODE]]
    assert [p["rank"] for p in body] == ["J1", "J2", "J3"]


def test_oracle(client):
    body = client.post("/routing/oracle", json=diamond_payload(H_th=3)).json()
    assert body == {"width": 0.8, "nodes": [1, 2, BS_NODE]}
    assert client.post("/routing/oracle", json=diamond_payload(source=7)).json() == {
        "width": None, "nodes": None}


def test_car(client):
    body = client.post("/routing/car", json=diamond_payload()).json()
    assert body["nodes"] == [1, BS_NODE]


def test_link_duration(client):
    body = client.post("/metrics/link-duration", json={
        "pos_a": [0.0, 0.0], "vel_a": [0.0, 0.0], "pos_b": [0.0, 0.0], "vel_b": [10.0, 0.0], "d": 300.0,
    }).json()
    assert body["duration"] == pytest.approx(30.0)
    assert body["connectivity"] == 1.0
    static = client.post("/metrics/link-duration", json={"pos_a": [0.0, 0.0], "pos_b": [5.0, 0.0],
                                                         "d": 300.0}).json()
    assert static["unbounded"] is True and static["duration"] is None


def test_out_of_range_pair_is_rejected(client):
    response = client.post("/metrics/link-duration", json={"pos_a": [0.0, 0.0], "pos_b": [500.0, 0.0],
                                                           "vel_b": [1.0, 0.0], "d": 300.0})
    assert response.status_code == 422


# =====================================================================
# STORED RECORDS
# =====================================================================

def test_stored_link_records(client, db_session, v2i_records):
    crud_link_record.create_many(db_session, records=v2i_records[:10])
    assert client.get("/links/count").json() == {"count": 10}
    assert client.get("/links/count", params={"link_type": "V2V"}).json() == {"count": 0}
    body = client.get("/links", params={"limit": 3}).json()
    assert len(body) == 3
    assert body[0]["link_type"] == "V2I"


def test_stored_experiment_results(client, db_session):
    results = pd.DataFrame([
        {"method": "ROPE", "density": 200.0, "gamma_th": -80.0, "rep": 0, "P_S": -70.0, "P_C": 1.0,
         "P_H": 2.0, "P_Q": 90.0, "warn_ratio": 80.0, "gaps": 0},
        {"method": "CAR", "density": 200.0, "gamma_th": -80.0, "rep": 0, "P_S": float("nan"),
         "P_C": float("nan"), "P_H": float("nan"), "P_Q": float("nan"), "warn_ratio": None, "gaps": 3},
    ])
    crud_experiment_result.create_many(db_session, results=results)
    body = client.get("/evaluation/results", params={"method": "CAR"}).json()
    assert len(body) == 1
    assert body[0]["P_S"] is None and body[0]["gaps"] == 3
