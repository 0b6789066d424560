"""HTTP surface over the pipeline commands."""

import pytest

from Classes.Base import Config
from Classes.Descriptor.CheckpointClass import save_checkpoint
from Classes.Descriptor.ModelClass import ModelConfig, build_model
from app import app

SCENE = {"frame_count": 2, "object_count": 3, "points_per_object": 150, "noise_sigma": 0.0, "dropout": 0.0}


@pytest.fixture
def client(tmp_path, monkeypatch):
    monkeypatch.setattr(Config, "DATA_STORAGE", tmp_path)
    app.config["TESTING"] = True
    with app.test_client() as client:
        yield client


def test_home(client, tmp_path):
    response = client.get("/")
    assert response.status_code == 200
    assert response.get_json()["storage"] == str(tmp_path)


def test_synth_then_list_runs(client, tmp_path):
    response = client.post("/synth", json=dict(SCENE, out="scene"))
    assert response.status_code == 200
    body = response.get_json()
    assert body["status_code"] == "success"
    assert body["frames"] == 2
    assert (tmp_path / "scene" / "poses.txt").is_file()
    assert client.get("/runs").get_json() == ["scene"]


def test_extract_reports_pair_counts(client):
    client.post("/synth", json=dict(SCENE, out="scene"))
    response = client.post("/extract", json={"scans": ["scene"], "poses": "scene/poses.txt", "out": "patches",
                                             "sampling_radius": 0.8, "negatives_per_positive": 2})
    assert response.status_code == 200
    body = response.get_json()
    assert body["negatives"] == 2 * body["positives"]


def test_path_outside_storage(client):
    response = client.post("/synth", json={"out": "../elsewhere"})
    assert response.status_code == 403
    assert response.get_json()["status_code"] == "error"


def test_missing_field(client):
    response = client.post("/train", json={"out": "model"})
    assert response.status_code == 400
    assert "archive" in response.get_json()["message"]


def test_missing_input_file(client):
    response = client.post("/train", json={"archive": "nothing/patches.bin", "out": "model"})
    assert response.status_code == 404
    assert response.get_json()["error"] == "ScanFileNotFound"


def test_unknown_setting(client):
    response = client.post("/synth", json={"out": "scene", "warp_speed": 9})
    assert response.status_code == 400
    body = response.get_json()
    assert body["error"] == "InvalidConfig"
    assert body["unknown"] == ["warp_speed"]


def test_align_without_ground_truth_sends_null_errors(client, tmp_path):
    client.post("/synth", json=dict(SCENE, out="scene", points_per_object=300))
    save_checkpoint(build_model(ModelConfig(head="hinge"), seed=1), tmp_path / "model.ldesc")
    response = client.post("/align", json={"sources": ["scene/frame_000000.bin"],
                                           "targets": ["scene/frame_000001.bin"],
                                           "checkpoint": "model.ldesc", "out": "align", "filter": "raw",
                                           "sampling_radius": 0.8})
    assert response.status_code == 200
    assert b"NaN" not in response.data
    row = response.get_json()["rows"][0]
    assert row["t_e"] is None and row["r_e"] is None
    assert row["correspondences"] >= 3
