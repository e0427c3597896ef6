import numpy as np
import pytest
from fastapi.testclient import TestClient

from forgescore.labeling import AnomalyScores, build_labeled_cohort, split_cohort
from forgescore.review import ReviewJournal, ReviewSession, create_app
from forgescore.tensorio import VideoManifest, write_tensor


def _labeled(n_per_class=5, n_real=3, seed=0):
    rng = np.random.default_rng(seed)
    scores = {}
    for i in range(n_per_class):
        scores[f"s{i:02d}"] = AnomalyScores(1 + rng.random(), 0.01, 0.01)
        scores[f"a{i:02d}"] = AnomalyScores(0.01, 1 + rng.random(), 0.01)
        scores[f"m{i:02d}"] = AnomalyScores(0.01, 0.01, 1 + rng.random())
    return build_labeled_cohort(scores, [f"r{i:02d}" for i in range(n_real)])


@pytest.fixture()
def client(tmp_path):
    labeled = _labeled()
    frames = np.full((2, 16, 16, 3), 0.5)
    manifests = {}
    for vid in labeled:
        path = tmp_path / f"{vid}_frames.fvt"
        write_tensor(frames, path)
        manifests[vid] = VideoManifest(
            video_id=vid, cohort_id="c0", is_real=vid.startswith("r"),
            artifacts={"frames": path},
        )
    session = ReviewSession(
        cohort_id="c0",
        labeled=labeled,
        seed=5,
        journal=ReviewJournal(tmp_path / "journal.jsonl"),
        manifests=manifests,
    )
    out_dir = tmp_path / "final"
    api = TestClient(create_app(session, out_dir=out_dir))
    api.session = session
    api.out_dir = out_dir
    return api


def test_queue_endpoint(client):
    resp = client.get("/api/queue", params={"class": 1})
    assert resp.status_code == 200
    items = resp.json()["items"]
    assert len(items) == 1  # ceil(0.2 * 5)
    assert items[0]["label"] == 1
    assert client.get("/api/queue", params={"class": 9}).status_code == 400
    assert client.get("/api/queue", params={"class": 3}).status_code == 400


def test_queue_limit(client):
    full = client.get("/api/queue", params={"class": 0}).json()["items"]
    one = client.get(
        "/api/queue", params={"class": 0, "limit": 1}
    ).json()["items"]
    assert one == full[:1]


def test_review_flow(client):
    vid = client.get("/api/queue", params={"class": 0}).json()["items"][0]["video_id"]
    resp = client.post(
        "/api/review",
        json={"video_id": vid, "verdict": "accept", "reviewer": "alice"},
    )
    assert resp.status_code == 200
    assert resp.json()["verdicts"][vid] == "accept"
    assert client.get("/api/queue", params={"class": 0}).json()["items"] == []

    assert (
        client.post(
            "/api/review",
            json={"video_id": "ghost", "verdict": "accept", "reviewer": "a"},
        ).status_code
        == 404
    )
    assert (
        client.post(
            "/api/review",
            json={"video_id": "r00", "verdict": "accept", "reviewer": "a"},
        ).status_code
        == 409
    )
    assert (
        client.post(
            "/api/review",
            json={"video_id": vid, "verdict": "promote", "reviewer": "a"},
        ).status_code
        == 422
    )
    assert (
        client.post("/api/review", json={"video_id": vid}).status_code == 422
    )


def test_progress_counters(client):
    before = client.get("/api/progress").json()
    assert before["pending_total"] == 3
    vid = client.get("/api/queue", params={"class": 2}).json()["items"][0]["video_id"]
    client.post(
        "/api/review",
        json={"video_id": vid, "verdict": "reject", "reviewer": "bob"},
    )
    after = client.get("/api/progress").json()
    assert after["pending_total"] == 2
    assert after["classes"]["2"]["reviewed"] == 1


def test_finalize_endpoint(client):
    resp = client.post("/api/finalize")
    assert resp.status_code == 409
    for code in (0, 1, 2):
        items = client.get("/api/queue", params={"class": code}).json()["items"]
        for item in items:
            client.post(
                "/api/review",
                json={
                    "video_id": item["video_id"],
                    "verdict": "reassign" if code == 1 else "accept",
                    "reviewer": "alice",
                    **({"reassign_to": 2} if code == 1 else {}),
                },
            )
    resp = client.post("/api/finalize")
    assert resp.status_code == 200
    body = resp.json()
    assert body["manifest"]["pending_review"] == []
    oracle = split_cohort(
        client.session.labeled, "c0", 5, verdicts=client.session.review_verdicts()
    )
    assert body["manifest"]["train"] == oracle.train
    assert body["manifest"]["val"] == oracle.val
    assert (client.out_dir / "split_final.json").is_file()
    assert (client.out_dir / "labels_final.json").is_file()


def test_finalize_force(client):
    resp = client.post("/api/finalize", json={"force": True})
    assert resp.status_code == 200
    assert len(resp.json()["manifest"]["pending_review"]) == 3


def test_thumbnail_half_gray_rounds_to_128(client):
    resp = client.get("/api/thumb/s00/0")
    assert resp.status_code == 200
    body = resp.json()
    assert body["width"] == body["height"] == 64
    assert len(body["pixels"]) == 64 * 64
    assert set(body["pixels"]) == {128}  # 0.5 * 255 = 127.5, rounds half up


def test_thumbnail_missing(client):
    assert client.get("/api/thumb/ghost/0").status_code == 404
    assert client.get("/api/thumb/s00/99").status_code == 404


def test_no_session_answers_409(tmp_path):
    api = TestClient(create_app(None))
    assert api.get("/api/queue", params={"class": 0}).status_code == 409
    assert api.get("/api/progress").status_code == 409
    assert api.post("/api/finalize").status_code == 409
