import base64
import concurrent.futures

import pytest
from fastapi.testclient import TestClient

from episode_factory import make_episode

from groundkit.annotate import ReplayMockClient
from groundkit.core import NormBox, decode_png, norm_to_pixel, pixel_to_norm
from groundkit.render import OverlayStyle, default_style, detect_overlay
from groundkit.service import ServiceConfig, create_app, trial_seed
from groundkit.sim import TrialProtocol, gen_scene, grounded_instruction_for, run_trial, target_box


@pytest.fixture
def mock_client(reference_response):
    return ReplayMockClient({"*": reference_response})


@pytest.fixture
def client(mock_client):
    return TestClient(create_app(ServiceConfig(client=mock_client)))


@pytest.fixture
def bare_client():
    return TestClient(create_app(ServiceConfig(client=None)))


def open_scene(client, family="clutter", seed=1, session_seed=11):
    sid = client.post("/sessions", json={"seed": session_seed}).json()["session_id"]
    scene = client.post(f"/sessions/{sid}/scene", json={"family": family, "seed": seed}).json()
    return sid, scene


def tight_box(scene_json) -> list[float]:
    objs = {o["id"]: o for o in scene_json["scene"]["objects"]}
    target = objs[scene_json["scene"]["target_id"]]
    tw, th = scene_json["scene"]["table_cm"]
    (cx, cy), (ex, ey) = target["center_cm"], target["extent_cm"]
    return [
        (cx - ex / 2 - 0.5) / tw,
        (cy - ey / 2 - 0.5) / th,
        (cx + ex / 2 + 0.5) / tw,
        (cy + ey / 2 + 0.5) / th,
    ]


class TestHealth:
    def test_ok_with_client(self, client):
        body = client.get("/health").json()
        assert body["status"] == "ok" and body["model_configured"] is True

    def test_mock_only_without_client(self, bare_client):
        body = bare_client.get("/health").json()
        assert body["status"] == "mock-only" and body["model_configured"] is False


class TestSessions:
    def test_create_and_scene(self, client):
        sid, scene = open_scene(client)
        assert sid.startswith("s-")
        assert scene["width"] == 600 and scene["height"] == 400
        assert len(scene["scene"]["objects"]) == 6

    def test_unknown_session(self, client):
        r = client.post("/sessions/s-999999/scene", json={"family": "clutter"})
        assert r.status_code == 404
        assert r.json()["error"]["code"] == "session-not-found"

    def test_invalid_family(self, client):
        sid, _ = open_scene(client)
        r = client.post(f"/sessions/{sid}/scene", json={"family": "juggling"})
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "invalid-family"

    def test_scene_replace_keeps_history(self, client):
        sid, scene = open_scene(client)
        client.post(f"/sessions/{sid}/ground", json={"box": tight_box(scene), "text": "pick up"})
        client.post(f"/sessions/{sid}/trial", json={"policy": "grounded"})
        client.post(f"/sessions/{sid}/scene", json={"family": "egg-pick", "seed": 2})
        history = client.get(f"/sessions/{sid}/history").json()["trials"]
        assert len(history) == 1  # retained across the swap
        r = client.post(f"/sessions/{sid}/trial", json={"policy": "grounded"})
        assert r.status_code == 409  # pending grounding was cleared with the scene


class TestGround:
    def test_preview_marker_matches_submission(self, client):
        sid, scene = open_scene(client)
        box = tight_box(scene)
        r = client.post(f"/sessions/{sid}/ground", json={"box": box, "text": "pick up"})
        assert r.status_code == 200
        preview = decode_png(base64.b64decode(r.json()["preview_png_b64"]))
        style = default_style(preview.width, preview.height)
        detected = detect_overlay(preview, style)
        expected = norm_to_pixel(NormBox(*box), preview.width, preview.height)
        assert detected == expected

    def test_bad_box_ordering(self, client):
        sid, _ = open_scene(client)
        r = client.post(f"/sessions/{sid}/ground", json={"box": [0.5, 0.1, 0.2, 0.9]})
        assert r.status_code == 422
        assert r.json()["error"]["code"] == "box-ordering"

    def test_second_ground_replaces_pending(self, client):
        sid, scene = open_scene(client)
        client.post(f"/sessions/{sid}/ground", json={"box": [0.1, 0.1, 0.2, 0.2], "text": "pick up"})
        box2 = tight_box(scene)
        client.post(f"/sessions/{sid}/ground", json={"box": box2, "text": "pick up"})
        trial = client.post(f"/sessions/{sid}/trial", json={"policy": "grounded"}).json()
        assert trial["box"] == box2
        assert trial["success"] is True


class TestTrial:
    def test_grounded_requires_pending(self, client):
        sid, _ = open_scene(client)
        r = client.post(f"/sessions/{sid}/trial", json={"policy": "grounded"})
        assert r.status_code == 409
        assert r.json()["error"]["code"] == "no-pending-grounding"

    def test_text_requires_instruction(self, client):
        sid, _ = open_scene(client)
        r = client.post(f"/sessions/{sid}/trial", json={"policy": "text"})
        assert r.status_code == 400

    def test_unparseable_text(self, client):
        sid, _ = open_scene(client)
        r = client.post(f"/sessions/{sid}/trial", json={"policy": "text", "instruction_text": "hello there"})
        assert r.status_code == 400
        assert r.json()["error"]["code"] == "unparseable-text"

    def test_session_stream_reproducible(self, client, mock_client):
        outcomes = []
        for _ in range(2):
            fresh = TestClient(create_app(ServiceConfig(client=mock_client)))
            sid, _ = open_scene(fresh, session_seed=77)
            perms = [
                fresh.post(
                    f"/sessions/{sid}/trial",
                    json={"policy": "text", "instruction_text": "pick the bottle"},
                ).json()
                for _ in range(10)
            ]
            outcomes.append([(t["success"], t["attempts"], t["chosen"]) for t in perms])
        assert outcomes[0] == outcomes[1]

    def test_api_trial_equals_library_run(self, client):
        session_seed, scene_seed = 55, 9
        sid, scene_json = open_scene(client, seed=scene_seed, session_seed=session_seed)
        scene = gen_scene("clutter", {}, seed=scene_seed)
        grounded = grounded_instruction_for(scene)
        box = list(grounded.box.as_tuple())
        client.post(f"/sessions/{sid}/ground", json={"box": box, "text": "pick up"})
        api = client.post(f"/sessions/{sid}/trial", json={"policy": "grounded"}).json()
        direct = run_trial(scene, "grounded", grounded, TrialProtocol(), trial_seed(session_seed, 0))
        assert api["success"] == direct.success
        assert api["attempts"] == direct.attempts
        assert api["chosen"] == direct.chosen


class TestPointToBoxFlow:
    def test_proposal_and_confirm_feed_trial(self, reference_response):
        # tape returns one region wherever the request comes from
        tape = ReplayMockClient({"*": '[{"box_2d": [450, 300, 550, 420], "label": "bottle"}]'})
        client = TestClient(create_app(ServiceConfig(client=tape)))
        sid, scene = open_scene(client)
        pointing = scene["image_png_b64"]  # reuse the overhead view as the gesture photo
        r = client.post(
            f"/sessions/{sid}/point-to-box", json={"image_png_b64": pointing, "text": "pick up"}
        )
        assert r.status_code == 200
        proposal = r.json()
        assert proposal["box"] == [0.3, 0.45, 0.42, 0.55]
        assert proposal["label"] == "bottle"
        r = client.post(f"/sessions/{sid}/confirm", json={})
        assert r.status_code == 200
        trial = client.post(f"/sessions/{sid}/trial", json={"policy": "grounded"}).json()
        assert trial["box"] == proposal["box"]

    def test_empty_region_list(self, client):
        tape = ReplayMockClient({"*": "[]"})
        c = TestClient(create_app(ServiceConfig(client=tape)))
        sid, scene = open_scene(c)
        r = c.post(
            f"/sessions/{sid}/point-to-box",
            json={"image_png_b64": scene["image_png_b64"], "text": "pick up"},
        )
        assert r.status_code == 422
        assert r.json()["error"]["code"] == "no-region"

    def test_confirm_without_proposal(self, client):
        sid, _ = open_scene(client)
        r = client.post(f"/sessions/{sid}/confirm", json={})
        assert r.status_code == 409

    def test_model_transport_failure(self, client):
        c = TestClient(create_app(ServiceConfig(client=ReplayMockClient({}))))
        sid, scene = open_scene(c)
        r = c.post(
            f"/sessions/{sid}/point-to-box",
            json={"image_png_b64": scene["image_png_b64"], "text": "pick up"},
        )
        assert r.status_code == 502
        assert r.json()["error"]["code"] == "model-failure"


class TestAnnotateEndpoint:
    def test_fixture_episode(self, tmp_path, client):
        episode_dir = make_episode(tmp_path, "ep-http", task="pick")
        r = client.post("/annotate", json={"episode_dir": str(episode_dir)})
        assert r.status_code == 200
        body = r.json()
        assert body["box"] == [0.411, 0.618, 0.457, 0.732]
        assert body["task_type"] == "pick" and body["arm_used"] == "left"

    def test_without_client_rejected(self, tmp_path, bare_client):
        episode_dir = make_episode(tmp_path, "ep-none", task="pick")
        r = bare_client.post("/annotate", json={"episode_dir": str(episode_dir)})
        assert r.status_code == 502

    def test_concurrent_requests_equal_sequential(self, tmp_path, client):
        dirs = [str(make_episode(tmp_path, f"ep-c{i}", task="pick")) for i in range(8)]
        sequential = [client.post("/annotate", json={"episode_dir": d}).json() for d in dirs]
        with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
            parallel = list(
                pool.map(lambda d: client.post("/annotate", json={"episode_dir": d}).json(), dirs)
            )
        assert sequential == parallel
