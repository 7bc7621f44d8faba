import threading
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
import requests
import uvicorn

from splatedit.server import create_app
from splatedit.session import Session
from splatedit.splat_model import RECORD_FLOATS, save_ply

from fixtures import labeled_scene, write_labels_files


@pytest.fixture()
def live_session(tmp_path):
    scene, overlay = labeled_scene(
        [("stool", (-2, 6, 0.4), 0.7, 150), ("stool", (2, 6, 0.4), 0.7, 150),
         ("table", (0, 6, 0.5), 1.4, 200)],
        background=200,
        seed=51,
        room=((-8, -8, 0), (8, 8, 3)),
    )
    ply = tmp_path / "scene.ply"
    save_ply(scene, ply)
    jp, bp = tmp_path / "labels.json", tmp_path / "labels.bin"
    write_labels_files(overlay, jp, bp)
    return Session.import_session(ply, jp, bp, 0.8, tmp_path / "session")


@pytest.fixture()
def server_url(live_session):
    config = uvicorn.Config(
        create_app(live_session), host="127.0.0.1", port=0, log_level="warning"
    )
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server did not start")
        time.sleep(0.01)
    port = server.servers[0].sockets[0].getsockname()[1]
    yield f"http://127.0.0.1:{port}"
    server.should_exit = True
    thread.join(timeout=5)


class TestApi:
    def test_scene_meta_matches_session(self, live_session, server_url):
        meta = requests.get(f"{server_url}/scene/meta").json()
        assert meta["splat_count"] == len(live_session.scene)
        assert {i["class"] for i in meta["instances"]} == {"stool", "table"}
        assert meta["instances"][0]["member_count"] > 0

    def test_scene_splats_streams_exact_records(self, live_session, server_url):
        body = requests.get(f"{server_url}/scene/splats")
        assert body.headers["x-splat-count"] == str(len(live_session.scene))
        got = np.frombuffer(body.content, dtype="<f4").reshape(-1, RECORD_FLOATS)
        assert np.array_equal(got, live_session.scene.records())

    def test_ground_does_not_mutate(self, server_url):
        before = requests.get(f"{server_url}/history").json()
        out = requests.post(f"{server_url}/ground",
                            json={"prompt": "remove the table"}).json()
        assert out["primary"]["winner"]["class"] == "table"
        assert requests.get(f"{server_url}/history").json() == before

    def test_edit_then_history(self, server_url):
        out = requests.post(
            f"{server_url}/edit",
            json={"prompt": "change the table to red"},
        ).json()
        assert "journal_id" in out
        history = requests.get(f"{server_url}/history").json()
        assert len(history) == 1
        assert history[0]["op"] == "recolor"

    def test_undo_roundtrip(self, server_url):
        splats0 = requests.get(f"{server_url}/scene/splats").content
        requests.post(f"{server_url}/edit",
                      json={"prompt": "remove the table", "inpaint": False})
        assert requests.get(f"{server_url}/scene/splats").content != splats0
        out = requests.post(f"{server_url}/undo").json()
        assert out["journal_length"] == 0
        assert requests.get(f"{server_url}/scene/splats").content == splats0

    def test_undo_empty_journal_is_400_session_stage(self, server_url):
        resp = requests.post(f"{server_url}/undo")
        assert resp.status_code == 400
        assert resp.json()["stage"] == "session"

    def test_parser_error_stage(self, server_url):
        resp = requests.post(f"{server_url}/edit", json={"prompt": "frobnicate it"})
        assert resp.status_code == 400
        assert resp.json()["stage"] == "parser"

    def test_grounding_error_carries_trace(self, server_url):
        resp = requests.post(f"{server_url}/ground", json={"prompt": "remove the unicorn"})
        assert resp.status_code == 400
        body = resp.json()
        assert body["stage"] == "grounding"
        assert body["trace"]["stages"][0]["stage"] == "class_filter"

    def test_concurrent_previews_identical(self, server_url):
        url = f"{server_url}/preview.png?azimuth=30&elevation=25&width=96&height=96"
        with ThreadPoolExecutor(max_workers=10) as pool:
            bodies = list(pool.map(lambda _: requests.get(url).content, range(10)))
        assert all(b == bodies[0] for b in bodies)
        assert bodies[0][:8] == b"\x89PNG\r\n\x1a\n"

    def test_concurrent_edits_serialize(self, live_session, server_url):
        n0 = len(live_session.scene)

        def do_edit(prompt):
            return requests.post(f"{server_url}/edit",
                                 json={"prompt": prompt, "inpaint": False})

        prompts = ["remove the stool to the left of the table",
                   "remove the stool to the right of the table"]
        with ThreadPoolExecutor(max_workers=2) as pool:
            responses = list(pool.map(do_edit, prompts))
        assert all(r.status_code == 200 for r in responses)
        history = requests.get(f"{server_url}/history").json()
        assert len(history) == 2
        deleted = sum(h["deleted"] for h in history)
        meta = requests.get(f"{server_url}/scene/meta").json()
        assert meta["splat_count"] == n0 - deleted

    def test_preview_crop_parameter(self, server_url):
        full = requests.get(f"{server_url}/preview.png?width=64&height=64").content
        crop = requests.get(f"{server_url}/preview.png?width=64&height=64&crop_id=2").content
        assert full != crop
