import json

import numpy as np
import pytest

from splatedit.cli import main
from splatedit.splat_model import load_ply, save_ply

from fixtures import labeled_scene, write_labels_files
from test_editor import cube_asset


@pytest.fixture()
def inputs(tmp_path):
    scene, overlay = labeled_scene(
        [("stool", (-2, 6, 0.4), 0.7, 150), ("table", (0, 6, 0.5), 1.2, 200)],
        background=200,
        seed=61,
        room=((-8, -8, 0), (8, 8, 3)),
    )
    ply = tmp_path / "scene.ply"
    save_ply(scene, ply)
    jp, bp = tmp_path / "labels.json", tmp_path / "labels.bin"
    write_labels_files(overlay, jp, bp)
    return tmp_path, ply, jp, bp


def run_import(tmp_path, ply, jp, bp):
    code = main([
        "import", "--ply", str(ply), "--labels-json", str(jp),
        "--labels-bin", str(bp), "--min-confidence", "0.8",
        "--session", str(tmp_path / "session"),
    ])
    assert code == 0
    return tmp_path / "session"


class TestCli:
    def test_import_edit_undo_cycle(self, inputs, capsys):
        tmp_path, ply, jp, bp = inputs
        session_dir = run_import(tmp_path, ply, jp, bp)
        original = load_ply(session_dir / "scene.ply").records().copy()

        out_ply = tmp_path / "edited.ply"
        code = main([
            "edit", "--session", str(session_dir),
            "--prompt", "change the table to red", "--out", str(out_ply),
        ])
        assert code == 0
        assert "timings:" in capsys.readouterr().out
        assert out_ply.exists()
        assert not np.array_equal(load_ply(session_dir / "scene.ply").records(), original)

        assert main(["undo", "--session", str(session_dir)]) == 0
        assert np.array_equal(load_ply(session_dir / "scene.ply").records(), original)

    def test_ground_writes_trace(self, inputs, capsys):
        tmp_path, ply, jp, bp = inputs
        session_dir = run_import(tmp_path, ply, jp, bp)
        trace_path = tmp_path / "trace.json"
        code = main([
            "ground", "--session", str(session_dir),
            "--prompt", "remove the stool", "--trace", str(trace_path),
        ])
        assert code == 0
        assert "winner: instance 0" in capsys.readouterr().out
        payload = json.loads(trace_path.read_text())
        assert payload["primary"]["winner"]["class"] == "stool"
        assert payload["primary"]["trace"]["stages"]

    def test_preview_writes_png(self, inputs):
        tmp_path, ply, jp, bp = inputs
        session_dir = run_import(tmp_path, ply, jp, bp)
        out = tmp_path / "shot.png"
        code = main([
            "preview", "--session", str(session_dir),
            "--azimuth", "30", "--elevation", "45", "--out", str(out),
        ])
        assert code == 0
        assert out.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_assets_add_and_use(self, inputs, capsys):
        tmp_path, ply, jp, bp = inputs
        session_dir = run_import(tmp_path, ply, jp, bp)
        asset = cube_asset(size=0.5, name="vase")
        asset_ply = tmp_path / "vase.ply"
        save_ply(asset.scene, asset_ply)
        assert main(["assets", "add", "--session", str(session_dir),
                     "--name", "vase", "--ply", str(asset_ply)]) == 0
        assert main(["assets", "list", "--session", str(session_dir)]) == 0
        assert "vase" in capsys.readouterr().out
        assert main(["edit", "--session", str(session_dir),
                     "--prompt", "add a vase on the table"]) == 0

    def test_parser_error_exit_code(self, inputs, capsys):
        tmp_path, ply, jp, bp = inputs
        session_dir = run_import(tmp_path, ply, jp, bp)
        code = main(["edit", "--session", str(session_dir), "--prompt", "explode everything"])
        assert code == 2
        assert "[parser]" in capsys.readouterr().err

    def test_undo_on_fresh_session_fails_cleanly(self, inputs, capsys):
        tmp_path, ply, jp, bp = inputs
        session_dir = run_import(tmp_path, ply, jp, bp)
        assert main(["undo", "--session", str(session_dir)]) == 2
        assert "[session]" in capsys.readouterr().err

    def test_edit_knob_flags(self, inputs):
        tmp_path, ply, jp, bp = inputs
        session_dir = run_import(tmp_path, ply, jp, bp)
        code = main([
            "edit", "--session", str(session_dir),
            "--prompt", "remove the stool",
            "--inpaint", "off", "--knn-k", "8",
        ])
        assert code == 0
