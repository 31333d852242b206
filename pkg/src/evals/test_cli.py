"""
Tests for the embodiswap command line.

Run with: python -m pytest src/evals/test_cli.py -v
"""

import numpy as np
import orjson
import pytest

from src.cli import EXIT_CONFIG, EXIT_FAILURES, EXIT_OK, expand_clips, main
from src.evals.conftest import FIXTURES, canonical_hand
from src.geometry import se3_to_list
from src.io_formats import read_pfm, read_png_rgb
from src.retarget import retarget_pose


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "config.yaml"
    path.write_text(
        f"urdf: {FIXTURES / 'two_link_planar.urdf'}\n"
        "lookahead: {open: 1}\n"
        "output_dir: out\n"
        "trace_path: null\n"
    )
    return path


def test_validate(make_bundle, capsys):
    """validate exits non-zero and names the problem when a clip is bad."""
    good = make_bundle("good")
    bad = make_bundle("bad", skip_depth=[2])
    assert main(["-q", "validate", str(good.root)]) == EXIT_OK
    assert main(["-q", "validate", str(good.root), str(bad.root)]) == EXIT_FAILURES
    out = capsys.readouterr().out
    assert "missing-depth" in out and "frame 2" in out


def test_composite_and_summary(make_bundle, config_file, tmp_path, capsys):
    """composite writes the manifest and summary tabulates it."""
    bundle = make_bundle()
    clips = tmp_path / "clips.txt"
    clips.write_text(f"# one clip\n{bundle.root}\n")
    assert main(["-q", "composite", "--config", str(config_file), "--clips", str(clips)]) == EXIT_OK

    manifest_path = tmp_path / "out" / "manifest.json"
    manifest = orjson.loads(manifest_path.read_bytes())
    assert manifest["mode"] == "composite"
    assert manifest["clips"][0]["labels_emitted"] == 2
    assert (tmp_path / "out" / bundle.name / "composite" / "000000.png").is_file()

    assert main(["summary", str(manifest_path)]) == EXIT_OK
    assert "TOTALS" in capsys.readouterr().out


def test_labels_with_overrides(make_bundle, config_file, tmp_path):
    """labels honours --output-dir and --workers and writes its own manifest."""
    bundle = make_bundle()
    out_dir = tmp_path / "elsewhere"
    code = main(["-q", "labels", "--config", str(config_file), "--clips", str(bundle.root),
                 "--output-dir", str(out_dir), "--workers", "2"])
    assert code == EXIT_OK
    assert (out_dir / bundle.name / "labels.jsonl").is_file()
    assert not (out_dir / bundle.name / "composite").exists()
    assert (out_dir / "manifest.labels.json").is_file() and not (out_dir / "manifest.json").exists()


def test_failed_clip_exit_code(make_bundle, config_file):
    """A failed clip makes the run exit with the failure code."""
    bad = make_bundle("bad", skip_depth=[1])
    assert main(["-q", "composite", "--config", str(config_file), "--clips", str(bad.root)]) == EXIT_FAILURES


def test_config_errors(make_bundle, tmp_path):
    """Unknown config keys and unloadable robots exit with the config code."""
    bundle = make_bundle()
    (tmp_path / "bad.yaml").write_text("urdf: robot.urdf\nbogus: 1\n")
    assert main(["-q", "composite", "--config", str(tmp_path / "bad.yaml"),
                 "--clips", str(bundle.root)]) == EXIT_CONFIG
    (tmp_path / "nourdf.yaml").write_text("urdf: missing.urdf\n")
    assert main(["-q", "labels", "--config", str(tmp_path / "nourdf.yaml"),
                 "--clips", str(bundle.root)]) == EXIT_CONFIG


def test_render_pose(tmp_path):
    """render-pose writes an image and a depth map."""
    pose = se3_to_list(retarget_pose(canonical_hand()).pose)
    out, depth = tmp_path / "r.png", tmp_path / "r.pfm"
    code = main(["-q", "render-pose", "--urdf", str(FIXTURES / "two_link_planar.urdf"),
                 "--pose", *map(str, pose), "--out", str(out), "--depth-out", str(depth),
                 "--width", "32", "--height", "24", "--fx", "20"])
    assert code == EXIT_OK
    assert read_png_rgb(out).shape == (24, 32, 3)
    d = read_pfm(depth)
    assert np.isfinite(d).any() and np.isinf(d).any()


def test_render_pose_rejects_bad_pose(tmp_path):
    """A non-rigid pose exits with the config code."""
    code = main(["-q", "render-pose", "--urdf", str(FIXTURES / "two_link_planar.urdf"),
                 "--pose", *(["2"] + ["0"] * 15), "--out", str(tmp_path / "r.png")])
    assert code == EXIT_CONFIG


def test_expand_clips(tmp_path):
    """Clip lists expand with comments and blank lines dropped, relative to the list file."""
    (tmp_path / "list.txt").write_text("a\n\n/abs/b  # trailing comment\n")
    (tmp_path / "c").mkdir()
    paths = expand_clips([str(tmp_path / "list.txt"), str(tmp_path / "c")])
    assert [p.as_posix() for p in paths] == [(tmp_path / "a").as_posix(), "/abs/b", (tmp_path / "c").as_posix()]
