import json

import numpy as np
import pytest

from dualstitch.cli import main, parse_pert
from dualstitch.images import read_image
from dualstitch.mls import load_grid
from dualstitch.oracle import Perturbation


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    rc = main([
        "synth", "--scene", "noise", "--width", "1024", "--out-dir", str(out),
        "--pert", "rot=1,0,0;gain=0.01", "--pert", "dec=1,-1", "--n-per-band", "8",
        "--frames", "4", "--corrupt", "3",
    ])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def grid_path(synth_dir):
    path = synth_dir / "grid.bin"
    assert main(["build-grid", str(synth_dir / "calib.json"), "-o", str(path)]) == 0
    return path


def test_parse_pert():
    assert parse_pert(["rot=1,2,3;gain=0.02", "dec=4,5"]) == Perturbation((1, 2, 3), 0.02, (4, 5))
    assert parse_pert(None) == Perturbation()
    for bad in ("rot=1,2", "spin=1", "gain="):
        with pytest.raises(ValueError):
            parse_pert([bad])


def test_synth_writes_scene(synth_dir):
    for name in ("pano.png", "left.png", "right.png", "calib.json"):
        assert (synth_dir / name).exists()
    assert sorted(p.name for p in (synth_dir / "frames").iterdir())[0] == "frame_000001.png"
    assert json.loads((synth_dir / "calib.json").read_text())["panorama_width"] == 1024


def test_build_grid_file(grid_path):
    grid = load_grid(grid_path)
    assert (grid.width, grid.height, grid.spacing) == (1024, 512, 8)


def test_unwarp(synth_dir, tmp_path):
    out = tmp_path / "u.png"
    assert main(["unwarp", str(synth_dir / "left.png"), str(synth_dir / "calib.json"), "-o", str(out), "--lens", "left", "--width", "512"]) == 0
    assert read_image(out).shape == (256, 512, 1)


def test_stitch_and_eval(synth_dir, grid_path, tmp_path, capsys):
    out = tmp_path / "pano.png"
    diag = tmp_path / "diag.txt"
    args = [str(synth_dir / "left.png"), str(synth_dir / "right.png"), str(synth_dir / "calib.json"), str(grid_path)]
    assert main(["stitch", *args, "-o", str(out), "--diag", str(diag)]) == 0
    assert diag.read_text().split("\t")[2] == "FreshEstimate"
    capsys.readouterr()
    assert main(["eval", str(out), str(synth_dir / "pano.png")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("rms_gap\t")
    assert float(lines[0].split("\t")[1]) < 0.05


def test_stitch_video(synth_dir, grid_path, tmp_path):
    out = tmp_path / "video"
    diag = tmp_path / "d.txt"
    args = [str(synth_dir / "frames"), str(out), str(synth_dir / "calib.json"), str(grid_path)]
    assert main(["stitch-video", *args, "--diag", str(diag)]) == 0
    reasons = [line.split("\t")[2] for line in diag.read_text().splitlines()]
    assert reasons == ["FreshEstimate", "FreshEstimate", "ReusedPrevious", "FreshEstimate"]
    assert len(list(out.glob("frame_*.png"))) == 4


def test_bad_calibration_exits_2(synth_dir, grid_path, tmp_path, capsys):
    bad = tmp_path / "calib.json"
    bad.write_text('{"left": {}}')
    rc = main(["stitch", str(synth_dir / "left.png"), str(synth_dir / "right.png"), str(bad), str(grid_path), "-o", str(tmp_path / "x.png")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_coverage_hole_exits_3(synth_dir, grid_path, tmp_path):
    calib = json.loads((synth_dir / "calib.json").read_text())
    # pull the right lens circle half off the sensor
    calib["right"]["center_x"] = 10
    path = tmp_path / "calib.json"
    path.write_text(json.dumps(calib))
    args = [str(synth_dir / "left.png"), str(synth_dir / "right.png"), str(path), str(grid_path)]
    assert main(["stitch", *args, "-o", str(tmp_path / "x.png"), "--no-refine"]) == 3


def test_frame_gap_exits_4(synth_dir, grid_path, tmp_path):
    frames = tmp_path / "frames"
    frames.mkdir()
    for n in (1, 2, 4):
        (frames / f"frame_{n:06d}.png").write_bytes((synth_dir / "frames" / "frame_000001.png").read_bytes())
    args = [str(frames), str(tmp_path / "out"), str(synth_dir / "calib.json"), str(grid_path)]
    assert main(["stitch-video", *args]) == 4


def test_missing_inputs_exit_codes(tmp_path):
    assert main(["build-grid", str(tmp_path / "nope.json"), "-o", str(tmp_path / "g.bin")]) == 2
    assert main(["eval", str(tmp_path / "a.png"), str(tmp_path / "b.png")]) == 1


def test_no_gate_flag_accepts_everything(synth_dir, grid_path, tmp_path):
    diag = tmp_path / "d.txt"
    args = [str(synth_dir / "frames"), str(tmp_path / "o"), str(synth_dir / "calib.json"), str(grid_path)]
    assert main(["stitch-video", *args, "--no-gate", "--diag", str(diag)]) == 0
    assert all(line.split("\t")[2] == "FreshEstimate" for line in diag.read_text().splitlines())


def test_stitch_is_bit_identical(synth_dir, grid_path, tmp_path):
    args = [str(synth_dir / "left.png"), str(synth_dir / "right.png"), str(synth_dir / "calib.json"), str(grid_path)]
    main(["stitch", *args, "-o", str(tmp_path / "a.png")])
    main(["stitch", *args, "-o", str(tmp_path / "b.png")])
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    assert np.array_equal(read_image(tmp_path / "a.png"), read_image(tmp_path / "b.png"))
