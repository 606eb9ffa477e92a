import json

import numpy as np
import pytest

from rgbd_panoptic.cli import cli_main
from rgbd_panoptic.formats import read_mask, write_mask, write_tensor
from rgbd_panoptic.postprocess import PanopticMask


@pytest.fixture
def scene_dir(tmp_path):
    (tmp_path / "spec.json").write_text(json.dumps({"seed": 7, "num_instances": 4, "center_sigma": 1.0}))
    assert cli_main(["synth", "--spec", str(tmp_path / "spec.json"), "--out-dir", str(tmp_path / "s")]) == 0
    return tmp_path


def test_synth_writes_manifest(scene_dir):
    manifest = json.loads((scene_dir / "s" / "manifest.json").read_text())
    assert manifest["seed"] == 7 and manifest["num_instances"] == 4
    for name in manifest["files"].values():
        assert (scene_dir / "s" / name).exists()


def test_infer_then_eval(scene_dir, capsys):
    s = scene_dir / "s"
    out = scene_dir / "pred.pmsk"
    assert cli_main(["infer", "--sem", str(s / "sem.pten"), "--cen", str(s / "cen.pten"),
                     "--emb", str(s / "emb.pten"), "--out", str(out)]) == 0
    capsys.readouterr()
    assert cli_main(["eval", "--pred", str(out), "--gt", str(s / "gt.pmsk")]) == 0
    text = capsys.readouterr().out
    assert "overall PQ=1.000000" in text
    assert "mIoU=1.000000" in text
    assert read_mask(out) == read_mask(s / "gt.pmsk")


def test_infer_is_byte_deterministic(scene_dir):
    s = scene_dir / "s"
    outs = []
    for name in ("a.pmsk", "b.pmsk"):
        cli_main(["infer", "--sem", str(s / "sem.pten"), "--cen", str(s / "cen.pten"),
                  "--emb", str(s / "emb.pten"), "--out", str(scene_dir / name)])
        outs.append((scene_dir / name).read_bytes())
    assert outs[0] == outs[1]


def test_eval_prints_class_lines(tmp_path, capsys):
    mask = PanopticMask(np.array([[0, 2], [2, 3]]), np.array([[0, 1], [1, 1]]))
    write_mask(tmp_path / "m.pmsk", mask)
    assert cli_main(["eval", "--pred", str(tmp_path / "m.pmsk"), "--gt", str(tmp_path / "m.pmsk")]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "class PQ SQ RQ TP FP FN"
    assert lines[1].split() == ["0", "1.000000", "1.000000", "1.000000", "1", "0", "0"]
    assert "overall PQ=1.000000" in lines[-2]


def test_losses_command(scene_dir, capsys):
    s = scene_dir / "s"
    args = ["losses", "--sem", s / "sem.pten", "--labels", s / "gt.pmsk", "--cen", s / "cen.pten",
            "--cen-gt", s / "cen_gt.pten", "--emb", s / "emb.pten", "--instances", s / "gt.pmsk"]
    assert cli_main([str(a) for a in args]) == 0
    values = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    assert list(values) == ["L_sem", "L_cen", "L_att", "L_rep", "L_reg", "L_emb", "L_pan"]
    assert float(values["L_sem"]) == 0.0 and float(values["L_att"]) == 0.0 and float(values["L_rep"]) == 0.0
    pan = float(values["L_sem"]) + 0.1 * float(values["L_cen"]) + 10 * float(values["L_emb"])
    assert float(values["L_pan"]) == pytest.approx(pan, rel=1e-6)


def test_gradcheck_command(capsys):
    assert cli_main(["gradcheck", "--variant", "residual-excite", "--seed", "9"]) == 0
    assert "max_rel_err=" in capsys.readouterr().out


def test_drop_sim_command(capsys):
    assert cli_main(["drop-sim", "--p", "0.5", "--steps", "2000", "--seed", "1"]) == 0
    summary = dict(line.split("=") for line in capsys.readouterr().out.splitlines())
    assert int(summary["steps"]) == 2000
    assert int(summary["rgb_drops"]) + int(summary["depth_drops"]) == int(summary["total_drops"])


@pytest.mark.parametrize("argv", [[], ["nope"], ["drop-sim", "--p", "2", "--steps", "3"],
                                  ["drop-sim", "--p", "x", "--steps", "3"], ["gradcheck", "--variant", "cbam"]])
def test_argument_errors(argv, capsys):
    assert cli_main(argv) == 2
    assert capsys.readouterr().err


def test_format_errors(tmp_path, capsys):
    (tmp_path / "bad.pten").write_bytes(b"XXXX\x01\x01\x01\x01\x00\x00\x00\x00\x00\x80\x3f")
    write_tensor(tmp_path / "ok.pten", np.ones((1, 2, 2)))
    argv = ["infer", "--sem", str(tmp_path / "bad.pten"), "--cen", str(tmp_path / "ok.pten"),
            "--emb", str(tmp_path / "ok.pten"), "--out", str(tmp_path / "o.pmsk")]
    assert cli_main(argv) == 3
    assert "magic" in capsys.readouterr().err


def test_config_error_exit_code(tmp_path, capsys):
    (tmp_path / "c.cfg").write_text("bogus = 1\n")
    mask = PanopticMask(np.zeros((2, 2)), np.zeros((2, 2)))
    write_mask(tmp_path / "m.pmsk", mask)
    argv = ["eval", "--pred", str(tmp_path / "m.pmsk"), "--gt", str(tmp_path / "m.pmsk"),
            "--config", str(tmp_path / "c.cfg")]
    assert cli_main(argv) == 3
    assert "bogus" in capsys.readouterr().err


def test_missing_file_is_argument_error(tmp_path):
    assert cli_main(["eval", "--pred", str(tmp_path / "nope"), "--gt", str(tmp_path / "nope")]) == 2
