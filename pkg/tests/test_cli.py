import filecmp
import json
import subprocess
import sys

import pytest

from kal.cli import main
from kal.io import read_csv

SMALL = {
    "N0": 20, "M": 4, "t_end": 1.0, "snapshot_count": 33, "seed": 7,
    "observables": [{"kind": "constant"}, {"kind": "gaussian", "a": 0.5}],
    "omega_samples": 16,
}


def write_config(tmp_path, name="c.json", **over):
    cfg = dict(SMALL, **over)
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


def test_run_is_byte_identical_on_rerun(tmp_path, capsys):
    cfg = write_config(tmp_path)
    assert main(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(cfg), "--out", str(tmp_path / "b")]) == 0
    for name in ("moments.csv", "correlations.csv", "residuals.csv", "selfsim.csv", "meta.json"):
        assert filecmp.cmp(tmp_path / "a" / name, tmp_path / "b" / name, shallow=False)
    assert "seed=7" in capsys.readouterr().out


def test_seed_override(tmp_path):
    cfg = write_config(tmp_path)
    main(["run", str(cfg), "--out", str(tmp_path / "a")])
    main(["run", str(cfg), "--out", str(tmp_path / "b"), "--seed", "8"])
    assert json.loads((tmp_path / "b" / "meta.json").read_text())["seed"] == 8
    assert not filecmp.cmp(tmp_path / "a" / "moments.csv", tmp_path / "b" / "moments.csv", shallow=False)


def test_bad_config_exits_1(tmp_path, capsys):
    cfg = write_config(tmp_path, N0=21)
    assert main(["run", str(cfg)]) == 1
    err = capsys.readouterr().err
    assert "N0" in err and "Traceback" not in err


def test_unwritable_output_exits_3(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    cfg = write_config(tmp_path, output_dir=str(blocker))
    assert main(["run", str(cfg)]) == 3
    assert main(["run", str(tmp_path / "nope.json")]) == 3


def test_oracle_command(tmp_path):
    cfg = write_config(tmp_path)
    assert main(["oracle", str(cfg), "--out", str(tmp_path / "o")]) == 0
    assert (tmp_path / "o" / "oracle_moments.csv").exists()
    assert (tmp_path / "o" / "oracle_deathchain.csv").exists()
    hs = write_config(tmp_path, "hs.json", kernel={"family": "hard_sphere"})
    assert main(["oracle", str(hs), "--out", str(tmp_path / "o")]) == 1


def test_sweep_command(tmp_path):
    cfg = write_config(tmp_path, alpha=0.0, snapshot_count=3, t_end=0.5)
    assert main(["sweep", str(cfg), "--n0", "10,20", "--out", str(tmp_path / "s")]) == 0
    rows = read_csv(tmp_path / "s" / "sweep.csv")
    assert {r["N0"] for r in rows} == {"10", "20"}
    assert all(float(r["abs_error"]) == 0 for r in rows if r["observable_id"].startswith("const"))
    assert main(["sweep", str(cfg), "--n0", "10,15"]) == 1


def test_plotdata_command(tmp_path):
    cfg = write_config(tmp_path)
    out = tmp_path / "r"
    main(["run", str(cfg), "--out", str(out)])
    main(["oracle", str(cfg), "--out", str(out)])
    assert main(["plotdata", str(out)]) == 0
    tidy = read_csv(out / "tidy.csv")
    assert {"moments", "correlations", "residuals", "selfsim", "oracle_moments"} <= {r["source"] for r in tidy}
    for png in ("moments.png", "correlations.png", "residuals.png", "selfsim.png"):
        assert (out / png).stat().st_size > 0
    empty = tmp_path / "empty"
    empty.mkdir()
    assert main(["plotdata", str(empty)]) == 3


def test_verify_single_criterion(tmp_path, capsys):
    assert main(["verify", "--only", "4", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "criterion  4 PASS" in out
    report = json.loads((tmp_path / "verify.json").read_text())
    assert report["passed"] and report["criteria"][0]["criterion"] == 4
    assert main(["verify", "--only", "13"]) == 1


def test_console_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kal.cli", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "verify" in proc.stdout


def test_worker_count_respects_env(tmp_path):
    code = "from kal.ensemble import worker_count; print(worker_count())"
    proc = subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                          env={"KAL_THREADS": "1", "PATH": ""})
    assert proc.stdout.strip() == "1"


@pytest.mark.parametrize("argv", [[], ["frobnicate"]])
def test_usage_errors(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
