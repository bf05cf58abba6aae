"""End-to-end CLI runs on tiny corpora, plus the error-line contract."""

import csv

import numpy as np
import pytest

from dronewatch import imaging
from dronewatch.cli import main


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    """A tiny generated corpus shared by the CLI tests."""
    out = tmp_path_factory.mktemp("run")
    rc = main(["generate", "--out", str(out), "--seed", "3",
               "--duration", "40", "--train-duration", "30",
               "--abnormal-fraction", "0.25", "--image-size", "48"])
    assert rc == 0
    return out


def test_generate_outputs(run_dir):
    for name in ("train.log", "eval.log", "truth.csv", "base.png"):
        assert (run_dir / name).exists(), name
    frames = list((run_dir / "frames_eval").glob("*.png"))
    assert len(frames) == 40
    with open(run_dir / "truth.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40
    assert sum(r["label"] == "abnormal" for r in rows) == 10


def test_generated_frames_are_loadable(run_dir):
    img = imaging.load_image(run_dir / "frames_eval" / "000000.png")
    assert img.shape == (64, 64)


def test_full_cli_pipeline(run_dir, tmp_path):
    imu_ckpt = tmp_path / "imu.ckpt"
    rc = main(["train-imu", "--log", str(run_dir / "train.log"),
               "--out", str(imu_ckpt), "--epochs", "15", "--seed", "1"])
    assert rc == 0 and imu_ckpt.exists()

    angle_ckpt = tmp_path / "angle.ckpt"
    rc = main(["pretrain-angle", "--out", str(angle_ckpt), "--corpus-size", "100",
               "--image-size", "48", "--pairs", "150", "--epochs", "1", "--seed", "1"])
    assert rc == 0 and angle_ckpt.exists()

    tuned_ckpt = tmp_path / "angle_ft.ckpt"
    rc = main(["finetune-angle", "--model", str(angle_ckpt),
               "--log", str(run_dir / "train.log"), "--out", str(tuned_ckpt),
               "--pairs", "60", "--epochs", "1", "--seed", "1"])
    assert rc == 0 and tuned_ckpt.exists()

    scores_csv = tmp_path / "scores.csv"
    report_csv = tmp_path / "report.csv"
    angles_csv = tmp_path / "angles.csv"
    rc = main(["score", "--log", str(run_dir / "eval.log"),
               "--imu-model", str(imu_ckpt), "--angle-model", str(tuned_ckpt),
               "--reference", str(run_dir / "frames_train" / "000000.png"),
               "--out", str(scores_csv), "--truth", str(run_dir / "truth.csv"),
               "--report", str(report_csv), "--angle-threshold", "30",
               "--angles-out", str(angles_csv)])
    assert rc == 0 and scores_csv.exists() and report_csv.exists()
    with open(scores_csv) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 40
    assert set(r["label"] for r in rows) <= {"normal", "abnormal"}
    with open(angles_csv) as fh:
        arows = list(csv.DictReader(fh))
    assert len(arows) == 40
    assert set(arows[0].keys()) == {"timestamp", "angle_degrees", "sigma_l"}
    for r in arows:
        assert float(r["sigma_l"]) == float(r["angle_degrees"]) / 90.0

    rc = main(["evaluate", "--scores", str(scores_csv),
               "--truth", str(run_dir / "truth.csv"),
               "--out", str(tmp_path / "report2.csv")])
    assert rc == 0


def test_pca_command(tmp_path):
    rng = np.random.default_rng(0)
    feats = tmp_path / "features.csv"
    with open(feats, "w", newline="") as fh:
        import csv as _csv

        w = _csv.writer(fh)
        w.writerow(["timestamp", "f1", "f2", "f3"])
        for i in range(30):
            row = rng.standard_normal(3) * [5.0, 1.0, 0.1]
            w.writerow([0.1 * i] + [repr(float(v)) for v in row])
    out = tmp_path / "proj.csv"
    rc = main(["pca", "--features", str(feats), "--out", str(out)])
    assert rc == 0
    with open(out) as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 30
    assert set(rows[0].keys()) == {"timestamp", "pc1", "pc2"}


def test_error_line_is_machine_parseable(capsys, tmp_path):
    rc = main(["train-imu", "--log", str(tmp_path / "missing.log"),
               "--out", str(tmp_path / "x.ckpt")])
    assert rc == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ")
    assert ":" in err[len("error: "):]


def test_malformed_log_error_via_cli(capsys, tmp_path):
    bad = tmp_path / "bad.log"
    bad.write_text("imu_mag 0.5 1.0\n")
    rc = main(["train-imu", "--log", str(bad), "--out", str(tmp_path / "x.ckpt")])
    assert rc == 1
    assert "error: LogParseError" in capsys.readouterr().err


def test_generate_determinism(tmp_path):
    a = tmp_path / "a"
    b = tmp_path / "b"
    for out in (a, b):
        rc = main(["generate", "--out", str(out), "--seed", "9",
                   "--duration", "12", "--train-duration", "8",
                   "--abnormal-fraction", "0.25", "--image-size", "48"])
        assert rc == 0
    assert (a / "eval.log").read_bytes() == (b / "eval.log").read_bytes()
    assert (a / "train.log").read_bytes() == (b / "train.log").read_bytes()
    assert (a / "frames_eval" / "000003.png").read_bytes() == \
           (b / "frames_eval" / "000003.png").read_bytes()
