#!/usr/bin/env python3
"""The whole pipeline end to end on a generated corpus: train both models on
a normal-only log, score a mixed log, fuse with the default weights, and
evaluate against ground truth. Also reproduces the 2-component PCA
cluster diagnostic and saves the plot.

Runtime: several minutes (angle pretraining dominates).
"""

import subprocess
import sys
import tempfile
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from dronewatch import harness, imu

OUT = Path(__file__).parent / "output"
OUT.mkdir(exist_ok=True)
work = Path(tempfile.mkdtemp(prefix="dronewatch_demo_"))
print(f"working in {work}")


def cli(*args):
    cmd = [sys.executable, "-m", "dronewatch", *map(str, args)]
    print("$", " ".join(cmd[2:]))
    subprocess.run(cmd, check=True)


cli("generate", "--out", work, "--seed", "0",
    "--duration", "1000", "--train-duration", "900", "--abnormal-fraction", "0.3")
cli("train-imu", "--log", work / "train.log", "--out", work / "imu.ckpt")
cli("pretrain-angle", "--out", work / "angle.ckpt")
cli("finetune-angle", "--model", work / "angle.ckpt", "--log", work / "train.log",
    "--out", work / "angle_ft.ckpt")
cli("score", "--log", work / "eval.log",
    "--imu-model", work / "imu.ckpt", "--angle-model", work / "angle_ft.ckpt",
    "--reference", work / "frames_train" / "000000.png",
    "--out", work / "scores.csv",
    "--truth", work / "truth.csv", "--report", work / "report.csv")
cli("evaluate", "--scores", work / "scores.csv", "--truth", work / "truth.csv")

# PCA cluster diagnostic on normalized IMU features
log = harness.load_log(work / "eval.log")
truth = {lab.timestamp: lab.label for lab in harness.read_truth_csv(work / "truth.csv")}
ts, feats = harness.aligned_feature_matrix(log)
model = imu.load_model(work / "imu.ckpt")
normed = np.hstack([model.data_stats.apply(feats[:, :10]),
                    model.mag_stats.apply(feats[:, 10:])])
pca = harness.pca_diagnostic(normed, k=2)
colors = np.array([truth[t] == "abnormal" for t in ts])
fig, ax = plt.subplots(figsize=(6, 5))
ax.scatter(pca.projected[~colors, 0], pca.projected[~colors, 1], s=8, label="normal")
ax.scatter(pca.projected[colors, 0], pca.projected[colors, 1], s=8, label="abnormal")
ax.set_xlabel(f"pc1 ({pca.explained_variance_ratio[0]:.0%} of variance)")
ax.set_ylabel(f"pc2 ({pca.explained_variance_ratio[1]:.0%} of variance)")
ax.legend()
ax.set_title("IMU features, 2-component projection")
fig.tight_layout()
fig.savefig(OUT / "pca_clusters.png", dpi=120)
print(f"wrote {OUT / 'pca_clusters.png'}")
print(f"artifacts left in {work}")
