"""Log ingestion, timestamp alignment, evaluation metrics, PCA diagnostic,
and the end-to-end scoring pipeline.

Sensor-log format (line-delimited text, whitespace-separated tokens;
blank lines and lines starting with '#' are ignored):

    imu_data TIMESTAMP QW QX QY QZ WX WY WZ AX AY AZ
    imu_mag  TIMESTAMP BX BY BZ
    frame    TIMESTAMP IMAGE_PATH

Timestamps are seconds; each stream must be strictly increasing. Floats
are written with Python repr, so write_log/load_log round-trips exactly.
Frame paths are taken relative to the log file's directory.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .angle import AngleModel, load_model as load_angle_model, predict_angles
from .datagen import ABNORMAL, NORMAL, LabeledTimestamp
from .fusion import (AnomalyScore, FusionWeights, UnscorableTimestamp,
                     DEFAULT_THRESHOLD, fuse_stream)
from .imaging import FrameSample, load_image, preprocess_array
from .imu import (ImuAnomalyModel, ImuDataSample, ImuMagSample,
                  load_model as load_imu_model, normalize_quaternion,
                  score_data_batch, score_mag_batch)

DEFAULT_TOLERANCE = 0.05  # seconds; IMU at ~100 Hz vs camera at ~20-30 Hz


class LogParseError(ValueError):
    """Malformed sensor log; message carries the offending line number."""


@dataclass(frozen=True, eq=False)
class FrameRef:
    timestamp: float
    path: str


@dataclass(eq=False)
class SensorLog:
    """Parsed sensor log: two IMU streams plus the frame manifest."""

    data: list[ImuDataSample] = field(default_factory=list)
    mag: list[ImuMagSample] = field(default_factory=list)
    frames: list[FrameRef] = field(default_factory=list)
    root: Path | None = None  # directory for resolving frame paths
    line_numbers: dict[str, list[int]] = field(default_factory=dict)

    def validate(self) -> None:
        for name, stream in (("imu_data", self.data), ("imu_mag", self.mag),
                             ("frame", self.frames)):
            ts = [s.timestamp for s in stream]
            for a, b in zip(ts, ts[1:]):
                if not b > a:
                    raise LogParseError(
                        f"{name} timestamps not strictly increasing: {a} then {b}")

    def resolve_frame(self, ref: FrameRef) -> Path:
        p = Path(ref.path)
        if p.is_absolute() or self.root is None:
            return p
        return self.root / p


def _parse_floats(tokens: list[str], lineno: int):
    try:
        return [float(tok) for tok in tokens]
    except ValueError as exc:
        raise LogParseError(f"line {lineno}: bad numeric field: {exc}") from exc


def load_log(path) -> SensorLog:
    """Parse and invariant-check a sensor log file."""
    path = Path(path)
    log = SensorLog(root=path.parent)
    lines = {"imu_data": [], "imu_mag": [], "frame": []}
    last_ts: dict[str, tuple[float, int]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            tokens = line.split()
            tag = tokens[0]
            if tag == "imu_data":
                if len(tokens) != 12:
                    raise LogParseError(
                        f"line {lineno}: imu_data record needs 11 fields, got {len(tokens) - 1}")
                vals = _parse_floats(tokens[1:], lineno)
                if not all(math.isfinite(v) for v in vals):
                    raise LogParseError(f"line {lineno}: non-finite value")
                try:
                    quat = normalize_quaternion(tuple(vals[1:5]))
                except ValueError as exc:
                    raise LogParseError(f"line {lineno}: {exc}") from exc
                sample = ImuDataSample(timestamp=vals[0], orientation=quat,
                                       angular_velocity=tuple(vals[5:8]),
                                       linear_acceleration=tuple(vals[8:11]))
                log.data.append(sample)
            elif tag == "imu_mag":
                if len(tokens) != 5:
                    raise LogParseError(
                        f"line {lineno}: imu_mag record needs 4 fields, got {len(tokens) - 1}")
                vals = _parse_floats(tokens[1:], lineno)
                if not all(math.isfinite(v) for v in vals):
                    raise LogParseError(f"line {lineno}: non-finite value")
                log.mag.append(ImuMagSample(timestamp=vals[0], field=tuple(vals[1:4])))
            elif tag == "frame":
                if len(tokens) != 3:
                    raise LogParseError(
                        f"line {lineno}: frame record needs 2 fields, got {len(tokens) - 1}")
                ts = _parse_floats(tokens[1:2], lineno)[0]
                log.frames.append(FrameRef(timestamp=ts, path=tokens[2]))
            else:
                raise LogParseError(f"line {lineno}: unknown stream tag {tag!r}")
            stream_ts = log.data[-1].timestamp if tag == "imu_data" else (
                log.mag[-1].timestamp if tag == "imu_mag" else log.frames[-1].timestamp)
            if tag in last_ts:
                prev, prev_line = last_ts[tag]
                if not stream_ts > prev:
                    raise LogParseError(
                        f"line {lineno}: {tag} timestamp {stream_ts} does not increase "
                        f"past {prev} (line {prev_line})")
            last_ts[tag] = (stream_ts, lineno)
            lines[tag].append(lineno)
    log.line_numbers = lines
    return log


def _fmt(v: float) -> str:
    return repr(float(v))


def write_log(log: SensorLog, path) -> None:
    """Write a sensor log; floats keep full precision so reloads are exact."""
    log.validate()
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# dronewatch sensor log v1\n")
        records = []
        for s in log.data:
            fields = (*s.orientation, *s.angular_velocity, *s.linear_acceleration)
            records.append((s.timestamp, 0,
                            "imu_data " + _fmt(s.timestamp) + " "
                            + " ".join(_fmt(v) for v in fields)))
        for s in log.mag:
            records.append((s.timestamp, 1,
                            "imu_mag " + _fmt(s.timestamp) + " "
                            + " ".join(_fmt(v) for v in s.field)))
        for f in log.frames:
            records.append((f.timestamp, 2, f"frame {_fmt(f.timestamp)} {f.path}"))
        for _, _, line in sorted(records, key=lambda r: (r[0], r[1])):
            fh.write(line + "\n")


@dataclass(frozen=True, eq=False)
class AlignedRow:
    timestamp: float
    data: ImuDataSample
    mag: ImuMagSample | None
    frame: FrameRef | None


def _nearest(timestamps: np.ndarray, t: float) -> int:
    i = int(np.searchsorted(timestamps, t))
    best = i if i < len(timestamps) else len(timestamps) - 1
    if i > 0 and abs(timestamps[i - 1] - t) <= abs(timestamps[best] - t):
        best = i - 1
    return best


def align(log: SensorLog, tolerance_seconds: float = DEFAULT_TOLERANCE):
    """Attach the nearest mag sample and frame to each IMU/data timestamp.

    Matches farther than the tolerance are left as None. Returns
    (rows, unmatched) where unmatched lists (timestamp, missing streams).
    """
    if not tolerance_seconds > 0:
        raise ValueError(f"alignment tolerance must be positive, got {tolerance_seconds}")
    mag_ts = np.array([s.timestamp for s in log.mag])
    frame_ts = np.array([f.timestamp for f in log.frames])
    rows: list[AlignedRow] = []
    unmatched: list[tuple[float, tuple[str, ...]]] = []
    for s in log.data:
        mag = None
        if len(mag_ts):
            j = _nearest(mag_ts, s.timestamp)
            if abs(mag_ts[j] - s.timestamp) <= tolerance_seconds:
                mag = log.mag[j]
        frame = None
        if len(frame_ts):
            j = _nearest(frame_ts, s.timestamp)
            if abs(frame_ts[j] - s.timestamp) <= tolerance_seconds:
                frame = log.frames[j]
        rows.append(AlignedRow(timestamp=s.timestamp, data=s, mag=mag, frame=frame))
        missing = tuple(name for name, v in (("imu_mag", mag), ("frame", frame)) if v is None)
        if missing:
            unmatched.append((s.timestamp, missing))
    return rows, unmatched


@dataclass(frozen=True)
class EvalReport:
    """Confusion counts and the metrics derived from them ('abnormal' is
    the positive class)."""

    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @property
    def accuracy(self) -> float:
        return (self.tp + self.tn) / self.total if self.total else 0.0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if (self.tp + self.fp) else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if (self.tp + self.fn) else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if (p + r) else 0.0

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "tn": self.tn, "fn": self.fn,
                "accuracy": self.accuracy, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def evaluate(predictions: list[str], truth: list[str]) -> EvalReport:
    """Confusion counts over paired label lists; abnormal is positive."""
    if len(predictions) != len(truth):
        raise ValueError(
            f"length mismatch: {len(predictions)} predictions vs {len(truth)} truth labels")
    valid = {NORMAL, ABNORMAL}
    counts = {"tp": 0, "fp": 0, "tn": 0, "fn": 0}
    for p, t in zip(predictions, truth):
        if p not in valid or t not in valid:
            raise ValueError(f"labels must be '{NORMAL}' or '{ABNORMAL}', got ({p!r}, {t!r})")
        if t == ABNORMAL:
            counts["tp" if p == ABNORMAL else "fn"] += 1
        else:
            counts["fp" if p == ABNORMAL else "tn"] += 1
    return EvalReport(**counts)


@dataclass(frozen=True, eq=False)
class PcaResult:
    projected: np.ndarray                # (samples, k)
    explained_variance_ratio: np.ndarray  # (k,), descending


def pca_diagnostic(samples: np.ndarray, k: int = 2) -> PcaResult:
    """Project mean-centered samples onto the top-k principal directions.

    Ratios are each component's share of the total variance, so they sum
    to at most 1. Component signs are fixed deterministically. All-identical
    input has no principal directions and is rejected.
    """
    x = np.asarray(samples, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a (samples, features) matrix, got shape {x.shape}")
    n, d = x.shape
    if n < 2:
        raise ValueError(f"pca needs at least 2 samples, got {n}")
    if k < 1 or k > d:
        raise ValueError(f"component count must lie in [1, {d}], got {k}")
    centered = x - x.mean(axis=0)
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    total = float(np.sum(s * s))
    if total == 0.0:
        raise ValueError("degenerate input: all samples identical (rank 0)")
    for i in range(k):
        j = int(np.argmax(np.abs(vt[i])))
        if vt[i, j] < 0:
            vt[i] = -vt[i]
    return PcaResult(projected=centered @ vt[:k].T,
                     explained_variance_ratio=(s[:k] * s[:k]) / total)


def aligned_feature_matrix(log: SensorLog, tolerance_seconds: float = DEFAULT_TOLERANCE):
    """Per-timestamp concatenated IMU features (10 + 3) for rows with both
    streams present. Returns (timestamps, matrix)."""
    rows, _ = align(log, tolerance_seconds)
    kept = [r for r in rows if r.mag is not None]
    ts = np.array([r.timestamp for r in kept])
    feats = np.array([np.concatenate([r.data.features(), r.mag.features()]) for r in kept])
    return ts, feats


# ---------------------------------------------------------------------------
# pipeline

@dataclass(eq=False)
class PipelineConfig:
    log: SensorLog | str | Path
    imu_model: ImuAnomalyModel | str | Path
    angle_model: AngleModel | str | Path
    reference: object = "first"  # "first", image path, FrameSample or array
    weights: FusionWeights = field(default_factory=FusionWeights)
    threshold: float = DEFAULT_THRESHOLD
    tolerance: float = DEFAULT_TOLERANCE
    truth: list[LabeledTimestamp] | None = None
    scores_csv: str | Path | None = None
    report_csv: str | Path | None = None
    angles_csv: str | Path | None = None


@dataclass(eq=False)
class PipelineResult:
    scores: list[AnomalyScore]
    unscorable: list[UnscorableTimestamp]
    report: EvalReport | None


def _load_checkpoint(value, loader, which: str):
    if isinstance(value, (str, Path)):
        p = Path(value)
        if not p.exists():
            raise ValueError(f"missing {which} model checkpoint: {p}")
        return loader(p)
    return value


def _resolve_reference(config: PipelineConfig, log: SensorLog) -> np.ndarray:
    ref = config.reference
    if isinstance(ref, FrameSample):
        return ref.pixels
    if isinstance(ref, np.ndarray):
        return preprocess_array(ref)
    if ref == "first":
        if not log.frames:
            raise ValueError("log has no frames to use as the reference")
        return preprocess_array(load_image(log.resolve_frame(log.frames[0])))
    return preprocess_array(load_image(ref))


def run_pipeline(config: PipelineConfig) -> PipelineResult:
    """Score every aligned timestamp of a log, fuse, and optionally evaluate."""
    log = load_log(config.log) if isinstance(config.log, (str, Path)) else config.log
    imu_model = _load_checkpoint(config.imu_model, load_imu_model, "IMU")
    angle_model = _load_checkpoint(config.angle_model, load_angle_model, "angle")
    rows, _ = align(log, config.tolerance)
    if not rows:
        return PipelineResult(scores=[], unscorable=[], report=None)
    reference = _resolve_reference(config, log)

    sigma_d = score_data_batch([r.data for r in rows], imu_model)
    mag_rows = [i for i, r in enumerate(rows) if r.mag is not None]
    sigma_m: list[float | None] = [None] * len(rows)
    if mag_rows:
        scores_m = score_mag_batch([rows[i].mag for i in mag_rows], imu_model)
        for i, v in zip(mag_rows, scores_m):
            sigma_m[i] = float(v)
    frame_rows = [i for i, r in enumerate(rows) if r.frame is not None]
    sigma_l: list[float | None] = [None] * len(rows)
    if frame_rows:
        frames = [preprocess_array(load_image(log.resolve_frame(rows[i].frame)))
                  for i in frame_rows]
        angles = predict_angles(reference, frames, angle_model)
        for i, a in zip(frame_rows, angles):
            sigma_l[i] = float(a) / 90.0
    if config.angles_csv is not None:
        write_angles_csv(config.angles_csv,
                         [(rows[i].timestamp, float(a))
                          for i, a in zip(frame_rows, angles)] if frame_rows else [])

    triples = [(r.timestamp, float(sigma_d[i]), sigma_m[i], sigma_l[i])
               for i, r in enumerate(rows)]
    scores, unscorable = fuse_stream(triples, weights=config.weights,
                                     threshold=config.threshold)
    report = None
    if config.truth is not None:
        truth_by_ts = {lab.timestamp: lab.label for lab in config.truth}
        missing = [s.timestamp for s in scores if s.timestamp not in truth_by_ts]
        if missing:
            raise ValueError(f"{len(missing)} scored timestamps missing from ground "
                             f"truth, first: {missing[0]}")
        report = evaluate([s.label for s in scores],
                          [truth_by_ts[s.timestamp] for s in scores])
    if config.scores_csv is not None:
        write_scores_csv(config.scores_csv, scores, unscorable)
    if config.report_csv is not None and report is not None:
        write_report_csv(config.report_csv, report)
    return PipelineResult(scores=scores, unscorable=unscorable, report=report)


# ---------------------------------------------------------------------------
# CSV I/O (all files carry a header row)

def write_scores_csv(path, scores: list[AnomalyScore],
                     unscorable: list[UnscorableTimestamp] = ()) -> None:
    records = [(s.timestamp, 0, s) for s in scores] + \
              [(u.timestamp, 1, u) for u in unscorable]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "sigma_d", "sigma_m", "sigma_l", "N", "label"])
        for _, _, rec in sorted(records, key=lambda r: (r[0], r[1])):
            if isinstance(rec, AnomalyScore):
                w.writerow([_fmt(rec.timestamp), _fmt(rec.sigma_d), _fmt(rec.sigma_m),
                            _fmt(rec.sigma_l), _fmt(rec.n), rec.label])
            else:
                w.writerow([_fmt(rec.timestamp), "", "", "", "",
                            "unscorable:" + "+".join(rec.missing)])


def read_scores_csv(path):
    """Returns (scores, unscorable) parsed from a scores CSV."""
    scores, unscorable = [], []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            if row["label"].startswith("unscorable"):
                missing = tuple(row["label"].split(":", 1)[1].split("+")) \
                    if ":" in row["label"] else ()
                unscorable.append(UnscorableTimestamp(float(row["timestamp"]), missing))
            else:
                scores.append(AnomalyScore(
                    timestamp=float(row["timestamp"]), sigma_d=float(row["sigma_d"]),
                    sigma_m=float(row["sigma_m"]), sigma_l=float(row["sigma_l"]),
                    n=float(row["N"]), label=row["label"]))
    return scores, unscorable


def write_angles_csv(path, rows: list[tuple[float, float]]) -> None:
    """Per-frame angle predictions: (timestamp, angle_degrees, sigma_l)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "angle_degrees", "sigma_l"])
        for ts, angle in rows:
            w.writerow([_fmt(ts), _fmt(angle), _fmt(angle / 90.0)])


def write_truth_csv(path, labels: list[LabeledTimestamp]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["timestamp", "label", "tilt_degrees"])
        for lab in labels:
            w.writerow([_fmt(lab.timestamp), lab.label, _fmt(lab.tilt_degrees)])


def read_truth_csv(path) -> list[LabeledTimestamp]:
    out = []
    with open(path, "r", newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            out.append(LabeledTimestamp(timestamp=float(row["timestamp"]),
                                        label=row["label"],
                                        tilt_degrees=float(row["tilt_degrees"])))
    return out


def write_report_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["metric", "value"])
        for key, value in report.as_dict().items():
            w.writerow([key, _fmt(value) if isinstance(value, float) else value])
