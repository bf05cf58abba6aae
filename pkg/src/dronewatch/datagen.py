"""Synthetic corpus generation.

Three generators cover the pipeline end to end: rotation-augmented image
pairs for angle training, paired IMU streams with injected faults, and
frame streams tied to the same ground-truth labels. Everything is a pure
function of (spec, seed); ground-truth labels are returned in a separate
record that no training operation accepts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter

from .imaging import (FrameSample, largest_clean_square, preprocess_array,
                      resize_bilinear, rotate_about_center)
from .imu import ImuDataSample, ImuMagSample

NORMAL = "normal"
ABNORMAL = "abnormal"

GRAVITY = 9.81


# ---------------------------------------------------------------------------
# images

def rotate_image(image: np.ndarray, theta_degrees: float) -> np.ndarray:
    """Rotate a square image about its center and return an artifact-free result.

    Bilinear rotation, center crop to the largest square that contains no
    out-of-frame samples, then resample back to the source size. A zero
    angle returns the input unchanged; quarter turns are exact pixel
    permutations.
    """
    img = np.asarray(image, dtype=np.float32)
    if img.ndim != 2 or img.shape[0] != img.shape[1]:
        raise ValueError(f"rotate_image requires a square 2D image, got shape {img.shape}")
    if not -180.0 <= theta_degrees <= 180.0:
        raise ValueError(f"rotation angle must lie in [-180, 180], got {theta_degrees}")
    size = img.shape[0]
    full = rotate_about_center(img, theta_degrees)
    side, off = largest_clean_square(size, theta_degrees)
    crop = full[off:off + side, off:off + side]
    return resize_bilinear(crop, size, size)


def texture_corpus(count: int, size: int = 96, seed: int = 0) -> list[np.ndarray]:
    """Procedural training corpus: oriented scenes the angle task is learnable on.

    Each image layers a directional brightness ramp and an off-center blob
    (both rotate with the scene and carry no 180-degree ambiguity), one or
    two sinusoidal gratings at random orientations, and smoothed noise,
    then normalizes to [0, 1]. Deterministic per seed.
    """
    if count < 1:
        raise ValueError("corpus count must be >= 1")
    rng = np.random.default_rng(seed)
    ax = np.linspace(-0.5, 0.5, size)
    yy, xx = np.meshgrid(ax, ax, indexing="ij")
    corpus = []
    for _ in range(count):
        phi = rng.uniform(0.0, 2.0 * math.pi)
        img = 1.6 * (math.cos(phi) * xx + math.sin(phi) * yy)
        az = rng.uniform(0.0, 2.0 * math.pi)
        radius = rng.uniform(0.18, 0.3)
        bx, by = radius * math.cos(az), radius * math.sin(az)
        spread = rng.uniform(0.06, 0.12) ** 2
        img = img + rng.choice([-1.0, 1.0]) * 0.9 * np.exp(
            -((xx - bx) ** 2 + (yy - by) ** 2) / (2.0 * spread))
        for _ in range(int(rng.integers(1, 3))):
            ang = rng.uniform(0.0, math.pi)
            freq = rng.uniform(2.5, 6.0)
            phase = rng.uniform(0.0, 2.0 * math.pi)
            amp = rng.uniform(0.25, 0.45)
            img = img + amp * np.sin(
                2.0 * math.pi * freq * (math.cos(ang) * xx + math.sin(ang) * yy) + phase)
        rough = rng.standard_normal((size, size))
        smooth = gaussian_filter(rough, sigma=rng.uniform(2.0, 4.0))
        img = img + 0.35 * smooth / max(np.abs(smooth).max(), 1e-9)
        lo, hi = img.min(), img.max()
        corpus.append(((img - lo) / (hi - lo)).astype(np.float32))
    return corpus


@dataclass(frozen=True, eq=False)
class AnglePair:
    """A (reference, rotated candidate) pair with its rotation label in degrees."""

    reference: FrameSample
    candidate: FrameSample
    label_degrees: float


@dataclass(frozen=True, eq=False)
class AnglePairSplit:
    """Disjoint train/validation pair sets, split 80/20 by source image."""

    train: list[AnglePair]
    val: list[AnglePair]
    train_sources: list[int]
    val_sources: list[int]


def make_angle_pairs(corpus: list[np.ndarray], count: int, seed: int = 0) -> AnglePairSplit:
    """Build labeled rotation pairs from a corpus of square images.

    Each pair is (original, rotate(original, theta)) with theta uniform in
    [0, 90] degrees. Source images are partitioned 80/20 and train and
    validation pairs never share a source.
    """
    if not corpus:
        raise ValueError("corpus must be nonempty")
    if count < 1:
        raise ValueError("pair count must be >= 1")
    for i, img in enumerate(corpus):
        a = np.asarray(img)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"corpus image {i} is not square: shape {a.shape}")
    rng = np.random.default_rng(seed)
    n = len(corpus)
    order = rng.permutation(n)
    n_train = max(1, round(0.8 * n))
    train_sources = sorted(int(i) for i in order[:n_train])
    val_sources = sorted(int(i) for i in order[n_train:])
    n_val_pairs = round(0.2 * count) if val_sources else 0
    n_train_pairs = count - n_val_pairs

    ref_cache: dict[int, np.ndarray] = {}

    def build(sources: list[int], k: int) -> list[AnglePair]:
        idx = rng.choice(sources, size=k)
        thetas = rng.uniform(0.0, 90.0, size=k)
        pairs = []
        for j in range(k):
            src = int(idx[j])
            theta = float(thetas[j])
            if src not in ref_cache:
                ref_cache[src] = preprocess_array(corpus[src])
            cand = preprocess_array(rotate_image(corpus[src], theta))
            pairs.append(AnglePair(reference=FrameSample(float(j), ref_cache[src]),
                                   candidate=FrameSample(float(j), cand),
                                   label_degrees=theta))
        return pairs

    train = build(train_sources, n_train_pairs)
    val = build(val_sources, n_val_pairs) if n_val_pairs else []
    return AnglePairSplit(train=train, val=val,
                          train_sources=train_sources, val_sources=val_sources)


# ---------------------------------------------------------------------------
# IMU streams

@dataclass(frozen=True)
class FaultMenu:
    """Injected fault magnitudes. Documented constants, tuned so that the
    PCA diagnostic separates the classes clearly at the default noise levels."""

    tilt_low: float = 30.0       # degrees
    tilt_high: float = 90.0      # degrees
    gyro_bias: float = 2.0       # rad/s
    accel_bias: float = 5.0      # m/s^2
    mag_spike: float = 250000.0  # raw field units

    def __post_init__(self) -> None:
        if not 0.0 < self.tilt_low <= self.tilt_high:
            raise ValueError("need 0 < tilt_low <= tilt_high")


@dataclass(frozen=True)
class SyntheticRunSpec:
    """Parameters of one synthetic telemetry run."""

    seed: int = 0
    duration: int = 1000
    abnormal_fraction: float = 0.0
    faults: FaultMenu = field(default_factory=FaultMenu)
    dt: float = 0.1
    # rare co-occurring high-noise (turbulence) timestamps in the normal class
    turbulence_fraction: float = 0.02
    turbulence_factor: float = 4.0

    def __post_init__(self) -> None:
        if self.duration < 1:
            raise ValueError("duration must be >= 1")
        if not 0.0 <= self.abnormal_fraction < 1.0:
            raise ValueError("abnormal_fraction must lie in [0, 1)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")


@dataclass(frozen=True)
class LabeledTimestamp:
    """Ground truth for evaluation only; never fed to training."""

    timestamp: float
    label: str
    tilt_degrees: float


def _quat_from_euler(roll, pitch, yaw) -> np.ndarray:
    cr, sr = np.cos(roll / 2), np.sin(roll / 2)
    cp, sp = np.cos(pitch / 2), np.sin(pitch / 2)
    cy, sy = np.cos(yaw / 2), np.sin(yaw / 2)
    return np.stack([
        cr * cp * cy + sr * sp * sy,
        sr * cp * cy - cr * sp * sy,
        cr * sp * cy + sr * cp * sy,
        cr * cp * sy - sr * sp * cy,
    ], axis=-1)


def _world_to_body(q: np.ndarray, v_world: np.ndarray) -> np.ndarray:
    """Rotate a world vector into the body frame of each quaternion (w,x,y,z)."""
    w = q[:, :1]
    u = -q[:, 1:]  # conjugate: body <- world
    v = np.broadcast_to(v_world, (q.shape[0], 3))
    uv = np.cross(u, v)
    return v + 2.0 * (w * uv + np.cross(u, uv))


def make_imu_stream(spec: SyntheticRunSpec):
    """Generate paired IMU/data and IMU/mag streams plus ground-truth labels.

    Normal samples follow smooth low-noise attitude trajectories; abnormal
    timestamps carry a large tilt plus gyro/accelerometer bias and a
    magnetometer spike, so both streams are disturbed at the same moments.
    Returns (data_samples, mag_samples, labels).
    """
    rng = np.random.default_rng(spec.seed)
    n = spec.duration
    t = np.arange(n) * spec.dt

    # trajectory shape: amplitudes are scene constants so independently
    # seeded runs share one normal manifold; phases and periods vary per run
    yaw_amp = 0.35
    yaw_periods = rng.uniform(40.0, 80.0, size=2)
    yaw_phases = rng.uniform(0.0, 2.0 * math.pi, size=2)
    rp_amp = math.radians(2.0)
    rp_periods = rng.uniform(6.0, 14.0, size=2)
    rp_phases = rng.uniform(0.0, 2.0 * math.pi, size=2)

    yaw = (yaw_amp * np.sin(2 * math.pi * t / yaw_periods[0] + yaw_phases[0])
           + 0.3 * yaw_amp * np.sin(2 * math.pi * t / yaw_periods[1] + yaw_phases[1]))
    roll = rp_amp * np.sin(2 * math.pi * t / rp_periods[0] + rp_phases[0])
    pitch = rp_amp * np.sin(2 * math.pi * t / rp_periods[1] + rp_phases[1])

    # euler rates, analytic derivatives of the sinusoids above
    yaw_rate = (yaw_amp * (2 * math.pi / yaw_periods[0])
                * np.cos(2 * math.pi * t / yaw_periods[0] + yaw_phases[0])
                + 0.3 * yaw_amp * (2 * math.pi / yaw_periods[1])
                * np.cos(2 * math.pi * t / yaw_periods[1] + yaw_phases[1]))
    roll_rate = rp_amp * (2 * math.pi / rp_periods[0]) * np.cos(
        2 * math.pi * t / rp_periods[0] + rp_phases[0])
    pitch_rate = rp_amp * (2 * math.pi / rp_periods[1]) * np.cos(
        2 * math.pi * t / rp_periods[1] + rp_phases[1])

    # magnetic field: one fixed world-frame vector (same site for every run),
    # raw units chosen so normal body-frame components swing within +-400000
    b_world = np.array([200000.0 * math.cos(0.35), 200000.0 * math.sin(0.35), -300000.0])

    # noise draws (vectorized up front for determinism)
    noise_q = rng.standard_normal((n, 4))
    noise_w = rng.standard_normal((n, 3))
    noise_a = rng.standard_normal((n, 3))
    noise_m = rng.standard_normal((n, 3))
    heavy = rng.random(n) < spec.turbulence_fraction
    factor = np.where(heavy, spec.turbulence_factor, 1.0)[:, None]

    # abnormal selection and fault draws; a run's faults share one signature
    # (fixed bias directions, narrow tilt-azimuth band) the way a real failure
    # episode does, with per-timestamp magnitude jitter
    k = round(spec.abnormal_fraction * n)
    abnormal_idx = np.sort(rng.choice(n, size=k, replace=False)) if k else np.empty(0, np.intp)
    tilts = rng.uniform(spec.faults.tilt_low, spec.faults.tilt_high, size=k)
    base_azimuth = rng.uniform(0.0, 2.0 * math.pi)
    azimuths = base_azimuth + rng.uniform(-0.4, 0.4, size=k)

    def unit_row() -> np.ndarray:
        v = rng.standard_normal(3)
        return v / np.linalg.norm(v)

    gyro_dirs = unit_row() * rng.uniform(0.8, 1.2, size=(k, 1))
    accel_dirs = unit_row() * rng.uniform(0.8, 1.2, size=(k, 1))
    mag_dirs = unit_row() * rng.uniform(0.8, 1.2, size=(k, 1))

    roll_eff = roll.copy()
    pitch_eff = pitch.copy()
    if k:
        tilt_rad = np.radians(tilts)
        roll_eff[abnormal_idx] += tilt_rad * np.cos(azimuths)
        pitch_eff[abnormal_idx] += tilt_rad * np.sin(azimuths)

    q = _quat_from_euler(roll_eff, pitch_eff, yaw)
    q = q + 0.0005 * factor * noise_q
    q = q / np.linalg.norm(q, axis=1, keepdims=True)

    omega = np.stack([roll_rate, pitch_rate, yaw_rate], axis=1) + 0.01 * factor * noise_w
    accel = _world_to_body(q, np.array([0.0, 0.0, GRAVITY])) + 0.05 * factor * noise_a
    mag = _world_to_body(q, b_world) + 600.0 * factor * noise_m

    if k:
        omega[abnormal_idx] += spec.faults.gyro_bias * gyro_dirs
        accel[abnormal_idx] += spec.faults.accel_bias * accel_dirs
        mag[abnormal_idx] += spec.faults.mag_spike * mag_dirs

    abnormal_set = set(int(i) for i in abnormal_idx)
    tilt_by_idx = {int(i): float(v) for i, v in zip(abnormal_idx, tilts)}

    data_samples = []
    mag_samples = []
    labels = []
    for i in range(n):
        ts = float(t[i])
        data_samples.append(ImuDataSample(
            timestamp=ts,
            orientation=tuple(float(v) for v in q[i]),
            angular_velocity=tuple(float(v) for v in omega[i]),
            linear_acceleration=tuple(float(v) for v in accel[i])))
        mag_samples.append(ImuMagSample(timestamp=ts, field=tuple(float(v) for v in mag[i])))
        if i in abnormal_set:
            labels.append(LabeledTimestamp(ts, ABNORMAL, tilt_by_idx[i]))
        else:
            labels.append(LabeledTimestamp(ts, NORMAL, 0.0))
    return data_samples, mag_samples, labels


def make_frame_stream(base_image: np.ndarray, labels: list[LabeledTimestamp],
                      seed: int = 0, jitter_degrees: float = 3.0) -> list[FrameSample]:
    """Emit one frame per labeled timestamp.

    Normal timestamps rotate the base image by a small jitter angle drawn
    uniformly from [-jitter, +jitter]; abnormal timestamps rotate it by the
    injected tilt. Output frames are preprocessed to 64x64.
    """
    base = np.asarray(base_image, dtype=np.float32)
    if base.ndim != 2 or base.shape[0] != base.shape[1]:
        raise ValueError(f"base image must be square, got shape {base.shape}")
    for lab in labels:
        if lab.label == NORMAL and lab.tilt_degrees != 0.0:
            raise ValueError(f"normal timestamp {lab.timestamp} carries tilt {lab.tilt_degrees}")
        if lab.label == ABNORMAL and not lab.tilt_degrees > 0.0:
            raise ValueError(f"abnormal timestamp {lab.timestamp} carries no tilt")
    rng = np.random.default_rng(seed)
    jitter = rng.uniform(-jitter_degrees, jitter_degrees, size=len(labels))
    frames = []
    for i, lab in enumerate(labels):
        theta = lab.tilt_degrees if lab.label == ABNORMAL else float(jitter[i])
        frames.append(FrameSample(lab.timestamp,
                                  preprocess_array(rotate_image(base, theta))))
    return frames
