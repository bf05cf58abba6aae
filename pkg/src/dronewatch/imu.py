"""Twin autoencoders over the two IMU streams.

One autoencoder reconstructs orientation/velocity/acceleration samples,
the other magnetometer samples. They are trained jointly on normal data
with the summed reconstruction loss, and score a sample by dividing its
reconstruction error by the maximum error seen on the training set.
Training-set samples therefore score at most 1.0 by construction; scores
above 1.0 mean the sample lies further off the learned manifold than
anything seen during training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import nn

DATA_FEATURES = 10  # quaternion(4) + angular velocity(3) + linear acceleration(3)
MAG_FEATURES = 3

DATA_SPECS = [nn.dense(10, 8), nn.activation("tanh"),
              nn.dense(8, 4), nn.activation("tanh"),
              nn.dense(4, 8), nn.activation("tanh"),
              nn.dense(8, 10), nn.activation("linear")]

MAG_SPECS = [nn.dense(3, 8), nn.activation("tanh"),
             nn.dense(8, 2), nn.activation("tanh"),
             nn.dense(2, 8), nn.activation("tanh"),
             nn.dense(8, 3), nn.activation("linear")]

# L_max floor for the degenerate case of an exactly memorized corpus
_L_MAX_FLOOR = 1e-12


@dataclass(frozen=True, eq=False)
class ImuDataSample:
    """Orientation + angular velocity + linear acceleration at one timestamp."""

    timestamp: float
    orientation: tuple[float, float, float, float]  # unit quaternion (w, x, y, z)
    angular_velocity: tuple[float, float, float]    # rad/s
    linear_acceleration: tuple[float, float, float]  # m/s^2

    def features(self) -> np.ndarray:
        return np.array(self.orientation + self.angular_velocity
                        + self.linear_acceleration, dtype=np.float64)


@dataclass(frozen=True, eq=False)
class ImuMagSample:
    """3-axis magnetometer reading at one timestamp (raw units, wide range)."""

    timestamp: float
    field: tuple[float, float, float]

    def features(self) -> np.ndarray:
        return np.array(self.field, dtype=np.float64)


def normalize_quaternion(q: tuple[float, float, float, float],
                         tol: float = 1e-3) -> tuple[float, float, float, float]:
    """Renormalize a quaternion whose norm is within tol of 1; reject otherwise.

    A quaternion already unit to float precision passes through unchanged,
    so loading a freshly written log does not perturb the last bit.
    """
    norm = math.sqrt(sum(v * v for v in q))
    if not math.isfinite(norm) or abs(norm - 1.0) > tol:
        raise ValueError(f"quaternion norm {norm} outside 1 +- {tol}")
    if abs(norm - 1.0) <= 1e-9:
        return tuple(q)
    return tuple(v / norm for v in q)


@dataclass(frozen=True, eq=False)
class NormalizationStats:
    """Per-feature min/max from the normal training set.

    apply() maps training-range features into [0, 1]; out-of-range values
    at inference are deliberately not clipped, their excursion is anomaly
    signal. Constant features map to 0.
    """

    lo: np.ndarray
    hi: np.ndarray

    @classmethod
    def fit(cls, features: np.ndarray) -> "NormalizationStats":
        x = np.asarray(features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] == 0:
            raise ValueError(f"stats need a nonempty (samples, features) matrix, got {x.shape}")
        if not np.isfinite(x).all():
            raise ValueError("features must be finite to fit normalization stats")
        return cls(lo=x.min(axis=0), hi=x.max(axis=0))

    @property
    def constant_mask(self) -> np.ndarray:
        return self.hi <= self.lo

    def apply(self, features: np.ndarray) -> np.ndarray:
        x = np.asarray(features, dtype=np.float64)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.shape[1] != self.lo.shape[0]:
            raise ValueError(
                f"feature count mismatch: stats cover {self.lo.shape[0]} features, got {x.shape[1]}")
        span = self.hi - self.lo
        safe = np.where(self.constant_mask, 1.0, span)
        out = (x - self.lo) / safe
        out[:, self.constant_mask] = 0.0
        return (out[0] if squeeze else out).astype(np.float32)


def normalize(sample, stats: NormalizationStats) -> np.ndarray:
    """Per-feature min-max normalization of one sample against training stats."""
    return stats.apply(sample.features())


@dataclass(frozen=True)
class ImuTrainConfig:
    seed: int = 0
    epochs: int = 40
    lr: float = 0.05
    optimizer: str = "sgd"


@dataclass(eq=False)
class ImuAnomalyModel:
    """Trained pair of autoencoders plus normalization stats and L_max values."""

    data_net: nn.Network
    mag_net: nn.Network
    data_stats: NormalizationStats
    mag_stats: NormalizationStats
    l_max_data: float
    l_max_mag: float
    meta: dict = field(default_factory=dict)

    def require_trained(self) -> None:
        if not (self.l_max_data > 0 and math.isfinite(self.l_max_data)
                and self.l_max_mag > 0 and math.isfinite(self.l_max_mag)):
            raise ValueError("model is not trained: L_max values are not positive finite")


def _feature_matrix(samples) -> np.ndarray:
    return np.stack([s.features() for s in samples])


def _recon_errors(net: nn.Network, x_norm: np.ndarray) -> np.ndarray:
    """Per-sample reconstruction MSE (mean over features, float64)."""
    y = net.forward(x_norm)
    d = y - x_norm
    return np.mean(np.square(d, dtype=np.float64), axis=1)


def _check_paired(normal_data, normal_mag) -> None:
    if len(normal_data) == 0 or len(normal_mag) == 0:
        raise ValueError("training requires nonempty IMU/data and IMU/mag streams")
    if len(normal_data) != len(normal_mag):
        raise ValueError(
            f"streams are not paired: {len(normal_data)} IMU/data vs {len(normal_mag)} IMU/mag samples")
    offenders = [(d.timestamp, m.timestamp)
                 for d, m in zip(normal_data, normal_mag)
                 if abs(d.timestamp - m.timestamp) > 1e-9]
    if offenders:
        shown = ", ".join(f"{d} vs {m}" for d, m in offenders[:5])
        raise ValueError(f"{len(offenders)} unpairable timestamps: {shown}")


def train_joint(normal_data: list[ImuDataSample], normal_mag: list[ImuMagSample],
                config: ImuTrainConfig = ImuTrainConfig()) -> ImuAnomalyModel:
    """Train both autoencoders on paired normal samples with loss L1 + L2.

    The parameter sets are disjoint; only the loss is shared. One optimizer
    step is taken per paired sample. After training, L_max per stream is
    the maximum per-sample reconstruction error over this training set.
    """
    _check_paired(normal_data, normal_mag)
    xd_raw = _feature_matrix(normal_data)
    xm_raw = _feature_matrix(normal_mag)
    data_stats = NormalizationStats.fit(xd_raw)
    mag_stats = NormalizationStats.fit(xm_raw)
    xd = data_stats.apply(xd_raw)
    xm = mag_stats.apply(xm_raw)

    data_net = nn.Network(DATA_SPECS, seed=config.seed)
    mag_net = nn.Network(MAG_SPECS, seed=config.seed + 1)
    opt = nn.make_optimizer(config.optimizer, config.lr)
    params = data_net.parameters("data.") + mag_net.parameters("mag.")
    grads = data_net.gradients("data.") + mag_net.gradients("mag.")

    def mean_joint_loss() -> float:
        return float(np.mean(_recon_errors(data_net, xd) + _recon_errors(mag_net, xm)))

    initial_loss = mean_joint_loss()
    rng = np.random.default_rng(config.seed)
    n = xd.shape[0]
    for _ in range(config.epochs):
        for i in rng.permutation(n):
            row_d = xd[i:i + 1]
            row_m = xm[i:i + 1]
            out_d = data_net.forward(row_d)
            out_m = mag_net.forward(row_m)
            data_net.zero_grads()
            mag_net.zero_grads()
            data_net.backward(nn.mse_grad(row_d, out_d))
            mag_net.backward(nn.mse_grad(row_m, out_m))
            opt.step(params, grads)
    final_loss = mean_joint_loss()
    converged = final_loss < initial_loss or final_loss <= 1e-12
    if config.epochs > 0 and config.lr > 0 and not converged:
        raise RuntimeError(
            f"joint training failed to improve: initial {initial_loss:.6g}, final {final_loss:.6g}")

    l_max_data = max(float(_recon_errors(data_net, xd).max()), _L_MAX_FLOOR)
    l_max_mag = max(float(_recon_errors(mag_net, xm).max()), _L_MAX_FLOOR)
    meta = {"seed": config.seed, "epochs": config.epochs, "lr": config.lr,
            "optimizer": config.optimizer, "samples": n,
            "initial_loss": initial_loss, "final_loss": final_loss}
    return ImuAnomalyModel(data_net=data_net, mag_net=mag_net,
                           data_stats=data_stats, mag_stats=mag_stats,
                           l_max_data=l_max_data, l_max_mag=l_max_mag, meta=meta)


def score_data(sample: ImuDataSample, model: ImuAnomalyModel) -> float:
    """Degree of abnormality of an IMU/data sample: MSE / L_max_data."""
    return float(score_data_batch([sample], model)[0])


def score_mag(sample: ImuMagSample, model: ImuAnomalyModel) -> float:
    """Degree of abnormality of an IMU/mag sample: MSE / L_max_mag."""
    return float(score_mag_batch([sample], model)[0])


def score_data_batch(samples: list[ImuDataSample], model: ImuAnomalyModel) -> np.ndarray:
    model.require_trained()
    if not samples:
        return np.zeros(0)
    x = model.data_stats.apply(_feature_matrix(samples))
    return _recon_errors(model.data_net, x) / model.l_max_data


def score_mag_batch(samples: list[ImuMagSample], model: ImuAnomalyModel) -> np.ndarray:
    model.require_trained()
    if not samples:
        return np.zeros(0)
    x = model.mag_stats.apply(_feature_matrix(samples))
    return _recon_errors(model.mag_net, x) / model.l_max_mag


def save_model(path, model: ImuAnomalyModel) -> None:
    model.require_trained()
    header = {
        "data_specs": [s.to_json() for s in model.data_net.specs],
        "mag_specs": [s.to_json() for s in model.mag_net.specs],
        "l_max_data": model.l_max_data,
        "l_max_mag": model.l_max_mag,
        "meta": model.meta,
    }
    tensors = dict(model.data_net.parameters("data.") + model.mag_net.parameters("mag."))
    tensors["stats.data.lo"] = model.data_stats.lo
    tensors["stats.data.hi"] = model.data_stats.hi
    tensors["stats.mag.lo"] = model.mag_stats.lo
    tensors["stats.mag.hi"] = model.mag_stats.hi
    with open(path, "wb") as fh:
        fh.write(nn.pack_container("imu-anomaly", header, tensors))


def load_model(path) -> ImuAnomalyModel:
    with open(path, "rb") as fh:
        _, header, tensors = nn.unpack_container(fh.read(), expect_kind="imu-anomaly")
    data_net = nn.Network([nn.LayerSpec.from_json(s) for s in header["data_specs"]],
                          seed=int(header["meta"].get("seed", 0)))
    mag_net = nn.Network([nn.LayerSpec.from_json(s) for s in header["mag_specs"]],
                         seed=int(header["meta"].get("seed", 0)) + 1)
    data_net.load_parameters(tensors, prefix="data.")
    mag_net.load_parameters(tensors, prefix="mag.")
    model = ImuAnomalyModel(
        data_net=data_net, mag_net=mag_net,
        data_stats=NormalizationStats(lo=tensors["stats.data.lo"], hi=tensors["stats.data.hi"]),
        mag_stats=NormalizationStats(lo=tensors["stats.mag.lo"], hi=tensors["stats.mag.hi"]),
        l_max_data=float(header["l_max_data"]), l_max_mag=float(header["l_max_mag"]),
        meta=dict(header["meta"]))
    model.require_trained()
    return model
