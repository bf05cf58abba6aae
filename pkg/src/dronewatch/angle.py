"""Siamese angle regression between a reference frame and a candidate frame.

Both 64x64 frames pass through a shared convolutional trunk; the two
embeddings are concatenated and a small dense head regresses the rotation
angle. The head's final activation is relu, so predicted angles are never
negative. Internally the regression target is angle/90, which is exactly
the image degree of abnormality; predict_angle() scales back to degrees.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .datagen import AnglePair, AnglePairSplit, make_angle_pairs, rotate_image
from .imaging import FRAME_SIZE, FrameSample, preprocess_array

MIN_CORPUS = 100
EMBED_DIM = 64 * 8 * 8

TRUNK_SPECS = [nn.conv2d(1, 16, 3), nn.activation("relu"), nn.maxpool2d(2),
               nn.conv2d(16, 32, 3), nn.activation("relu"), nn.maxpool2d(2),
               nn.conv2d(32, 64, 3), nn.activation("relu"), nn.maxpool2d(2),
               nn.flatten()]

HEAD_SPECS = [nn.dense(2 * EMBED_DIM, 128), nn.activation("relu"),
              nn.dense(128, 1), nn.activation("relu")]


@dataclass(frozen=True)
class AngleTrainConfig:
    seed: int = 0
    pairs: int = 4000
    epochs: int = 16
    batch_size: int = 32
    lr: float = 2e-3
    optimizer: str = "adam"


@dataclass(eq=False)
class AngleModel:
    """Shared trunk + regression head. meta['trained'] gates prediction."""

    trunk: nn.Network
    head: nn.Network
    meta: dict = field(default_factory=dict)

    def require_trained(self) -> None:
        if not self.meta.get("trained"):
            raise ValueError("angle model is not trained")

    def clone(self) -> "AngleModel":
        trunk = nn.Network(self.trunk.specs, seed=self.trunk.seed, dtype=self.trunk.dtype)
        head = nn.Network(self.head.specs, seed=self.head.seed, dtype=self.head.dtype)
        trunk.load_parameters(dict(self.trunk.parameters()))
        head.load_parameters(dict(self.head.parameters()))
        return AngleModel(trunk=trunk, head=head, meta=dict(self.meta))


INPUT_CENTER = 0.5  # frames arrive in [0, 1]; the trunk sees zero-centered pixels


def new_model(seed: int = 0) -> AngleModel:
    model = AngleModel(trunk=nn.Network(TRUNK_SPECS, seed=seed),
                       head=nn.Network(HEAD_SPECS, seed=seed + 1),
                       meta={"trained": False, "seed": seed})
    # start the relu output head at mid-range so its gradient is alive
    model.head.layers[2].b[...] = 0.5
    return model


def _as_pixels(frame) -> np.ndarray:
    px = frame.pixels if isinstance(frame, FrameSample) else np.asarray(frame, dtype=np.float32)
    if px.shape != (FRAME_SIZE, FRAME_SIZE):
        raise ValueError(f"expected a {FRAME_SIZE}x{FRAME_SIZE} frame, got shape {px.shape}")
    return px


def _forward_sigma(model: AngleModel, refs: np.ndarray, cands: np.ndarray) -> np.ndarray:
    """Predicted angle/90 for stacked (n, 64, 64, 1) reference/candidate arrays."""
    n = refs.shape[0]
    batch = np.concatenate([refs, cands], axis=0) - INPUT_CENTER
    emb = model.trunk.forward(batch)
    joint = np.concatenate([emb[:n], emb[n:]], axis=1)
    return model.head.forward(joint)[:, 0]


def _pairs_to_arrays(pairs: list[AnglePair]):
    refs = np.stack([p.reference.pixels for p in pairs])[..., None]
    cands = np.stack([p.candidate.pixels for p in pairs])[..., None]
    labels = np.array([p.label_degrees for p in pairs], dtype=np.float32)
    return refs, cands, labels


def _evaluate_degrees(model: AngleModel, pairs: list[AnglePair],
                      batch: int = 256) -> tuple[float, float]:
    """(MSE, MAE) of predicted angles in degrees over labeled pairs."""
    refs, cands, labels = _pairs_to_arrays(pairs)
    preds = np.empty(len(pairs), dtype=np.float64)
    for start in range(0, len(pairs), batch):
        sl = slice(start, start + batch)
        preds[sl] = 90.0 * _forward_sigma(model, refs[sl], cands[sl])
    err = preds - labels
    return float(np.mean(err * err)), float(np.mean(np.abs(err)))


def _train(model: AngleModel, split: AnglePairSplit, config: AngleTrainConfig) -> AngleModel:
    refs, cands, labels = _pairs_to_arrays(split.train)
    sigma = labels / 90.0
    opt = nn.make_optimizer(config.optimizer, config.lr)
    params = model.trunk.parameters("trunk.") + model.head.parameters("head.")
    grads = model.trunk.gradients("trunk.") + model.head.gradients("head.")
    rng = np.random.default_rng(config.seed)
    n = len(split.train)
    history = []
    for epoch in range(config.epochs):
        # step decay keeps late epochs refining instead of bouncing
        if config.epochs >= 4:
            if epoch == config.epochs // 2:
                opt.lr = config.lr * 0.5
            elif epoch == (3 * config.epochs) // 4:
                opt.lr = config.lr * 0.25
        perm = rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            idx = perm[start:start + config.batch_size]
            b = len(idx)
            out = _forward_sigma(model, refs[idx], cands[idx])
            diff = out - sigma[idx]
            epoch_loss += float(np.dot(diff, diff))
            model.trunk.zero_grads()
            model.head.zero_grads()
            demb = model.head.backward((2.0 / b) * diff[:, None])
            model.trunk.backward(np.concatenate([demb[:, :EMBED_DIM], demb[:, EMBED_DIM:]],
                                                axis=0))
            opt.step(params, grads)
        history.append(8100.0 * epoch_loss / n)  # degrees^2
    model.meta["trained"] = True
    train_mse, train_mae = _evaluate_degrees(model, split.train)
    model.meta.update({
        "epochs": config.epochs, "lr": config.lr, "optimizer": config.optimizer,
        "batch_size": config.batch_size, "train_pairs": len(split.train),
        "val_pairs": len(split.val), "train_mse_degrees": train_mse,
        "train_mae_degrees": train_mae, "loss_history_degrees": history,
    })
    if split.val:
        val_mse, val_mae = _evaluate_degrees(model, split.val)
        model.meta.update({"val_mse_degrees": val_mse, "val_mae_degrees": val_mae})
    return model


def pretrain(corpus: list[np.ndarray], config: AngleTrainConfig = AngleTrainConfig()) -> AngleModel:
    """Train a fresh model on rotation pairs synthesized from an image corpus.

    The corpus needs at least MIN_CORPUS distinct images; pairs are split
    80/20 by source image and the validation MSE/MAE land in model.meta.
    """
    distinct = len({np.asarray(img).tobytes() for img in corpus})
    if distinct < MIN_CORPUS:
        raise ValueError(
            f"corpus has {distinct} distinct images, minimum is {MIN_CORPUS}")
    split = make_angle_pairs(corpus, config.pairs, seed=config.seed)
    model = new_model(seed=config.seed)
    if config.epochs == 0:
        # usable but carries the untrained initialization
        model.meta["trained"] = True
        if split.val:
            val_mse, val_mae = _evaluate_degrees(model, split.val)
            model.meta.update({"val_mse_degrees": val_mse, "val_mae_degrees": val_mae,
                               "epochs": 0})
        return model
    return _train(model, split, config)


def finetune(model: AngleModel, normal_frames: list[FrameSample],
             config: AngleTrainConfig = AngleTrainConfig()) -> AngleModel:
    """Continue training on rotation pairs built from deployment frames.

    Pairs take their reference and candidate from (possibly different)
    normal frames, so the model also sees the small relative jitter that
    real consecutive frames carry. Returns a new model; the input model is
    untouched.
    """
    model.require_trained()
    if not normal_frames:
        raise ValueError("finetune requires at least one normal frame")
    if config.epochs == 0:
        return model.clone()
    rng = np.random.default_rng(config.seed)
    n = len(normal_frames)
    n_val_frames = n // 5 if n >= 5 else 0
    order = rng.permutation(n)
    val_frames = [int(i) for i in order[:n_val_frames]]
    train_frames = [int(i) for i in order[n_val_frames:]]
    n_val_pairs = round(0.2 * config.pairs) if val_frames else 0

    def build(frame_ids: list[int], k: int, t0: float = 0.0) -> list[AnglePair]:
        ref_ids = rng.choice(frame_ids, size=k)
        cand_ids = rng.choice(frame_ids, size=k)
        thetas = rng.uniform(0.0, 90.0, size=k)
        pairs = []
        for j in range(k):
            ref = normal_frames[int(ref_ids[j])]
            cand_px = preprocess_array(
                rotate_image(normal_frames[int(cand_ids[j])].pixels, float(thetas[j])))
            pairs.append(AnglePair(reference=FrameSample(t0 + j, ref.pixels),
                                   candidate=FrameSample(t0 + j, cand_px),
                                   label_degrees=float(thetas[j])))
        return pairs

    train_pairs = build(train_frames, config.pairs - n_val_pairs)
    val_pairs = build(val_frames, n_val_pairs) if n_val_pairs else []
    split = AnglePairSplit(train=train_pairs, val=val_pairs,
                           train_sources=train_frames, val_sources=val_frames)
    return _train(model.clone(), split, config)


def predict_angle(reference, candidate, model: AngleModel) -> float:
    """Estimated rotation angle in degrees between two frames; always >= 0."""
    model.require_trained()
    refs = _as_pixels(reference)[None, :, :, None]
    cands = _as_pixels(candidate)[None, :, :, None]
    return float(90.0 * _forward_sigma(model, refs, cands)[0])


def predict_angles(reference, candidates, model: AngleModel, batch: int = 256) -> np.ndarray:
    """Angles between one reference frame and many candidates."""
    model.require_trained()
    ref = _as_pixels(reference)
    if len(candidates) == 0:
        return np.zeros(0)
    cands = np.stack([_as_pixels(c) for c in candidates])[..., None]
    refs = np.broadcast_to(ref[None, :, :, None], cands.shape)
    out = np.empty(len(candidates), dtype=np.float64)
    for start in range(0, len(candidates), batch):
        sl = slice(start, start + batch)
        out[sl] = 90.0 * _forward_sigma(model, np.ascontiguousarray(refs[sl]), cands[sl])
    return out


def sigma_angle(angle_degrees: float) -> float:
    """Image degree of abnormality: angle / 90."""
    if angle_degrees < 0:
        raise ValueError(f"angle must be nonnegative, got {angle_degrees}")
    return angle_degrees / 90.0


def classify_by_angle(angle_degrees: float, threshold_degrees: float = 30.0) -> str:
    """'abnormal' iff the angle meets the threshold (boundary inclusive)."""
    if not threshold_degrees > 0:
        raise ValueError(f"threshold must be positive, got {threshold_degrees}")
    return "abnormal" if angle_degrees >= threshold_degrees else "normal"


def save_model(path, model: AngleModel) -> None:
    header = {
        "trunk_specs": [s.to_json() for s in model.trunk.specs],
        "head_specs": [s.to_json() for s in model.head.specs],
        "input": {"size": FRAME_SIZE, "range": [0.0, 1.0], "colorspace": "grayscale",
                  "center": INPUT_CENTER},
        "meta": model.meta,
    }
    tensors = dict(model.trunk.parameters("trunk.") + model.head.parameters("head."))
    with open(path, "wb") as fh:
        fh.write(nn.pack_container("angle-regressor", header, tensors))


def load_model(path) -> AngleModel:
    with open(path, "rb") as fh:
        _, header, tensors = nn.unpack_container(fh.read(), expect_kind="angle-regressor")
    meta = dict(header["meta"])
    trunk = nn.Network([nn.LayerSpec.from_json(s) for s in header["trunk_specs"]],
                       seed=int(meta.get("seed", 0)))
    head = nn.Network([nn.LayerSpec.from_json(s) for s in header["head_specs"]],
                      seed=int(meta.get("seed", 0)) + 1)
    trunk.load_parameters(tensors, prefix="trunk.")
    head.load_parameters(tensors, prefix="head.")
    return AngleModel(trunk=trunk, head=head, meta=meta)
