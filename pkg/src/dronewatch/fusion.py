"""Weighted fusion of per-modality degrees into one degree of abnormality.

N = w_d * sigma_d + w_m * sigma_m + w_l * sigma_l, abnormal iff N >= 1.
The default weights (1, 0.9, 0.75) and the unit threshold are the
empirically chosen operating point; both are configurable.
"""

from __future__ import annotations

from dataclasses import dataclass

NORMAL = "normal"
ABNORMAL = "abnormal"
DEFAULT_THRESHOLD = 1.0


@dataclass(frozen=True)
class FusionWeights:
    w_d: float = 1.0
    w_m: float = 0.9
    w_l: float = 0.75

    def __post_init__(self) -> None:
        if self.w_d < 0 or self.w_m < 0 or self.w_l < 0:
            raise ValueError("fusion weights must be nonnegative")
        if self.w_d == self.w_m == self.w_l == 0:
            raise ValueError("at least one fusion weight must be positive")


@dataclass(frozen=True)
class AnomalyScore:
    timestamp: float
    sigma_d: float
    sigma_m: float
    sigma_l: float
    n: float
    label: str


@dataclass(frozen=True)
class UnscorableTimestamp:
    """A timestamp that could not be fused because degrees were missing."""

    timestamp: float
    missing: tuple[str, ...]


def fuse(sigma_d: float, sigma_m: float, sigma_l: float,
         weights: FusionWeights = FusionWeights(),
         threshold: float = DEFAULT_THRESHOLD,
         timestamp: float = 0.0) -> AnomalyScore:
    """Combine three degrees into the final degree of abnormality N."""
    for name, value in (("sigma_d", sigma_d), ("sigma_m", sigma_m), ("sigma_l", sigma_l)):
        if value < 0:
            raise ValueError(f"{name} must be nonnegative, got {value}")
    if not threshold > 0:
        raise ValueError(f"fusion threshold must be positive, got {threshold}")
    n = weights.w_d * sigma_d + weights.w_m * sigma_m + weights.w_l * sigma_l
    label = ABNORMAL if n >= threshold else NORMAL
    return AnomalyScore(timestamp=timestamp, sigma_d=sigma_d, sigma_m=sigma_m,
                        sigma_l=sigma_l, n=n, label=label)


def fuse_stream(triples, weights: FusionWeights = FusionWeights(),
                threshold: float = DEFAULT_THRESHOLD):
    """Fuse time-ordered (timestamp, sigma_d, sigma_m, sigma_l) tuples.

    A timestamp with any missing degree (None) is reported in the second
    return value instead of being dropped. Returns (scores, unscorable),
    both in input order.
    """
    names = ("sigma_d", "sigma_m", "sigma_l")
    timestamps = [t for t, *_ in triples]
    if any(b < a for a, b in zip(timestamps, timestamps[1:])):
        raise ValueError("fuse_stream input must be ordered by timestamp")
    scores: list[AnomalyScore] = []
    unscorable: list[UnscorableTimestamp] = []
    for ts, sd, sm, sl in triples:
        missing = tuple(name for name, v in zip(names, (sd, sm, sl)) if v is None)
        if missing:
            unscorable.append(UnscorableTimestamp(timestamp=ts, missing=missing))
            continue
        scores.append(fuse(sd, sm, sl, weights=weights, threshold=threshold, timestamp=ts))
    return scores, unscorable
