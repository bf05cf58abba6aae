"""Unsupervised anomaly detection for autonomous-vehicle telemetry.

Twin IMU autoencoders and a Siamese angle-regression network produce
per-modality degrees of abnormality that a weighted sum fuses into a
single score with a fixed decision threshold.
"""

__version__ = "0.1.0"

from . import nn
from . import imaging
from . import imu
from . import datagen
from . import angle
from . import fusion
from . import harness

__all__ = ["nn", "imaging", "imu", "datagen", "angle", "fusion", "harness",
           "__version__"]
