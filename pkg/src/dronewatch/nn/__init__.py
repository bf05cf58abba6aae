"""Minimal neural-network engine: layers, losses, optimizers, checkpoints."""

from .layers import (LayerSpec, activation, conv2d, dense, flatten, maxpool2d,
                     param_shapes, ACTIVATION_NAMES, LAYER_KINDS)
from .losses import mse_grad, mse_loss
from .network import Network, train_step
from .optim import SGD, Adam, make_optimizer
from .checkpoint import (CheckpointError, ModelCheckpoint, deserialize, load,
                         network_from_checkpoint, network_to_checkpoint,
                         pack_container, save, serialize, unpack_container)

__all__ = [
    "LayerSpec", "dense", "conv2d", "maxpool2d", "flatten", "activation",
    "param_shapes", "ACTIVATION_NAMES", "LAYER_KINDS",
    "mse_loss", "mse_grad", "Network", "train_step",
    "SGD", "Adam", "make_optimizer",
    "CheckpointError", "ModelCheckpoint", "serialize", "deserialize",
    "save", "load", "network_to_checkpoint", "network_from_checkpoint",
    "pack_container", "unpack_container",
]
