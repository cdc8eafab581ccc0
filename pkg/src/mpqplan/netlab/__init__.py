"""Toy networks, training, and exact second-order differentiation."""

from .arch import resnet18, resnet50
from .autodiff import HessianOperator, forward, grad, hvp
from .data import Batch, Dataset, gaussian_blobs, load_mpqd, pattern_images, save_mpqd, split
from .descriptor import LayerSpec, ModelDescriptor, ParamVector
from .net import Network, QuadraticModel, build, convnet, mlp, without_batchnorm
from .train import TrainingDiverged, TrainSchedule, evaluate, fit_full_batch, predict, train

__all__ = [
    "Batch", "Dataset", "HessianOperator", "LayerSpec", "ModelDescriptor", "Network",
    "ParamVector", "QuadraticModel", "TrainSchedule", "TrainingDiverged", "build", "convnet",
    "evaluate", "fit_full_batch", "forward", "gaussian_blobs", "grad", "hvp", "load_mpqd", "mlp",
    "pattern_images", "predict", "resnet18", "resnet50", "save_mpqd", "split", "train",
    "without_batchnorm",
]
