"""Two-stage hierarchical LSTM for group activity recognition."""

from .estimator import GroupActivityClassifier
from .hierarchy import ModelConfig, ModelVariant, TrainedModel, build_model, evaluate, fit, predict
from .pooling import PoolingConfig
from .scenegen import Scene, TaskSpec, Tracklet, generate_dataset
from .trainer import TrainHyper

__version__ = "0.1.0"

__all__ = [
    "GroupActivityClassifier", "ModelConfig", "ModelVariant", "PoolingConfig", "Scene", "TaskSpec",
    "TrainHyper", "TrainedModel", "Tracklet", "build_model", "evaluate", "fit", "generate_dataset",
    "predict",
]
