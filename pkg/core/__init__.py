"""Core do toolkit ASL.

Re-exporta as peças usadas com mais frequência nos scripts e testes.
"""

from core.assignment import GroundTruthInstance, assign_video
from core.dataset import SyntheticConfig, generate, load_dataset
from core.errors import ASLError, ConfigError, DataError, FormatError, NumericsError
from core.evaluation import EvalConfig, mean_ap
from core.inference import Detection, InferenceConfig, detect, soft_nms
from core.model import ASLModel, ModelConfig, init_model
from core.sensitivity import SensitivityConfig
from core.trainer import TrainConfig, train

__all__ = [
    "ASLError",
    "ASLModel",
    "ConfigError",
    "DataError",
    "Detection",
    "EvalConfig",
    "FormatError",
    "GroundTruthInstance",
    "InferenceConfig",
    "ModelConfig",
    "NumericsError",
    "SensitivityConfig",
    "SyntheticConfig",
    "TrainConfig",
    "assign_video",
    "detect",
    "generate",
    "init_model",
    "load_dataset",
    "mean_ap",
    "soft_nms",
    "train",
]
