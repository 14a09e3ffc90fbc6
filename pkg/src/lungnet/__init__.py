"""lungnet: SE-attention MobileNetV2 lung X-ray classification kit.

A self-contained NumPy implementation of the full pipeline: differentiable
layers with hand-derived backward passes, the squeeze-and-excitation block,
MobileNetV2 / MobileNet-Lung builders, dataset ingestion with a stratified
80/10/10 split, the seeded augmentation chain, the momentum-SGD training
recipe with step LR decay and early stopping, evaluation metrics, a binary
checkpoint format, a CLI, and a scikit-learn style estimator.
"""

__version__ = "0.1.0"

from .attention import SEBlock, se_excite, se_scale, se_squeeze
from .dataset import (ArraySource, DatasetIndex, ImageFolderSource,
                      compute_norm_stats, read_index_csv, scan_dataset,
                      stratified_split, write_index_csv)
from .estimator import LungNetClassifier, check_image_batch
from .checkpoint import load_weights, save_weights
from .gradcheck import gradient_check, model_gradient_check
from .layers import (BatchNorm2d, Conv2d, Dropout, GlobalAvgPool, Identity,
                     Layer, Linear, ReLU6, Sigmoid, he_init, sigmoid)
from .metrics import (ConfusionMatrix, MetricsReport, compute_report,
                      confusion, format_table, write_report_csv)
from .models import (ModelConfig, build_mobilenet_lung, build_mobilenet_v2,
                     build_model, count_params, mini_config, param_breakdown,
                     set_trainable)
from .synthetic import SyntheticSpec, generate_dataset
from .training import (SGD, TrainConfig, TrainingLog, cross_entropy,
                       early_stop_check, evaluate, lr_at_epoch,
                       read_training_log, save_training_log, softmax,
                       train_loop)
from .transforms import (AugmentConfig, NormStats, augment, hflip, normalize,
                         norm_stats_from_images, resize, rotate, vflip)

__all__ = [
    "ArraySource", "AugmentConfig", "BatchNorm2d", "ConfusionMatrix",
    "Conv2d", "DatasetIndex", "Dropout", "GlobalAvgPool", "Identity",
    "ImageFolderSource", "Layer", "Linear", "LungNetClassifier",
    "MetricsReport", "ModelConfig", "NormStats", "ReLU6", "SEBlock", "SGD",
    "Sigmoid", "SyntheticSpec", "TrainConfig", "TrainingLog", "augment",
    "build_mobilenet_lung", "build_mobilenet_v2", "build_model",
    "check_image_batch", "compute_norm_stats", "compute_report", "confusion",
    "count_params", "cross_entropy", "early_stop_check", "evaluate",
    "format_table", "generate_dataset", "gradient_check", "he_init", "hflip",
    "load_weights", "lr_at_epoch", "mini_config", "model_gradient_check",
    "normalize", "norm_stats_from_images", "param_breakdown",
    "read_index_csv", "read_training_log", "resize", "rotate",
    "save_training_log", "save_weights", "scan_dataset", "se_excite",
    "se_scale", "se_squeeze", "set_trainable", "sigmoid", "softmax",
    "stratified_split", "train_loop", "vflip", "write_index_csv",
    "write_report_csv",
]
