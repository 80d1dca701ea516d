"""patternreg: multi-sensor time series regression via image-like grid encoding.

Pipeline: CSV sensor data -> gap-filled sample frames -> row-normalized
[0,1] image tensors -> small residual CNN with an average+max concat pooling
head -> single scalar prediction, trained under k-fold cross-validation.
"""

from .imageize import ImageTensor, denormalize, normalize
from .ingest import (DatasetManifest, SampleFrame, SensorChannel, SynthSpec,
                     forward_fill, generate_synthetic, load_dataset,
                     load_dataset_dir, save_dataset)
from .metrics import MetricsReport, linreg_baseline, mae, r2, render_curves, rmse
from .model import ArchConfig, RegressionNet, arch_config, build
from .optim import OptimizerConfig, make_optimizer
from .trainer import (FoldPlan, TrainConfig, load_checkpoint, make_folds,
                      predict, save_checkpoint, train)

__version__ = "0.1.0"

__all__ = [
    "ArchConfig", "DatasetManifest", "FoldPlan", "ImageTensor",
    "MetricsReport", "OptimizerConfig", "RegressionNet", "SampleFrame",
    "SensorChannel", "SynthSpec", "TrainConfig", "arch_config", "build",
    "denormalize", "forward_fill", "generate_synthetic", "linreg_baseline",
    "load_checkpoint", "load_dataset", "load_dataset_dir", "mae",
    "make_folds", "make_optimizer", "normalize", "predict", "r2",
    "render_curves", "rmse", "save_checkpoint", "save_dataset", "train",
]
