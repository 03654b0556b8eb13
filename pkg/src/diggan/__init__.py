"""Cross-view gait identification with an identity-preserving
view-transfer GAN, plus the full synthesis/training/evaluation pipeline
around it."""

__version__ = "0.1.0"

from .gei import GeiImage, SilhouetteSequence, compute_gei, estimate_gait_cycle
from .data import SampleRecord, SplitSpec, scan_dataset, split_train_test
from .losses import LossWeights
from .networks import ModelParams, init_params
from .training import TrainConfig, run_curriculum
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .evaluation import EvalReport, eval_cooperative, eval_uncooperative

__all__ = [
    "GeiImage", "SilhouetteSequence", "compute_gei", "estimate_gait_cycle",
    "SampleRecord", "SplitSpec", "scan_dataset", "split_train_test",
    "LossWeights", "ModelParams", "init_params",
    "TrainConfig", "run_curriculum",
    "Checkpoint", "load_checkpoint", "save_checkpoint",
    "EvalReport", "eval_cooperative", "eval_uncooperative",
]
