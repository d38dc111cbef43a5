"""Pooling-attention transformer backbone with HR stream, built on a small numpy autodiff engine."""
from .backbone import HmrTargets, Potter, hmr_loss, regress_joints
from .config import PRESETS, ModelConfig, get_preset, load_config
from .tensor import GradTape, Tensor

__version__ = "0.1.0"

__all__ = ["HmrTargets", "Potter", "hmr_loss", "regress_joints", "PRESETS", "ModelConfig", "get_preset",
           "load_config", "GradTape", "Tensor"]
