from .tensor import Tensor, no_grad, NonFiniteError
from .layers import Module, Linear, LayerNorm, DenseBlock, DenseStack, MLP, SelfAttention, masked_mean
from .losses import LossWeights, composite_loss, smooth_l1_loss, bce_with_logits, axis_aligned_iou
from .optim import TrainConfig, AdamWState, adamw_step, PlateauState, scheduler_step
from .gradcheck import grad_check

__all__ = [
    "Tensor", "no_grad", "NonFiniteError", "Module", "Linear", "LayerNorm", "DenseBlock",
    "DenseStack", "MLP", "SelfAttention", "masked_mean", "LossWeights", "composite_loss",
    "smooth_l1_loss", "bce_with_logits", "axis_aligned_iou", "TrainConfig", "AdamWState",
    "adamw_step", "PlateauState", "scheduler_step", "grad_check",
]
