"""Differentiable numpy tensors, Adam, initialization, half-precision emulation, checkpoints."""

from .checkpoint import FORMAT_VERSION, CheckpointError, load_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, grad_check
from .half import HALF_MAX, is_half_exact, quantize_half, round_half
from .init import param_rng, xavier_uniform_init
from .optim import AdamState, NonFiniteGradientError, adam_step
from .tensor import (
    FULL,
    HALF,
    ShapeError,
    Tensor,
    add,
    as_tensor,
    concat,
    dropout,
    embedding,
    gelu,
    gradients,
    is_grad_enabled,
    layer_norm,
    make_op,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    softmax,
    stack,
    sub,
    tensor_sum,
    transpose,
)
