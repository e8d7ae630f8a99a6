"""Array autodiff core: tensors, layers, optimizer, checkpoints."""

from . import functional
from .checkpoint import read_checkpoint, write_checkpoint
from .gradcheck import check_gradients, relative_error
from .nn import (
    EVAL_STATE,
    AttentionPool,
    Conv2d,
    Dropout,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    PatchMerge,
    RunState,
    TransformerLayer,
    assign_dropout_ids,
    trunc_normal,
)
from .optim import AdamW, step_decay_lr
from .tensor import (
    ActivationCounter,
    Tensor,
    add,
    concat,
    debug_checks_enabled,
    exp,
    is_grad_enabled,
    log,
    matmul,
    max_along,
    maximum_scalar,
    mean,
    mul,
    no_grad,
    power,
    reshape,
    set_debug_checks,
    sqrt,
    sum_,
    take,
    tanh,
    tensor,
    transpose,
    where_mask,
)

__all__ = [
    "Tensor",
    "tensor",
    "no_grad",
    "is_grad_enabled",
    "set_debug_checks",
    "debug_checks_enabled",
    "ActivationCounter",
    "add",
    "mul",
    "power",
    "sqrt",
    "exp",
    "log",
    "tanh",
    "matmul",
    "reshape",
    "transpose",
    "sum_",
    "mean",
    "maximum_scalar",
    "max_along",
    "concat",
    "take",
    "where_mask",
    "functional",
    "Module",
    "RunState",
    "EVAL_STATE",
    "Linear",
    "Conv2d",
    "LayerNorm",
    "Dropout",
    "MultiHeadAttention",
    "TransformerLayer",
    "AttentionPool",
    "PatchMerge",
    "assign_dropout_ids",
    "trunc_normal",
    "AdamW",
    "step_decay_lr",
    "write_checkpoint",
    "read_checkpoint",
    "check_gradients",
    "relative_error",
]
