"""Dense float64 tensors with reverse-mode autodiff, probability maps, GRU, optimizers."""

from .gru import GRUParams, gru_cell, gru_recurrence, project_inputs
from .optim import Optimizer, adam_step, clip_grad_norm, global_norm, rmsprop_step
from .params import Linear, clone, copy_into, detached, load_arrays, named_tensors
from .tensor import (
    GradTape,
    Tensor,
    add,
    affine,
    as_tensor,
    backward,
    concat,
    div,
    elu,
    exp,
    getitem,
    matmul,
    mean,
    mul,
    neg,
    relu,
    reshape,
    sigmoid,
    square,
    stack,
    sub,
    tabs,
    take_last,
    tanh,
    transpose,
    tsum,
)
from .transforms import (
    softmax_array,
    softmax_rows,
    sparsemax_array,
    sparsemax_backward,
    sparsemax_rows,
    sparsemax_threshold,
)
