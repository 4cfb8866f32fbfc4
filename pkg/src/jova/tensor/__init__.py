"""Reverse-mode automatic differentiation on numpy arrays."""
from jova.tensor.engine import (
    LAYER_NORM_EPS,
    Parameter,
    Tape,
    Tensor,
    add,
    as_tensor,
    concat,
    current_tape,
    default_dtype,
    embedding_lookup,
    gather_rows,
    get_default_dtype,
    getitem,
    layer_norm,
    masked_softmax,
    matmul,
    mean,
    mse_loss,
    mul,
    recurrent_step,
    relu,
    reshape,
    set_default_dtype,
    sigmoid,
    stack,
    sub,
    sum_,
    tanh,
    transpose,
)
from jova.tensor.optim import Adam
from jova.tensor.checkpoint import (
    CHECKPOINT_MAGIC,
    decode_manifest,
    encode_manifest,
    load_checkpoint,
    save_checkpoint,
)
from jova.tensor.gradcheck import GradCheckResult, check_gradients, relative_error

__all__ = [name for name in dir() if not name.startswith("_")]
