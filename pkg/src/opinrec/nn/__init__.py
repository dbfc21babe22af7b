from .autograd import (
    ShapeError,
    Tape,
    Tensor,
    add,
    backward,
    concat,
    dropout,
    embedding_lookup,
    get_tape,
    index,
    log_softmax,
    matmul,
    mean,
    mul,
    nll,
    no_grad,
    op_apply,
    sigmoid,
    softmax,
    squared_error,
    stack,
    sub,
    sum,
    tanh,
    transpose,
)
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .layers import LSTMCellParams, ParamStore, lstm_step, uniform_param, zeros_param
from .optim import Adagrad, adagrad_update
