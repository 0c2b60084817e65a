"""Motor de tensores com diferenciação automática em modo reverso"""

from src.engine.autograd import ARITY, BACKWARD, OP_KINDS, GradStore, GraphNode, Tape, backward
from src.engine.kernels import (
    conv2d_forward,
    embedding_forward,
    skip_conv2d_forward,
    skip_embedding_forward,
)
from src.engine.optim import sgd_step
from src.engine.tensor import Tensor

__all__ = [
    "ARITY", "BACKWARD", "OP_KINDS", "GradStore", "GraphNode", "Tape", "Tensor", "backward",
    "conv2d_forward", "embedding_forward", "skip_conv2d_forward", "skip_embedding_forward", "sgd_step",
]
