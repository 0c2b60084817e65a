"""Atualização SGD (θ ← θ − η·g) em ordem fixa de parâmetros"""

import math
from typing import Dict, Mapping

import numpy as np

from src.engine.autograd import GradStore
from src.engine.tensor import Tensor
from src.errors import ArgumentError, InternalError


def sgd_step(params: Mapping[str, Tensor], grads: GradStore, lr: float) -> Dict[str, Tensor]:
    """
    Devolve novos parâmetros θ' = θ − lr·g, percorrendo os nomes em ordem
    ordenada. A taxa é convertida para o dtype de cada parâmetro antes da
    multiplicação.
    """
    if not (lr > 0) or not math.isfinite(lr):
        raise ArgumentError(f"Taxa de aprendizado precisa ser > 0, recebido {lr}")
    updated: Dict[str, Tensor] = {}
    for name in sorted(params):
        theta = params[name]
        if name not in grads:
            raise InternalError(f"Gradiente ausente para o parâmetro '{name}'")
        g = grads[name].data
        if g.shape != theta.data.shape:
            raise InternalError(f"Gradiente de '{name}' com shape {g.shape} != {theta.shape}")
        step = theta.data.dtype.type(lr) * g.astype(theta.data.dtype, copy=False)
        updated[name] = Tensor(theta.data - step)
    return updated
