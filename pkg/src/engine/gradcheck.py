"""Diferenças finitas centrais (verificação de gradientes e ataque DLG)"""

from typing import Callable, Dict

import numpy as np


def numerical_gradient(fn: Callable[[np.ndarray], float], x: np.ndarray, eps: float = 1e-5) -> np.ndarray:
    """
    Gradiente de `fn` em `x` por diferenças centrais, célula a célula.
    `x` é perturbado no lugar e restaurado a cada passo.
    """
    grad = np.zeros(x.shape, dtype=np.float64)
    flat = x.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + eps
        f_plus = float(fn(x))
        flat[i] = original - eps
        f_minus = float(fn(x))
        flat[i] = original
        out[i] = (f_plus - f_minus) / (2 * eps)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, atol: float = 1e-7, floor: float = 1e-12) -> float:
    """
    max(‖a − n‖ − atol, 0) / max(‖a‖ + ‖n‖, floor): zero quando
    ‖a − n‖ ≤ atol, como em `np.allclose`. Gradientes quase nulos (bias com
    ~1e-13) ficam abaixo do ruído das diferenças finitas.
    """
    a = np.asarray(analytic, dtype=np.float64).reshape(-1)
    n = np.asarray(numeric, dtype=np.float64).reshape(-1)
    denom = max(float(np.linalg.norm(a) + np.linalg.norm(n)), floor)
    return max(float(np.linalg.norm(a - n)) - atol, 0.0) / denom


def check_gradients(loss_of: Callable[[Dict[str, np.ndarray]], float], analytic: Dict[str, np.ndarray],
                    values: Dict[str, np.ndarray], eps: float = 1e-5, atol: float = 1e-7) -> Dict[str, float]:
    """Erro relativo por tensor entre gradiente analítico e numérico"""
    errors = {}
    for name, value in values.items():
        def partial(v, _name=name):
            return loss_of({**values, _name: v})
        numeric = numerical_gradient(partial, value, eps)
        errors[name] = relative_error(analytic[name], numeric, atol)
    return errors
