import logging
from typing import Any, Dict

import numpy as np


def _as_array(data: Any) -> np.ndarray:
    """Converte `data` (Tensor, lista ou ndarray) em ndarray float64 achatado."""
    if hasattr(data, "data") and isinstance(getattr(data, "data"), np.ndarray):
        data = data.data
    return np.asarray(data, dtype=np.float64).ravel()


def calculate_metrics(exact_data: Any, approx_data: Any) -> Dict[str, Any]:
    """
    Calcula métricas element-wise entre exact_data e approx_data.
    Retorna dict com: count, mse, mae, max_error, mare (erro relativo absoluto médio).
    """
    exact = _as_array(exact_data)
    approx = _as_array(approx_data)
    n = min(exact.size, approx.size)
    if n == 0:
        return {"count": 0, "mse": 0.0, "mae": 0.0, "max_error": 0.0, "mare": None}
    if exact.size != approx.size:
        logging.warning(f"[error_analyzer] tamanhos diferentes ({exact.size} vs {approx.size}), usando {n}")

    diff = approx[:n] - exact[:n]
    absdiff = np.abs(diff)
    eps = 1e-12
    return {
        "count": int(n),
        "mse": float(np.mean(diff * diff)),
        "mae": float(np.mean(absdiff)),
        "max_error": float(np.max(absdiff)),
        "mare": float(np.mean(absdiff / (np.abs(exact[:n]) + eps))),
    }
