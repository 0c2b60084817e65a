"""
Métricas de ofuscação: perda de privacidade ε, perda de desempenho ρ e
espaços de busca por força bruta (por pixel e estrutural).
"""

import json
import math
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, Optional, Sequence, Tuple

import pandas as pd
from scipy.special import gammaln

from src.augment.data_augmenter import augmented_size
from src.errors import ArgumentError

LN10 = math.log(10.0)
EXACT_LIMIT = 2 ** 63


def _check_alpha(alpha: float) -> None:
    if not alpha >= 0 or not math.isfinite(alpha):
        raise ArgumentError(f"alpha precisa ser >= 0, recebido {alpha}")


def privacy_loss(alpha: float) -> float:
    """ε = 1/(1+α)"""
    _check_alpha(alpha)
    return 1.0 / (1.0 + alpha)


def perf_loss(alpha: float) -> float:
    """ρ = 1 − ε"""
    return 1.0 - privacy_loss(alpha)


def log10_comb_lgamma(n: int, k: int) -> float:
    return float((gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)) / LN10)


def log10_comb(n: int, k: int) -> float:
    """log10 C(n, k); exato abaixo de 2^63, log-gamma acima"""
    if k < 0 or k > n:
        raise ArgumentError(f"C({n}, {k}) indefinido")
    if min(k, n - k) < 64:
        exact = math.comb(n, k)
        if exact < EXACT_LIMIT:
            return math.log10(exact)
    return log10_comb_lgamma(n, k)


def search_space_count(modality: str, channels: int, dims: Sequence[int], alpha: float) -> Tuple[int, int]:
    """Contagens exatas (inteiros Python) por pixel e estrutural; para casos pequenos"""
    _check_alpha(alpha)
    if modality == "text":
        (length,) = dims
        length_a = augmented_size(length, alpha)
        count = math.comb(length_a, length_a - length)
        return count, count
    h, w = dims
    h_a, w_a = augmented_size(h, alpha), augmented_size(w, alpha)
    cells, cells_a = h * w, h_a * w_a
    per_pixel = channels * math.comb(cells_a, cells_a - cells) if cells_a > cells else 1
    return per_pixel, math.comb(h_a, h) * math.comb(w_a, w)


def search_space_log10(modality: str, channels: int, dims: Sequence[int], alpha: float) -> Tuple[float, float]:
    """
    (por pixel, estrutural) em log10.

    Por pixel: log10(canais) + log10 C(H_a·W_a, H_a·W_a − H·W) (texto: C(L', L'−L)).
    Estrutural: log10[C(H_a,H)·C(W_a,W)], o que a inserção de linhas/colunas de fato permite.
    Sem células inseridas ambos valem 0.
    """
    _check_alpha(alpha)
    if any(int(d) < 1 for d in dims) or channels < 1:
        raise ArgumentError(f"Dimensões precisam ser >= 1, recebido {list(dims)} x {channels}")
    if modality == "text":
        (length,) = dims
        length_a = augmented_size(length, alpha)
        value = log10_comb(length_a, length_a - length)
        return value, value
    if modality != "image":
        raise ArgumentError(f"Modalidade desconhecida '{modality}'")
    h, w = dims
    h_a, w_a = augmented_size(h, alpha), augmented_size(w, alpha)
    cells, cells_a = h * w, h_a * w_a
    per_pixel = 0.0
    if cells_a > cells:
        per_pixel = math.log10(channels) + log10_comb(cells_a, cells_a - cells)
    structural = log10_comb(h_a, h) + log10_comb(w_a, w)
    return per_pixel, structural


def parse_shape(text: str) -> Tuple[str, int, Tuple[int, ...]]:
    """'28x28x1' -> (image, 1, (28, 28)); '20' -> (text, 1, (20,))"""
    try:
        parts = [int(p) for p in text.lower().split("x")]
    except ValueError:
        raise ArgumentError(f"Shape inválido '{text}' (use HxWxC ou L)")
    if len(parts) == 1:
        return "text", 1, (parts[0],)
    if len(parts) == 2:
        return "image", 1, (parts[0], parts[1])
    if len(parts) == 3:
        return "image", parts[2], (parts[0], parts[1])
    raise ArgumentError(f"Shape inválido '{text}' (use HxWxC ou L)")


@dataclass
class PrivacyReport:
    alpha: float
    epsilon: float
    rho: float
    log10_space_pp: float
    log10_space_struct: float
    modality: str
    original_dims: Tuple[int, ...]
    augmented_dims: Tuple[int, ...]
    channels: int = 1
    P: Optional[int] = None
    A_m: Optional[int] = None
    s: Optional[int] = None

    def to_dict(self) -> Dict[str, Any]:
        data = asdict(self)
        data["original_dims"] = list(self.original_dims)
        data["augmented_dims"] = list(self.augmented_dims)
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)

    def summary_lines(self) -> Iterable[str]:
        yield f"alpha = {self.alpha:g}"
        yield f"epsilon (perda de privacidade) = {self.epsilon:.4f}"
        yield f"rho (perda de desempenho) = {self.rho:.4f}"
        yield f"dims: {'x'.join(map(str, self.original_dims))} -> {'x'.join(map(str, self.augmented_dims))}"
        yield f"espaço de busca por pixel: 10^{self.log10_space_pp:.4f}"
        yield f"espaço de busca estrutural: 10^{self.log10_space_struct:.4f}"
        if self.P is not None:
            yield f"parâmetros: P={self.P}, A_m={self.A_m}, s={self.s}"


def report(modality: str, channels: int, dims: Sequence[int], alpha: float, P: Optional[int] = None,
           A_m: Optional[int] = None, s: Optional[int] = None) -> PrivacyReport:
    per_pixel, structural = search_space_log10(modality, channels, dims, alpha)
    epsilon = privacy_loss(alpha)
    return PrivacyReport(
        alpha=alpha,
        epsilon=epsilon,
        rho=1.0 - epsilon,
        log10_space_pp=per_pixel,
        log10_space_struct=structural,
        modality=modality,
        original_dims=tuple(int(d) for d in dims),
        augmented_dims=tuple(augmented_size(int(d), alpha) for d in dims),
        channels=channels,
        P=P,
        A_m=A_m,
        s=s,
    )


def tradeoff_curve(alpha_grid: Iterable[float], modality: str = "image", channels: int = 1,
                   dims: Sequence[int] = (28, 28)) -> pd.DataFrame:
    """Curva alpha,epsilon,rho,log10_space_pp,log10_space_struct"""
    rows = []
    for alpha in alpha_grid:
        r = report(modality, channels, dims, float(alpha))
        rows.append({
            "alpha": r.alpha,
            "epsilon": r.epsilon,
            "rho": r.rho,
            "log10_space_pp": r.log10_space_pp,
            "log10_space_struct": r.log10_space_struct,
        })
    return pd.DataFrame(rows, columns=["alpha", "epsilon", "rho", "log10_space_pp", "log10_space_struct"])
