"""Geração de ruído para células inseridas no dataset e para parâmetros das sub-redes falsas"""

import functools
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import numpy as np

from src.errors import ArgumentError

NOISE_KINDS = ("uniform", "gaussian", "laplace", "file")


@dataclass(frozen=True)
class NoiseConfig:
    """
    Attributes:
        kind: uniform | gaussian | laplace | file
        param: σ (gaussian) ou escala b (laplace); None usa 1/6 da largura do intervalo
        path: arquivo de valores (kind=file), .npy ou texto
        seed: semente do stream de ruído
    """

    kind: str = "uniform"
    param: Optional[float] = None
    path: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ArgumentError(f"Tipo de ruído desconhecido '{self.kind}' (opções: {', '.join(NOISE_KINDS)})")
        if self.kind == "file" and not self.path:
            raise ArgumentError("Ruído do tipo 'file' exige um caminho")
        if self.param is not None and not self.param > 0:
            raise ArgumentError(f"Parâmetro de ruído precisa ser > 0, recebido {self.param}")

    @classmethod
    def from_config(cls, cfg: Dict[str, Any], seed: Optional[int] = None) -> "NoiseConfig":
        kind = cfg.get("noise", "uniform")
        param = cfg.get("noise_param")
        path = None
        if kind == "file":
            path, param = str(param), None
        return cls(kind=kind, param=None if param is None else float(param), path=path,
                   seed=int(cfg.get("seed", 0) if seed is None else seed))

    def to_dict(self) -> Dict[str, Any]:
        return {"kind": self.kind, "param": self.param, "path": self.path, "seed": self.seed}


@functools.lru_cache(maxsize=8)
def _load_noise_file(path: str) -> np.ndarray:
    p = Path(path)
    try:
        if p.suffix == ".npy":
            values = np.load(p)
        else:
            values = np.loadtxt(p, dtype=np.float64, ndmin=1)
    except (OSError, ValueError) as e:
        raise ArgumentError(f"Não foi possível ler o arquivo de ruído {path}: {e}")
    values = np.asarray(values, dtype=np.float64).reshape(-1)
    values.setflags(write=False)
    return values


def noise_rng(seed: int, stream: int = 0) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])


def sample_noise(noise: NoiseConfig, count: int, value_range: Tuple[float, float], stream: int = 0,
                 offset: int = 0, integer: bool = False, center: Optional[float] = None) -> np.ndarray:
    """
    Amostra `count` valores de ruído dentro de `value_range`.

    Args:
        stream: sub-stream do gerador (ex.: índice da amostra), permite gerar em paralelo
        offset: posição inicial de leitura para kind=file
        integer: valores inteiros em [lo, hi) (ids de token); senão reais em [lo, hi]
        center: centro das distribuições gaussian/laplace (padrão: ponto médio)

    Returns:
        np.ndarray float64 (ou int64 se integer) com `count` valores
    """
    if count < 0:
        raise ArgumentError(f"count precisa ser >= 0, recebido {count}")
    lo, hi = float(value_range[0]), float(value_range[1])
    if hi < lo:
        raise ArgumentError(f"Intervalo inválido [{lo}, {hi}]")
    upper = hi - 1 if integer else hi
    if count == 0:
        return np.zeros(0, dtype=np.int64 if integer else np.float64)

    if noise.kind == "file":
        values = _load_noise_file(noise.path)
        if offset + count > values.size:
            raise ArgumentError(
                f"Arquivo de ruído curto demais: {values.size} valores, necessários {offset + count}"
            )
        drawn = values[offset:offset + count].copy()
    else:
        rng = noise_rng(noise.seed, stream)
        if noise.kind == "uniform":
            if integer:
                return rng.integers(int(lo), int(hi), size=count, dtype=np.int64)
            return rng.uniform(lo, hi, size=count)
        mid = (lo + hi) / 2 if center is None else float(center)
        scale = noise.param if noise.param is not None else max(hi - lo, 1e-12) / 6
        if noise.kind == "gaussian":
            drawn = rng.normal(mid, scale, size=count)
        else:
            drawn = rng.laplace(mid, scale, size=count)

    if integer:
        return np.clip(np.rint(drawn), lo, upper).astype(np.int64)
    return np.clip(drawn, lo, upper)
