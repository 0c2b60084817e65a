"""
Ofuscação de datasets: insere linhas/colunas (imagens) ou posições (texto)
sintéticas em posições globais do dataset e devolve o segredo de posições.
"""

import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Any, Dict, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np

from src.augment.noise import NoiseConfig, sample_noise
from src.engine.tensor import Tensor
from src.errors import ArgumentError, DimensionError, ModelLoadError, OutOfRangeError
from src.hash_utils import stream_id
from src.ir.archive import FLAG_CLOUD, json_record, parse_json_record, read_archive, write_archive

MODALITIES = ("image", "text")


def augmented_size(size: int, alpha: float) -> int:
    """round(size·(1+α)) com meio arredondado para cima"""
    return int(math.floor(size * (1 + alpha) + 0.5))


@dataclass
class DatasetContainer:
    """
    Amostras + rótulos de uma modalidade.

    samples: N×C×H×W float32 (image) ou N×L int64 (text); labels: N int64.
    """

    modality: str
    samples: Tensor
    labels: Tensor
    num_classes: int
    vocab_size: Optional[int] = None
    value_range: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if not isinstance(self.samples, Tensor):
            self.samples = Tensor(self.samples)
        if not isinstance(self.labels, Tensor):
            self.labels = Tensor(self.labels, dtype=np.int64)
        if self.value_range is not None:
            self.value_range = (float(self.value_range[0]), float(self.value_range[1]))
        self.validate()

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def sample_shape(self) -> Tuple[int, ...]:
        return self.samples.shape[1:]

    def validate(self) -> None:
        if self.modality not in MODALITIES:
            raise ArgumentError(f"Modalidade desconhecida '{self.modality}'")
        if self.labels.ndim != 1 or self.labels.shape[0] != self.samples.shape[0]:
            raise DimensionError(f"{self.samples.shape[0]} amostras e rótulos com shape {self.labels.shape}")
        if self.labels.dtype != "int64":
            raise ArgumentError("Rótulos precisam ser int64")
        labels = self.labels.data
        if labels.min() < 0 or labels.max() >= self.num_classes:
            raise OutOfRangeError(f"Rótulo fora de [0, {self.num_classes})")
        if self.modality == "image":
            if self.samples.ndim != 4 or self.samples.dtype not in ("float32", "float64"):
                raise DimensionError(f"Imagens precisam ser N×C×H×W float, recebido {self.samples.shape}")
            if self.value_range is not None:
                lo, hi = self.value_range
                if self.samples.data.min() < lo or self.samples.data.max() > hi:
                    raise OutOfRangeError(f"Valores de imagem fora do intervalo declarado [{lo}, {hi}]")
        else:
            if self.samples.ndim != 2 or self.samples.dtype != "int64":
                raise DimensionError(f"Sequências precisam ser N×L int64, recebido {self.samples.shape}")
            if not self.vocab_size:
                raise ArgumentError("Dataset de texto exige vocab_size")
            if self.samples.data.min() < 0 or self.samples.data.max() >= self.vocab_size:
                raise OutOfRangeError(f"Token fora do vocabulário [0, {self.vocab_size})")

    def subset(self, indices: Union[Sequence[int], np.ndarray, slice]) -> "DatasetContainer":
        return DatasetContainer(
            self.modality,
            Tensor(self.samples.data[indices]),
            Tensor(self.labels.data[indices]),
            self.num_classes,
            self.vocab_size,
            self.value_range,
        )

    def meta(self) -> Dict[str, Any]:
        return {
            "modality": self.modality,
            "num_classes": self.num_classes,
            "vocab_size": self.vocab_size,
            "value_range": list(self.value_range) if self.value_range is not None else None,
        }

    def nbytes(self) -> int:
        return self.samples.data.nbytes + self.labels.data.nbytes

    def bitwise_equal(self, other: "DatasetContainer") -> bool:
        return (
            self.meta() == other.meta()
            and self.samples.bitwise_equal(other.samples)
            and self.labels.bitwise_equal(other.labels)
        )


def save_dataset(data: DatasetContainer, path) -> bytes:
    records = {"samples": data.samples.data, "labels": data.labels.data, "meta": json_record(data.meta())}
    payload = write_archive(path, records, FLAG_CLOUD)
    logging.info(f"Dataset salvo em {path} ({len(data)} amostras, {len(payload)} bytes)")
    return payload


def load_dataset(path) -> DatasetContainer:
    records, _ = read_archive(path)
    for name in ("samples", "labels", "meta"):
        if name not in records:
            raise ModelLoadError(f"registro '{name}' ausente", str(path))
    meta = parse_json_record(records["meta"], f"{path}:meta")
    return DatasetContainer(
        modality=meta["modality"],
        samples=Tensor(records["samples"]),
        labels=Tensor(records["labels"]),
        num_classes=int(meta["num_classes"]),
        vocab_size=meta.get("vocab_size"),
        value_range=tuple(meta["value_range"]) if meta.get("value_range") is not None else None,
    )


@dataclass
class PositionSecret:
    """
    Posições mantidas (originais) na grade/sequência aumentada, globais ao dataset.
    O complemento de cada conjunto é o conjunto inserido.
    """

    modality: str
    alpha: float
    original_dims: Tuple[int, ...]
    augmented_dims: Tuple[int, ...]
    kept_rows: Optional[np.ndarray] = None
    kept_cols: Optional[np.ndarray] = None
    kept_positions: Optional[np.ndarray] = None

    def __post_init__(self):
        self.original_dims = tuple(int(d) for d in self.original_dims)
        self.augmented_dims = tuple(int(d) for d in self.augmented_dims)
        for name in ("kept_rows", "kept_cols", "kept_positions"):
            value = getattr(self, name)
            if value is not None:
                setattr(self, name, np.asarray(value, dtype=np.int64).reshape(-1))
        expected = (
            [("kept_rows", 0), ("kept_cols", 1)] if self.modality == "image" else [("kept_positions", 0)]
        )
        for name, axis in expected:
            kept = getattr(self, name)
            if kept is None or kept.size != self.original_dims[axis]:
                raise DimensionError(f"{name} precisa ter {self.original_dims[axis]} índices")
            if np.any(np.diff(kept) <= 0) or kept[0] < 0 or kept[-1] >= self.augmented_dims[axis]:
                raise OutOfRangeError(f"{name} fora de [0, {self.augmented_dims[axis]}) ou não ordenado")

    def inserted(self, name: str) -> np.ndarray:
        axis = {"kept_rows": 0, "kept_cols": 1, "kept_positions": 0}[name]
        return np.setdiff1d(np.arange(self.augmented_dims[axis]), getattr(self, name))

    def meta(self) -> Dict[str, Any]:
        return {
            "modality": self.modality,
            "alpha": self.alpha,
            "original_dims": list(self.original_dims),
            "augmented_dims": list(self.augmented_dims),
        }

    def to_records(self) -> Dict[str, np.ndarray]:
        if self.modality == "image":
            return {"kept_rows": self.kept_rows, "kept_cols": self.kept_cols}
        return {"kept_positions": self.kept_positions}

    @classmethod
    def from_records(cls, meta: Dict[str, Any], records: Dict[str, np.ndarray]) -> "PositionSecret":
        return cls(
            modality=meta["modality"],
            alpha=float(meta["alpha"]),
            original_dims=tuple(meta["original_dims"]),
            augmented_dims=tuple(meta["augmented_dims"]),
            kept_rows=records.get("kept_rows"),
            kept_cols=records.get("kept_cols"),
            kept_positions=records.get("kept_positions"),
        )

    def equals(self, other: "PositionSecret") -> bool:
        if self.meta() != other.meta():
            return False
        return all(
            np.array_equal(getattr(self, name), getattr(other, name))
            for name in ("kept_rows", "kept_cols", "kept_positions")
            if getattr(self, name) is not None or getattr(other, name) is not None
        )


class AugmentStats(NamedTuple):
    elapsed_s: float
    original_bytes: int
    augmented_bytes: int


def _draw_kept(size: int, augmented: int, seed: int, axis_name: str) -> np.ndarray:
    """Sorteia (sem reposição) as posições inseridas e devolve o complemento ordenado"""
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream_id(f"positions/{axis_name}")])
    inserted = rng.choice(augmented, size=augmented - size, replace=False)
    mask = np.ones(augmented, dtype=bool)
    mask[inserted] = False
    return np.flatnonzero(mask).astype(np.int64)


def _check_alpha(alpha: float) -> None:
    if not alpha >= 0 or not math.isfinite(alpha):
        raise ArgumentError(f"alpha precisa ser >= 0, recebido {alpha}")


def _run_chunks(fill, n: int, workers: int) -> None:
    """Executa fill(inicio, fim) em blocos; com workers > 0 usa um pool de threads"""
    if workers <= 0 or n < 2:
        fill(0, n)
        return
    bounds = np.linspace(0, n, min(workers, n) + 1).astype(int)
    with ThreadPoolExecutor(max_workers=workers) as executor:
        futures = [executor.submit(fill, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
        for future in futures:
            future.result()


def augment_images(data: DatasetContainer, alpha: float, noise: NoiseConfig, seed: int,
                   secret: Optional[PositionSecret] = None,
                   workers: int = 0) -> Tuple[DatasetContainer, PositionSecret]:
    """
    Insere linhas e colunas de ruído em cada imagem (mesmas posições para
    todo o dataset). Se `secret` for dado, reaproveita suas posições
    (splits de validação/teste).
    """
    _check_alpha(alpha)
    if data.modality != "image":
        raise ArgumentError(f"augment_images recebeu dataset '{data.modality}'")
    n, channels, h, w = data.samples.shape
    if secret is None:
        h_a, w_a = augmented_size(h, alpha), augmented_size(w, alpha)
        secret = PositionSecret(
            "image", alpha, (h, w), (h_a, w_a),
            kept_rows=_draw_kept(h, h_a, seed, "rows"),
            kept_cols=_draw_kept(w, w_a, seed, "cols"),
        )
    elif secret.modality != "image" or secret.original_dims != (h, w):
        raise ArgumentError(f"Segredo para {secret.original_dims} não corresponde a imagens {h}x{w}")
    h_a, w_a = secret.augmented_dims

    source = data.samples.data
    out = np.zeros((n, channels, h_a, w_a), dtype=source.dtype)
    out[:, :, secret.kept_rows[:, None], secret.kept_cols[None, :]] = source

    inserted_mask = np.ones((h_a, w_a), dtype=bool)
    inserted_mask[secret.kept_rows[:, None], secret.kept_cols[None, :]] = False
    per_channel = int(inserted_mask.sum())
    if per_channel:
        # ruído no intervalo empírico de cada canal
        lows = source.min(axis=(0, 2, 3))
        highs = source.max(axis=(0, 2, 3))
        means = source.mean(axis=(0, 2, 3), dtype=np.float64)

        def fill(start: int, stop: int) -> None:
            for i in range(start, stop):
                for c in range(channels):
                    sub = i * channels + c
                    values = sample_noise(noise, per_channel, (lows[c], highs[c]), stream=sub,
                                          offset=sub * per_channel, center=means[c])
                    out[i, c][inserted_mask] = values.astype(source.dtype)

        _run_chunks(fill, n, workers)

    augmented = DatasetContainer("image", Tensor(out), data.labels.copy(), data.num_classes,
                                 data.vocab_size, data.value_range)
    return augmented, secret


def augment_text(data: DatasetContainer, alpha: float, noise: NoiseConfig, seed: int,
                 secret: Optional[PositionSecret] = None,
                 workers: int = 0) -> Tuple[DatasetContainer, PositionSecret]:
    """Insere tokens sintéticos em posições globais de todas as sequências"""
    _check_alpha(alpha)
    if data.modality != "text":
        raise ArgumentError(f"augment_text recebeu dataset '{data.modality}'")
    n, length = data.samples.shape
    if secret is None:
        length_a = augmented_size(length, alpha)
        secret = PositionSecret("text", alpha, (length,), (length_a,),
                                kept_positions=_draw_kept(length, length_a, seed, "positions"))
    elif secret.modality != "text" or secret.original_dims != (length,):
        raise ArgumentError(f"Segredo para {secret.original_dims} não corresponde a sequências de {length}")
    (length_a,) = secret.augmented_dims

    out = np.zeros((n, length_a), dtype=np.int64)
    out[:, secret.kept_positions] = data.samples.data
    inserted = secret.inserted("kept_positions")
    count = inserted.size
    if count:
        def fill(start: int, stop: int) -> None:
            for i in range(start, stop):
                out[i, inserted] = sample_noise(noise, count, (0, data.vocab_size), stream=i,
                                                offset=i * count, integer=True)

        _run_chunks(fill, n, workers)

    augmented = DatasetContainer("text", Tensor(out), data.labels.copy(), data.num_classes,
                                 data.vocab_size, data.value_range)
    return augmented, secret


def augment_dataset(data: DatasetContainer, alpha: float, noise: NoiseConfig, seed: int,
                    secret: Optional[PositionSecret] = None,
                    workers: int = 0) -> Tuple[DatasetContainer, PositionSecret, AugmentStats]:
    """Despacha por modalidade e mede tempo/tamanho da augmentação"""
    start = time.perf_counter()
    if data.modality == "image":
        augmented, secret = augment_images(data, alpha, noise, seed, secret, workers)
    else:
        augmented, secret = augment_text(data, alpha, noise, seed, secret, workers)
    stats = AugmentStats(time.perf_counter() - start, data.nbytes(), augmented.nbytes())
    logging.info(
        f"Dataset aumentado: {data.samples.shape} -> {augmented.samples.shape} "
        f"(alpha={alpha}, {stats.elapsed_s:.3f}s, {stats.original_bytes} -> {stats.augmented_bytes} bytes)"
    )
    return augmented, secret, stats


def deaugment(data: DatasetContainer, secret: PositionSecret) -> DatasetContainer:
    """Recupera as células originais (inversa exata da augmentação)"""
    if data.modality != secret.modality:
        raise ArgumentError(f"Segredo '{secret.modality}' aplicado a dataset '{data.modality}'")
    if data.modality == "image":
        if data.samples.shape[2:] != secret.augmented_dims:
            raise ArgumentError(f"Dataset {data.samples.shape[2:]} não corresponde ao segredo {secret.augmented_dims}")
        samples = data.samples.data[:, :, secret.kept_rows[:, None], secret.kept_cols[None, :]]
    else:
        if data.samples.shape[1:] != secret.augmented_dims:
            raise ArgumentError(f"Dataset {data.samples.shape[1:]} não corresponde ao segredo {secret.augmented_dims}")
        samples = data.samples.data[:, secret.kept_positions]
    return DatasetContainer(data.modality, Tensor(np.ascontiguousarray(samples)), data.labels.copy(),
                            data.num_classes, data.vocab_size, data.value_range)
