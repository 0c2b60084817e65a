"""
Treino por SGD em mini-lotes sobre a soma das perdas de todas as saídas,
com embaralhamento determinístico por época e log de métricas por passo.
"""

import io
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np
import pandas as pd

from src.augment.data_augmenter import DatasetContainer
from src.engine.autograd import GradStore
from src.engine.optim import sgd_step
from src.engine.tensor import Tensor
from src.errors import ArgumentError, DimensionError, OutOfRangeError, TrainingAbortedError
from src.execution.executor import StepResult, forward, head_losses, loss_and_grads
from src.ir.model_graph import ModelGraph, ParamStore

NON_DETERMINISTIC_HEADER = "# mode=non-deterministic"


@dataclass
class TrainConfig:
    epochs: int = 10
    lr: float = 0.001
    batch: int = 128
    seed: int = 0
    deterministic: bool = True
    workers: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ArgumentError(f"epochs precisa ser >= 1, recebido {self.epochs}")
        if not self.lr > 0 or not math.isfinite(self.lr):
            raise ArgumentError(f"lr precisa ser > 0, recebido {self.lr}")
        if self.batch < 1:
            raise ArgumentError(f"batch precisa ser >= 1, recebido {self.batch}")

    @classmethod
    def from_config(cls, cfg: Dict[str, Any]) -> "TrainConfig":
        return cls(
            epochs=int(cfg["epochs"]),
            lr=float(cfg["lr"]),
            batch=int(cfg["batch"]),
            seed=int(cfg["seed"]),
            deterministic=bool(cfg["deterministic"]),
            workers=int(cfg.get("workers", 0)),
        )


@dataclass
class MetricsLog:
    """Registros por passo: epoch, step, loss_total, loss_h*, acc_h*, wall_ms"""

    num_heads: int
    deterministic: bool = True
    records: List[Dict[str, float]] = field(default_factory=list)

    def append(self, epoch: int, step: int, result: StepResult, wall_ms: float) -> None:
        if self.records:
            last = self.records[-1]
            if (epoch, step) <= (last["epoch"], last["step"]):
                raise ArgumentError(f"Registro ({epoch}, {step}) fora de ordem")
        record: Dict[str, float] = {"epoch": epoch, "step": step, "loss_total": result.loss_total}
        for i, value in enumerate(result.losses):
            record[f"loss_h{i}"] = value
        for i, value in enumerate(result.accuracies):
            record[f"acc_h{i}"] = value
        record["wall_ms"] = wall_ms
        self.records.append(record)

    @property
    def columns(self) -> List[str]:
        return (["epoch", "step", "loss_total"] + [f"loss_h{i}" for i in range(self.num_heads)]
                + [f"acc_h{i}" for i in range(self.num_heads)] + ["wall_ms"])

    def to_dataframe(self) -> pd.DataFrame:
        df = pd.DataFrame(self.records, columns=self.columns)
        return df.astype({"epoch": "int64", "step": "int64"})

    def epoch_means(self) -> pd.DataFrame:
        return self.to_dataframe().groupby("epoch").mean(numeric_only=True).drop(columns=["step"])

    def to_csv(self) -> str:
        """CSV do log; no modo determinístico wall_ms sai como 0"""
        df = self.to_dataframe()
        if self.deterministic:
            df["wall_ms"] = 0
        buffer = io.StringIO()
        if not self.deterministic:
            buffer.write(NON_DETERMINISTIC_HEADER + "\n")
        df.to_csv(buffer, index=False, lineterminator="\n")
        return buffer.getvalue()

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as f:
            f.write(self.to_csv())

    @classmethod
    def load(cls, path) -> "MetricsLog":
        with open(path, "r", encoding="utf-8") as f:
            first = f.readline()
        deterministic = first.strip() != NON_DETERMINISTIC_HEADER
        df = pd.read_csv(path, comment="#")
        num_heads = sum(1 for c in df.columns if c.startswith("loss_h"))
        log = cls(num_heads, deterministic)
        log.records = df.to_dict(orient="records")
        return log


def check_data(graph: ModelGraph, data: DatasetContainer) -> None:
    if data.modality != graph.modality:
        raise DimensionError(f"Dataset '{data.modality}' para modelo '{graph.modality}'")
    if data.sample_shape != graph.input_shape:
        raise DimensionError(f"Amostras {data.sample_shape} != entrada do modelo {graph.input_shape}")
    classes = graph.output_shape()[0]
    if data.num_classes > classes:
        raise DimensionError(f"Dataset com {data.num_classes} classes, saídas com {classes}")


def epoch_permutation(seed: int, epoch: int, n: int) -> np.ndarray:
    """Ordem das amostras na época (a mesma para M e M' com a mesma semente)"""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, epoch]).permutation(n)


def _parallel_step(graph: ModelGraph, params: ParamStore, x: np.ndarray, y: np.ndarray,
                   workers: int) -> StepResult:
    """Lote dividido em fatias avaliadas em threads; gradientes reduzidos na ordem de término"""
    shards = [s for s in np.array_split(np.arange(len(y)), max(2, workers)) if s.size]
    total = len(y)
    grads: Dict[str, np.ndarray] = {}
    loss_total, losses, accs = 0.0, None, None
    with ThreadPoolExecutor(max_workers=len(shards)) as executor:
        futures = {executor.submit(loss_and_grads, graph, params, x[s], y[s]): s.size for s in shards}
        for future in as_completed(futures):
            weight = futures[future] / total
            result = future.result()
            for name, g in result.grads.items():
                scaled = g.data * g.data.dtype.type(weight)
                grads[name] = grads[name] + scaled if name in grads else scaled
            loss_total += weight * result.loss_total
            losses = [weight * v + (losses[i] if losses else 0.0) for i, v in enumerate(result.losses)]
            accs = [weight * v + (accs[i] if accs else 0.0) for i, v in enumerate(result.accuracies)]
    return StepResult(loss_total, losses, accs, GradStore({k: Tensor(v) for k, v in grads.items()}))


def train(graph: ModelGraph, params: ParamStore, data: DatasetContainer,
          cfg: TrainConfig) -> Tuple[ParamStore, MetricsLog]:
    """
    SGD: para cada lote, g = ∇θ Σ_saídas L(saída, rótulos) e θ ← θ − η·g.
    A ordem dos lotes é uma permutação sorteada por (semente, época).
    """
    graph.validate()
    params.check_covers(graph)
    check_data(graph, data)
    current = ParamStore(params.copy().as_dict())
    log = MetricsLog(len(graph.heads), cfg.deterministic)
    samples, labels = data.samples.data, data.labels.data
    n = len(data)
    mode = "determinístico" if cfg.deterministic else f"paralelo ({max(2, cfg.workers)} fatias)"
    logging.info(f"Treino: {n} amostras, {cfg.epochs} épocas, lote {cfg.batch}, lr {cfg.lr}, modo {mode}")

    for epoch in range(cfg.epochs):
        order = epoch_permutation(cfg.seed, epoch, n)
        for step, start in enumerate(range(0, n, cfg.batch)):
            idx = order[start:start + cfg.batch]
            x, y = samples[idx], labels[idx]
            began = time.perf_counter()
            if cfg.deterministic or len(idx) < 2:
                result = loss_and_grads(graph, current, x, y)
            else:
                result = _parallel_step(graph, current, x, y, cfg.workers)
            if not math.isfinite(result.loss_total):
                raise TrainingAbortedError("Perda não finita", epoch, step)
            current = ParamStore(sgd_step(current.as_dict(), result.grads, cfg.lr))
            log.append(epoch, step, result, (time.perf_counter() - began) * 1000)
        means = log.epoch_means().loc[epoch]
        logging.info(f"Época {epoch + 1}/{cfg.epochs}: loss_total={means['loss_total']:.6f}")
    return current, log


def evaluate(graph: ModelGraph, params: ParamStore, data: DatasetContainer, head_index: int,
             batch: int = 256) -> Tuple[float, float]:
    """Entropia cruzada média e acurácia top-1 de uma saída, sem atualizar parâmetros"""
    if not 0 <= head_index < len(graph.heads):
        raise OutOfRangeError(f"head_index {head_index} fora de [0, {len(graph.heads)})")
    check_data(graph, data)
    n = len(data)
    loss_sum, hits = 0.0, 0
    for start in range(0, n, batch):
        x = data.samples.data[start:start + batch]
        y = data.labels.data[start:start + batch]
        fp = forward(graph, params, x, requires_grad=False)
        _, losses = head_losses(fp, y)
        loss_sum += float(losses[head_index].value) * len(y)
        hits += int(np.sum(np.argmax(fp.heads[head_index].value, axis=1) == y))
    loss, acc = loss_sum / n, hits / n
    if not math.isfinite(loss):
        raise TrainingAbortedError("Perda não finita na avaliação", 0, 0)
    return loss, acc
