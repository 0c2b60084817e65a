"""
Ataques de vazamento por gradiente em escala pequena: DLG (reconstrução da
entrada por casamento de gradientes) e o truque de rótulo do iDLG.
"""

import logging
import math
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src.engine.autograd import GradStore
from src.engine.gradcheck import numerical_gradient
from src.engine.tensor import Tensor
from src.errors import ArgumentError, AttackAbortedError, DimensionError, LabelAmbiguityError
from src.execution.executor import loss_and_grads
from src.ir.model_graph import ModelGraph, ParamStore, param_key
from src.utils.error_analyzer import calculate_metrics

MAX_HALVINGS = 30


@dataclass
class AttackConfig:
    iterations: int = 200
    step: float = 0.1
    seed: int = 0
    target_index: int = 0
    fd_step: float = 1e-3

    def __post_init__(self):
        if self.iterations < 1:
            raise ArgumentError(f"iterations precisa ser >= 1, recebido {self.iterations}")
        if not self.step > 0 or not self.fd_step > 0:
            raise ArgumentError("Passos do ataque precisam ser > 0")

    @classmethod
    def from_config(cls, cfg: Dict[str, Any]) -> "AttackConfig":
        return cls(
            iterations=int(cfg["attack_iterations"]),
            step=float(cfg["attack_step"]),
            seed=int(cfg["seed"]),
            target_index=int(cfg.get("target_index", 0)),
            fd_step=float(cfg["fd_step"]),
        )


@dataclass
class AttackResult:
    reconstruction: Tensor
    label: int
    history: List[float] = field(default_factory=list)
    mse: Optional[float] = None
    iterations: int = 0
    initial_objective: float = 0.0
    region_mse: List[float] = field(default_factory=list)

    def summary(self) -> Dict[str, Any]:
        return {
            "label": self.label,
            "iterations": self.iterations,
            "initial_objective": self.initial_objective,
            "final_objective": self.history[-1] if self.history else self.initial_objective,
            "mse": self.mse,
            "region_mse": self.region_mse,
        }


def victim_gradients(model: ModelGraph, params: ParamStore, sample: np.ndarray, label: int) -> GradStore:
    """Gradiente de um único par (amostra, rótulo), o que a vítima compartilharia"""
    batch = np.asarray(sample)[None]
    return loss_and_grads(model, params, batch, np.array([label], dtype=np.int64)).grads


def idlg_label(victim_grads: GradStore, model: ModelGraph, head_index: int = 0) -> int:
    """Índice da única componente negativa do gradiente do bias da saída"""
    head = model.heads[head_index]
    if model.layer(head).kind != "linear":
        raise ArgumentError(f"A saída '{head}' precisa ser linear com bias")
    g = victim_grads[param_key(head, "bias")].data
    negative = np.flatnonzero(g < 0)
    if negative.size != 1:
        raise LabelAmbiguityError(f"Gradiente do bias com {negative.size} componentes negativas")
    return int(negative[0])


def _as_float64(params: ParamStore) -> ParamStore:
    return ParamStore({k: Tensor(v.data.astype(np.float64)) for k, v in params.items()})


def gradient_distance(model: ModelGraph, params: ParamStore, victim: Dict[str, np.ndarray],
                      x: np.ndarray, label: int) -> float:
    """‖∇θL(x, rótulo) − gradiente da vítima‖²"""
    grads = loss_and_grads(model, params, x[None], np.array([label], dtype=np.int64)).grads
    total = 0.0
    for name, target in victim.items():
        diff = grads[name].data.astype(np.float64) - target
        total += float(np.sum(diff * diff))
    return total


def visible_regions(model: ModelGraph) -> List[Tuple[np.ndarray, np.ndarray]]:
    """
    Conjuntos (linhas, colunas) mantidos expostos pelas camadas skip_conv2d de
    M', sem repetição e em ordem de id. É tudo o que um atacante sem o segredo
    sabe sobre onde está a imagem original.
    """
    regions, seen = [], set()
    for layer in sorted(model.layers, key=lambda l: l.id):
        if layer.kind != "skip_conv2d":
            continue
        key = (tuple(layer.hyperparams["keep_rows"]), tuple(layer.hyperparams["keep_cols"]))
        if key not in seen:
            seen.add(key)
            regions.append((np.asarray(key[0], dtype=np.int64), np.asarray(key[1], dtype=np.int64)))
    return regions


def reconstruction_mse(model: ModelGraph, x: np.ndarray, ground_truth: np.ndarray) -> Tuple[float, List[float]]:
    """
    MSE da reconstrução contra a imagem original. Numa entrada aumentada o
    atacante não sabe qual região visível é a original: o MSE é a média sobre
    todas as regiões candidatas (devolvidas também uma a uma).
    """
    truth = np.asarray(ground_truth, dtype=np.float64)
    if x.shape == truth.shape:
        mse = calculate_metrics(truth, x)["mse"]
        return mse, [mse]
    regions = visible_regions(model)
    if not regions:
        raise ArgumentError(f"Reconstrução {x.shape} e original {truth.shape} sem região candidata no modelo")
    per_region = []
    for rows, cols in regions:
        region = x[:, rows[:, None], cols[None, :]]
        if region.shape != truth.shape:
            raise DimensionError(f"Região candidata {region.shape} difere do original {truth.shape}")
        per_region.append(calculate_metrics(truth, region)["mse"])
    return float(np.mean(per_region)), per_region


def dlg_reconstruct(model: ModelGraph, params: ParamStore, victim_grads: GradStore, label: Optional[int],
                    cfg: AttackConfig, ground_truth: Optional[np.ndarray] = None,
                    initial: Optional[np.ndarray] = None) -> AttackResult:
    """
    Reconstrói a entrada partindo de um chute aleatório e descendo o objetivo
    de casamento de gradientes com diferenças finitas centrais. O passo é
    dividido por 2 até o objetivo não aumentar, então o histórico é não crescente.
    `ground_truth` é a imagem original (sem aumento); ver `reconstruction_mse`.
    """
    if model.modality != "image":
        raise ArgumentError("DLG só é suportado para modelos de imagem")
    if label is None:
        label = idlg_label(victim_grads, model)
    lo, hi = model.input_spec.get("value_range", (0.0, 1.0))
    params64 = _as_float64(params)
    victim = {name: g.data.astype(np.float64) for name, g in victim_grads.items()}

    rng = np.random.default_rng([int(cfg.seed) & 0xFFFFFFFFFFFFFFFF, cfg.target_index])
    if initial is not None:
        x = np.array(initial, dtype=np.float64)
    else:
        x = rng.uniform(lo, hi, size=model.input_shape)

    def objective(candidate: np.ndarray) -> float:
        return gradient_distance(model, params64, victim, candidate, label)

    current = objective(x)
    initial_objective = current
    history: List[float] = []
    step = cfg.step
    for iteration in range(cfg.iterations):
        if not math.isfinite(current):
            raise AttackAbortedError(f"Objetivo não finito na iteração {iteration}", history)
        if current == 0.0:
            history.append(current)
            break
        grad = numerical_gradient(objective, x, cfg.fd_step)
        if not np.all(np.isfinite(grad)):
            raise AttackAbortedError(f"Gradiente não finito na iteração {iteration}", history)
        for _ in range(MAX_HALVINGS):
            candidate = np.clip(x - step * grad, lo, hi)
            value = objective(candidate)
            if math.isfinite(value) and value <= current:
                x, current = candidate, value
                step *= 1.5
                break
            step /= 2
        history.append(current)
        if iteration % 50 == 0:
            logging.debug(f"DLG iteração {iteration}: objetivo={current:.6g}, passo={step:.3g}")

    mse, region_mse = None, []
    if ground_truth is not None:
        mse, region_mse = reconstruction_mse(model, x, ground_truth)
    result = AttackResult(Tensor(x), int(label), history, mse, len(history), initial_objective, region_mse)
    logging.info(f"DLG: {result.iterations} iterações, objetivo {initial_objective:.4g} -> "
                 f"{result.history[-1] if history else initial_objective:.4g}, MSE={mse}")
    return result


def run_paired_attack(plain_model: ModelGraph, plain_params: ParamStore, augmented_model: ModelGraph,
                      augmented_params: ParamStore, original_sample: np.ndarray, augmented_sample: np.ndarray,
                      label: int, cfg: AttackConfig, workers: int = 2) -> Dict[str, Any]:
    """
    Mesmo orçamento de iterações contra o modelo simples e o aumentado, em
    paralelo. O atacante do aumentado não recebe o segredo: o MSE dele é a
    média sobre as regiões candidatas que M' expõe (`reconstruction_mse`).
    """
    plain_grads = victim_gradients(plain_model, plain_params, original_sample, label)
    augmented_grads = victim_gradients(augmented_model, augmented_params, augmented_sample, label)
    jobs = {
        "plain": (plain_model, plain_params, plain_grads),
        "augmented": (augmented_model, augmented_params, augmented_grads),
    }
    results: Dict[str, AttackResult] = {}
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        futures = {
            executor.submit(dlg_reconstruct, model, params, grads, None, cfg, original_sample): name
            for name, (model, params, grads) in jobs.items()
        }
        for future in as_completed(futures):
            results[futures[future]] = future.result()
            logging.info(f"Ataque '{futures[future]}' concluído")
    plain_mse, augmented_mse = results["plain"].mse, results["augmented"].mse
    return {
        "plain": results["plain"],
        "augmented": results["augmented"],
        "plain_mse": plain_mse,
        "augmented_mse": augmented_mse,
        "mse_ratio": augmented_mse / plain_mse if plain_mse else float("inf"),
    }
