"""
Custo do aumento: tempo de treino de M' e tempo de extração para cada α,
sobre um mesmo modelo e dataset.
"""

import logging
import time
from typing import Iterable, Optional

import pandas as pd

from src.analysis.privacy_analyzer import perf_loss
from src.augment.data_augmenter import DatasetContainer, augment_dataset
from src.augment.model_augmenter import augment_model, plan_subnets
from src.augment.noise import NoiseConfig
from src.errors import ArgumentError
from src.execution.trainer import TrainConfig, train
from src.extractor import extract
from src.ir.model_graph import ModelGraph, ParamStore, param_count
from src.utils.logger import StatusMonitor

OVERHEAD_COLUMNS = ["alpha", "rho", "param_count", "train_s", "extract_s", "train_ratio"]


def measure_overhead(graph: ModelGraph, params: ParamStore, data: DatasetContainer,
                     alphas: Iterable[float], subnets: int, cfg: TrainConfig,
                     noise: Optional[NoiseConfig] = None, extract_repeats: int = 1) -> pd.DataFrame:
    """
    Para cada α: aumenta dados e modelo, treina M' com `cfg` e extrai o
    original, cronometrando treino e extração. `train_ratio` é relativo à
    primeira linha da grade; `extract_s` é o menor de `extract_repeats` tempos.
    """
    if extract_repeats < 1:
        raise ArgumentError(f"extract_repeats precisa ser >= 1, recebido {extract_repeats}")
    noise = noise or NoiseConfig(seed=cfg.seed)
    rows = []
    with StatusMonitor() as monitor:
        for alpha in alphas:
            task = f"alpha={alpha}"
            monitor.update_status(task, "aumentando")
            augmented_data, position, _ = augment_dataset(data, alpha, noise, cfg.seed)
            plan = plan_subnets(graph, alpha, subnets, cfg.seed, noise=noise)
            augmented, augmented_params, bundle = augment_model(graph, params, plan, position)

            monitor.update_status(task, "treinando")
            start = time.perf_counter()
            trained, _ = train(augmented, augmented_params, augmented_data, cfg)
            train_s = time.perf_counter() - start

            monitor.update_status(task, "extraindo")
            extract_s = min(extract(augmented, trained, bundle, graph)[1].elapsed_s for _ in range(extract_repeats))
            rows.append({
                "alpha": float(alpha),
                "rho": perf_loss(alpha),
                "param_count": param_count(augmented),
                "train_s": train_s,
                "extract_s": extract_s,
            })
            monitor.update_status(task, f"concluído (treino {train_s:.2f}s)")

    frame = pd.DataFrame(rows, columns=OVERHEAD_COLUMNS[:-1])
    if not frame.empty:
        frame["train_ratio"] = frame["train_s"] / frame["train_s"].iloc[0]
    logging.info(f"Overhead por alpha:\n{frame.to_string(index=False)}")
    return frame
