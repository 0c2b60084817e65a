"""
BaseModel - Classe base abstrata dos modelos de exemplo do Amalgam

Define a interface comum (grafo, dataset sintético, inicialização) usada
pela CLI e pelos testes de aceitação.
"""

import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Tuple

import numpy as np

from src.augment.data_augmenter import DatasetContainer
from src.ir.model_graph import INPUT_ID, EdgeSpec, LayerSpec, ModelGraph, ParamStore, init_params


class BaseModel(ABC):
    """
    Classe abstrata base dos modelos de exemplo.

    Attributes:
        CONFIG: configuração específica do modelo (deve ser sobrescrita)
        REQUIRED_CONFIG_KEYS: chaves obrigatórias na configuração
    """

    CONFIG: Dict[str, Any] = {}
    REQUIRED_CONFIG_KEYS: List[str] = ["name", "modality", "input_shape", "num_classes"]

    def __init__(self):
        self._validate_config()

    def _validate_config(self) -> None:
        missing = [key for key in self.REQUIRED_CONFIG_KEYS if key not in self.CONFIG]
        if missing:
            raise ValueError(f"Configuração ausente para {self.__class__.__name__}: {missing}")

    def get_config(self) -> Dict[str, Any]:
        return dict(self.CONFIG)

    @abstractmethod
    def layers(self) -> List[LayerSpec]:
        """Camadas em ordem de execução (cadeia simples)"""

    @abstractmethod
    def make_dataset(self, n: int, seed: int) -> DatasetContainer:
        """Dataset sintético separável por protótipos de classe"""

    def input_spec(self) -> Dict[str, Any]:
        spec = {"modality": self.CONFIG["modality"], "shape": list(self.CONFIG["input_shape"])}
        if self.CONFIG["modality"] == "image":
            spec["value_range"] = list(self.CONFIG.get("value_range", (0.0, 1.0)))
        else:
            spec["vocab_size"] = self.CONFIG["vocab_size"]
        return spec

    def build_graph(self) -> ModelGraph:
        layers = self.layers()
        edges = [EdgeSpec(INPUT_ID, layers[0].id)]
        edges += [EdgeSpec(a.id, b.id) for a, b in zip(layers[:-1], layers[1:])]
        graph = ModelGraph(input_spec=self.input_spec(), layers=layers, edges=edges, heads=[layers[-1].id])
        graph.validate()
        return graph

    def build(self, seed: int) -> Tuple[ModelGraph, ParamStore]:
        graph = self.build_graph()
        params = init_params(graph, seed)
        logging.info(f"Modelo '{self.CONFIG['name']}' criado com {params.numel()} parâmetros")
        return graph, params


def class_prototype_images(n: int, num_classes: int, shape: Tuple[int, int, int], seed: int,
                           noise: float = 0.15) -> Tuple[np.ndarray, np.ndarray]:
    """Imagens em [0,1]: protótipo aleatório por classe + ruído gaussiano recortado"""
    rng = np.random.default_rng(seed)
    prototypes = rng.uniform(0.0, 1.0, size=(num_classes, *shape))
    labels = np.arange(n, dtype=np.int64) % num_classes
    rng.shuffle(labels)
    samples = prototypes[labels] + rng.normal(0.0, noise, size=(n, *shape))
    return np.clip(samples, 0.0, 1.0).astype(np.float32), labels


def class_prototype_sequences(n: int, num_classes: int, length: int, vocab: int, seed: int,
                              keep: float = 0.6) -> Tuple[np.ndarray, np.ndarray]:
    """Sequências onde cada classe favorece uma faixa própria do vocabulário"""
    rng = np.random.default_rng(seed)
    labels = np.arange(n, dtype=np.int64) % num_classes
    rng.shuffle(labels)
    band = vocab // num_classes
    in_band = rng.integers(0, band, size=(n, length)) + labels[:, None] * band
    background = rng.integers(0, vocab, size=(n, length))
    samples = np.where(rng.random((n, length)) < keep, in_band, background)
    return samples.astype(np.int64), labels
