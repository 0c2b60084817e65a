"""
Extração do modelo original treinado a partir do modelo aumentado e
aplicação de pesos pré-treinados (transfer learning).
"""

import logging
import time
from dataclasses import asdict, dataclass
from typing import Any, Dict, Iterable, Optional, Tuple

from src.augment.data_augmenter import DatasetContainer, deaugment
from src.augment.model_augmenter import SKIP_OF
from src.augment.secret import SecretBundle
from src.engine.tensor import Tensor
from src.errors import ArgumentError, ExtractionError
from src.execution.trainer import evaluate
from src.hash_utils import gerar_hash_estrutura, gerar_hash_tensor
from src.ir.model_graph import ModelGraph, ParamStore, param_key

# chaves de conjunto que só existem na versão com salto
SKIP_ONLY_KEYS = ("keep_rows", "keep_cols", "skip_positions", "sequence_length")


@dataclass
class ExtractReport:
    layers_copied: int
    param_count: int
    checksum_match: bool
    elapsed_s: float
    architecture_sha256: str = ""

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _plain_hyperparams(kind: str, hyperparams: Dict[str, Any]) -> Tuple[str, Dict[str, Any]]:
    plain = {v: k for k, v in SKIP_OF.items()}.get(kind, kind)
    return plain, {k: v for k, v in hyperparams.items() if k not in SKIP_ONLY_KEYS}


def _architecture(graph: ModelGraph, layer_ids: Iterable[str]) -> Dict[str, Any]:
    return {lid: _plain_hyperparams(graph.layer(lid).kind, graph.layer(lid).hyperparams) for lid in layer_ids}


def extract(augmented: ModelGraph, augmented_params: ParamStore, bundle: SecretBundle,
            original_def: ModelGraph) -> Tuple[ParamStore, ExtractReport]:
    """
    Copia os parâmetros das camadas mapeadas de M' para a definição original.
    Nenhum valor é transformado; camadas com salto viram a versão simples.
    Em caso de divergência nada é devolvido.
    """
    start = time.perf_counter()
    if not bundle.has_model:
        raise ExtractionError("Segredo não contém o mapa de camadas (modelo não foi aumentado)")
    missing = [lid for lid in original_def.layer_ids if lid not in bundle.layer_map]
    if missing:
        raise ExtractionError(f"Camadas sem mapeamento no segredo: {missing}")
    if not 0 <= bundle.original_head_index < len(augmented.heads):
        raise ExtractionError(f"Índice da saída original {bundle.original_head_index} inválido")

    for lid in original_def.layer_ids:
        target = bundle.layer_map[lid]
        try:
            mapped = augmented.layer(target)
        except KeyError:
            raise ExtractionError(f"Camada '{target}' (original '{lid}') não existe no modelo aumentado")
        expected = _plain_hyperparams(original_def.layer(lid).kind, original_def.layer(lid).hyperparams)
        if _plain_hyperparams(mapped.kind, mapped.hyperparams) != expected:
            raise ExtractionError(f"Camada '{lid}' não corresponde a '{target}' no modelo aumentado")
    original_head = original_def.heads[0]
    if augmented.heads[bundle.original_head_index] != bundle.layer_map[original_head]:
        raise ExtractionError(f"Saída original '{original_head}' não corresponde ao segredo")

    extracted = ParamStore()
    for lid in original_def.layer_ids:
        for name in original_def.layer(lid).param_shapes:
            source = augmented_params[param_key(bundle.layer_map[lid], name)]
            extracted[param_key(lid, name)] = Tensor(source.data.copy())
    extracted.check_covers(original_def)

    arch_original = gerar_hash_estrutura(_architecture(original_def, original_def.layer_ids))
    arch_mapped = gerar_hash_estrutura({
        lid: _plain_hyperparams(augmented.layer(bundle.layer_map[lid]).kind,
                                augmented.layer(bundle.layer_map[lid]).hyperparams)
        for lid in original_def.layer_ids
    })
    report = ExtractReport(
        layers_copied=len(original_def.layers),
        param_count=extracted.numel(),
        checksum_match=arch_original == arch_mapped,
        elapsed_s=time.perf_counter() - start,
        architecture_sha256=arch_original,
    )
    logging.info(
        f"Extração: {report.layers_copied} camadas, {report.param_count} parâmetros em {report.elapsed_s:.4f}s"
    )
    return extracted, report


def tensor_hashes(params: ParamStore) -> Dict[str, str]:
    """Hash por tensor, para conferir que a extração só realoca valores"""
    return {key: gerar_hash_tensor(tensor.data) for key, tensor in params.items()}


def apply_pretrained(model: ModelGraph, params: ParamStore, pretrained: ParamStore,
                     layer_subset: Iterable[str]) -> ParamStore:
    """Copia para `params` os valores pré-treinados das camadas listadas"""
    updated = params.copy()
    for lid in layer_subset:
        try:
            layer = model.layer(lid)
        except KeyError:
            raise ArgumentError(f"Camada '{lid}' não existe no modelo")
        for name, shape in layer.param_shapes.items():
            key = param_key(lid, name)
            if key not in pretrained:
                raise ArgumentError(f"Parâmetro pré-treinado '{key}' ausente")
            if pretrained[key].shape != shape:
                raise ArgumentError(f"'{key}' pré-treinado com shape {pretrained[key].shape}, esperado {shape}")
            updated[key] = Tensor(pretrained[key].data.copy())
    return updated


def validate_extraction(augmented: ModelGraph, augmented_params: ParamStore, bundle: SecretBundle,
                        original_def: ModelGraph, extracted: ParamStore, augmented_test: DatasetContainer,
                        original_test: Optional[DatasetContainer] = None) -> Dict[str, float]:
    """
    Avalia a saída original de M' no teste aumentado e o modelo extraído no
    teste original (de-aumentado pelo segredo se não fornecido).
    """
    if original_test is None:
        original_test = deaugment(augmented_test, bundle.position)
    aug_loss, aug_acc = evaluate(augmented, augmented_params, augmented_test, bundle.original_head_index)
    ext_loss, ext_acc = evaluate(original_def, extracted, original_test, 0)
    result = {
        "augmented_loss": aug_loss,
        "augmented_accuracy": aug_acc,
        "extracted_loss": ext_loss,
        "extracted_accuracy": ext_acc,
        "accuracy_difference": abs(aug_acc - ext_acc),
    }
    logging.info(f"Validação da extração: {result}")
    return result
