"""
SecretBundle: tudo que o usuário precisa guardar localmente para extrair o
modelo original (posições mantidas, mapa de camadas, saída original, sementes).
O arquivo leva a flag LOCAL-ONLY (0x4C) no cabeçalho AMLG.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from src.augment.data_augmenter import PositionSecret
from src.errors import ArgumentError, ModelLoadError
from src.ir.archive import FLAG_LOCAL_ONLY, json_record, parse_json_record, read_archive, write_archive
from src.utils.file_utils import is_inside

BUNDLE_VERSION = 1
SEED_NAMES = ("augment", "noise", "data")


@dataclass
class SecretBundle:
    """
    Attributes:
        position: segredo de posições do dataset
        layer_map: id da camada original -> id dentro do modelo aumentado
        original_head_index: índice da saída original em `heads` (-1 antes de aumentar o modelo)
        decoy_keep_sets: conjuntos mantidos de cada sub-rede falsa
        decoy_layers: ids das camadas de cada sub-rede falsa (uso local, árvore do plano)
        seeds: sementes usadas ("augment", "noise", "data")
    """

    position: PositionSecret
    layer_map: Dict[str, str] = field(default_factory=dict)
    original_head_index: int = -1
    decoy_keep_sets: List[Dict[str, List[int]]] = field(default_factory=list)
    decoy_layers: List[List[str]] = field(default_factory=list)
    seeds: Dict[str, int] = field(default_factory=dict)
    version: int = BUNDLE_VERSION

    @property
    def has_model(self) -> bool:
        return bool(self.layer_map) and self.original_head_index >= 0

    def to_records(self) -> Dict[str, np.ndarray]:
        records = dict(self.position.to_records())
        records["layer_map"] = json_record(sorted(self.layer_map.items()))
        records["original_head_index"] = np.array([self.original_head_index], dtype=np.int64)
        records["seeds"] = np.array([int(self.seeds.get(name, 0)) for name in SEED_NAMES], dtype=np.int64)
        records["meta"] = json_record({
            "version": self.version,
            "position": self.position.meta(),
            "decoy_keep_sets": self.decoy_keep_sets,
            "decoy_layers": self.decoy_layers,
            "seed_names": list(SEED_NAMES),
        })
        return records

    @classmethod
    def from_records(cls, records: Dict[str, np.ndarray], location: str = "secret") -> "SecretBundle":
        for name in ("layer_map", "original_head_index", "seeds", "meta"):
            if name not in records:
                raise ModelLoadError(f"registro '{name}' ausente", location)
        meta = parse_json_record(records["meta"], f"{location}:meta")
        if meta.get("version") != BUNDLE_VERSION:
            raise ModelLoadError(f"versão de segredo {meta.get('version')} não suportada", location)
        seeds = records["seeds"].tolist()
        return cls(
            position=PositionSecret.from_records(meta["position"], records),
            layer_map={src: dst for src, dst in parse_json_record(records["layer_map"], f"{location}:layer_map")},
            original_head_index=int(records["original_head_index"][0]),
            decoy_keep_sets=meta.get("decoy_keep_sets", []),
            decoy_layers=meta.get("decoy_layers", []),
            seeds={name: int(value) for name, value in zip(meta.get("seed_names", SEED_NAMES), seeds)},
            version=meta["version"],
        )


def save_secret(bundle: SecretBundle, path, cloud_dir: Optional[str] = None) -> bytes:
    """Grava o bundle; recusa caminhos dentro do diretório enviado à nuvem"""
    path = Path(path)
    if cloud_dir is not None and is_inside(path, cloud_dir):
        raise ArgumentError(f"O segredo não pode ser gravado dentro de {cloud_dir}")
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = write_archive(path, bundle.to_records(), FLAG_LOCAL_ONLY)
    logging.info(f"Segredo LOCAL salvo em {path}")
    return payload


def load_secret(path) -> SecretBundle:
    records, flag = read_archive(path)
    if flag != FLAG_LOCAL_ONLY:
        raise ModelLoadError("arquivo não é um segredo local (flag 0x4C ausente)", str(path))
    return SecretBundle.from_records(records, str(path))


def describe(bundle: SecretBundle) -> Dict[str, Any]:
    """Resumo legível (sem os conjuntos de posições)"""
    return {
        "modality": bundle.position.modality,
        "alpha": bundle.position.alpha,
        "original_dims": list(bundle.position.original_dims),
        "augmented_dims": list(bundle.position.augmented_dims),
        "original_layers": len(bundle.layer_map),
        "decoys": len(bundle.decoy_layers),
    }
