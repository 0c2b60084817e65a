"""Arquivos do modelo: estrutura JSON canônica + arquivo AMLG de parâmetros ao lado"""

import json
import logging
from pathlib import Path
from typing import Tuple, Union

from src.errors import ModelLoadError
from src.hash_utils import gerar_hash_bytes
from src.ir.archive import FLAG_CLOUD, decode_archive, encode_archive
from src.ir.model_graph import ModelGraph, ParamStore

PathLike = Union[str, Path]


def params_path_for(structure_path: PathLike) -> Path:
    return Path(structure_path).with_suffix(".amlg")


def structure_text(graph: ModelGraph, params_file: str, params_sha256: str) -> str:
    document = graph.to_dict()
    document["params_file"] = params_file
    document["params_sha256"] = params_sha256
    return json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n"


def serialize_model(graph: ModelGraph, params: ParamStore, path: PathLike) -> Tuple[Path, Path]:
    """
    Grava o modelo em `path` (estrutura) e `path.amlg` (parâmetros).
    A saída é canônica: o mesmo modelo gera sempre os mesmos bytes.
    """
    path = Path(path)
    if path.suffix == ".amlg":
        raise ModelLoadError("o arquivo de estrutura não pode ter sufixo .amlg", str(path))
    graph.validate()
    params.check_covers(graph)
    payload = encode_archive({key: tensor.data for key, tensor in params.items()}, FLAG_CLOUD)
    params_path = params_path_for(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(params_path, "wb") as f:
        f.write(payload)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(structure_text(graph, params_path.name, gerar_hash_bytes(payload)))
    logging.info(f"Modelo salvo em {path} ({len(graph.layers)} camadas, {len(payload)} bytes de parâmetros)")
    return path, params_path


def deserialize_model(path: PathLike) -> Tuple[ModelGraph, ParamStore]:
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            document = json.load(f)
    except OSError as e:
        raise ModelLoadError(f"não foi possível ler: {e}", str(path))
    except json.JSONDecodeError as e:
        raise ModelLoadError(f"JSON inválido: {e}", str(path))
    if not isinstance(document, dict):
        raise ModelLoadError(f"esperado objeto JSON, encontrado {type(document).__name__}", str(path))

    params_file = document.get("params_file")
    if not params_file:
        raise ModelLoadError("campo params_file ausente", str(path))
    params_path = path.parent / params_file
    try:
        payload = params_path.read_bytes()
    except OSError as e:
        raise ModelLoadError(f"não foi possível ler: {e}", str(params_path))
    if gerar_hash_bytes(payload) != document.get("params_sha256"):
        raise ModelLoadError("checksum dos parâmetros não confere", str(params_path))

    graph = ModelGraph.from_dict(document)
    graph.validate()
    records, _ = decode_archive(payload, str(params_path))
    params = ParamStore(records)
    params.check_covers(graph)
    return graph, params
