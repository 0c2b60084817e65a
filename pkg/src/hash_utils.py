import hashlib
import json

import numpy as np


def gerar_hash_tensor(array):
    """Gera o hash SHA256 de um tensor considerando dtype, shape e bytes (row-major)."""
    array = np.ascontiguousarray(np.asarray(array))
    h = hashlib.sha256()
    h.update(array.dtype.str.encode())
    h.update(json.dumps(list(array.shape)).encode())
    h.update(array.tobytes())
    return h.hexdigest()


def gerar_hash_bytes(payload):
    """SHA256 de um bloco de bytes (ex.: arquivo de parâmetros)."""
    return hashlib.sha256(payload).hexdigest()


def gerar_hash_estrutura(obj):
    """
    Gera o hash SHA256 de uma estrutura JSON-serializável em forma canônica
    (chaves ordenadas, sem espaços). Usado como checksum de arquitetura.
    """
    canonico = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return hashlib.sha256(canonico.encode("utf-8")).hexdigest()


def stream_id(nome):
    """Inteiro estável de 64 bits derivado de um nome (semente de stream por camada)."""
    return int.from_bytes(hashlib.sha256(nome.encode("utf-8")).digest()[:8], "little")
