"""
Contêiner binário AMLG para tensores nomeados.

Layout (little-endian):
    b"AMLG" | u16 versão | u8 flag reservada | registros...
    registro = u16 len(nome) | nome UTF-8 | u8 dtype | u8 ndim | ndim x u64 | payload row-major
"""

import json
import struct
from typing import Any, Dict, Mapping, Tuple

import numpy as np

from src.errors import ModelLoadError

MAGIC = b"AMLG"
VERSION = 1
FLAG_CLOUD = 0x00
FLAG_LOCAL_ONLY = 0x4C

DTYPE_CODES = {
    1: np.dtype("<f4"),
    2: np.dtype("<f8"),
    3: np.dtype("<i8"),
    4: np.dtype("u1"),  # metadados JSON em UTF-8
}
_CODE_OF = {dtype: code for code, dtype in DTYPE_CODES.items()}

_HEADER = struct.Struct("<4sHB")


def _dtype_code(array: np.ndarray, name: str) -> int:
    dtype = array.dtype.newbyteorder("<") if array.dtype.byteorder == ">" else array.dtype
    for code, candidate in DTYPE_CODES.items():
        if dtype == candidate:
            return code
    raise ModelLoadError(f"dtype {array.dtype} não suportado no contêiner", name)


def encode_archive(records: Mapping[str, np.ndarray], flag: int = FLAG_CLOUD) -> bytes:
    """Serializa os registros em ordem de nome (bytes canônicos)"""
    chunks = [_HEADER.pack(MAGIC, VERSION, flag)]
    for name in sorted(records):
        array = np.asarray(records[name])
        code = _dtype_code(array, name)
        encoded_name = name.encode("utf-8")
        if len(encoded_name) > 0xFFFF or array.ndim > 0xFF:
            raise ModelLoadError("nome ou número de dimensões grande demais", name)
        chunks.append(struct.pack("<H", len(encoded_name)))
        chunks.append(encoded_name)
        chunks.append(struct.pack("<BB", code, array.ndim))
        chunks.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        chunks.append(np.ascontiguousarray(array, dtype=DTYPE_CODES[code]).tobytes())
    return b"".join(chunks)


def decode_archive(payload: bytes, location: str = "<bytes>") -> Tuple[Dict[str, np.ndarray], int]:
    """Lê um contêiner AMLG; devolve (registros, flag reservada)"""
    if len(payload) < _HEADER.size:
        raise ModelLoadError("arquivo truncado (cabeçalho)", location)
    magic, version, flag = _HEADER.unpack_from(payload, 0)
    if magic != MAGIC:
        raise ModelLoadError(f"magic inválido {magic!r}", location)
    if version != VERSION:
        raise ModelLoadError(f"versão {version} não suportada", location)
    offset = _HEADER.size
    records: Dict[str, np.ndarray] = {}
    try:
        while offset < len(payload):
            (name_len,) = struct.unpack_from("<H", payload, offset)
            offset += 2
            name = payload[offset:offset + name_len].decode("utf-8")
            offset += name_len
            code, ndim = struct.unpack_from("<BB", payload, offset)
            offset += 2
            if code not in DTYPE_CODES:
                raise ModelLoadError(f"código de dtype {code} desconhecido", f"{location}:{name}")
            shape = struct.unpack_from(f"<{ndim}Q", payload, offset)
            offset += 8 * ndim
            dtype = DTYPE_CODES[code]
            nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
            if offset + nbytes > len(payload):
                raise ModelLoadError("payload truncado", f"{location}:{name}")
            array = np.frombuffer(payload, dtype=dtype, count=nbytes // dtype.itemsize, offset=offset)
            records[name] = array.reshape(shape).astype(dtype.newbyteorder("="), copy=True)
            offset += nbytes
    except (struct.error, UnicodeDecodeError) as e:
        raise ModelLoadError(f"registro corrompido: {e}", location)
    return records, flag


def write_archive(path, records: Mapping[str, np.ndarray], flag: int = FLAG_CLOUD) -> bytes:
    payload = encode_archive(records, flag)
    with open(path, "wb") as f:
        f.write(payload)
    return payload


def read_archive(path) -> Tuple[Dict[str, np.ndarray], int]:
    try:
        with open(path, "rb") as f:
            payload = f.read()
    except OSError as e:
        raise ModelLoadError(f"não foi possível ler: {e}", str(path))
    return decode_archive(payload, str(path))


def json_record(obj: Any) -> np.ndarray:
    """Metadado JSON canônico como registro u8"""
    text = json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)
    return np.frombuffer(text.encode("utf-8"), dtype=np.uint8).copy()


def parse_json_record(array: np.ndarray, location: str = "meta") -> Any:
    try:
        return json.loads(np.asarray(array, dtype=np.uint8).tobytes().decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ModelLoadError(f"metadado JSON inválido: {e}", location)
