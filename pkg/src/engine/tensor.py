"""Tensor - valor universal do motor (array denso + slot opcional de gradiente)"""

from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import ArgumentError, DimensionError

# Tipos aceitos e seus códigos no contêiner AMLG
DTYPES = {
    "float32": np.dtype(np.float32),
    "float64": np.dtype(np.float64),
    "int64": np.dtype(np.int64),
}
FLOAT_DTYPES = (np.dtype(np.float32), np.dtype(np.float64))
DEFAULT_DTYPE = np.float32

ArrayLike = Union["Tensor", np.ndarray, Sequence, float, int]


class Tensor:
    """
    Array n-dimensional row-major com dtype em {float32, float64, int64}.

    Attributes:
        data: np.ndarray contíguo (C order)
        requires_grad: se participa do cálculo de gradientes
        grad: gradiente acumulado (mesmo shape, dtype de ponto flutuante) ou None
    """

    __slots__ = ("data", "requires_grad", "grad")

    def __init__(self, data: ArrayLike, dtype=None, requires_grad: bool = False):
        if isinstance(data, Tensor):
            data = data.data
        array = np.asarray(data)
        if dtype is not None:
            array = array.astype(np.dtype(dtype), copy=False)
        elif array.dtype.kind == "f":
            array = array.astype(array.dtype if array.dtype in FLOAT_DTYPES else DEFAULT_DTYPE, copy=False)
        elif array.dtype.kind in "iub":
            array = array.astype(np.int64, copy=False)
        if array.dtype not in DTYPES.values():
            raise ArgumentError(f"dtype não suportado: {array.dtype}")
        if array.ndim > 0 and min(array.shape) < 1:
            raise DimensionError(f"Dimensões devem ser >= 1, recebido {array.shape}")
        if requires_grad and array.dtype not in FLOAT_DTYPES:
            raise ArgumentError("Somente tensores de ponto flutuante podem exigir gradiente")
        self.data = np.ascontiguousarray(array)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.data.shape)

    @property
    def dtype(self) -> str:
        return self.data.dtype.name

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numel(self) -> int:
        return int(self.data.size)

    def numpy(self) -> np.ndarray:
        return self.data

    def tolist(self) -> List:
        return self.data.tolist()

    def copy(self) -> "Tensor":
        return Tensor(self.data.copy(), requires_grad=self.requires_grad)

    def astype(self, dtype) -> "Tensor":
        return Tensor(self.data.astype(np.dtype(dtype)), requires_grad=self.requires_grad)

    def bitwise_equal(self, other: "Tensor") -> bool:
        """Igualdade bit a bit (dtype, shape e bytes)"""
        return (
            self.data.dtype == other.data.dtype
            and self.data.shape == other.data.shape
            and self.data.tobytes() == other.data.tobytes()
        )

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    @staticmethod
    def zeros(shape: Iterable[int], dtype=DEFAULT_DTYPE) -> "Tensor":
        return Tensor(np.zeros(tuple(shape), dtype=dtype))


def as_array(value: ArrayLike) -> np.ndarray:
    """Aceita Tensor ou array e devolve o np.ndarray subjacente"""
    if isinstance(value, Tensor):
        return value.data
    return np.asarray(value)
