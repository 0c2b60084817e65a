"""
Kernels numéricos do motor (numpy puro, determinísticos).

As funções com sufixo `_fwd`/`_bwd` operam em np.ndarray com eixo de lote
(N primeiro). As funções públicas `*_forward` recebem Tensors sem lote, como
na API das camadas, e delegam para os kernels.

Convolução é correlação cruzada (sem inverter o kernel). A convolução com
salto (skip) é sempre "gather e depois convolução densa", o que garante
igualdade bit a bit com a convolução do modelo original.
"""

from typing import Sequence, Tuple

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from src.engine.tensor import Tensor, as_array
from src.errors import ArgumentError, DimensionError, OutOfRangeError


# ---------------------------------------------------------------------------
# Utilitários de índices
# ---------------------------------------------------------------------------

def check_index_set(indices: Sequence[int], size: int, name: str) -> np.ndarray:
    """Valida um conjunto ordenado de índices em [0, size) e devolve int64"""
    idx = np.asarray(indices, dtype=np.int64).reshape(-1)
    if idx.size == 0:
        raise ArgumentError(f"Conjunto '{name}' vazio")
    if idx.min() < 0 or idx.max() >= size:
        raise OutOfRangeError(f"Índice de '{name}' fora de [0, {size}): {idx.min()}..{idx.max()}")
    if np.any(np.diff(idx) <= 0):
        raise ArgumentError(f"Conjunto '{name}' precisa ser estritamente crescente")
    return idx


def complement(indices: Sequence[int], size: int) -> np.ndarray:
    mask = np.ones(size, dtype=bool)
    mask[np.asarray(indices, dtype=np.int64)] = False
    return np.flatnonzero(mask).astype(np.int64)


# ---------------------------------------------------------------------------
# Convolução 2D
# ---------------------------------------------------------------------------

def _windows(x_pad: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    # [N, C, H', W', kH, kW]
    win = sliding_window_view(x_pad, (kh, kw), axis=(2, 3))
    return win[:, :, ::stride, ::stride]


def _pad(x: np.ndarray, padding: int) -> np.ndarray:
    if padding == 0:
        return x
    return np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))


def check_conv_shapes(x_shape: Tuple[int, ...], w_shape: Tuple[int, ...], b_shape: Tuple[int, ...],
                      stride: int, padding: int) -> None:
    if len(x_shape) != 4:
        raise DimensionError(f"conv2d espera entrada [N,C,H,W], recebido {x_shape}")
    if len(w_shape) != 4:
        raise DimensionError(f"conv2d espera kernel [C_out,C_in,kH,kW], recebido {w_shape}")
    if x_shape[1] != w_shape[1]:
        raise DimensionError(f"Canais de entrada {x_shape[1]} != canais do kernel {w_shape[1]}")
    if tuple(b_shape) != (w_shape[0],):
        raise DimensionError(f"Bias {tuple(b_shape)} incompatível com C_out={w_shape[0]}")
    if stride < 1 or padding < 0:
        raise ArgumentError(f"stride >= 1 e padding >= 0 (stride={stride}, padding={padding})")
    if w_shape[2] > x_shape[2] + 2 * padding or w_shape[3] > x_shape[3] + 2 * padding:
        raise DimensionError(
            f"Kernel {w_shape[2]}x{w_shape[3]} maior que a entrada com padding "
            f"{x_shape[2] + 2 * padding}x{x_shape[3] + 2 * padding}"
        )


def conv2d_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray, stride: int = 1, padding: int = 0) -> np.ndarray:
    check_conv_shapes(x.shape, w.shape, b.shape, stride, padding)
    _, _, kh, kw = w.shape
    win = _windows(_pad(x, padding), kh, kw, stride)
    # [N, H', W', C_out]
    out = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))
    out = out.transpose(0, 3, 1, 2) + b.reshape(1, -1, 1, 1)
    return np.ascontiguousarray(out, dtype=x.dtype)


def conv2d_bwd(grad: np.ndarray, x: np.ndarray, w: np.ndarray, stride: int = 1,
               padding: int = 0) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Devolve (grad_x, grad_w, grad_b)"""
    n, c, h, wd = x.shape
    _, _, kh, kw = w.shape
    _, _, oh, ow = grad.shape
    win = _windows(_pad(x, padding), kh, kw, stride)
    grad_w = np.tensordot(grad, win, axes=([0, 2, 3], [0, 2, 3])).astype(w.dtype, copy=False)
    grad_b = grad.sum(axis=(0, 2, 3)).astype(w.dtype, copy=False)

    # col2im: [N, H', W', C, kH, kW]
    cols = np.tensordot(grad, w, axes=([1], [0])).transpose(0, 3, 1, 2, 4, 5)
    grad_pad = np.zeros((n, c, h + 2 * padding, wd + 2 * padding), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            grad_pad[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += cols[..., i, j]
    grad_x = grad_pad[:, :, padding:padding + h, padding:padding + wd]
    return np.ascontiguousarray(grad_x), np.ascontiguousarray(grad_w), grad_b


def gather_grid(x: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """x[..., rows, :][..., cols] preservando a ordem (linhas e depois colunas)"""
    return np.ascontiguousarray(x[:, :, rows][:, :, :, cols])


def scatter_grid(grad: np.ndarray, rows: np.ndarray, cols: np.ndarray, full_shape: Tuple[int, ...]) -> np.ndarray:
    """Inverso de gather_grid para gradientes; posições puladas recebem zero exato"""
    out = np.zeros(full_shape, dtype=grad.dtype)
    out[:, :, rows[:, None], cols[None, :]] = grad
    return out


# ---------------------------------------------------------------------------
# Pooling
# ---------------------------------------------------------------------------

def pool2d_fwd(x: np.ndarray, kernel: int, stride: int, mode: str) -> np.ndarray:
    if kernel > x.shape[2] or kernel > x.shape[3]:
        raise DimensionError(f"Janela de pooling {kernel} maior que a entrada {x.shape[2:]}")
    win = _windows(x, kernel, kernel, stride)
    if mode == "max":
        return np.ascontiguousarray(win.max(axis=(4, 5)))
    return np.ascontiguousarray(win.mean(axis=(4, 5), dtype=x.dtype))


def pool2d_bwd(grad: np.ndarray, x: np.ndarray, kernel: int, stride: int, mode: str) -> np.ndarray:
    _, _, oh, ow = grad.shape
    grad_x = np.zeros_like(x)
    if mode == "max":
        win = _windows(x, kernel, kernel, stride)
        flat = win.reshape(win.shape[:4] + (kernel * kernel,))
        # empate: o primeiro máximo recebe o gradiente
        arg = flat.argmax(axis=4)
        for i in range(kernel):
            for j in range(kernel):
                mask = arg == (i * kernel + j)
                grad_x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += grad * mask
        return grad_x
    share = (grad / (kernel * kernel)).astype(x.dtype, copy=False)
    for i in range(kernel):
        for j in range(kernel):
            grad_x[:, :, i:i + stride * oh:stride, j:j + stride * ow:stride] += share
    return grad_x


# ---------------------------------------------------------------------------
# Embedding
# ---------------------------------------------------------------------------

def check_token_ids(ids: np.ndarray, vocab: int) -> None:
    if ids.dtype.kind not in "iu":
        raise ArgumentError(f"Ids de token precisam ser inteiros, recebido {ids.dtype}")
    if ids.size and (ids.min() < 0 or ids.max() >= vocab):
        raise OutOfRangeError(f"Id de token fora do vocabulário [0, {vocab}): {ids.min()}..{ids.max()}")


def embedding_fwd(ids: np.ndarray, table: np.ndarray) -> np.ndarray:
    check_token_ids(ids, table.shape[0])
    return np.ascontiguousarray(table[ids])


def embedding_bwd(grad: np.ndarray, ids: np.ndarray, table_shape: Tuple[int, ...]) -> np.ndarray:
    grad_table = np.zeros(table_shape, dtype=grad.dtype)
    # np.add.at acumula sequencialmente, na ordem das posições
    np.add.at(grad_table, ids.reshape(-1), grad.reshape(-1, table_shape[1]))
    return grad_table


# ---------------------------------------------------------------------------
# Linear, ativações e perda
# ---------------------------------------------------------------------------

def linear_fwd(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    if x.ndim != 2 or x.shape[1] != w.shape[1]:
        raise DimensionError(f"linear espera entrada [N,{w.shape[1]}], recebido {x.shape}")
    return np.ascontiguousarray(x @ w.T + b)


def linear_bwd(grad: np.ndarray, x: np.ndarray, w: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    return grad @ w, grad.T @ x, grad.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=1, keepdims=True)


def softmax_xent_fwd(logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Entropia cruzada média do lote (escalar 0-d no dtype dos logits)"""
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"softmax_xent espera logits [N,K] e rótulos [N], recebido {logits.shape}/{labels.shape}")
    if labels.size and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise OutOfRangeError(f"Rótulo fora de [0, {logits.shape[1]})")
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(shifted).sum(axis=1))
    picked = shifted[np.arange(labels.shape[0]), labels]
    return np.asarray((log_norm - picked).mean(), dtype=logits.dtype)


def softmax_xent_bwd(grad: np.ndarray, logits: np.ndarray, labels: np.ndarray) -> np.ndarray:
    probs = softmax(logits)
    probs[np.arange(labels.shape[0]), labels] -= 1
    return (probs * (grad / labels.shape[0])).astype(logits.dtype, copy=False)


# ---------------------------------------------------------------------------
# Operações públicas (entradas sem eixo de lote)
# ---------------------------------------------------------------------------

def conv2d_forward(input: Tensor, kernel: Tensor, bias: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Correlação cruzada válida de [C_in,H,W] com kernel [C_out,C_in,kH,kW]"""
    x = as_array(input)
    if x.ndim != 3:
        raise DimensionError(f"conv2d_forward espera [C_in,H,W], recebido {x.shape}")
    out = conv2d_fwd(x[None], as_array(kernel), as_array(bias), stride, padding)
    return Tensor(out[0])


def skip_conv2d_forward(input: Tensor, kernel: Tensor, bias: Tensor, keep_rows: Sequence[int],
                        keep_cols: Sequence[int], stride: int = 1, padding: int = 0) -> Tensor:
    """Convolução que ignora as linhas/colunas fora dos conjuntos mantidos"""
    x = as_array(input)
    if x.ndim != 3:
        raise DimensionError(f"skip_conv2d_forward espera [C_in,H_a,W_a], recebido {x.shape}")
    rows = check_index_set(keep_rows, x.shape[1], "keep_rows")
    cols = check_index_set(keep_cols, x.shape[2], "keep_cols")
    sub = gather_grid(x[None], rows, cols)
    return Tensor(conv2d_fwd(sub, as_array(kernel), as_array(bias), stride, padding)[0])


def embedding_forward(token_ids: Tensor, table: Tensor) -> Tensor:
    ids = as_array(token_ids)
    if ids.ndim != 1:
        raise DimensionError(f"embedding_forward espera ids [L], recebido {ids.shape}")
    return Tensor(embedding_fwd(ids, as_array(table)))


def skip_embedding_forward(token_ids: Tensor, table: Tensor, skip_positions: Sequence[int]) -> Tensor:
    ids = as_array(token_ids)
    if ids.ndim != 1:
        raise DimensionError(f"skip_embedding_forward espera ids [L'], recebido {ids.shape}")
    skip = np.asarray(skip_positions, dtype=np.int64).reshape(-1)
    if skip.size and (skip.min() < 0 or skip.max() >= ids.shape[0]):
        raise OutOfRangeError(f"Posição pulada fora de [0, {ids.shape[0]})")
    keep = complement(skip, ids.shape[0])
    if keep.size == 0:
        raise ArgumentError("skip_positions cobre a sequência inteira")
    return Tensor(embedding_fwd(ids[keep], as_array(table)))
