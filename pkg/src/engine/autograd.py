"""
Diferenciação automática em modo reverso sobre um grafo dinâmico.

Cada operação executa o forward na hora e registra um GraphNode na Tape.
Os ids dos nós crescem na ordem de criação, que já é uma ordem topológica;
o backward percorre os ids em ordem decrescente e acumula gradientes sempre
na mesma ordem, o que torna o resultado reprodutível bit a bit.
"""

from typing import Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from src.engine import kernels as K
from src.engine.tensor import FLOAT_DTYPES, Tensor, as_array
from src.errors import ArgumentError, DimensionError, InternalError

OP_KINDS = (
    "input", "parameter", "linear", "conv2d", "skip_conv2d", "embedding", "skip_embedding",
    "relu", "maxpool2d", "avgpool2d", "flatten", "add", "mean_seq", "softmax_xent", "detach",
)

# None = aridade variável (>= 1)
ARITY: Dict[str, Optional[int]] = {
    "input": 0, "parameter": 0,
    "linear": 3, "conv2d": 3, "skip_conv2d": 3,
    "embedding": 2, "skip_embedding": 2,
    "relu": 1, "maxpool2d": 1, "avgpool2d": 1, "flatten": 1, "mean_seq": 1, "detach": 1,
    "add": None, "softmax_xent": 2,
}


class GraphNode:
    """Nó do grafo de computação (operação + entradas + atributos + valor)"""

    __slots__ = ("id", "op_kind", "inputs", "attrs", "value", "requires_grad", "name", "tape")

    def __init__(self, tape: "Tape", node_id: int, op_kind: str, inputs: Sequence["GraphNode"],
                 attrs: Dict, value: np.ndarray, requires_grad: bool, name: Optional[str] = None):
        self.tape = tape
        self.id = node_id
        self.op_kind = op_kind
        self.inputs = tuple(inputs)
        self.attrs = attrs
        self.value = value
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> Tuple[int, ...]:
        return tuple(self.value.shape)

    def tensor(self) -> Tensor:
        return Tensor(self.value)

    def __repr__(self) -> str:
        label = f" '{self.name}'" if self.name else ""
        return f"GraphNode#{self.id}({self.op_kind}{label}, shape={self.shape})"


class GradStore:
    """Mapa nome do parâmetro -> gradiente (Tensor)"""

    def __init__(self, grads: Optional[Dict[str, Tensor]] = None):
        self._grads: Dict[str, Tensor] = dict(grads or {})

    def __getitem__(self, name: str) -> Tensor:
        return self._grads[name]

    def __contains__(self, name: str) -> bool:
        return name in self._grads

    def __iter__(self) -> Iterator[str]:
        return iter(self._grads)

    def __len__(self) -> int:
        return len(self._grads)

    def items(self):
        return self._grads.items()

    def keys(self):
        return self._grads.keys()

    def get(self, name: str, default=None):
        return self._grads.get(name, default)

    def set(self, name: str, grad: Tensor) -> None:
        self._grads[name] = grad

    def scaled(self, factor: float) -> "GradStore":
        return GradStore({k: Tensor(v.data * v.data.dtype.type(factor)) for k, v in self._grads.items()})


class Tape:
    """Registro dinâmico das operações executadas"""

    def __init__(self):
        self.nodes: List[GraphNode] = []

    def _record(self, op_kind: str, inputs: Sequence[GraphNode], attrs: Dict, value: np.ndarray,
                requires_grad: Optional[bool] = None, name: Optional[str] = None) -> GraphNode:
        arity = ARITY[op_kind]
        if (arity is None and len(inputs) < 1) or (arity is not None and len(inputs) != arity):
            raise InternalError(f"Aridade inválida para {op_kind}: {len(inputs)}")
        for node in inputs:
            if node.tape is not self:
                raise InternalError(f"Nó {node} pertence a outra Tape")
        if requires_grad is None:
            requires_grad = any(node.requires_grad for node in inputs)
        node = GraphNode(self, len(self.nodes), op_kind, inputs, attrs, value, requires_grad, name)
        self.nodes.append(node)
        return node

    # -- folhas ------------------------------------------------------------

    def input(self, value, requires_grad: bool = False, name: Optional[str] = None) -> GraphNode:
        array = np.ascontiguousarray(as_array(value))
        if requires_grad and array.dtype not in FLOAT_DTYPES:
            raise ArgumentError("Entrada inteira não pode exigir gradiente")
        return self._record("input", (), {}, array, requires_grad, name)

    def parameter(self, value, name: str, requires_grad: bool = True) -> GraphNode:
        array = as_array(value)
        if array.dtype not in FLOAT_DTYPES:
            raise ArgumentError(f"Parâmetro '{name}' precisa ser de ponto flutuante")
        return self._record("parameter", (), {}, array, requires_grad, name)

    # -- camadas -----------------------------------------------------------

    def linear(self, x: GraphNode, w: GraphNode, b: GraphNode) -> GraphNode:
        return self._record("linear", (x, w, b), {}, K.linear_fwd(x.value, w.value, b.value))

    def conv2d(self, x: GraphNode, w: GraphNode, b: GraphNode, stride: int = 1, padding: int = 0) -> GraphNode:
        value = K.conv2d_fwd(x.value, w.value, b.value, stride, padding)
        return self._record("conv2d", (x, w, b), {"stride": stride, "padding": padding}, value)

    def skip_conv2d(self, x: GraphNode, w: GraphNode, b: GraphNode, keep_rows: Sequence[int],
                    keep_cols: Sequence[int], stride: int = 1, padding: int = 0) -> GraphNode:
        if x.value.ndim != 4:
            raise DimensionError(f"skip_conv2d espera [N,C,H_a,W_a], recebido {x.shape}")
        rows = K.check_index_set(keep_rows, x.value.shape[2], "keep_rows")
        cols = K.check_index_set(keep_cols, x.value.shape[3], "keep_cols")
        sub = K.gather_grid(x.value, rows, cols)
        value = K.conv2d_fwd(sub, w.value, b.value, stride, padding)
        attrs = {"stride": stride, "padding": padding, "keep_rows": rows, "keep_cols": cols, "gathered": sub}
        return self._record("skip_conv2d", (x, w, b), attrs, value)

    def embedding(self, ids: GraphNode, table: GraphNode) -> GraphNode:
        return self._record("embedding", (ids, table), {}, K.embedding_fwd(ids.value, table.value))

    def skip_embedding(self, ids: GraphNode, table: GraphNode, skip_positions: Sequence[int]) -> GraphNode:
        if ids.value.ndim != 2:
            raise DimensionError(f"skip_embedding espera ids [N,L'], recebido {ids.shape}")
        length = ids.value.shape[1]
        skip = np.asarray(skip_positions, dtype=np.int64).reshape(-1)
        if skip.size:
            K.check_index_set(skip, length, "skip_positions")
        keep = K.complement(skip, length)
        if keep.size == 0:
            raise ArgumentError("skip_positions cobre a sequência inteira")
        kept_ids = np.ascontiguousarray(ids.value[:, keep])
        value = K.embedding_fwd(kept_ids, table.value)
        attrs = {"skip_positions": skip, "kept_ids": kept_ids}
        return self._record("skip_embedding", (ids, table), attrs, value)

    def relu(self, x: GraphNode) -> GraphNode:
        return self._record("relu", (x,), {}, np.maximum(x.value, x.value.dtype.type(0)))

    def maxpool2d(self, x: GraphNode, kernel: int = 2, stride: Optional[int] = None) -> GraphNode:
        stride = stride or kernel
        value = K.pool2d_fwd(x.value, kernel, stride, "max")
        return self._record("maxpool2d", (x,), {"kernel": kernel, "stride": stride}, value)

    def avgpool2d(self, x: GraphNode, kernel: int = 2, stride: Optional[int] = None) -> GraphNode:
        stride = stride or kernel
        value = K.pool2d_fwd(x.value, kernel, stride, "avg")
        return self._record("avgpool2d", (x,), {"kernel": kernel, "stride": stride}, value)

    def flatten(self, x: GraphNode) -> GraphNode:
        return self._record("flatten", (x,), {}, x.value.reshape(x.value.shape[0], -1))

    def mean_seq(self, x: GraphNode) -> GraphNode:
        if x.value.ndim != 3:
            raise DimensionError(f"mean_seq espera [N,L,E], recebido {x.shape}")
        return self._record("mean_seq", (x,), {}, x.value.mean(axis=1, dtype=x.value.dtype))

    def add(self, *xs: GraphNode) -> GraphNode:
        shapes = {node.shape for node in xs}
        if len(shapes) != 1:
            raise DimensionError(f"add com shapes diferentes: {sorted(shapes)}")
        value = xs[0].value
        for node in xs[1:]:
            value = value + node.value
        if len(xs) == 1:
            value = value.copy()
        return self._record("add", xs, {}, value)

    def softmax_xent(self, logits: GraphNode, labels: GraphNode) -> GraphNode:
        return self._record("softmax_xent", (logits, labels), {}, K.softmax_xent_fwd(logits.value, labels.value))

    def detach(self, x: GraphNode) -> GraphNode:
        return self._record("detach", (x,), {}, x.value, requires_grad=False)


# ---------------------------------------------------------------------------
# Regras de backward: (nó, grad da saída) -> grads das entradas (None = sem fluxo)
# ---------------------------------------------------------------------------

def _bwd_linear(node, g):
    x, w, _ = node.inputs
    return K.linear_bwd(g, x.value, w.value)


def _bwd_conv2d(node, g):
    x, w, _ = node.inputs
    return K.conv2d_bwd(g, x.value, w.value, node.attrs["stride"], node.attrs["padding"])


def _bwd_skip_conv2d(node, g):
    x, w, _ = node.inputs
    sub = node.attrs["gathered"]
    grad_sub, grad_w, grad_b = K.conv2d_bwd(g, sub, w.value, node.attrs["stride"], node.attrs["padding"])
    grad_x = None
    if x.requires_grad:
        grad_x = K.scatter_grid(grad_sub, node.attrs["keep_rows"], node.attrs["keep_cols"], x.value.shape)
    return grad_x, grad_w, grad_b


def _bwd_embedding(node, g):
    ids, table = node.inputs
    return None, K.embedding_bwd(g, ids.value, table.value.shape)


def _bwd_skip_embedding(node, g):
    _, table = node.inputs
    return None, K.embedding_bwd(g, node.attrs["kept_ids"], table.value.shape)


def _bwd_relu(node, g):
    return (g * (node.inputs[0].value > 0),)


def _bwd_maxpool2d(node, g):
    return (K.pool2d_bwd(g, node.inputs[0].value, node.attrs["kernel"], node.attrs["stride"], "max"),)


def _bwd_avgpool2d(node, g):
    return (K.pool2d_bwd(g, node.inputs[0].value, node.attrs["kernel"], node.attrs["stride"], "avg"),)


def _bwd_flatten(node, g):
    return (g.reshape(node.inputs[0].value.shape),)


def _bwd_mean_seq(node, g):
    x = node.inputs[0].value
    share = g / x.dtype.type(x.shape[1])
    return (np.broadcast_to(share[:, None, :], x.shape).astype(x.dtype),)


def _bwd_add(node, g):
    return tuple(g for _ in node.inputs)


def _bwd_softmax_xent(node, g):
    logits, labels = node.inputs
    return K.softmax_xent_bwd(g, logits.value, labels.value), None


def _bwd_detach(node, g):
    return (None,)


BACKWARD: Dict[str, Callable] = {
    "linear": _bwd_linear,
    "conv2d": _bwd_conv2d,
    "skip_conv2d": _bwd_skip_conv2d,
    "embedding": _bwd_embedding,
    "skip_embedding": _bwd_skip_embedding,
    "relu": _bwd_relu,
    "maxpool2d": _bwd_maxpool2d,
    "avgpool2d": _bwd_avgpool2d,
    "flatten": _bwd_flatten,
    "mean_seq": _bwd_mean_seq,
    "add": _bwd_add,
    "softmax_xent": _bwd_softmax_xent,
    "detach": _bwd_detach,
}


def backward(loss_node: GraphNode) -> GradStore:
    """
    Propaga gradientes a partir de uma perda escalar.

    Retorna um GradStore com uma entrada por folha nomeada que exige gradiente
    (parâmetros e entradas marcadas); folhas não alcançáveis recebem zeros.
    """
    if loss_node.value.size != 1:
        raise ArgumentError(f"backward exige perda escalar, recebido shape {loss_node.shape}")
    tape = loss_node.tape
    grads: Dict[int, np.ndarray] = {loss_node.id: np.ones_like(loss_node.value)}

    for node_id in range(loss_node.id, -1, -1):
        node = tape.nodes[node_id]
        g = grads.get(node_id)
        if g is None or not node.requires_grad or node.op_kind in ("input", "parameter"):
            continue
        del grads[node_id]
        input_grads = BACKWARD[node.op_kind](node, g)
        for inp, gi in zip(node.inputs, input_grads):
            if gi is None or not inp.requires_grad:
                continue
            if gi.shape != inp.value.shape:
                raise InternalError(f"Gradiente de {node} para {inp} com shape {gi.shape}")
            if inp.id in grads:
                grads[inp.id] = grads[inp.id] + gi
            else:
                grads[inp.id] = gi

    store = GradStore()
    for node in tape.nodes:
        if node.op_kind in ("parameter", "input") and node.requires_grad and node.name is not None:
            g = grads.get(node.id)
            if g is None:
                g = np.zeros_like(node.value)
            store.set(node.name, Tensor(np.asarray(g, dtype=node.value.dtype)))
    return store
