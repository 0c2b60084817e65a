"""Execução de um ModelGraph sobre a Tape do motor (forward, perdas e gradientes)"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from src.engine.autograd import GradStore, GraphNode, Tape, backward
from src.errors import DimensionError, OutOfRangeError
from src.ir.model_graph import INPUT_ID, LayerSpec, ModelGraph, ParamStore, param_key


@dataclass
class ForwardPass:
    tape: Tape
    input: GraphNode
    params: Dict[str, GraphNode] = field(default_factory=dict)
    outputs: Dict[str, GraphNode] = field(default_factory=dict)
    heads: List[GraphNode] = field(default_factory=list)


def _param_node(fp: ForwardPass, store: ParamStore, layer_id: str, name: str, requires_grad: bool) -> GraphNode:
    key = param_key(layer_id, name)
    node = fp.params.get(key)
    if node is None:
        node = fp.tape.parameter(store[key].data, key, requires_grad)
        fp.params[key] = node
    return node


def apply_layer(fp: ForwardPass, layer: LayerSpec, x: GraphNode, store: ParamStore,
                requires_grad: bool = True) -> GraphNode:
    """Aplica uma camada ao nó `x` (com eixo de lote)"""
    tape, hp, kind = fp.tape, layer.hyperparams, layer.kind

    def p(name):
        return _param_node(fp, store, layer.id, name, requires_grad)

    if kind == "conv2d":
        return tape.conv2d(x, p("weight"), p("bias"), int(hp["stride"]), int(hp["padding"]))
    if kind == "skip_conv2d":
        return tape.skip_conv2d(x, p("weight"), p("bias"), hp["keep_rows"], hp["keep_cols"],
                                int(hp["stride"]), int(hp["padding"]))
    if kind == "linear":
        return tape.linear(x, p("weight"), p("bias"))
    if kind == "embedding":
        return tape.embedding(x, p("weight"))
    if kind == "skip_embedding":
        return tape.skip_embedding(x, p("weight"), hp["skip_positions"])
    if kind == "relu":
        return tape.relu(x)
    if kind == "maxpool2d":
        return tape.maxpool2d(x, int(hp["kernel_size"]), int(hp["stride"]))
    if kind == "avgpool2d":
        return tape.avgpool2d(x, int(hp["kernel_size"]), int(hp["stride"]))
    if kind == "flatten":
        return tape.flatten(x)
    if kind == "mean_seq":
        return tape.mean_seq(x)
    raise DimensionError(f"tipo de camada sem execução: {kind}")


def check_batch(graph: ModelGraph, batch: np.ndarray) -> None:
    expected = graph.input_shape
    if tuple(batch.shape[1:]) != expected:
        raise DimensionError(f"Lote com amostras {tuple(batch.shape[1:])}, modelo espera {expected}")
    if graph.modality == "text" and batch.dtype.kind not in "iu":
        raise DimensionError("Modelo de texto espera ids inteiros")


def forward(graph: ModelGraph, params: ParamStore, batch: np.ndarray, requires_grad: bool = True,
            input_requires_grad: bool = False, tape: Optional[Tape] = None) -> ForwardPass:
    """
    Executa o grafo em ordem topológica. Várias arestas de entrada são somadas
    na ordem da lista de arestas; arestas com grad_stop passam por detach e,
    se houver adapter, pela camada de projeção antes da soma.
    """
    batch = np.asarray(batch)
    check_batch(graph, batch)
    tape = tape or Tape()
    fp = ForwardPass(tape, tape.input(batch, input_requires_grad, name=INPUT_ID if input_requires_grad else None))
    fp.outputs[INPUT_ID] = fp.input
    for layer_id in graph.topological_order():
        inputs = []
        for edge in graph.incoming(layer_id):
            node = fp.outputs[edge.src]
            if edge.grad_stop:
                node = tape.detach(node)
            if edge.adapter is not None:
                node = apply_layer(fp, graph.layer(edge.adapter), node, params, requires_grad)
            inputs.append(node)
        x = inputs[0] if len(inputs) == 1 else tape.add(*inputs)
        fp.outputs[layer_id] = apply_layer(fp, graph.layer(layer_id), x, params, requires_grad)
    fp.heads = [fp.outputs[h] for h in graph.heads]
    return fp


def head_losses(fp: ForwardPass, labels: np.ndarray) -> Tuple[GraphNode, List[GraphNode]]:
    """Perda total = soma (nó add, mesmo com uma saída) das entropias cruzadas por saída"""
    labels_node = fp.tape.input(np.asarray(labels, dtype=np.int64))
    losses = [fp.tape.softmax_xent(head, labels_node) for head in fp.heads]
    return fp.tape.add(*losses), losses


def accuracy(logits: np.ndarray, labels: np.ndarray) -> float:
    return float(np.mean(np.argmax(logits, axis=1) == labels))


@dataclass
class StepResult:
    loss_total: float
    losses: List[float]
    accuracies: List[float]
    grads: Optional[GradStore] = None


def loss_and_grads(graph: ModelGraph, params: ParamStore, batch: np.ndarray, labels: np.ndarray,
                   with_grads: bool = True) -> StepResult:
    fp = forward(graph, params, batch, requires_grad=with_grads)
    total, losses = head_losses(fp, labels)
    grads = backward(total) if with_grads else None
    return StepResult(
        loss_total=float(total.value),
        losses=[float(l.value) for l in losses],
        accuracies=[accuracy(h.value, labels) for h in fp.heads],
        grads=grads,
    )


def predict(graph: ModelGraph, params: ParamStore, batch: np.ndarray, head_index: int = 0) -> np.ndarray:
    """Logits da saída `head_index`"""
    if not 0 <= head_index < len(graph.heads):
        raise OutOfRangeError(f"head_index {head_index} fora de [0, {len(graph.heads)})")
    fp = forward(graph, params, batch, requires_grad=False)
    return fp.heads[head_index].value
