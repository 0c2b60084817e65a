"""
Representação intermediária (IR) dos modelos: camadas, arestas, saídas e
armazenamento de parâmetros.

O grafo é compartilhado pelo augmenter, trainer e extractor. Não há nenhum
campo que indique a qual sub-rede uma camada pertence.
"""

import copy
import math
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Optional, Tuple

import networkx as nx
import numpy as np

from src.engine.tensor import Tensor
from src.errors import ArgumentError, DimensionError, ModelLoadError
from src.hash_utils import stream_id

IR_VERSION = "amalgam-ir/1"
INPUT_ID = "input"

LAYER_KINDS = (
    "conv2d", "skip_conv2d", "linear", "embedding", "skip_embedding",
    "relu", "maxpool2d", "avgpool2d", "flatten", "mean_seq",
)
SKIP_KINDS = ("skip_conv2d", "skip_embedding")
INPUT_LAYER_KINDS = ("conv2d", "skip_conv2d", "embedding", "skip_embedding")

# Hiperparâmetros obrigatórios por tipo de camada
REQUIRED_HYPERPARAMS: Dict[str, Tuple[str, ...]] = {
    "conv2d": ("in_channels", "out_channels", "kernel_size", "stride", "padding"),
    "skip_conv2d": ("in_channels", "out_channels", "kernel_size", "stride", "padding", "keep_rows", "keep_cols"),
    "linear": ("in_features", "out_features"),
    "embedding": ("vocab_size", "embedding_dim"),
    "skip_embedding": ("vocab_size", "embedding_dim", "sequence_length", "skip_positions"),
    "relu": (),
    "maxpool2d": ("kernel_size", "stride"),
    "avgpool2d": ("kernel_size", "stride"),
    "flatten": (),
    "mean_seq": (),
}

Shape = Tuple[int, ...]


@dataclass
class LayerSpec:
    """Camada do grafo: id único, tipo e hiperparâmetros"""

    id: str
    kind: str
    hyperparams: Dict[str, Any] = field(default_factory=dict)

    @property
    def param_shapes(self) -> Dict[str, Shape]:
        hp = self.hyperparams
        if self.kind in ("conv2d", "skip_conv2d"):
            k = int(hp["kernel_size"])
            return {
                "weight": (int(hp["out_channels"]), int(hp["in_channels"]), k, k),
                "bias": (int(hp["out_channels"]),),
            }
        if self.kind == "linear":
            return {"weight": (int(hp["out_features"]), int(hp["in_features"])), "bias": (int(hp["out_features"]),)}
        if self.kind in ("embedding", "skip_embedding"):
            return {"weight": (int(hp["vocab_size"]), int(hp["embedding_dim"]))}
        return {}

    def fan_in(self) -> int:
        hp = self.hyperparams
        if self.kind in ("conv2d", "skip_conv2d"):
            return int(hp["in_channels"]) * int(hp["kernel_size"]) ** 2
        if self.kind == "linear":
            return int(hp["in_features"])
        # tabela de lookup: cada linha é a própria entrada
        return 1

    def to_dict(self) -> Dict[str, Any]:
        return {
            "id": self.id,
            "kind": self.kind,
            "hyperparams": _jsonable(self.hyperparams),
            "param_shapes": {name: list(shape) for name, shape in self.param_shapes.items()},
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "LayerSpec":
        return cls(id=data["id"], kind=data["kind"], hyperparams=dict(data.get("hyperparams", {})))


@dataclass
class EdgeSpec:
    """Aresta src -> dst; grad_stop corta o gradiente; adapter projeta o shape"""

    src: str
    dst: str
    grad_stop: bool = False
    adapter: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return {"src": self.src, "dst": self.dst, "grad_stop": bool(self.grad_stop), "adapter": self.adapter}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "EdgeSpec":
        return cls(data["src"], data["dst"], bool(data.get("grad_stop", False)), data.get("adapter"))


@dataclass
class ModelGraph:
    """
    Modelo completo (M ou M').

    Attributes:
        input_spec: {"modality": "image", "shape": [C,H,W], "value_range": [lo,hi]}
                    ou {"modality": "text", "shape": [L], "vocab_size": V}
        layers: camadas em ordem de declaração
        edges: arestas; src pode ser INPUT_ID
        heads: ids das camadas que produzem logits
    """

    input_spec: Dict[str, Any]
    layers: List[LayerSpec] = field(default_factory=list)
    edges: List[EdgeSpec] = field(default_factory=list)
    heads: List[str] = field(default_factory=list)
    version: str = IR_VERSION

    # -- acesso ------------------------------------------------------------

    def layer(self, layer_id: str) -> LayerSpec:
        for layer in self.layers:
            if layer.id == layer_id:
                return layer
        raise KeyError(layer_id)

    @property
    def layer_ids(self) -> List[str]:
        return [layer.id for layer in self.layers]

    @property
    def modality(self) -> str:
        return self.input_spec["modality"]

    @property
    def input_shape(self) -> Shape:
        return tuple(int(d) for d in self.input_spec["shape"])

    def adapter_ids(self) -> List[str]:
        return [edge.adapter for edge in self.edges if edge.adapter is not None]

    def incoming(self, layer_id: str) -> List[EdgeSpec]:
        return [edge for edge in self.edges if edge.dst == layer_id]

    def outgoing(self, layer_id: str) -> List[EdgeSpec]:
        return [edge for edge in self.edges if edge.src == layer_id]

    def copy(self) -> "ModelGraph":
        return copy.deepcopy(self)

    # -- topologia ---------------------------------------------------------

    def to_networkx(self) -> nx.DiGraph:
        adapters = set(self.adapter_ids())
        g = nx.DiGraph()
        g.add_node(INPUT_ID, order=-1)
        for index, layer in enumerate(self.layers):
            if layer.id not in adapters:
                g.add_node(layer.id, order=index, kind=layer.kind)
        for edge in self.edges:
            g.add_edge(edge.src, edge.dst, grad_stop=edge.grad_stop, adapter=edge.adapter)
        return g

    def topological_order(self) -> List[str]:
        """Ordem topológica determinística (desempate pela ordem de declaração)"""
        g = self.to_networkx()
        order = nx.lexicographical_topological_sort(g, key=lambda n: g.nodes[n]["order"])
        return [node for node in order if node != INPUT_ID]

    def chain(self) -> List[str]:
        """Sequência de camadas de um modelo em cadeia (entrada -> única saída)"""
        if len(self.heads) != 1 or self.adapter_ids():
            raise ArgumentError("Modelo não é uma cadeia simples (várias saídas ou adapters)")
        order: List[str] = []
        current = INPUT_ID
        while current != self.heads[0]:
            nxt = self.outgoing(current)
            if len(nxt) != 1:
                raise ArgumentError(f"Modelo não é uma cadeia simples: '{current}' tem {len(nxt)} saídas")
            current = nxt[0].dst
            if len(self.incoming(current)) != 1:
                raise ArgumentError(f"Modelo não é uma cadeia simples: '{current}' tem várias entradas")
            order.append(current)
        if len(order) != len(self.layers):
            raise ArgumentError("Modelo possui camadas fora da cadeia principal")
        return order

    # -- validação e shapes ------------------------------------------------

    def validate(self) -> Dict[str, Shape]:
        """Verifica as invariantes do grafo; devolve os shapes por camada"""
        if self.version != IR_VERSION:
            raise ModelLoadError(f"versão '{self.version}' não suportada (esperado '{IR_VERSION}')", "version")
        modality = self.input_spec.get("modality")
        if modality not in ("image", "text"):
            raise ModelLoadError(f"modalidade desconhecida '{modality}'", "input_spec")
        seen = set()
        for index, layer in enumerate(self.layers):
            where = f"layers[{index}]"
            if layer.id in seen or layer.id == INPUT_ID:
                raise ModelLoadError(f"id de camada duplicado ou reservado '{layer.id}'", where)
            seen.add(layer.id)
            if layer.kind not in LAYER_KINDS:
                raise ModelLoadError(f"tipo de camada desconhecido '{layer.kind}'", where)
            missing = [k for k in REQUIRED_HYPERPARAMS[layer.kind] if k not in layer.hyperparams]
            if missing:
                raise ModelLoadError(f"hiperparâmetros ausentes em '{layer.id}': {missing}", where)
            has_sets = any(k in layer.hyperparams for k in ("keep_rows", "keep_cols", "skip_positions"))
            if has_sets and layer.kind not in SKIP_KINDS:
                raise ModelLoadError(f"conjuntos de salto em camada '{layer.id}' do tipo {layer.kind}", where)

        adapters = set()
        pairs = set()
        for index, edge in enumerate(self.edges):
            where = f"edges[{index}]"
            for endpoint in (edge.src, edge.dst):
                if endpoint != INPUT_ID and endpoint not in seen:
                    raise ModelLoadError(f"aresta aponta para camada desconhecida '{endpoint}'", where)
            if edge.dst == INPUT_ID:
                raise ModelLoadError("aresta não pode terminar na entrada", where)
            if (edge.src, edge.dst) in pairs:
                raise ModelLoadError(f"aresta duplicada {edge.src}->{edge.dst}", where)
            pairs.add((edge.src, edge.dst))
            if edge.adapter is not None:
                if edge.adapter not in seen:
                    raise ModelLoadError(f"adapter desconhecido '{edge.adapter}'", where)
                if edge.adapter in adapters:
                    raise ModelLoadError(f"adapter '{edge.adapter}' usado em mais de uma aresta", where)
                adapters.add(edge.adapter)
        for edge in self.edges:
            if edge.src in adapters or edge.dst in adapters:
                raise ModelLoadError(f"adapter '{edge.src if edge.src in adapters else edge.dst}' usado como extremidade")

        if not self.heads:
            raise ModelLoadError("modelo sem saídas (heads)", "heads")
        for head in self.heads:
            if head not in seen or head in adapters:
                raise ModelLoadError(f"saída desconhecida '{head}'", "heads")
        if not nx.is_directed_acyclic_graph(self.to_networkx()):
            raise ModelLoadError("grafo contém ciclo", "edges")

        shapes = self.infer_shapes()
        head_shapes = {shapes[h] for h in self.heads}
        if len(head_shapes) != 1 or len(next(iter(head_shapes))) != 1:
            raise ModelLoadError(f"saídas com shapes diferentes ou não vetoriais: {sorted(head_shapes)}", "heads")
        return shapes

    def infer_shapes(self) -> Dict[str, Shape]:
        """Shape por amostra (sem eixo de lote) da saída de cada camada"""
        shapes: Dict[str, Shape] = {INPUT_ID: self.input_shape}
        for layer_id in self.topological_order():
            incoming = self.incoming(layer_id)
            if not incoming:
                raise ModelLoadError(f"camada '{layer_id}' sem entrada", "edges")
            in_shapes = []
            for edge in incoming:
                shape = shapes[edge.src]
                if edge.adapter is not None:
                    shape = layer_output_shape(self.layer(edge.adapter), shape)
                in_shapes.append(shape)
            if len(set(in_shapes)) != 1:
                raise DimensionError(f"entradas de '{layer_id}' com shapes diferentes: {in_shapes}")
            shapes[layer_id] = layer_output_shape(self.layer(layer_id), in_shapes[0])
        return shapes

    def output_shape(self) -> Shape:
        return self.infer_shapes()[self.heads[0]]

    # -- serialização em dicionário -----------------------------------------

    def to_dict(self) -> Dict[str, Any]:
        return {
            "version": self.version,
            "input_spec": _jsonable(self.input_spec),
            "layers": [layer.to_dict() for layer in self.layers],
            "edges": [edge.to_dict() for edge in self.edges],
            "heads": list(self.heads),
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "ModelGraph":
        try:
            graph = cls(
                input_spec=dict(data["input_spec"]),
                layers=[LayerSpec.from_dict(d) for d in data["layers"]],
                edges=[EdgeSpec.from_dict(d) for d in data["edges"]],
                heads=list(data["heads"]),
                version=data.get("version", ""),
            )
        except (KeyError, TypeError, AttributeError) as e:
            raise ModelLoadError(f"campo ausente ou inválido: {e}")
        for index, layer_data in enumerate(data["layers"]):
            declared = layer_data.get("param_shapes")
            if declared is None:
                continue
            try:
                expected = graph.layers[index].param_shapes
            except KeyError as e:
                raise ModelLoadError(f"hiperparâmetro ausente {e}", f"layers[{index}]")
            if {k: tuple(v) for k, v in declared.items()} != expected:
                raise ModelLoadError(f"param_shapes inconsistentes em '{layer_data['id']}'", f"layers[{index}]")
        return graph


def layer_output_shape(layer: LayerSpec, in_shape: Shape) -> Shape:
    """Propaga um shape por amostra através de uma camada"""
    hp = layer.hyperparams
    kind = layer.kind
    if kind in ("conv2d", "skip_conv2d"):
        if len(in_shape) != 3:
            raise DimensionError(f"'{layer.id}' espera entrada [C,H,W], recebido {in_shape}")
        c, h, w = in_shape
        if kind == "skip_conv2d":
            rows, cols = hp["keep_rows"], hp["keep_cols"]
            if not rows or not cols:
                raise ArgumentError(f"'{layer.id}' com conjunto mantido vazio")
            if max(rows) >= h or max(cols) >= w or min(rows) < 0 or min(cols) < 0:
                raise DimensionError(f"'{layer.id}' com índices mantidos fora de {h}x{w}")
            h, w = len(rows), len(cols)
        if c != int(hp["in_channels"]):
            raise DimensionError(f"'{layer.id}' espera {hp['in_channels']} canais, recebido {c}")
        k, s, p = int(hp["kernel_size"]), int(hp["stride"]), int(hp["padding"])
        if k > h + 2 * p or k > w + 2 * p:
            raise DimensionError(f"kernel de '{layer.id}' maior que a entrada {h}x{w}")
        return (int(hp["out_channels"]), (h + 2 * p - k) // s + 1, (w + 2 * p - k) // s + 1)
    if kind == "linear":
        if in_shape != (int(hp["in_features"]),):
            raise DimensionError(f"'{layer.id}' espera [{hp['in_features']}], recebido {in_shape}")
        return (int(hp["out_features"]),)
    if kind in ("embedding", "skip_embedding"):
        if len(in_shape) != 1:
            raise DimensionError(f"'{layer.id}' espera sequência [L], recebido {in_shape}")
        length = in_shape[0]
        if kind == "skip_embedding":
            if length != int(hp["sequence_length"]):
                raise DimensionError(f"'{layer.id}' espera comprimento {hp['sequence_length']}, recebido {length}")
            length -= len(hp["skip_positions"])
            if length < 1:
                raise ArgumentError(f"'{layer.id}' pula a sequência inteira")
        return (length, int(hp["embedding_dim"]))
    if kind == "relu":
        return in_shape
    if kind in ("maxpool2d", "avgpool2d"):
        if len(in_shape) != 3:
            raise DimensionError(f"'{layer.id}' espera [C,H,W], recebido {in_shape}")
        k, s = int(hp["kernel_size"]), int(hp["stride"])
        c, h, w = in_shape
        if k > h or k > w:
            raise DimensionError(f"janela de '{layer.id}' maior que {h}x{w}")
        return (c, (h - k) // s + 1, (w - k) // s + 1)
    if kind == "flatten":
        return (int(np.prod(in_shape)),)
    if kind == "mean_seq":
        if len(in_shape) != 2:
            raise DimensionError(f"'{layer.id}' espera [L,E], recebido {in_shape}")
        return (in_shape[1],)
    raise ArgumentError(f"tipo de camada desconhecido '{kind}'")


# ---------------------------------------------------------------------------
# Parâmetros
# ---------------------------------------------------------------------------

def param_key(layer_id: str, name: str) -> str:
    return f"{layer_id}/{name}"


class ParamStore:
    """Mapa (id da camada, nome do parâmetro) -> Tensor, com chaves 'camada/param'"""

    def __init__(self, tensors: Optional[Dict[str, Tensor]] = None):
        self._tensors: Dict[str, Tensor] = {}
        for key, value in (tensors or {}).items():
            self._tensors[key] = value if isinstance(value, Tensor) else Tensor(value)

    def __getitem__(self, key: str) -> Tensor:
        return self._tensors[key]

    def __setitem__(self, key: str, value: Tensor) -> None:
        self._tensors[key] = value if isinstance(value, Tensor) else Tensor(value)

    def __contains__(self, key: str) -> bool:
        return key in self._tensors

    def __iter__(self) -> Iterator[str]:
        return iter(sorted(self._tensors))

    def __len__(self) -> int:
        return len(self._tensors)

    def keys(self) -> List[str]:
        return sorted(self._tensors)

    def items(self) -> List[Tuple[str, Tensor]]:
        return [(k, self._tensors[k]) for k in sorted(self._tensors)]

    def get(self, layer_id: str, name: str) -> Tensor:
        return self._tensors[param_key(layer_id, name)]

    def layer_params(self, layer_id: str) -> Dict[str, Tensor]:
        prefix = f"{layer_id}/"
        return {k[len(prefix):]: v for k, v in self._tensors.items() if k.startswith(prefix)}

    def as_dict(self) -> Dict[str, Tensor]:
        return dict(self.items())

    def copy(self) -> "ParamStore":
        return ParamStore({k: Tensor(v.data.copy()) for k, v in self._tensors.items()})

    def numel(self) -> int:
        return sum(t.numel() for t in self._tensors.values())

    def bitwise_equal(self, other: "ParamStore") -> bool:
        if self.keys() != other.keys():
            return False
        return all(self[k].bitwise_equal(other[k]) for k in self.keys())

    def check_covers(self, graph: ModelGraph) -> None:
        """Garante cobertura exata dos param_shapes do grafo"""
        expected = {
            param_key(layer.id, name): shape
            for layer in graph.layers
            for name, shape in layer.param_shapes.items()
        }
        missing = sorted(set(expected) - set(self._tensors))
        extra = sorted(set(self._tensors) - set(expected))
        if missing or extra:
            raise ModelLoadError(f"parâmetros ausentes {missing} / inesperados {extra}", "params")
        for key, shape in expected.items():
            if self._tensors[key].shape != shape:
                raise ModelLoadError(f"shape {self._tensors[key].shape} != {shape}", key)


def param_count(graph: ModelGraph) -> int:
    """Soma dos produtos de todos os param_shapes"""
    return sum(int(math.prod(shape)) for layer in graph.layers for shape in layer.param_shapes.values())


def layer_rng(seed: int, layer_id: str) -> np.random.Generator:
    """Stream aleatório nomeado por camada (semente misturada ao hash do id)"""
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream_id(layer_id)])


def init_layer_params(layer: LayerSpec, rng: np.random.Generator) -> Dict[str, Tensor]:
    bound = math.sqrt(1.0 / layer.fan_in())
    params = {}
    for name, shape in layer.param_shapes.items():
        if name == "bias":
            params[name] = Tensor(np.zeros(shape, dtype=np.float32))
        else:
            params[name] = Tensor(rng.uniform(-bound, bound, size=shape).astype(np.float32))
    return params


def init_params(graph: ModelGraph, seed: int) -> ParamStore:
    """
    Inicialização determinística: pesos ~ U(−√(1/fan_in), +√(1/fan_in)),
    bias zero, um stream por id de camada (adicionar camadas não altera as
    já existentes).
    """
    store = ParamStore()
    for layer in graph.layers:
        if not layer.param_shapes:
            continue
        for name, tensor in init_layer_params(layer, layer_rng(seed, layer.id)).items():
            store[param_key(layer.id, name)] = tensor
    return store


def _jsonable(value: Any) -> Any:
    """Converte arrays/tuplas numpy em tipos JSON nativos"""
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    return value
