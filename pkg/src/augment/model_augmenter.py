"""
Augmentação do modelo: reescreve o modelo original M em M' com s sub-redes
falsas (decoys), camadas de entrada com salto, ligações cruzadas com corte de
gradiente e orçamento de parâmetros P·(1+α).
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import networkx as nx
import numpy as np

from src.augment.data_augmenter import PositionSecret
from src.augment.noise import NoiseConfig, sample_noise
from src.augment.secret import SecretBundle
from src.engine.tensor import Tensor
from src.errors import ArgumentError, DimensionError, InternalError
from src.hash_utils import stream_id
from src.ir.model_graph import (
    INPUT_ID,
    EdgeSpec,
    LayerSpec,
    ModelGraph,
    ParamStore,
    Shape,
    init_layer_params,
    layer_output_shape,
    layer_rng,
    param_count,
    param_key,
)

SKIP_OF = {"conv2d": "skip_conv2d", "embedding": "skip_embedding"}
WIDTH_KEY = {"conv2d": "out_channels", "linear": "out_features", "embedding": "embedding_dim"}
BUDGET_TOLERANCE = 0.02


@dataclass
class DecoyPlan:
    """Larguras por posição da cadeia e profundidades das ligações cruzadas"""

    widths: Dict[int, int]
    cross_link_depths: List[int]
    param_count: int
    target: float


@dataclass
class AugmentationPlan:
    alpha: float
    subnets: int
    seed: int
    cross_links: int = 1
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    original_count: int = 0
    decoys: List[DecoyPlan] = field(default_factory=list)

    @property
    def decoy_count(self) -> int:
        """A_m: parâmetros das sub-redes falsas (inclui adapters)"""
        return sum(d.param_count for d in self.decoys)

    @property
    def total_count(self) -> int:
        return self.original_count + self.decoy_count

    @property
    def budgets(self) -> List[int]:
        return [d.param_count for d in self.decoys]

    def within_budget(self) -> bool:
        target = self.original_count * (1 + self.alpha)
        return abs(self.total_count - target) <= BUDGET_TOLERANCE * target

    def summary(self) -> Dict[str, Any]:
        return {
            "alpha": self.alpha,
            "subnets": len(self.decoys),
            "P": self.original_count,
            "A_m": self.decoy_count,
            "total": self.total_count,
            "ratio": self.total_count / self.original_count if self.original_count else 0.0,
            "budgets": self.budgets,
        }


# ---------------------------------------------------------------------------
# Estrutura das sub-redes
# ---------------------------------------------------------------------------

def _check_original(graph: ModelGraph) -> List[str]:
    graph.validate()
    chain = graph.chain()
    first, head = graph.layer(chain[0]), graph.layer(chain[-1])
    if first.kind not in SKIP_OF:
        raise ArgumentError(f"A primeira camada precisa ser conv2d ou embedding, encontrado {first.kind}")
    if head.kind != "linear":
        raise ArgumentError(f"A saída precisa ser linear, encontrado {head.kind}")
    return chain


def _width_positions(graph: ModelGraph, chain: List[str]) -> Dict[int, int]:
    """Posição na cadeia -> largura original, para camadas paramétricas ocultas"""
    return {
        pos: int(graph.layer(lid).hyperparams[WIDTH_KEY[graph.layer(lid).kind]])
        for pos, lid in enumerate(chain[:-1])
        if graph.layer(lid).kind in WIDTH_KEY
    }


def _mirror_chain(graph: ModelGraph, chain: List[str], widths: Dict[int, int], in_shape: Shape,
                  first_sets: Dict[str, Any]) -> Tuple[List[LayerSpec], List[Shape]]:
    """Cópia da cadeia com larguras alteradas; devolve camadas e shapes de saída"""
    layers, shapes = [], []
    shape = in_shape
    for pos, lid in enumerate(chain):
        source = graph.layer(lid)
        kind = source.kind
        hp = dict(source.hyperparams)
        if pos == 0:
            kind = SKIP_OF[kind]
            hp.update(first_sets)
        if kind in ("conv2d", "skip_conv2d"):
            hp["in_channels"] = shape[0]
        elif kind == "linear":
            hp["in_features"] = int(np.prod(shape))
        if pos in widths:
            hp[WIDTH_KEY[source.kind]] = widths[pos]
        layer = LayerSpec(f"{pos}", kind, hp)
        shape = layer_output_shape(layer, shape)
        layers.append(layer)
        shapes.append(shape)
    return layers, shapes


def _adapter_for(src_shape: Shape, dst_shape: Shape, layer_id: str) -> LayerSpec:
    """1×1 conv (mapas [C,H,W]) ou linear (vetores) que leva src_shape a dst_shape"""
    if len(src_shape) == 3:
        return LayerSpec(layer_id, "conv2d", {
            "in_channels": src_shape[0], "out_channels": dst_shape[0],
            "kernel_size": 1, "stride": 1, "padding": 0,
        })
    return LayerSpec(layer_id, "linear", {"in_features": src_shape[0], "out_features": dst_shape[0]})


def _cross_link_candidates(shapes: List[Shape]) -> List[int]:
    """Profundidades k (saída da camada k alimenta k+1) com shape adaptável"""
    return [k for k in range(len(shapes) - 1) if len(shapes[k]) in (1, 3)]


def _choose_depths(rng: np.random.Generator, candidates: List[int], shapes: List[Shape], n_links: int,
                   minimum_of, cap: float) -> List[int]:
    """
    Sorteia até `n_links` profundidades cujo adapter cabe em `cap` com a
    sub-rede na largura mínima. Mapas [C,H,W] (adapter 1×1) vêm antes de vetores.
    """
    order = [candidates[i] for i in rng.permutation(len(candidates))]
    maps = [k for k in order if len(shapes[k]) == 3]
    vectors = [k for k in order if len(shapes[k]) == 1]
    depths: List[int] = []
    for k in maps + vectors:
        if len(depths) == n_links:
            break
        if minimum_of(depths + [k]) <= cap:
            depths.append(k)
    if len(depths) < n_links:
        logging.warning(f"Só {len(depths)} de {n_links} ligações cruzadas cabem no orçamento da sub-rede")
    return sorted(depths)


def _decoy_count(graph, chain, widths, in_shape, first_sets, original_shapes, depths) -> int:
    layers, shapes = _mirror_chain(graph, chain, widths, in_shape, first_sets)
    total = sum(int(math.prod(s)) for layer in layers for s in layer.param_shapes.values())
    for k in depths:
        adapter = _adapter_for(original_shapes[k], shapes[k], "adapter")
        total += sum(int(math.prod(s)) for s in adapter.param_shapes.values())
    return total


def _scaled_widths(base: Dict[int, int], multiplier: float) -> Dict[int, int]:
    return {pos: max(1, int(round(width * multiplier))) for pos, width in base.items()}


def _fit_decoy(graph, chain, base_widths, in_shape, first_sets, original_shapes, depths,
               target: float) -> DecoyPlan:
    """Larguras cuja contagem fica mais perto de `target`; abaixo do mínimo usa largura 1"""
    def count(widths):
        return _decoy_count(graph, chain, widths, in_shape, first_sets, original_shapes, depths)

    narrowest = {pos: 1 for pos in base_widths}
    if target <= count(narrowest):
        return DecoyPlan(widths=narrowest, cross_link_depths=list(depths), param_count=count(narrowest),
                         target=target)

    # bisseção no multiplicador de largura
    lo, hi = 0.0, 1.0
    while count(_scaled_widths(base_widths, hi)) < target and hi < 1e4:
        lo, hi = hi, hi * 2
    for _ in range(60):
        mid = (lo + hi) / 2
        if count(_scaled_widths(base_widths, mid)) < target:
            lo = mid
        else:
            hi = mid
    candidates = [_scaled_widths(base_widths, lo), _scaled_widths(base_widths, hi)]
    best = min(candidates, key=lambda w: (abs(count(w) - target), count(w)))

    # ajuste inteiro fino na última camada oculta
    if base_widths:
        last = max(base_widths)
        current = best[last]
        window = max(8, current)
        best_error = abs(count(best) - target)
        for width in range(max(1, current - window), current + window + 1):
            trial = {**best, last: width}
            error = abs(count(trial) - target)
            if error < best_error:
                best, best_error = trial, error
    return DecoyPlan(widths=best, cross_link_depths=list(depths), param_count=count(best), target=target)


def _placeholder_sets(graph: ModelGraph, chain: List[str]) -> Dict[str, Any]:
    """Conjuntos mantidos completos (só a cardinalidade importa para a contagem)"""
    first = graph.layer(chain[0])
    if first.kind == "conv2d":
        _, h, w = graph.input_shape
        return {"keep_rows": list(range(h)), "keep_cols": list(range(w))}
    (length,) = graph.input_shape
    return {"sequence_length": length, "skip_positions": []}


def plan_subnets(graph: ModelGraph, alpha: float, subnets: int, seed: int, cross_links: int = 1,
                 noise: Optional[NoiseConfig] = None) -> AugmentationPlan:
    """
    Planeja as sub-redes falsas: espelham a sequência de camadas do original
    com larguras escaladas até que o total fique em P·(1+α) (±2%).
    Os orçamentos são distribuídos em sequência: cada sub-rede mira o que
    resta dividido pelas sub-redes que faltam.
    """
    if not alpha >= 0 or not math.isfinite(alpha):
        raise ArgumentError(f"alpha precisa ser >= 0, recebido {alpha}")
    if subnets < 1:
        raise ArgumentError(f"O número de sub-redes precisa ser >= 1, recebido {subnets}")
    if cross_links < 0:
        raise ArgumentError(f"cross_links precisa ser >= 0, recebido {cross_links}")
    chain = _check_original(graph)
    noise = noise or NoiseConfig(seed=seed)
    plan = AugmentationPlan(alpha, subnets, seed, cross_links, noise, param_count(graph))
    if alpha == 0:
        return plan

    shapes = graph.infer_shapes()
    original_shapes = [shapes[lid] for lid in chain]
    candidates = _cross_link_candidates(original_shapes)
    base_widths = _width_positions(graph, chain)
    first_sets = _placeholder_sets(graph, chain)
    rng = np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream_id("augment/plan")])

    narrowest = {pos: 1 for pos in base_widths}

    def minimum_of(depths: List[int]) -> int:
        return _decoy_count(graph, chain, narrowest, graph.input_shape, first_sets, original_shapes, depths)

    # folga absoluta da tolerância de ±2%
    allowance = BUDGET_TOLERANCE * plan.original_count * (1 + alpha)
    remaining = float(round(alpha * plan.original_count))
    for index in range(subnets):
        left = subnets - index
        share = (remaining + allowance) / left
        if minimum_of([]) > share:
            raise ArgumentError(
                f"Orçamento de {remaining:.0f} parâmetros insuficiente para {left} sub-redes "
                f"(mínimo {minimum_of([])} cada); use menos sub-redes que {subnets} ou um alpha maior"
            )
        depths = _choose_depths(rng, candidates, original_shapes, min(cross_links, len(candidates)), minimum_of,
                                share)
        decoy = _fit_decoy(graph, chain, base_widths, graph.input_shape, first_sets, original_shapes, depths,
                           remaining / left)
        plan.decoys.append(decoy)
        remaining -= decoy.param_count

    logging.info(
        f"Plano: P={plan.original_count}, A_m={plan.decoy_count}, s={subnets}, "
        f"razão={plan.total_count / plan.original_count:.4f} (alvo {1 + alpha:.4f})"
    )
    if not plan.within_budget():
        logging.warning(f"Plano fora da tolerância de {BUDGET_TOLERANCE:.0%}: {plan.summary()}")
    return plan


# ---------------------------------------------------------------------------
# Construção de M'
# ---------------------------------------------------------------------------

def _random_keep(rng: np.random.Generator, size: int, count: int) -> List[int]:
    return sorted(int(i) for i in rng.choice(size, size=count, replace=False))


def _first_layer_sets(secret: PositionSecret, keep: Dict[str, List[int]]) -> Dict[str, Any]:
    if secret.modality == "image":
        return {"keep_rows": keep["keep_rows"], "keep_cols": keep["keep_cols"]}
    (length_a,) = secret.augmented_dims
    kept = set(keep["kept_positions"])
    return {"sequence_length": length_a, "skip_positions": [i for i in range(length_a) if i not in kept]}


def _init_decoy_params(layers: List[LayerSpec], noise: NoiseConfig, seed: int) -> Dict[str, Tensor]:
    """Parâmetros das sub-redes falsas conforme o ruído do plano (bias zero)"""
    params: Dict[str, Tensor] = {}
    offset = 0
    for layer in sorted(layers, key=lambda l: l.id):
        if noise.kind == "uniform":
            for name, tensor in init_layer_params(layer, layer_rng(seed, layer.id)).items():
                params[param_key(layer.id, name)] = tensor
            continue
        bound = math.sqrt(1.0 / layer.fan_in())
        for name, shape in sorted(layer.param_shapes.items()):
            if name == "bias":
                params[param_key(layer.id, name)] = Tensor(np.zeros(shape, dtype=np.float32))
                continue
            count = int(math.prod(shape))
            values = sample_noise(noise, count, (-bound, bound), stream=stream_id(layer.id), offset=offset,
                                  center=0.0)
            offset += count
            params[param_key(layer.id, name)] = Tensor(values.reshape(shape).astype(np.float32))
    return params


def augment_model(graph: ModelGraph, params: ParamStore, plan: AugmentationPlan,
                  position_secret: PositionSecret) -> Tuple[ModelGraph, ParamStore, SecretBundle]:
    """
    Monta M' com a sub-rede original (valores preservados bit a bit) e as
    sub-redes falsas do plano. Ids são genéricos e embaralhados; nenhum campo
    de M' indica a sub-rede original.
    """
    chain = _check_original(graph)
    params.check_covers(graph)
    modality = graph.modality
    if position_secret.modality != modality:
        raise ArgumentError(f"Segredo '{position_secret.modality}' para modelo '{modality}'")
    original_dims = graph.input_shape[1:] if modality == "image" else graph.input_shape
    if tuple(original_dims) != position_secret.original_dims:
        raise ArgumentError(f"Entrada do modelo {original_dims} != dims do segredo {position_secret.original_dims}")

    if modality == "image":
        channels = graph.input_shape[0]
        in_shape = (channels, *position_secret.augmented_dims)
        input_spec = {**graph.input_spec, "shape": list(in_shape)}
        original_keep = {"keep_rows": position_secret.kept_rows.tolist(),
                         "keep_cols": position_secret.kept_cols.tolist()}
    else:
        in_shape = tuple(position_secret.augmented_dims)
        input_spec = {**graph.input_spec, "shape": list(in_shape)}
        original_keep = {"kept_positions": position_secret.kept_positions.tolist()}

    rng = np.random.default_rng([int(plan.seed) & 0xFFFFFFFFFFFFFFFF, stream_id("augment/model")])
    shapes = graph.infer_shapes()
    original_shapes = [shapes[lid] for lid in chain]

    # (papel, índice da sub-rede, posição) -> LayerSpec provisória
    staged: List[Tuple[Tuple[str, int, int], LayerSpec]] = []
    orig_layers, _ = _mirror_chain(graph, chain, {}, in_shape, _first_layer_sets(position_secret, original_keep))
    for pos, layer in enumerate(orig_layers):
        staged.append((("original", 0, pos), layer))

    decoy_keep_sets = []
    decoy_shapes = []
    for index, decoy in enumerate(plan.decoys):
        if modality == "image":
            keep = {"keep_rows": _random_keep(rng, in_shape[1], position_secret.original_dims[0]),
                    "keep_cols": _random_keep(rng, in_shape[2], position_secret.original_dims[1])}
        else:
            keep = {"kept_positions": _random_keep(rng, in_shape[0], position_secret.original_dims[0])}
        decoy_keep_sets.append(keep)
        layers, out_shapes = _mirror_chain(graph, chain, decoy.widths, in_shape,
                                           _first_layer_sets(position_secret, keep))
        decoy_shapes.append(out_shapes)
        for pos, layer in enumerate(layers):
            staged.append((("decoy", index, pos), layer))
        for k in decoy.cross_link_depths:
            staged.append((("adapter", index, k), _adapter_for(original_shapes[k], out_shapes[k], "adapter")))

    # ids genéricos por permutação sorteada
    width = max(3, len(str(len(staged) - 1)))
    perm = rng.permutation(len(staged))
    ids: Dict[Tuple[str, int, int], str] = {}
    layers: List[LayerSpec] = []
    for (key, layer), perm_index in zip(staged, perm):
        new_id = f"layer_{int(perm_index):0{width}d}"
        ids[key] = new_id
        layers.append(LayerSpec(new_id, layer.kind, layer.hyperparams))

    edges: List[EdgeSpec] = []
    n = len(chain)
    for role, count in (("original", 1), ("decoy", len(plan.decoys))):
        for index in range(count):
            edges.append(EdgeSpec(INPUT_ID, ids[(role, index, 0)]))
            for pos in range(1, n):
                edges.append(EdgeSpec(ids[(role, index, pos - 1)], ids[(role, index, pos)]))
    for index, decoy in enumerate(plan.decoys):
        for k in decoy.cross_link_depths:
            adapter = next(l for l in layers if l.id == ids[("adapter", index, k)])
            src, dst = ids[("original", 0, k)], ids[("decoy", index, k + 1)]
            projected = layer_output_shape(adapter, original_shapes[k])
            if projected != decoy_shapes[index][k]:
                raise InternalError(f"adapter da aresta {src}->{dst} gera {projected}, esperado {decoy_shapes[index][k]}",
                                    {"src": src, "dst": dst})
            edges.append(EdgeSpec(src, dst, grad_stop=True, adapter=adapter.id))
    edges.sort(key=lambda e: (e.dst, e.src))

    heads = [ids[("original", 0, n - 1)]] + [ids[("decoy", i, n - 1)] for i in range(len(plan.decoys))]
    order = rng.permutation(len(heads))
    shuffled = [heads[i] for i in order]
    original_head_index = int(np.flatnonzero(order == 0)[0])

    layers.sort(key=lambda l: l.id)
    augmented = ModelGraph(input_spec=input_spec, layers=layers, edges=edges, heads=shuffled)
    try:
        augmented.validate()
    except DimensionError as e:
        raise InternalError(f"modelo aumentado inválido: {e}")

    layer_map = {lid: ids[("original", 0, pos)] for pos, lid in enumerate(chain)}
    new_params = ParamStore()
    for lid, new_id in layer_map.items():
        for name, tensor in params.layer_params(lid).items():
            new_params[param_key(new_id, name)] = Tensor(tensor.data.copy())
    decoy_specs = [l for l in layers if l.id not in set(layer_map.values())]
    for key, tensor in _init_decoy_params(decoy_specs, plan.noise, plan.seed).items():
        new_params[key] = tensor
    new_params.check_covers(augmented)

    bundle = SecretBundle(
        position=position_secret,
        layer_map=layer_map,
        original_head_index=original_head_index,
        decoy_keep_sets=decoy_keep_sets,
        decoy_layers=[
            sorted(new_id for (role, index, _), new_id in ids.items() if role != "original" and index == i)
            for i in range(len(plan.decoys))
        ],
        seeds={"augment": int(plan.seed), "noise": int(plan.noise.seed)},
    )
    logging.info(
        f"Modelo aumentado: {len(graph.layers)} -> {len(augmented.layers)} camadas, "
        f"{param_count(graph)} -> {param_count(augmented)} parâmetros, {len(plan.decoys)} sub-redes falsas"
    )
    return augmented, new_params, bundle


# ---------------------------------------------------------------------------
# Auditoria de isolamento
# ---------------------------------------------------------------------------

def audit_isolation(augmented: ModelGraph, bundle: SecretBundle) -> List[List[str]]:
    """
    Procura caminhos de camadas originais até saídas falsas que não passem por
    uma aresta com grad_stop. Devolve a lista de caminhos ofensores (vazia =
    isolamento garantido); também acusa arestas falsas -> originais.
    """
    originals = set(bundle.layer_map.values())
    decoy_heads = [h for i, h in enumerate(augmented.heads) if i != bundle.original_head_index]
    g = nx.DiGraph()
    g.add_nodes_from(augmented.layer_ids)
    offending: List[List[str]] = []
    for edge in augmented.edges:
        if edge.src == INPUT_ID:
            continue
        if edge.dst in originals and edge.src not in originals:
            offending.append([edge.src, edge.dst])
        if edge.grad_stop and not (edge.src in originals and edge.dst not in originals):
            offending.append([edge.src, edge.dst])
        if edge.grad_stop:
            continue
        if edge.adapter is not None:
            g.add_edge(edge.src, edge.adapter)
            g.add_edge(edge.adapter, edge.dst)
        else:
            g.add_edge(edge.src, edge.dst)
    for src in sorted(originals):
        for head in decoy_heads:
            if nx.has_path(g, src, head):
                offending.append(nx.shortest_path(g, src, head))
    if offending:
        logging.warning(f"Auditoria de isolamento encontrou {len(offending)} caminho(s) sem corte de gradiente")
    return offending
