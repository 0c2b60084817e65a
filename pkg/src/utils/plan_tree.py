"""
Árvore do plano de aumento (sub-redes -> camadas), renderizada com anytree.
Revela qual sub-rede é a original, então só pode ser gravada localmente.
"""

import logging
import math
from pathlib import Path
from typing import Optional

from anytree import Node, RenderTree
from anytree.exporter import DotExporter

from src.augment.secret import SecretBundle
from src.errors import ArgumentError
from src.ir.model_graph import ModelGraph
from src.utils.file_utils import ensure_parent, is_inside


class PlanNode(Node):
    """Nó da árvore: raiz (modelo), sub-rede ou camada."""

    def __init__(self, name, parent=None, role="layer", kind=None, original=False, params=0):
        super().__init__(name, parent)
        self.role = role
        self.kind = kind
        self.original = original
        self.params = params


def _layer_params(graph: ModelGraph, layer_id: str) -> int:
    return sum(math.prod(shape) for shape in graph.layer(layer_id).param_shapes.values())


def build_plan_tree(augmented: ModelGraph, bundle: SecretBundle) -> PlanNode:
    """Monta a árvore a partir do grafo aumentado e do segredo"""
    if not bundle.has_model:
        raise ArgumentError("Segredo sem mapa de camadas: não há plano de modelo para renderizar")
    root = PlanNode("modelo_aumentado", role="root")
    groups = [(True, list(bundle.layer_map.values()))]
    groups += [(False, list(layers)) for layers in bundle.decoy_layers]

    for index, (original, layer_ids) in enumerate(groups):
        label = "original" if original else f"falsa_{index}"
        subnet = PlanNode(label, parent=root, role="subnet", original=original)
        for lid in layer_ids:
            params = _layer_params(augmented, lid)
            PlanNode(lid, parent=subnet, kind=augmented.layer(lid).kind, original=original, params=params)
            subnet.params += params
        root.params += subnet.params
    return root


def render_plan_tree(augmented: ModelGraph, bundle: SecretBundle) -> str:
    """Texto da árvore (uma linha por nó, com tipo e número de parâmetros)"""
    lines = []
    for pre, _, node in RenderTree(build_plan_tree(augmented, bundle)):
        details = [f"params={node.params}"]
        if node.kind:
            details.insert(0, f"kind={node.kind}")
        if node.original and node.role == "subnet":
            details.append("ORIGINAL")
        lines.append(f"{pre}{node.name} [{', '.join(details)}]")
    return "\n".join(lines) + "\n"


def save_plan_tree(augmented: ModelGraph, bundle: SecretBundle, path, cloud_dir: Optional[str] = None,
                   dot: bool = False) -> Path:
    """Salva a árvore em texto (e opcionalmente .dot); recusa o diretório da nuvem"""
    if is_inside(path, cloud_dir):
        raise ArgumentError(f"A árvore do plano não pode ser gravada dentro de {cloud_dir}")
    path = ensure_parent(path)
    path.write_text(render_plan_tree(augmented, bundle), encoding="utf-8")
    if dot:
        def nodeattrfunc(node):
            color = "lightgreen" if node.original else {"root": "lightblue", "subnet": "lightgray"}.get(node.role, "white")
            return f'label="{node.name}\\n{node.kind or node.role}\\n{node.params}", style=filled, fillcolor={color}'

        DotExporter(build_plan_tree(augmented, bundle), nodeattrfunc=nodeattrfunc).to_dotfile(str(path.with_suffix(".dot")))
    logging.info(f"Árvore do plano (LOCAL) salva em {path}")
    return path
