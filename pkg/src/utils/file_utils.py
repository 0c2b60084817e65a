import json
import logging
import os
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional, Union

PathLike = Union[str, os.PathLike]


def ensure_parent(path: PathLike) -> Path:
    """Cria o diretório pai de `path` e devolve o Path"""
    path = Path(path)
    if path.parent != Path(""):
        path.parent.mkdir(parents=True, exist_ok=True)
    return path


def short_hash(hash_value, length=8):
    """Retorna uma versão curta do hash para exibição em logs"""
    return hash_value[:length] if isinstance(hash_value, str) else ""


def is_inside(path: PathLike, directory: Optional[PathLike]) -> bool:
    """True se `path` (resolvido) está dentro de `directory`"""
    if directory is None:
        return False
    try:
        Path(path).resolve().relative_to(Path(directory).resolve())
        return True
    except ValueError:
        return False


def write_json(data: Dict[str, Any], path: PathLike) -> Path:
    """JSON canônico (chaves ordenadas, indentação 2, newline final)"""
    path = ensure_parent(path)
    path.write_text(json.dumps(data, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return path


def generate_report(data: Dict[str, Any], config: Dict[str, Any], report_file: Optional[PathLike] = None) -> Path:
    """Gera um relatório JSON da execução em `reports_dir` (ou em `report_file`)"""
    if report_file is None:
        stamp = datetime.now().strftime('%Y%m%d_%H%M%S')
        report_file = os.path.join(config["reports_dir"], f"execution_report_{stamp}.json")

    report_data = {
        **data,
        "timestamp": datetime.now().isoformat(),
        "config": {k: v for k, v in config.items() if isinstance(v, (str, int, float, bool))},
    }
    path = write_json(report_data, report_file)
    logging.info(f"Relatório de execução gerado em {path}")
    return path
