"""Testes dos utilitários: métricas de erro, monitor de status, configuração e arquivos"""

import json
import logging

import numpy as np
import pytest

from src.config import get_config
from src.engine.tensor import Tensor
from src.hash_utils import gerar_hash_estrutura, gerar_hash_tensor, stream_id
from src.utils.error_analyzer import calculate_metrics
from src.utils.file_utils import ensure_parent, generate_report, is_inside, short_hash, write_json
from src.utils.logger import StatusMonitor, setup_logging


class TestErrorAnalyzer:

    def test_metrics(self):
        metrics = calculate_metrics([1.0, 2.0, 4.0], [1.0, 3.0, 2.0])
        assert metrics["count"] == 3
        assert metrics["mse"] == pytest.approx(5 / 3)
        assert metrics["mae"] == pytest.approx(1.0)
        assert metrics["max_error"] == 2.0
        assert metrics["mare"] == pytest.approx((0 + 0.5 + 0.5) / 3)

    def test_accepts_tensors(self):
        a = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3))
        assert calculate_metrics(a, a)["mse"] == 0.0

    def test_empty(self):
        assert calculate_metrics([], []) == {"count": 0, "mse": 0.0, "mae": 0.0, "max_error": 0.0, "mare": None}

    def test_size_mismatch_uses_prefix(self):
        assert calculate_metrics([1.0, 2.0, 3.0], [1.0, 2.0])["count"] == 2


class TestStatusMonitor:

    def test_only_changes_are_flushed(self):
        monitor = StatusMonitor()
        assert monitor.update_status("a", "treinando")
        assert not monitor.update_status("a", "treinando")
        monitor.update_status("b", "extraindo")
        assert monitor.flush() == 2
        assert monitor.flush() == 0
        monitor.update_status("a", "concluído")
        assert monitor.flush() == 1

    def test_context_manager(self):
        with StatusMonitor(interval=0.01) as monitor:
            monitor.update_status("x", "ok")
        assert monitor.last_status == {"x": "ok"}
        assert not monitor.monitor_thread.is_alive()


def test_setup_logging_without_file():
    root = setup_logging(None)
    assert len(root.handlers) == 1
    assert not any(isinstance(h, logging.FileHandler) for h in root.handlers)


def test_setup_logging_with_file(tmp_path):
    root = setup_logging(str(tmp_path / "amalgam.log"))
    logging.info("mensagem")
    assert any(isinstance(h, logging.FileHandler) for h in root.handlers)
    setup_logging(None)
    assert "mensagem" in (tmp_path / "amalgam.log").read_text(encoding="utf-8")


def test_get_config_returns_copy():
    cfg = get_config()
    cfg["alpha"] = 9.0
    cfg["alpha_grid"].append(2.0)
    fresh = get_config()
    assert fresh["alpha"] == 0.5
    assert fresh["alpha_grid"] == [0.0, 0.25, 0.5, 0.75, 1.0]


class TestFileUtils:

    def test_is_inside(self, tmp_path):
        cloud = tmp_path / "cloud"
        assert is_inside(cloud / "a" / "b.amlg", cloud)
        assert is_inside(cloud, cloud)
        assert not is_inside(tmp_path / "local" / "s.amlg", cloud)
        assert not is_inside(cloud / ".." / "s.amlg", cloud)
        assert not is_inside(cloud / "s.amlg", None)

    def test_write_json_is_canonical(self, tmp_path):
        path = write_json({"b": 1, "a": [1, 2]}, tmp_path / "x" / "out.json")
        assert path.read_text(encoding="utf-8") == '{\n  "a": [\n    1,\n    2\n  ],\n  "b": 1\n}\n'

    def test_generate_report(self, tmp_path):
        cfg = {"alpha": 0.5, "alpha_grid": [0.0], "cloud_dir": "c", "reports_dir": str(tmp_path)}
        path = generate_report({"command": "report"}, cfg)
        data = json.loads(path.read_text(encoding="utf-8"))
        assert path.parent == tmp_path
        assert data["command"] == "report"
        assert data["config"] == {"alpha": 0.5, "cloud_dir": "c", "reports_dir": str(tmp_path)}
        assert "timestamp" in data

    def test_ensure_parent_and_short_hash(self, tmp_path):
        path = ensure_parent(tmp_path / "a" / "b" / "c.txt")
        assert path.parent.is_dir()
        assert short_hash("abcdef0123456789") == "abcdef01"
        assert short_hash(None) == ""


class TestHashUtils:

    def test_tensor_hash_covers_dtype_and_shape(self):
        a = np.zeros(4, dtype=np.float32)
        assert gerar_hash_tensor(a) == gerar_hash_tensor(a.copy())
        assert gerar_hash_tensor(a) != gerar_hash_tensor(a.astype(np.float64))
        assert gerar_hash_tensor(a) != gerar_hash_tensor(a.reshape(2, 2))

    def test_structure_hash_ignores_key_order(self):
        assert gerar_hash_estrutura({"a": 1, "b": 2}) == gerar_hash_estrutura({"b": 2, "a": 1})

    def test_stream_id(self):
        assert stream_id("layer_001") == stream_id("layer_001")
        assert stream_id("layer_001") != stream_id("layer_002")
        assert 0 <= stream_id("conv") < 2 ** 64
