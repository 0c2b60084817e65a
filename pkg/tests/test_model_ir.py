"""
Testes da IR: validação do grafo, contagem de parâmetros, inicialização
determinística, contêiner AMLG e arquivos do modelo.
"""

import json

import numpy as np
import pytest

from src.errors import ArgumentError, ModelLoadError
from src.ir import (
    INPUT_ID,
    EdgeSpec,
    LayerSpec,
    ModelGraph,
    ParamStore,
    deserialize_model,
    init_params,
    param_count,
    serialize_model,
)
from src.ir.archive import FLAG_LOCAL_ONLY, decode_archive, encode_archive, json_record, parse_json_record
from src.ir.serialization import params_path_for


def _chain(*layers, input_spec=None):
    input_spec = input_spec or {"modality": "image", "shape": [1, 6, 6], "value_range": [0.0, 1.0]}
    edges = [EdgeSpec(INPUT_ID, layers[0].id)] + [EdgeSpec(a.id, b.id) for a, b in zip(layers[:-1], layers[1:])]
    return ModelGraph(input_spec=input_spec, layers=list(layers), edges=edges, heads=[layers[-1].id])


def _small_graph():
    return _chain(
        LayerSpec("c", "conv2d", {"in_channels": 1, "out_channels": 2, "kernel_size": 3, "stride": 1, "padding": 0}),
        LayerSpec("f", "flatten"),
        LayerSpec("l", "linear", {"in_features": 32, "out_features": 3}),
    )


class TestValidation:

    def test_valid_graph_shapes(self):
        shapes = _small_graph().validate()
        assert shapes["c"] == (2, 4, 4)
        assert shapes["f"] == (32,)
        assert shapes["l"] == (3,)

    def test_duplicate_layer_id(self):
        graph = _small_graph()
        graph.layers[1].id = "c"
        with pytest.raises(ModelLoadError):
            graph.validate()

    def test_unknown_kind(self):
        graph = _small_graph()
        graph.layers[1].kind = "dropout"
        with pytest.raises(ModelLoadError):
            graph.validate()

    def test_cycle(self):
        graph = _small_graph()
        graph.edges.append(EdgeSpec("l", "f"))
        with pytest.raises(ModelLoadError):
            graph.validate()

    def test_dangling_edge(self):
        graph = _small_graph()
        graph.edges.append(EdgeSpec("c", "missing"))
        with pytest.raises(ModelLoadError):
            graph.validate()

    def test_skip_sets_on_plain_layer(self):
        graph = _small_graph()
        graph.layers[0].hyperparams["keep_rows"] = [0, 1]
        with pytest.raises(ModelLoadError):
            graph.validate()

    def test_wrong_version(self):
        graph = _small_graph()
        graph.version = "amalgam-ir/0"
        with pytest.raises(ModelLoadError):
            graph.validate()

    def test_missing_heads(self):
        graph = _small_graph()
        graph.heads = []
        with pytest.raises(ModelLoadError):
            graph.validate()

    def test_chain_order(self, lenet):
        graph, _ = lenet
        assert graph.chain() == graph.layer_ids

    def test_chain_rejects_branches(self):
        graph = _small_graph()
        graph.layers.append(LayerSpec("l2", "linear", {"in_features": 32, "out_features": 3}))
        graph.edges.append(EdgeSpec("f", "l2"))
        graph.heads.append("l2")
        graph.validate()
        with pytest.raises(ArgumentError):
            graph.chain()

    def test_json_is_free_of_subnet_markers(self, lenet):
        text = json.dumps(lenet[0].to_dict())
        for marker in ("original", "decoy", "subnet"):
            assert marker not in text


class TestParams:

    def test_lenet_param_count(self, lenet):
        graph, params = lenet
        assert param_count(graph) == 61322
        assert params.numel() == 61322

    def test_init_is_deterministic(self, lenet):
        graph, params = lenet
        assert init_params(graph, 0).bitwise_equal(params)
        assert not init_params(graph, 1).bitwise_equal(params)

    def test_init_distribution(self, lenet):
        graph, params = lenet
        bound = np.sqrt(1.0 / 25)
        weight = params.get("conv1", "weight").data
        assert weight.dtype == np.float32
        assert np.all(np.abs(weight) <= np.float32(bound))
        assert np.all(params.get("conv1", "bias").data == 0)

    def test_new_layers_do_not_shift_existing_streams(self):
        graph = _small_graph()
        before = init_params(graph, 7)
        graph.layers.insert(0, LayerSpec("extra", "linear", {"in_features": 2, "out_features": 2}))
        after = init_params(graph, 7)
        for key in before.keys():
            assert after[key].bitwise_equal(before[key])

    def test_check_covers(self):
        graph = _small_graph()
        params = init_params(graph, 0)
        params.check_covers(graph)
        params["l/extra"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(ModelLoadError):
            params.check_covers(graph)


class TestArchive:

    def test_header_and_flag(self):
        payload = encode_archive({"w": np.ones(2, dtype=np.float32)}, FLAG_LOCAL_ONLY)
        assert payload[:4] == b"AMLG"
        records, flag = decode_archive(payload)
        assert flag == FLAG_LOCAL_ONLY
        assert records["w"].tolist() == [1.0, 1.0]

    def test_all_dtypes(self):
        records = {
            "a": np.arange(6, dtype=np.float32).reshape(2, 3),
            "b": np.array([0.1, 0.2]),
            "c": np.array([[1, -2]], dtype=np.int64),
            "meta": json_record({"alpha": 0.5, "rows": [1, 2]}),
        }
        decoded, _ = decode_archive(encode_archive(records))
        for name in ("a", "b", "c"):
            assert decoded[name].dtype == records[name].dtype
            assert np.array_equal(decoded[name], records[name])
        assert parse_json_record(decoded["meta"]) == {"alpha": 0.5, "rows": [1, 2]}

    def test_record_order_is_canonical(self):
        a = {"x": np.zeros(1, dtype=np.float32), "y": np.ones(1, dtype=np.float32)}
        b = {"y": np.ones(1, dtype=np.float32), "x": np.zeros(1, dtype=np.float32)}
        assert encode_archive(a) == encode_archive(b)

    def test_bad_magic(self):
        with pytest.raises(ModelLoadError):
            decode_archive(b"NOPE\x01\x00\x00")

    def test_truncated(self):
        payload = encode_archive({"w": np.ones(16, dtype=np.float64)})
        with pytest.raises(ModelLoadError):
            decode_archive(payload[:-5])


class TestModelFiles:

    def test_roundtrip_is_byte_identical(self, tmp_path, lenet):
        graph, params = lenet
        first, first_params = serialize_model(graph, params, tmp_path / "a.json")
        loaded_graph, loaded_params = deserialize_model(first)
        second, second_params = serialize_model(loaded_graph, loaded_params, tmp_path / "b.json")
        assert loaded_params.bitwise_equal(params)
        assert first_params.read_bytes() == second_params.read_bytes()
        # só o nome do arquivo de parâmetros difere
        assert first.read_text().replace("a.amlg", "b.amlg") == second.read_text()

    def test_params_sidecar_name(self, tmp_path):
        assert params_path_for(tmp_path / "model.json").name == "model.amlg"

    def test_checksum_mismatch(self, tmp_path, tiny_cnn):
        graph, params = tiny_cnn
        path, params_path = serialize_model(graph, params, tmp_path / "m.json")
        payload = bytearray(params_path.read_bytes())
        payload[-1] ^= 0xFF
        params_path.write_bytes(bytes(payload))
        with pytest.raises(ModelLoadError):
            deserialize_model(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ModelLoadError):
            deserialize_model(tmp_path / "absent.json")

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{not json")
        with pytest.raises(ModelLoadError):
            deserialize_model(path)

    @pytest.mark.parametrize("content", ["[1, 2]", "\"modelo\"", "42", "null"])
    def test_json_that_is_not_an_object(self, tmp_path, content):
        path = tmp_path / "list.json"
        path.write_text(content)
        with pytest.raises(ModelLoadError, match="objeto JSON"):
            deserialize_model(path)

    def test_layer_that_is_not_an_object(self, tmp_path, tiny_cnn):
        path, _ = serialize_model(*tiny_cnn, tmp_path / "m.json")
        document = json.loads(path.read_text())
        document["layers"][0] = ["conv"]
        path.write_text(json.dumps(document))
        with pytest.raises(ModelLoadError):
            deserialize_model(path)

    def test_inconsistent_param_shapes(self, tmp_path, tiny_cnn):
        graph, params = tiny_cnn
        path, _ = serialize_model(graph, params, tmp_path / "m.json")
        document = json.loads(path.read_text())
        document["layers"][0]["param_shapes"]["bias"] = [99]
        path.write_text(json.dumps(document))
        with pytest.raises(ModelLoadError):
            deserialize_model(path)

    def test_amlg_suffix_refused(self, tmp_path, tiny_cnn):
        with pytest.raises(ModelLoadError):
            serialize_model(*tiny_cnn, tmp_path / "m.amlg")

    def test_empty_param_store_roundtrip(self, tmp_path):
        graph = _chain(LayerSpec("f", "flatten"))
        path, _ = serialize_model(graph, ParamStore(), tmp_path / "p.json")
        loaded_graph, loaded_params = deserialize_model(path)
        assert loaded_graph.to_dict() == graph.to_dict()
        assert len(loaded_params) == 0
