"""Testes da extração do modelo original e da aplicação de pesos pré-treinados"""

import numpy as np
import pytest

from src.augment.data_augmenter import augment_dataset
from src.augment.model_augmenter import augment_model, plan_subnets
from src.augment.noise import NoiseConfig
from src.augment.secret import SecretBundle
from src.errors import ArgumentError, ExtractionError
from src.execution.trainer import TrainConfig, train
from src.extractor import apply_pretrained, extract, tensor_hashes, validate_extraction
from src.ir.model_graph import param_count


@pytest.fixture
def augmented_tiny(tiny_cnn, tiny_images):
    graph, params = tiny_cnn
    augmented_data, position, _ = augment_dataset(tiny_images, 0.5, NoiseConfig(seed=2), seed=2)
    plan = plan_subnets(graph, 0.5, 2, seed=2)
    augmented, augmented_params, bundle = augment_model(graph, params, plan, position)
    return augmented, augmented_params, bundle, augmented_data


class TestExtract:

    def test_untrained_extraction_returns_original(self, tiny_cnn, augmented_tiny):
        graph, params = tiny_cnn
        augmented, augmented_params, bundle, _ = augmented_tiny
        extracted, report = extract(augmented, augmented_params, bundle, graph)
        assert extracted.bitwise_equal(params)
        assert report.layers_copied == len(graph.layers)
        assert report.param_count == param_count(graph)
        assert report.checksum_match
        assert report.elapsed_s >= 0

    def test_values_are_only_relocated(self, tiny_cnn, augmented_tiny):
        graph, _ = tiny_cnn
        augmented, augmented_params, bundle, augmented_data = augmented_tiny
        trained, _ = train(augmented, augmented_params, augmented_data, TrainConfig(epochs=1, lr=0.05, batch=16))
        extracted, _ = extract(augmented, trained, bundle, graph)
        hashes = set(tensor_hashes(trained).values())
        assert set(tensor_hashes(extracted).values()) <= hashes

    def test_secret_without_model(self, tiny_cnn, augmented_tiny):
        augmented, augmented_params, bundle, _ = augmented_tiny
        with pytest.raises(ExtractionError):
            extract(augmented, augmented_params, SecretBundle(bundle.position), tiny_cnn[0])

    def test_wrong_head_index(self, tiny_cnn, augmented_tiny):
        augmented, augmented_params, bundle, _ = augmented_tiny
        bundle.original_head_index = (bundle.original_head_index + 1) % len(augmented.heads)
        with pytest.raises(ExtractionError):
            extract(augmented, augmented_params, bundle, tiny_cnn[0])

    def test_layer_map_pointing_to_decoy(self, tiny_cnn, augmented_tiny):
        augmented, augmented_params, bundle, _ = augmented_tiny
        decoy_fc = next(lid for lid in bundle.decoy_layers[0] if augmented.layer(lid).kind == "linear"
                        and lid in augmented.heads)
        bundle.layer_map["fc"] = decoy_fc
        with pytest.raises(ExtractionError):
            extract(augmented, augmented_params, bundle, tiny_cnn[0])

    def test_unmapped_layer(self, tiny_cnn, augmented_tiny):
        augmented, augmented_params, bundle, _ = augmented_tiny
        del bundle.layer_map["relu"]
        with pytest.raises(ExtractionError):
            extract(augmented, augmented_params, bundle, tiny_cnn[0])

    def test_validate_extraction(self, tiny_cnn, augmented_tiny):
        graph, _ = tiny_cnn
        augmented, augmented_params, bundle, augmented_data = augmented_tiny
        extracted, _ = extract(augmented, augmented_params, bundle, graph)
        result = validate_extraction(augmented, augmented_params, bundle, graph, extracted, augmented_data)
        assert result["accuracy_difference"] == 0.0
        assert result["augmented_loss"] == pytest.approx(result["extracted_loss"], rel=1e-6)


class TestPretrained:

    def test_copies_selected_layers(self, tiny_cnn):
        graph, params = tiny_cnn
        pretrained = params.copy()
        pretrained["conv/weight"] = np.ones(pretrained["conv/weight"].shape, dtype=np.float32)
        updated = apply_pretrained(graph, params, pretrained, ["conv"])
        assert np.all(updated["conv/weight"].data == 1)
        assert updated["fc/weight"].bitwise_equal(params["fc/weight"])
        assert not np.all(params["conv/weight"].data == 1)

    def test_shape_mismatch(self, tiny_cnn):
        graph, params = tiny_cnn
        pretrained = params.copy()
        pretrained["fc/bias"] = np.zeros(3, dtype=np.float32)
        with pytest.raises(ArgumentError):
            apply_pretrained(graph, params, pretrained, ["fc"])

    def test_unknown_layer(self, tiny_cnn):
        graph, params = tiny_cnn
        with pytest.raises(ArgumentError):
            apply_pretrained(graph, params, params, ["missing"])

    @pytest.mark.parametrize("layers", [["conv", "fc"], ["conv"]])
    def test_pretrained_survives_augmentation_and_extraction(self, tiny_cnn, tiny_images, layers):
        graph, params = tiny_cnn
        pretrained, _ = train(graph, params, tiny_images, TrainConfig(epochs=1, lr=0.05, batch=16, seed=4))
        start = apply_pretrained(graph, params, pretrained, layers)
        _, position, _ = augment_dataset(tiny_images, 0.5, NoiseConfig(seed=6), seed=6)
        augmented, augmented_params, bundle = augment_model(graph, start, plan_subnets(graph, 0.5, 2, seed=6),
                                                            position)
        extracted, report = extract(augmented, augmented_params, bundle, graph)
        assert report.checksum_match
        for key in extracted:
            source = pretrained if key.split("/")[0] in layers else params
            assert extracted[key].bitwise_equal(source[key]), key
