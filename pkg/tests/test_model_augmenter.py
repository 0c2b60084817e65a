"""
Testes da augmentação do modelo: orçamento de parâmetros, isolamento de
gradiente, equivalência da sub-rede original, segredo e árvore do plano.
"""

import json
import re

import numpy as np
import pytest

from src.augment.data_augmenter import augment_dataset
from src.augment.model_augmenter import audit_isolation, augment_model, plan_subnets
from src.augment.noise import NoiseConfig
from src.augment.secret import SecretBundle, describe, load_secret, save_secret
from src.errors import ArgumentError, ModelLoadError
from src.execution.executor import loss_and_grads, predict
from src.ir.archive import write_archive
from src.ir.model_graph import EdgeSpec, LayerSpec, param_count, param_key
from src.utils.plan_tree import build_plan_tree, render_plan_tree, save_plan_tree

ALPHAS = [0.25, 0.5, 0.75, 1.0]


def _augment(model, data, alpha, subnets=2, seed=11, cross_links=1, noise=None):
    graph, params = model
    augmented_data, position, _ = augment_dataset(data, alpha, NoiseConfig(seed=seed), seed)
    plan = plan_subnets(graph, alpha, subnets, seed, cross_links=cross_links, noise=noise)
    augmented, augmented_params, bundle = augment_model(graph, params, plan, position)
    return plan, augmented, augmented_params, bundle, augmented_data


class TestBudget:

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_lenet_within_two_percent(self, lenet, lenet_images, alpha):
        plan, augmented, _, _, _ = _augment(lenet, lenet_images, alpha)
        target = 61322 * (1 + alpha)
        assert plan.within_budget()
        assert abs(param_count(augmented) - target) <= 0.02 * target
        assert param_count(augmented) == plan.total_count

    @pytest.mark.parametrize("alpha", ALPHAS)
    def test_text_within_two_percent(self, text_model, text_data, alpha):
        plan, augmented, _, _, _ = _augment(text_model, text_data, alpha)
        target = param_count(text_model[0]) * (1 + alpha)
        assert abs(param_count(augmented) - target) <= 0.02 * target

    def test_budgets_are_sequential(self, lenet):
        plan = plan_subnets(lenet[0], 0.5, 3, seed=1)
        assert len(plan.budgets) == 3
        assert plan.decoys[0].target == pytest.approx(round(0.5 * 61322) / 3)
        remaining = round(0.5 * 61322) - plan.budgets[0]
        assert plan.decoys[1].target == pytest.approx(remaining / 2)

    def test_budget_too_small(self, tiny_cnn):
        # a sub-rede falsa mais estreita da CNN mínima tem 1460 parâmetros
        with pytest.raises(ArgumentError, match="sub-redes"):
            plan_subnets(tiny_cnn[0], 0.01, 3, seed=0)

    @pytest.mark.parametrize("alpha,subnets", [(0.25, 2), (0.25, 3), (0.5, 3)])
    def test_infeasible_budget_on_every_seed(self, tiny_cnn, alpha, subnets):
        for seed in range(10):
            with pytest.raises(ArgumentError):
                plan_subnets(tiny_cnn[0], alpha, subnets, seed)

    @pytest.mark.parametrize("alpha,subnets", [
        (0.25, 1), (0.5, 1), (0.5, 2), (0.75, 1), (0.75, 2), (0.75, 3), (1.0, 1), (1.0, 2), (1.0, 3),
    ])
    def test_feasible_budget_on_every_seed(self, tiny_cnn, tiny_images, alpha, subnets):
        graph, params = tiny_cnn
        _, position, _ = augment_dataset(tiny_images.subset([0]), alpha, NoiseConfig(), 0)
        for seed in range(10):
            plan = plan_subnets(graph, alpha, subnets, seed)
            assert plan.within_budget()
            # só os mapas de ativação recebem ligação (adapter 1×1)
            assert all(d.cross_link_depths in ([0], [1]) for d in plan.decoys)
            augmented, _, bundle = augment_model(graph, params, plan, position)
            assert param_count(augmented) == plan.total_count
            assert audit_isolation(augmented, bundle) == []

    def test_cross_links_fall_back_to_affordable_depths(self, tiny_cnn):
        plan = plan_subnets(tiny_cnn[0], 0.5, 1, seed=0, cross_links=3)
        assert plan.decoys[0].cross_link_depths == [0, 1]
        assert plan.within_budget()

    def test_alpha_zero_has_no_decoys(self, tiny_cnn, tiny_images):
        plan, augmented, augmented_params, bundle, _ = _augment(tiny_cnn, tiny_images, 0.0)
        assert plan.decoys == []
        assert len(augmented.heads) == 1
        assert bundle.original_head_index == 0
        assert param_count(augmented) == param_count(tiny_cnn[0])

    @pytest.mark.parametrize("alpha,subnets,cross_links", [(-0.5, 2, 1), (0.5, 0, 1), (0.5, 2, -1)])
    def test_invalid_arguments(self, lenet, alpha, subnets, cross_links):
        with pytest.raises(ArgumentError):
            plan_subnets(lenet[0], alpha, subnets, 0, cross_links=cross_links)

    def test_rejects_non_chain(self, tiny_cnn):
        graph = tiny_cnn[0].copy()
        graph.layers.append(LayerSpec("fc_extra", "linear", {"in_features": 576, "out_features": 10}))
        graph.edges.append(EdgeSpec("flatten", "fc_extra"))
        graph.heads.append("fc_extra")
        with pytest.raises(ArgumentError):
            plan_subnets(graph, 0.5, 2, 0)


class TestStructure:

    def test_ids_and_json_reveal_nothing(self, lenet, lenet_images):
        _, augmented, _, _, _ = _augment(lenet, lenet_images, 0.5)
        assert all(re.fullmatch(r"layer_\d{3,}", lid) for lid in augmented.layer_ids)
        text = json.dumps(augmented.to_dict())
        for marker in ("original", "decoy", "subnet", "conv1", "fc2"):
            assert marker not in text

    def test_input_shape_and_keep_sets(self, lenet, lenet_images):
        _, augmented, _, bundle, _ = _augment(lenet, lenet_images, 0.25, subnets=3)
        assert augmented.input_shape == (1, 35, 35)
        first_layers = [l for l in augmented.layers if l.kind == "skip_conv2d"]
        assert len(first_layers) == 4
        for layer in first_layers:
            assert len(layer.hyperparams["keep_rows"]) == 28
            assert len(layer.hyperparams["keep_cols"]) == 28
        original_first = augmented.layer(bundle.layer_map["conv1"])
        assert original_first.hyperparams["keep_rows"] == bundle.position.kept_rows.tolist()

    def test_cross_links_are_grad_stopped(self, lenet, lenet_images):
        _, augmented, _, bundle, _ = _augment(lenet, lenet_images, 0.5, subnets=2, cross_links=2)
        stopped = [e for e in augmented.edges if e.grad_stop]
        assert len(stopped) == 4
        originals = set(bundle.layer_map.values())
        for edge in stopped:
            assert edge.src in originals and edge.dst not in originals
            assert edge.adapter in augmented.adapter_ids()

    def test_adapters_belong_to_decoy_budget(self, lenet, lenet_images):
        plan, augmented, _, bundle, _ = _augment(lenet, lenet_images, 0.5)
        decoy_ids = {lid for layers in bundle.decoy_layers for lid in layers}
        assert set(augmented.adapter_ids()) <= decoy_ids
        decoy_params = sum(
            int(np.prod(shape)) for lid in decoy_ids for shape in augmented.layer(lid).param_shapes.values()
        )
        assert decoy_params == plan.decoy_count

    def test_original_params_copied_exactly(self, lenet, lenet_images):
        _, _, augmented_params, bundle, _ = _augment(lenet, lenet_images, 0.5)
        _, params = lenet
        for lid, new_id in bundle.layer_map.items():
            for name, tensor in params.layer_params(lid).items():
                assert augmented_params[param_key(new_id, name)].bitwise_equal(tensor)

    def test_gaussian_decoy_params_within_bound(self, tiny_cnn, tiny_images):
        _, augmented, augmented_params, bundle, _ = _augment(
            tiny_cnn, tiny_images, 0.5, noise=NoiseConfig("gaussian", seed=3))
        for layers in bundle.decoy_layers:
            for lid in layers:
                layer = augmented.layer(lid)
                if not layer.param_shapes:
                    continue
                bound = np.float32(np.sqrt(1.0 / layer.fan_in()))
                assert np.all(np.abs(augmented_params.get(lid, "weight").data) <= bound)

    def test_deterministic_under_seed(self, tiny_cnn, tiny_images):
        _, a, pa, _, _ = _augment(tiny_cnn, tiny_images, 0.5, seed=4)
        _, b, pb, _, _ = _augment(tiny_cnn, tiny_images, 0.5, seed=4)
        assert a.to_dict() == b.to_dict()
        assert pa.bitwise_equal(pb)

    def test_mismatched_secret(self, tiny_cnn, text_data):
        graph, params = tiny_cnn
        _, position, _ = augment_dataset(text_data, 0.5, NoiseConfig(), 0)
        with pytest.raises(ArgumentError):
            augment_model(graph, params, plan_subnets(graph, 0.5, 2, 0), position)


class TestIsolation:

    def test_audit_is_clean(self, lenet, lenet_images):
        _, augmented, _, bundle, _ = _augment(lenet, lenet_images, 0.5, subnets=3, cross_links=2)
        assert audit_isolation(augmented, bundle) == []

    def test_audit_flags_missing_grad_stop(self, lenet, lenet_images):
        _, augmented, _, bundle, _ = _augment(lenet, lenet_images, 0.5)
        broken = augmented.copy()
        edge = next(e for e in broken.edges if e.grad_stop)
        edge.grad_stop = False
        assert audit_isolation(broken, bundle)

    def test_audit_flags_decoy_to_original_edge(self, tiny_cnn, tiny_images):
        _, augmented, _, bundle, _ = _augment(tiny_cnn, tiny_images, 0.5)
        broken = augmented.copy()
        decoy_first = next(l.id for l in broken.layers if l.kind == "skip_conv2d"
                           and l.id not in bundle.layer_map.values())
        broken.edges.append(EdgeSpec(decoy_first, bundle.layer_map["relu"]))
        assert audit_isolation(broken, bundle)

    def test_original_head_matches_plain_model(self, tiny_cnn, tiny_images):
        graph, params = tiny_cnn
        _, augmented, augmented_params, bundle, augmented_data = _augment(tiny_cnn, tiny_images, 0.5, subnets=2)
        plain = predict(graph, params, tiny_images.samples.data[:8])
        hidden = predict(augmented, augmented_params, augmented_data.samples.data[:8], bundle.original_head_index)
        assert np.array_equal(plain, hidden)

    def test_original_gradients_are_bit_identical(self, tiny_cnn, tiny_images):
        graph, params = tiny_cnn
        _, augmented, augmented_params, bundle, augmented_data = _augment(
            tiny_cnn, tiny_images, 0.5, subnets=2, cross_links=2)
        labels = tiny_images.labels.data[:16]
        plain = loss_and_grads(graph, params, tiny_images.samples.data[:16], labels)
        hidden = loss_and_grads(augmented, augmented_params, augmented_data.samples.data[:16], labels)
        assert hidden.losses[bundle.original_head_index] == plain.losses[0]
        for lid, new_id in bundle.layer_map.items():
            for name in params.layer_params(lid):
                assert hidden.grads[param_key(new_id, name)].bitwise_equal(plain.grads[param_key(lid, name)])


class TestSecret:

    def test_roundtrip(self, tmp_path, tiny_cnn, tiny_images):
        _, _, _, bundle, _ = _augment(tiny_cnn, tiny_images, 0.5)
        save_secret(bundle, tmp_path / "local" / "secret.amlg", cloud_dir=str(tmp_path / "cloud"))
        loaded = load_secret(tmp_path / "local" / "secret.amlg")
        assert loaded.layer_map == bundle.layer_map
        assert loaded.original_head_index == bundle.original_head_index
        assert loaded.decoy_layers == bundle.decoy_layers
        assert loaded.position.equals(bundle.position)
        assert describe(loaded)["decoys"] == 2

    def test_refused_inside_cloud_dir(self, tmp_path, tiny_cnn, tiny_images):
        _, _, _, bundle, _ = _augment(tiny_cnn, tiny_images, 0.5)
        cloud = tmp_path / "cloud"
        with pytest.raises(ArgumentError):
            save_secret(bundle, cloud / "nested" / "secret.amlg", cloud_dir=str(cloud))
        assert not (cloud / "nested" / "secret.amlg").exists()

    def test_cloud_flag_is_not_a_secret(self, tmp_path, tiny_cnn, tiny_images):
        _, _, _, bundle, _ = _augment(tiny_cnn, tiny_images, 0.5)
        path = tmp_path / "fake.amlg"
        write_archive(path, bundle.to_records())
        with pytest.raises(ModelLoadError):
            load_secret(path)


class TestPlanTree:

    def test_tree_totals(self, lenet, lenet_images):
        _, augmented, _, bundle, _ = _augment(lenet, lenet_images, 0.5, subnets=3)
        root = build_plan_tree(augmented, bundle)
        assert root.params == param_count(augmented)
        assert [child.name for child in root.children] == ["original", "falsa_1", "falsa_2", "falsa_3"]
        assert root.children[0].params == 61322

    def test_layer_counts(self, tiny_cnn, tiny_images):
        _, augmented, _, bundle, _ = _augment(tiny_cnn, tiny_images, 0.5)
        root = build_plan_tree(augmented, bundle)
        assert sum(leaf.params for leaf in root.leaves) == root.params == param_count(augmented)
        by_kind = {leaf.kind: leaf.params for leaf in root.children[0].children}
        assert by_kind["relu"] == by_kind["flatten"] == 0
        assert by_kind["linear"] == 576 * 10 + 10

    def test_render_marks_original_once(self, tiny_cnn, tiny_images):
        _, augmented, _, bundle, _ = _augment(tiny_cnn, tiny_images, 0.5)
        text = render_plan_tree(augmented, bundle)
        assert text.count("ORIGINAL") == 1
        assert text.startswith("modelo_aumentado")

    def test_save_refuses_cloud_dir(self, tmp_path, tiny_cnn, tiny_images):
        _, augmented, _, bundle, _ = _augment(tiny_cnn, tiny_images, 0.5)
        with pytest.raises(ArgumentError):
            save_plan_tree(augmented, bundle, tmp_path / "cloud" / "plan.txt", cloud_dir=str(tmp_path / "cloud"))
        path = save_plan_tree(augmented, bundle, tmp_path / "local" / "plan.txt", dot=True)
        assert path.read_text().count("ORIGINAL") == 1
        assert path.with_suffix(".dot").exists()

    def test_requires_model_secret(self, tiny_cnn, tiny_images):
        _, position, _ = augment_dataset(tiny_images, 0.5, NoiseConfig(), 0)
        with pytest.raises(ArgumentError):
            build_plan_tree(tiny_cnn[0], SecretBundle(position))
