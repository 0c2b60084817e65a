"""Testes das métricas de privacidade e dos espaços de busca"""

import math

import pytest

from src.analysis.privacy_analyzer import (
    log10_comb,
    log10_comb_lgamma,
    parse_shape,
    perf_loss,
    privacy_loss,
    report,
    search_space_count,
    search_space_log10,
    tradeoff_curve,
)
from src.errors import ArgumentError


@pytest.mark.parametrize("alpha,epsilon", [(0.0, 1.0), (0.25, 0.8), (0.5, 2 / 3), (1.0, 0.5)])
def test_privacy_and_perf_loss(alpha, epsilon):
    assert privacy_loss(alpha) == pytest.approx(epsilon)
    assert perf_loss(alpha) == pytest.approx(1 - epsilon)


def test_negative_alpha():
    with pytest.raises(ArgumentError):
        privacy_loss(-0.1)
    with pytest.raises(ArgumentError):
        search_space_log10("image", 1, (28, 28), -1.0)


@pytest.mark.parametrize("alpha,count", [
    (0.25, 53130), (0.5, 30045015), (0.75, 3247943160), (1.0, 137846528820),
])
def test_text_counts(alpha, count):
    per_position, structural = search_space_count("text", 1, (20,), alpha)
    assert per_position == count == structural
    assert search_space_log10("text", 1, (20,), alpha)[0] == pytest.approx(math.log10(count), abs=1e-9)


def test_small_image_count():
    per_pixel, structural = search_space_count("image", 1, (3, 3), 0.3)
    assert per_pixel == 11440
    assert structural == math.comb(4, 3) ** 2
    assert search_space_log10("image", 1, (3, 3), 0.3)[0] == pytest.approx(math.log10(11440))


def test_mnist_and_cifar_per_pixel():
    mnist, _ = search_space_log10("image", 1, (28, 28), 0.25)
    cifar, _ = search_space_log10("image", 3, (32, 32), 0.5)
    assert mnist == pytest.approx(346.0, abs=0.7)
    assert cifar == pytest.approx(686.1, abs=0.7)


def test_structural_is_smaller_than_per_pixel():
    per_pixel, structural = search_space_log10("image", 1, (28, 28), 0.5)
    assert 0 < structural < per_pixel


def test_alpha_zero_search_space():
    assert search_space_log10("image", 3, (32, 32), 0.0) == (0.0, 0.0)
    assert search_space_log10("text", 1, (20,), 0.0) == (0.0, 0.0)


def test_log10_comb_regimes():
    assert log10_comb(40, 20) == math.log10(137846528820)
    assert log10_comb(1225, 441) == pytest.approx(math.log10(math.comb(1225, 441)), abs=1e-6)
    assert log10_comb_lgamma(40, 20) == pytest.approx(math.log10(137846528820), abs=1e-9)
    assert log10_comb(10, 0) == 0.0
    with pytest.raises(ArgumentError):
        log10_comb(3, 5)


@pytest.mark.parametrize("text,expected", [
    ("28x28x1", ("image", 1, (28, 28))),
    ("32x32x3", ("image", 3, (32, 32))),
    ("14x14", ("image", 1, (14, 14))),
    ("20", ("text", 1, (20,))),
])
def test_parse_shape(text, expected):
    assert parse_shape(text) == expected


@pytest.mark.parametrize("text", ["", "axb", "1x2x3x4"])
def test_parse_shape_invalid(text):
    with pytest.raises(ArgumentError):
        parse_shape(text)


def test_report_summary():
    r = report("image", 1, (28, 28), 0.5, P=61322, A_m=30661, s=3)
    lines = list(r.summary_lines())
    assert any("0.6667" in line for line in lines)
    assert any("0.3333" in line for line in lines)
    assert r.augmented_dims == (42, 42)
    assert r.to_dict()["P"] == 61322
    assert '"alpha": 0.5' in r.to_json()


def test_tradeoff_curve():
    curve = tradeoff_curve([0.0, 0.25, 0.5, 0.75, 1.0], "image", 1, (28, 28))
    assert list(curve.columns) == ["alpha", "epsilon", "rho", "log10_space_pp", "log10_space_struct"]
    assert curve["epsilon"].is_monotonic_decreasing
    assert curve["log10_space_pp"].is_monotonic_increasing
    assert curve.loc[4, "epsilon"] == pytest.approx(0.5)


def test_losses_over_fine_grid():
    for i in range(101):
        alpha = i / 100
        assert privacy_loss(alpha) == pytest.approx(1 / (1 + alpha), rel=1e-12)
        assert perf_loss(alpha) == pytest.approx(alpha / (1 + alpha), rel=1e-12, abs=1e-15)
        assert privacy_loss(alpha) + perf_loss(alpha) == 1.0
