import os
import sys

import numpy as np
import pytest

# Adicionar diretório raiz ao path para imports absolutos (src.*)
project_root = os.path.dirname(os.path.abspath(__file__))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from src.models import LeNetMini, TextClassifier, TinyCNN  # noqa: E402


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: execuções em escala de aceitação (minutos)")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cnn():
    return TinyCNN().build(seed=0)


@pytest.fixture
def tiny_images():
    return TinyCNN().make_dataset(48, seed=3)


@pytest.fixture
def lenet():
    return LeNetMini().build(seed=0)


@pytest.fixture
def lenet_images():
    return LeNetMini().make_dataset(64, seed=5)


@pytest.fixture
def text_model():
    return TextClassifier().build(seed=0)


@pytest.fixture
def text_data():
    return TextClassifier().make_dataset(64, seed=7)
