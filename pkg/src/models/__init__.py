"""
Models Package - Modelos de exemplo do Amalgam

Cada modelo herda de BaseModel e fornece o grafo original e um dataset
sintético compatível.
"""

from src.models.base import BaseModel
from src.models.lenet_mini import LeNetMini
from src.models.text_classifier import TextClassifier
from src.models.tiny_cnn import TinyCNN

AVAILABLE_MODELS = {
    "lenet_mini": LeNetMini,
    "text_classifier": TextClassifier,
    "tiny_cnn": TinyCNN,
}

__all__ = ["AVAILABLE_MODELS", "BaseModel", "LeNetMini", "TextClassifier", "TinyCNN"]
