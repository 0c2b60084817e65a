"""Classificador de texto: embedding + média na sequência + linear"""

from typing import List

from src.augment.data_augmenter import DatasetContainer
from src.ir.model_graph import LayerSpec
from src.models.base import BaseModel, class_prototype_sequences


class TextClassifier(BaseModel):
    CONFIG = {
        "name": "text_classifier",
        "modality": "text",
        "input_shape": (20,),
        "vocab_size": 1000,
        "embedding_dim": 32,
        "num_classes": 4,
    }

    def layers(self) -> List[LayerSpec]:
        dim = self.CONFIG["embedding_dim"]
        return [
            LayerSpec("embed", "embedding", {"vocab_size": self.CONFIG["vocab_size"], "embedding_dim": dim}),
            LayerSpec("pool", "mean_seq"),
            LayerSpec("fc", "linear", {"in_features": dim, "out_features": self.CONFIG["num_classes"]}),
        ]

    def make_dataset(self, n: int, seed: int) -> DatasetContainer:
        samples, labels = class_prototype_sequences(
            n, self.CONFIG["num_classes"], self.CONFIG["input_shape"][0], self.CONFIG["vocab_size"], seed
        )
        return DatasetContainer("text", samples, labels, self.CONFIG["num_classes"],
                                vocab_size=self.CONFIG["vocab_size"])
