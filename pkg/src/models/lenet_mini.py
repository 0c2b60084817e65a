"""
LeNet-mini - CNN pequena (2 conv + 2 linear, ~61k parâmetros) para imagens
28×28 em tons de cinza.
"""

from typing import List

from src.augment.data_augmenter import DatasetContainer
from src.ir.model_graph import LayerSpec
from src.models.base import BaseModel, class_prototype_images


class LeNetMini(BaseModel):
    CONFIG = {
        "name": "lenet_mini",
        "modality": "image",
        "input_shape": (1, 28, 28),
        "value_range": (0.0, 1.0),
        "num_classes": 10,
        "hidden": 220,
    }

    def layers(self) -> List[LayerSpec]:
        hidden = self.CONFIG["hidden"]
        classes = self.CONFIG["num_classes"]
        conv = {"kernel_size": 5, "stride": 1, "padding": 0}
        pool = {"kernel_size": 2, "stride": 2}
        return [
            LayerSpec("conv1", "conv2d", {"in_channels": 1, "out_channels": 6, **conv}),
            LayerSpec("relu1", "relu"),
            LayerSpec("pool1", "maxpool2d", dict(pool)),
            LayerSpec("conv2", "conv2d", {"in_channels": 6, "out_channels": 16, **conv}),
            LayerSpec("relu2", "relu"),
            LayerSpec("pool2", "maxpool2d", dict(pool)),
            LayerSpec("flatten", "flatten"),
            LayerSpec("fc1", "linear", {"in_features": 16 * 4 * 4, "out_features": hidden}),
            LayerSpec("relu3", "relu"),
            LayerSpec("fc2", "linear", {"in_features": hidden, "out_features": classes}),
        ]

    def make_dataset(self, n: int, seed: int) -> DatasetContainer:
        samples, labels = class_prototype_images(n, self.CONFIG["num_classes"], self.CONFIG["input_shape"], seed)
        return DatasetContainer("image", samples, labels, self.CONFIG["num_classes"],
                                value_range=self.CONFIG["value_range"])
