"""CNN mínima (1 conv + 1 linear, entrada 14×14) usada como alvo dos ataques de vazamento"""

from typing import List

from src.augment.data_augmenter import DatasetContainer
from src.ir.model_graph import LayerSpec
from src.models.base import BaseModel, class_prototype_images


class TinyCNN(BaseModel):
    CONFIG = {
        "name": "tiny_cnn",
        "modality": "image",
        "input_shape": (1, 14, 14),
        "value_range": (0.0, 1.0),
        "num_classes": 10,
        "channels": 4,
    }

    def layers(self) -> List[LayerSpec]:
        channels = self.CONFIG["channels"]
        return [
            LayerSpec("conv", "conv2d", {"in_channels": 1, "out_channels": channels,
                                         "kernel_size": 3, "stride": 1, "padding": 0}),
            LayerSpec("relu", "relu"),
            LayerSpec("flatten", "flatten"),
            LayerSpec("fc", "linear", {"in_features": channels * 12 * 12, "out_features": self.CONFIG["num_classes"]}),
        ]

    def make_dataset(self, n: int, seed: int) -> DatasetContainer:
        samples, labels = class_prototype_images(n, self.CONFIG["num_classes"], self.CONFIG["input_shape"], seed)
        return DatasetContainer("image", samples, labels, self.CONFIG["num_classes"],
                                value_range=self.CONFIG["value_range"])
