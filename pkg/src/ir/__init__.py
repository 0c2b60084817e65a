from src.ir.model_graph import (
    INPUT_ID,
    IR_VERSION,
    EdgeSpec,
    LayerSpec,
    ModelGraph,
    ParamStore,
    init_params,
    param_count,
    param_key,
)
from src.ir.serialization import deserialize_model, serialize_model

__all__ = [
    "INPUT_ID", "IR_VERSION", "EdgeSpec", "LayerSpec", "ModelGraph", "ParamStore",
    "deserialize_model", "init_params", "param_count", "param_key", "serialize_model",
]
