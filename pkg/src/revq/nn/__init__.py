from .tensor import GraphNotRecorded, Tensor, no_grad, parameter, stack
from .layers import (
    Conv3x3,
    DepthwiseConv3x3,
    Linear,
    Module,
    PointwiseConv,
    adaptive_avgpool,
    avgpool,
    global_avgpool,
)
from .models import (
    BaselineScorer,
    CheckpointError,
    CheckpointNotFound,
    DifferenceDetector,
    Mlp,
    ModelConfig,
    NonFiniteInput,
    QualityModel,
    ShapeMismatch,
    diff_maps,
    diff_pair_order,
)
from .optim import Adam

__all__ = [
    "Adam",
    "BaselineScorer",
    "CheckpointError",
    "CheckpointNotFound",
    "Conv3x3",
    "DepthwiseConv3x3",
    "DifferenceDetector",
    "GraphNotRecorded",
    "Linear",
    "Mlp",
    "ModelConfig",
    "Module",
    "NonFiniteInput",
    "PointwiseConv",
    "QualityModel",
    "ShapeMismatch",
    "Tensor",
    "adaptive_avgpool",
    "avgpool",
    "diff_maps",
    "diff_pair_order",
    "global_avgpool",
    "no_grad",
    "parameter",
    "stack",
]
