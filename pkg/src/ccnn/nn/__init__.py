"""Minimal autograd CNN core with submap-aware layers."""
from .tensor import Tensor, concat, cross_entropy, no_grad, tensor
from .functional import (
    FeatureMap,
    ShapeError,
    batchnorm,
    checkered_conv,
    checkered_conv_complement,
    checkered_maxpool,
    conv2d,
    conv3d_submap,
    dropout,
    global_pool3d,
    linear,
    maxpool,
    mean_over_submaps,
    relu,
    sampled_conv,
    sampled_maxpool,
)
from .graph import (
    BatchNorm,
    Conv,
    Dropout,
    GlobalPool3d,
    LayerGraph,
    Linear,
    MaxPool,
    MeanSubmaps,
    ReLU,
    UnsupportedLayerError,
    activations,
    convert_to_ccnn,
    dilation_equivalent,
    forward,
    to_complete_multisampling,
)
