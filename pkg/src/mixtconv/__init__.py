"""Mixed temporal convolution (MixTConv) for 2D-CNN video recognition.

Numpy implementation of the operator, TSN / MSTNet networks on a ResNet-50
skeleton, an analytic cost model, and verification tooling.
"""

from .cost import CostReport, cost_network, flops_network, params_network
from .errors import (
    InvalidAxes,
    InvalidKernel,
    InvalidLabel,
    InvalidPartition,
    InvalidShape,
    MixTConvError,
    NumericalFailure,
)
from .netgraph import (
    BlockSpec,
    NetworkSpec,
    build_mstnet,
    build_network,
    build_tsn,
    consensus_average,
    init_weights,
    network_forward,
    sample_segments,
)
from .temporal import (
    MixTConvConfig,
    MixTConvSpec,
    ShiftSpec,
    depthwise_conv1d_forward,
    mixtconv_backward,
    mixtconv_forward,
    ordinary_conv1d_forward,
    partition_channels,
    shift_forward,
)
from .tensor import TensorND, concat_channels, permute_axes, reshape

__version__ = "0.1.0"
