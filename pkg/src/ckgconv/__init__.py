"""Continuous-kernel graph convolution: graphs, coordinates, networks.

The package builds graph convolutions whose weights are produced by a
small MLP evaluated on pair pseudo-coordinates (random-walk probabilities,
hop distances, or resistance distances), plus everything needed to train
and verify them at desk scale: a numpy reverse-mode autodiff engine, toy
experiments, constructive equivalence checks, and color-refinement
distinguishability probes.
"""

from . import autodiff
from .autodiff import BatchNorm, LayerNorm, Parameter, Tape, Tensor, backward, grad_check
from .conv import (
    ConvLayer,
    PairBatch,
    build_pair_batch,
    conv_depthwise,
    conv_global_efficient,
    conv_scalar,
    degree_scaler_pe,
    degree_scaler_post,
    gcn_conv,
    gcn_norm_adjacency,
)
from .coords import (
    PseudoCoordinateField,
    SupportSpec,
    make_support,
    rd_field,
    rrwp,
    spd_field,
    standardize_field,
)
from .graph import (
    Graph,
    adjacency_matrix,
    build_graph,
    degree_vector,
    graph_from_json,
    graph_to_json,
    k_hop_support,
    matrix_power_sequence,
    random_walk_matrix,
    resistance_distance,
    shortest_path_distances,
)
from .kernels import (
    KernelConfig,
    KernelFunction,
    constrain_coefficients,
    kernel_eval,
    linear_kernel,
    mlp_block,
)
from .network import CKGCN, FFN, GCNNet, ModelConfig
from .rng import make_rng
from .training import (
    Adam,
    ConvStack,
    SingleChannelConv,
    ToyRunResult,
    accuracy_from_logits,
    bce_loss,
    edge_detection_toy,
    run_toy_edge_detection,
    run_toy_smoothing,
    smoothing_toy,
)
from .wl import ColorAssignment, distinguishes, gdwl_refine, wl1_refine

__version__ = "0.1.0"
