"""Cycle-level simulator of a sparse-wise dataflow CNN accelerator."""

from swsim.nn_model import LayerKind, LayerSpec, Tensor, conv_reference, fc_reference
from swsim.pe_array import PrecisionMode
from swsim.scheduler import SimConfig, run_conv_layer, run_fc_layer, run_network

__all__ = [
    "LayerKind", "LayerSpec", "Tensor", "conv_reference", "fc_reference",
    "PrecisionMode", "SimConfig", "run_conv_layer", "run_fc_layer", "run_network",
]
__version__ = "0.1.0"
