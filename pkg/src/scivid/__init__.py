"""Video snapshot compressive imaging toolkit: encoder simulation, a
differentiable tensor core, the reconstruction network, desk-scale
training, a GAP-TV baseline, and quality/complexity analysis."""

from .tensor import Tensor, backward, grad_check, no_grad
from .forward_model import (MaskSet, Measurement, VideoCube, bayer_split,
                            build_sensing_oracle, encode, estimation_init,
                            generate_masks)
from .network import NetworkConfig, ParamStore, build_network, network_forward
from .training import TrainConfig, adam_step, make_synthetic_dataset, mse_loss, train
from .metrics import psnr, ssim
from .complexity import flops_analytic, network_flops, param_count
from .gaptv import gap_tv_reconstruct, tv_denoise

__version__ = "0.1.0"

__all__ = [
    "Tensor", "backward", "grad_check", "no_grad",
    "MaskSet", "Measurement", "VideoCube", "bayer_split",
    "build_sensing_oracle", "encode", "estimation_init", "generate_masks",
    "NetworkConfig", "ParamStore", "build_network", "network_forward",
    "TrainConfig", "adam_step", "make_synthetic_dataset", "mse_loss", "train",
    "psnr", "ssim", "flops_analytic", "network_flops", "param_count",
    "gap_tv_reconstruct", "tv_denoise",
]
