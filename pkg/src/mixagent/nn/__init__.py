from .autodiff import Tensor, concat
from .checkpoint import load_params, params_hash, save_params
from .decoder import (
    ArchDescriptor,
    NetworkParams,
    decoder_forward,
    forward_tensors,
    init_params,
    loss_and_gradients,
    mse_to_target_loss,
    full_actor_descriptor,
    full_critic_descriptor,
)
from .optim import OptimizerConfig, OptState, optimizer_step

__all__ = [
    "Tensor", "concat", "load_params", "params_hash", "save_params",
    "ArchDescriptor", "NetworkParams", "decoder_forward", "forward_tensors", "init_params",
    "loss_and_gradients", "mse_to_target_loss", "full_actor_descriptor", "full_critic_descriptor",
    "OptimizerConfig", "OptState", "optimizer_step",
]
