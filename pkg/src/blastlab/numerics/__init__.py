from blastlab.numerics.checkpoint import load_checkpoint, save_checkpoint
from blastlab.numerics.layers import GruCell, Linear, Module, RecurrentQNetwork, gru_step, linear_forward
from blastlab.numerics.optim import OptimizerState, hard_update, optimizer_step
from blastlab.numerics.tensor import Tensor, backward, no_grad

__all__ = [
    "GruCell", "Linear", "Module", "OptimizerState", "RecurrentQNetwork", "Tensor",
    "backward", "gru_step", "hard_update", "linear_forward", "load_checkpoint",
    "no_grad", "optimizer_step", "save_checkpoint",
]
