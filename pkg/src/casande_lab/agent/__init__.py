from .basd import basd_simulate_state
from .losses import Batch, classifier_loss, q_loss, q_targets
from .network import (
    Adam,
    NetworkParams,
    SGD,
    ShapeMismatch,
    backward,
    forward,
    forward_batch,
    init_params,
    soft_update,
    softmax,
)
from .policy import EmptyMask, epsilon_greedy, linear_epsilon, rollout
from .replay import ReplayBuffer
from .train import TrainConfig, TrainResult, load_checkpoint, new_network, save_checkpoint, train, write_log

__all__ = [
    "Adam", "Batch", "EmptyMask", "NetworkParams", "ReplayBuffer", "SGD", "ShapeMismatch", "TrainConfig",
    "TrainResult", "backward", "basd_simulate_state", "classifier_loss", "epsilon_greedy", "forward",
    "forward_batch", "init_params", "linear_epsilon", "load_checkpoint", "new_network", "q_loss", "q_targets",
    "rollout", "save_checkpoint", "soft_update", "softmax", "train", "write_log",
]
