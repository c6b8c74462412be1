"""Environment, networks and staged DDPG training for the hierarchical agents."""
from .env import EnvConfig, EnvState, MarketEnv, RunningStats, Transition, env_step, reward
from .losses import actor_loss, critic_loss
from .nets import Critic, LowerActor, UpperActor, entropy, fuse_intra, gate, lower_forward, masked_softmax, upper_forward
from .noise import OUNoise, explore
from .replay import ReplayBuffer
from .trainer import (
    HierarchicalPolicy,
    TrainConfig,
    TrainResult,
    load_checkpoint,
    save_checkpoint,
    train_staged,
)
