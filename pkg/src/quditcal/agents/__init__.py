"""Contextual-bandit RL agents (SAC, TD3, DDPG, PPO) and the training loop."""

from .common import AgentConfig, ReplayBuffer
from .ddpg import DdpgAgent, Td3Agent
from .ppo import PpoAgent
from .sac import SacAgent
from .train import (
    LearningCurve,
    Policy,
    TrainingError,
    load_training_checkpoint,
    make_agent,
    policy_export,
    policy_import,
    save_training_checkpoint,
    train,
)
