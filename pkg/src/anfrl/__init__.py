"""Dynamic-sparse-training RL: noise-filtering agents, extremely noisy
environment wrappers, and a reproducible experiment harness."""

from .agents import AgentHyperparams, ReplayBuffer, SACAgent, TD3Agent, Transition, make_agent
from .envs import ENEConfig, HistogramDistribution, NoisyEnv, PENEConfig, ene_dim, make_env
from .errors import ConfigError, TrainingDiverged, UsageError
from .harness import ExperimentConfig, MetricsLog, final_score, run_suite, run_training
from .topology import SparsityConfig, TopologyMask, init_mask

__all__ = [
    "AgentHyperparams", "ReplayBuffer", "SACAgent", "TD3Agent", "Transition",
    "make_agent", "ENEConfig", "HistogramDistribution", "NoisyEnv", "PENEConfig",
    "ene_dim", "make_env", "ConfigError", "TrainingDiverged", "UsageError",
    "ExperimentConfig", "MetricsLog", "final_score", "run_suite", "run_training",
    "SparsityConfig", "TopologyMask", "init_mask",
]

__version__ = "0.1.0"
