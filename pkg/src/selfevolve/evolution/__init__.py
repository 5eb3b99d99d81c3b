"""Evolution engines: curriculum (CL), reward-based (RL) and genetic (GA)."""

import enum

from .curriculum import (
    ArmStats,
    CLConfig,
    CurriculumState,
    cl_train,
    init_curriculum,
    select_bucket,
    update_bucket_stats,
)
from .fitness import TrainResult, fitness, fitness_vector
from .genetic import GAConfig, Population, crossover, evolve_generation, ga_train, mutate
from .reward_learning import (
    RewardFitConfig,
    RewardModel,
    RLConfig,
    fit_reward_model,
    policy_gradient_step,
    rl_train,
    score_trace,
)


class EvolutionMode(str, enum.Enum):
    CL = "CL"
    RL = "RL"
    GA = "GA"


__all__ = [
    "ArmStats",
    "CLConfig",
    "CurriculumState",
    "EvolutionMode",
    "GAConfig",
    "Population",
    "RLConfig",
    "RewardFitConfig",
    "RewardModel",
    "TrainResult",
    "cl_train",
    "crossover",
    "evolve_generation",
    "fit_reward_model",
    "fitness",
    "fitness_vector",
    "ga_train",
    "init_curriculum",
    "mutate",
    "policy_gradient_step",
    "rl_train",
    "score_trace",
    "select_bucket",
    "update_bucket_stats",
]
