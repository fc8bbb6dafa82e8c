"""Nonparametric POMDP planning with kernel mean embeddings.

Beliefs over hidden states are represented as weight vectors over training
samples, updated by regularized Gram-matrix algebra (including a kernel
Bayes' rule posterior step), and planned over with finite-depth kernelized
value iteration. Ships with simulated benchmark environments, exact tabular
baselines used as verification oracles, and a CLI experiment harness.
"""

from .data import Dataset, load_dataset, save_dataset
from .embed import (
    BeliefWeights,
    LowRankConfig,
    PredictiveObsWeights,
    Regularizers,
    TrainedModel,
    expectation,
    initial_belief,
    kbr_posterior,
    kbr_posterior_squared,
    normalize,
    predict_obs_weights,
    train_model,
)
from .envs import GridWorld, Pendulum, collect_dataset, two_state_oracle
from .exact import (
    DiscretePOMDP,
    exact_belief_update,
    exact_value_iteration,
    histogram_estimate,
    qmdp,
    qmdp_on_samples,
)
from .kernels import (
    KernelSpec,
    delta_kernel,
    eval_kernel,
    feature_column,
    gaussian_kernel,
    gram,
    hadamard,
    median_heuristic,
)
from .linalg import LowRankFactor, icf, reg_solve, woodbury_solve
from .online import EpisodeLog, KernelController, evaluate, run_episode
from .plan import PlanConfig, PlanResult, build_reward_table, init_value, kernel_value_iteration

__version__ = "0.1.0"
