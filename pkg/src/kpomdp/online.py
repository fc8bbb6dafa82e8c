"""Online sense-plan-act loop with belief tracking and reset-on-failure.

Controllers expose start/plan/update and never touch the environment's hidden
state: the loop hands them observations and rewards only. When a belief
update fails (the predicted observation weights give the realized observation
no support) the controller falls back to a fresh prior-free belief estimated
from that observation alone, and the step is flagged as a reset.
"""

import csv
from dataclasses import dataclass

import numpy as np

from . import embed, plan
from .exact import DiscretePOMDP, exact_value_iteration, exact_belief_update
from .exceptions import (
    DegenerateWeightsError,
    ImpossibleObservationError,
    PredictionFailureError,
)


@dataclass
class StepRecord:
    obs: object
    action: object
    reward: float
    plan_value: float
    reset: bool
    metric: float


@dataclass
class EpisodeLog:
    initial_obs: object
    records: list
    gamma: float
    nodes_expanded: int = 0
    prune_count: int = 0

    @property
    def discounted_return(self) -> float:
        return float(sum(r.reward * self.gamma**t for t, r in enumerate(self.records)))

    @property
    def undiscounted_return(self) -> float:
        return float(sum(r.reward for r in self.records))

    @property
    def metric_return(self) -> float:
        return float(sum(r.metric for r in self.records if r.metric is not None))

    @property
    def reset_count(self) -> int:
        return sum(1 for r in self.records if r.reset)


class KernelController:
    """Plans with kernel value iteration and tracks belief weight vectors."""

    def __init__(self, model, cfg: plan.PlanConfig, reward_table, q0_table, q_mdp_table=None):
        self.model = model
        self.cfg = cfg
        self.reward_table = np.asarray(reward_table)
        self.q0_table = np.asarray(q0_table)
        self.q_mdp_table = None if q_mdp_table is None else np.asarray(q_mdp_table)

    def start(self, obs):
        weights = self.model.initial_belief_weights(obs)
        if not np.any(np.maximum(weights, 0.0) > 0.0):
            # observation outside the data support: fall back to uniform
            weights = np.full(self.model.n, 1.0 / self.model.n)
        return weights

    def plan(self, belief) -> plan.PlanResult:
        return plan.kernel_value_iteration(
            self.model, belief, self.cfg, self.reward_table, self.q0_table, self.q_mdp_table
        )

    def update(self, belief, action, obs):
        """Posterior weights after acting; returns (weights, reset_flag)."""
        try:
            w = embed.normalize(belief) if self.cfg.normalize_weights else belief
            beta = self.model.apply_predictive(self.model.action_index(action), w)
            beta_hat = embed.normalize(beta) if self.cfg.normalize_weights else beta
            column = self.model.obs_feature_column(obs)
            posterior = self.model.kbr_factor(beta_hat).posterior(column)
            return posterior, False
        except (DegenerateWeightsError, PredictionFailureError):
            return self.start(obs), True


class DiscreteController:
    """Plans on a tabular model with the exact machinery; used both for the
    fully informed baseline and for histogram-estimated models."""

    def __init__(
        self,
        model: DiscretePOMDP,
        depth: int,
        obs_encoder,
        q0_table=None,
        q_mdp_table=None,
        pruning: bool = False,
    ):
        self.model = model
        self.depth = depth
        self.obs_encoder = obs_encoder
        self.q0_table = model.reward if q0_table is None else np.asarray(q0_table)
        self.q_mdp_table = None if q_mdp_table is None else np.asarray(q_mdp_table)
        self.pruning = pruning

    def start(self, obs):
        likelihood = self.model.observation[:, self.obs_encoder(obs)]
        total = likelihood.sum()
        if total <= 0.0:
            return np.full(self.model.n_states, 1.0 / self.model.n_states)
        return likelihood / total

    def plan(self, belief) -> plan.PlanResult:
        value, action_idx = exact_value_iteration(
            self.model,
            belief,
            self.depth,
            q0=self.q0_table,
            pruning=self.pruning,
            q_mdp=self.q_mdp_table,
        )
        return plan.PlanResult(value, action_idx, {}, 0, 0)

    def update(self, belief, action_idx, obs):
        try:
            return exact_belief_update(self.model, belief, action_idx, self.obs_encoder(obs)), False
        except ImpossibleObservationError:
            return self.start(obs), True


class DiscreteActionAdapter:
    """Maps a DiscreteController's action indices to environment action values."""

    def __init__(self, controller: DiscreteController, actions):
        self.controller = controller
        self.actions = list(actions)

    def start(self, obs):
        return self.controller.start(obs)

    def plan(self, belief) -> plan.PlanResult:
        res = self.controller.plan(belief)
        return plan.PlanResult(res.value, self.actions[res.action], {}, 0, 0)

    def update(self, belief, action, obs):
        return self.controller.update(belief, self.actions.index(action), obs)


def run_episode(env, controller, horizon: int, rng, gamma: float) -> EpisodeLog:
    """Run one episode of ``horizon`` planning steps.

    The controller receives only observations and rewards. A planning-time
    degeneracy triggers the same reset rule as a failed belief update.
    """
    state, obs = env.reset(rng)
    initial_obs = obs
    belief = controller.start(obs)
    records = []
    nodes = 0
    pruned = 0
    for _ in range(horizon):
        pre_reset = False
        try:
            result = controller.plan(belief)
        except DegenerateWeightsError:
            belief = controller.start(obs)
            pre_reset = True
            result = controller.plan(belief)
        action = result.action
        state, reward, next_obs = env.step(state, action, rng)
        belief, reset = controller.update(belief, action, next_obs)
        records.append(
            StepRecord(
                obs=obs,
                action=action,
                reward=float(reward),
                plan_value=float(result.value),
                reset=pre_reset or reset,
                metric=env.metric(state),
            )
        )
        nodes += result.nodes_expanded
        pruned += result.prune_count
        obs = next_obs
    return EpisodeLog(initial_obs, records, gamma, nodes, pruned)


@dataclass
class EvalSummary:
    mean: float
    stderr: float
    returns: np.ndarray
    reset_rate: float
    nodes_expanded: int
    episodes: int

    @classmethod
    def from_returns(cls, returns, reset_steps, total_steps, nodes):
        returns = np.asarray(returns, dtype=float)
        n = returns.size
        stderr = float(returns.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
        reset_rate = reset_steps / total_steps if total_steps else 0.0
        return cls(float(returns.mean()), stderr, returns, reset_rate, nodes, n)


def evaluate(env, controller, horizon: int, episodes: int, seeds, gamma: float, metric: str = "discounted") -> EvalSummary:
    """Mean and standard error of the per-episode return over seeded episodes.

    ``metric`` selects the reported scalar: the discounted reward sum or the
    summed per-step environment metric (pendulum height).
    """
    if episodes < 1:
        raise ValueError("need at least one episode")
    returns = []
    reset_steps = 0
    nodes = 0
    for k in range(episodes):
        rng = np.random.default_rng(seeds[k])
        log = run_episode(env, controller, horizon, rng, gamma)
        returns.append(log.metric_return if metric == "height" else log.discounted_return)
        reset_steps += log.reset_count
        nodes += log.nodes_expanded
    return EvalSummary.from_returns(returns, reset_steps, episodes * horizon, nodes)


def save_episode_log(log: EpisodeLog, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "obs", "action", "reward", "plan_value", "reset", "metric"])
        for t, r in enumerate(log.records):
            writer.writerow(
                [
                    t,
                    r.obs,
                    r.action,
                    format(r.reward, ".17g"),
                    format(r.plan_value, ".17g"),
                    int(r.reset),
                    "" if r.metric is None else format(r.metric, ".17g"),
                ]
            )
