"""Kernelized finite-depth value iteration over belief weight vectors.

A planning call expands a search tree: action links carry the immediate
reward term, observation links fan out over the distinct observation values
among the training samples, and each (action, observation) pair spawns a
posterior belief evaluated one level deeper. Leaves are scored by an initial
action-value table (reward values or QMDP values on the state samples).

In the corrected mode (default) belief and predictive weights are clipped and
rescaled to probability vectors before use, which makes the per-node backup a
gamma-contraction; the raw mode applies the weights exactly as produced.
"""

from dataclasses import dataclass

import numpy as np

from .embed import BeliefWeights, TrainedModel, normalize
from .exceptions import DegenerateWeightsError


@dataclass(frozen=True)
class PlanConfig:
    """Planner settings. ``branch_cutoff`` bounds the total predictive mass
    that may be discarded per action link (smallest observation branches
    first); zero-mass branches are always skipped, and 0 disables any further
    trimming. The induced value error is below discount * cutoff * |V|_inf."""

    depth: int
    discount: float
    init_mode: str = "reward"
    pruning: bool = False
    normalize_weights: bool = True
    branch_cutoff: float = 1e-6

    def __post_init__(self):
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.depth < 0:
            raise ValueError("depth must be nonnegative")
        if self.init_mode not in ("reward", "qmdp"):
            raise ValueError(f"unknown init mode {self.init_mode!r}")


@dataclass
class PlanResult:
    value: float
    action: object
    q_values: dict
    nodes_expanded: int
    prune_count: int


def build_reward_table(reward_fn, sample_states, actions) -> np.ndarray:
    """Per-action reward vectors on the sample states, shape (|A|, n)."""
    sample_states = np.asarray(sample_states)
    table = np.empty((len(actions), sample_states.shape[0]))
    for a, action in enumerate(actions):
        for i in range(sample_states.shape[0]):
            value = reward_fn(sample_states[i], action)
            if value is None or not np.isfinite(value):
                raise ValueError(f"reward oracle undefined at sample state {i}")
            table[a, i] = value
    return table


def init_value(alpha, q0_table: np.ndarray):
    """Depth-zero value: max over actions of the weighted initial Q vector.

    Returns (value, action_index); ties break toward the first action.
    """
    w = alpha.weights if isinstance(alpha, BeliefWeights) else np.asarray(alpha, dtype=float)
    values = q0_table @ w
    action = int(np.argmax(values))
    return float(values[action]), action


def qmdp_prune(q_mdp_table: np.ndarray, weights: np.ndarray, current_best: float, action_idx: int) -> bool:
    """True when the action's belief-weighted QMDP upper bound is already
    below the best completed action value."""
    return float(q_mdp_table[action_idx] @ weights) < current_best


def trim_tail(weights: np.ndarray, budget: float) -> np.ndarray:
    """Zero the smallest-magnitude entries whose total magnitude stays within
    ``budget``; returns a copy (or the input when nothing is trimmed)."""
    if budget <= 0.0:
        return weights
    magnitude = np.abs(weights)
    order = np.argsort(magnitude, kind="stable")
    n_drop = int(np.searchsorted(np.cumsum(magnitude[order]), budget, side="right"))
    if n_drop == 0:
        return weights
    out = weights.copy()
    out[order[:n_drop]] = 0.0
    return out


def expand_action(model: TrainedModel, weights: np.ndarray, action_idx: int, cfg: PlanConfig, beta=None):
    """Observation branches of one action link from a (normalized) belief.

    Returns (branch_weights, posteriors): the probability mass per surviving
    distinct-observation branch and the matching posterior weight columns.
    The predictive weights are tail-trimmed within the configured mass budget
    (which empties the zero-mass branches); branches whose posterior cannot
    be normalized (corrected mode) or is identically zero are dropped, with
    the surviving masses rescaled in corrected mode. Raises
    DegenerateWeightsError when the whole action link degenerates.
    """
    if beta is None:
        beta = model.apply_predictive(action_idx, weights)
    beta_hat = normalize(beta) if cfg.normalize_weights else beta
    beta_hat = trim_tail(beta_hat, cfg.branch_cutoff)
    mass = model.group_mass(beta_hat)
    kept = np.nonzero(mass != 0.0)[0]
    if kept.size == 0:
        raise DegenerateWeightsError("degenerate weights")
    columns = model.obs_group_columns[:, kept]
    posteriors = model.kbr_factor(beta_hat).posterior_batch(columns)
    if cfg.normalize_weights:
        valid = (np.maximum(posteriors, 0.0).sum(axis=0) > 0.0)
    else:
        valid = np.any(posteriors != 0.0, axis=0)
    if not valid.any():
        raise DegenerateWeightsError("degenerate weights")
    branch_weights = mass[kept]
    if not valid.all():
        posteriors = posteriors[:, valid]
        branch_weights = branch_weights[valid]
        if cfg.normalize_weights:
            branch_weights = branch_weights / branch_weights.sum()
    return branch_weights, posteriors


class _Stats:
    __slots__ = ("nodes", "pruned")

    def __init__(self):
        self.nodes = 0
        self.pruned = 0


def kernel_value_iteration(
    model: TrainedModel,
    alpha,
    cfg: PlanConfig,
    reward_table: np.ndarray,
    q0_table: np.ndarray,
    q_mdp_table: np.ndarray = None,
) -> PlanResult:
    """Finite-depth kernel value iteration from belief weights ``alpha``.

    ``reward_table`` and ``q0_table`` are (|A|, n) per-action vectors on the
    state samples; ``q_mdp_table`` feeds action pruning when enabled.
    """
    if cfg.pruning and q_mdp_table is None:
        raise ValueError("pruning requires a q_mdp table")
    w = alpha.weights if isinstance(alpha, BeliefWeights) else np.asarray(alpha, dtype=float)
    stats = _Stats()
    value, action_idx, q_vec = _plan_node(
        model, w, cfg.depth, cfg, reward_table, q0_table, q_mdp_table, stats
    )
    q_values = {
        model.actions[a]: float(q_vec[a]) for a in range(len(model.actions)) if np.isfinite(q_vec[a])
    }
    return PlanResult(value, model.actions[action_idx], q_values, stats.nodes, stats.pruned)


def _plan_node(model, weights, depth, cfg, rewards, q0, q_mdp, stats):
    stats.nodes += 1
    w = normalize(weights) if cfg.normalize_weights else np.asarray(weights, dtype=float)
    if depth == 0:
        values = q0 @ w
        action = int(np.argmax(values))
        return float(values[action]), action, values
    n_actions = len(model.actions)
    immediate = rewards @ w
    if cfg.pruning:
        bounds = q_mdp @ w
        order = np.argsort(-bounds, kind="stable")
    else:
        order = range(n_actions)
    betas = model.apply_predictive_all(w)
    q_vec = np.full(n_actions, -np.inf)
    best = -np.inf
    for a in order:
        if cfg.pruning and qmdp_prune(q_mdp, w, best, a):
            stats.pruned += 1
            continue
        try:
            branch_weights, posteriors = expand_action(model, w, a, cfg, beta=betas[a])
        except DegenerateWeightsError:
            continue
        child_values = _child_values(model, posteriors, depth - 1, cfg, rewards, q0, q_mdp, stats)
        live = np.isfinite(child_values)
        if not live.any():
            continue
        bw = branch_weights[live]
        if cfg.normalize_weights and not live.all():
            bw = bw / bw.sum()
        q_vec[a] = immediate[a] + cfg.discount * float(bw @ child_values[live])
        if q_vec[a] > best:
            best = q_vec[a]
    if not np.isfinite(q_vec).any():
        raise DegenerateWeightsError("degenerate weights")
    action = int(np.argmax(q_vec))
    return float(q_vec[action]), action, q_vec


def _child_values(model, posteriors, depth, cfg, rewards, q0, q_mdp, stats):
    """Values of the posterior columns one level down; -inf marks degenerate
    children. Depth-zero children are evaluated in one vectorized pass."""
    m = posteriors.shape[1]
    if depth == 0:
        stats.nodes += m
        if cfg.normalize_weights:
            clipped = np.maximum(posteriors, 0.0)
            sums = clipped.sum(axis=0)
            ok = sums > 0.0
            values = np.full(m, -np.inf)
            if ok.any():
                values[ok] = (q0 @ clipped[:, ok]).max(axis=0) / sums[ok]
            return values
        return (q0 @ posteriors).max(axis=0)
    values = np.full(m, -np.inf)
    for j in range(m):
        try:
            values[j], _, _ = _plan_node(
                model, posteriors[:, j], depth, cfg, rewards, q0, q_mdp, stats
            )
        except DegenerateWeightsError:
            continue
    return values
