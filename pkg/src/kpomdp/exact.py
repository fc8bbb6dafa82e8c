"""Exact discrete-POMDP machinery: Bayes filter, finite-depth value
iteration, QMDP, and histogram model estimation from transition tuples.

These routines double as the oracle baseline the kernel planner is verified
against, and as the planning engine of the histogram controller.
"""

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .exceptions import ImpossibleObservationError


@dataclass
class DiscretePOMDP:
    """Tabular model: transition tensor T[s, a, s'], observation matrix
    Z[s, o], reward matrix R[s, a], and a discount in (0, 1)."""

    transition: np.ndarray
    observation: np.ndarray
    reward: np.ndarray
    gamma: float = 0.95

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=float)
        self.observation = np.asarray(self.observation, dtype=float)
        self.reward = np.asarray(self.reward, dtype=float)
        ns, na, ns2 = self.transition.shape
        if ns != ns2 or self.observation.shape[0] != ns or self.reward.shape != (ns, na):
            raise ValueError("inconsistent model dimensions")
        if not np.allclose(self.transition.sum(axis=2), 1.0, atol=1e-9):
            raise ValueError("transition rows must be probability vectors")
        if not np.allclose(self.observation.sum(axis=1), 1.0, atol=1e-9):
            raise ValueError("observation rows must be probability vectors")

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def n_obs(self) -> int:
        return self.observation.shape[1]


def predictive_obs(model: DiscretePOMDP, belief, action: int) -> np.ndarray:
    """P(o' | a; b) for every observation."""
    next_state = np.asarray(belief) @ model.transition[:, action, :]
    return next_state @ model.observation


def exact_belief_update(model: DiscretePOMDP, belief, action: int, obs: int) -> np.ndarray:
    """Bayes posterior over next states given an action and observation."""
    next_state = np.asarray(belief) @ model.transition[:, action, :]
    joint = model.observation[:, obs] * next_state
    total = joint.sum()
    if total <= 0.0:
        raise ImpossibleObservationError("impossible observation")
    return joint / total


def exact_value_iteration(
    model: DiscretePOMDP,
    belief,
    depth: int,
    q0: np.ndarray = None,
    pruning: bool = False,
    q_mdp: np.ndarray = None,
):
    """Finite-depth optimal value by recursive expansion over (a, o') branches.

    ``q0`` is the (S, A) initial action-value table (defaults to the reward
    matrix). With ``pruning``, action branches whose belief-weighted ``q_mdp``
    upper bound falls below the running best are skipped.

    Returns (value, action_index); argmax ties break toward the lowest index.
    """
    if q0 is None:
        q0 = model.reward
    if pruning and q_mdp is None:
        raise ValueError("pruning requires a q_mdp table")
    belief = np.asarray(belief, dtype=float)
    return _exact_node(model, belief, depth, q0, pruning, q_mdp)


def _exact_node(model, belief, depth, q0, pruning, q_mdp):
    if depth == 0:
        values = belief @ q0
        action = int(np.argmax(values))
        return float(values[action]), action
    immediate = belief @ model.reward
    if pruning:
        bounds = belief @ q_mdp
        order = np.argsort(-bounds, kind="stable")
    else:
        order = range(model.n_actions)
    best = -np.inf
    best_action = -1
    q_values = np.full(model.n_actions, -np.inf)
    for a in order:
        if pruning and (belief @ q_mdp[:, a]) < best:
            continue
        next_state = belief @ model.transition[:, a, :]
        future = 0.0
        for o in range(model.n_obs):
            joint = model.observation[:, o] * next_state
            p_obs = joint.sum()
            if p_obs <= 0.0:
                continue
            child_value, _ = _exact_node(model, joint / p_obs, depth - 1, q0, pruning, q_mdp)
            future += p_obs * child_value
        q_values[a] = immediate[a] + model.gamma * future
        if q_values[a] > best:
            best = q_values[a]
    best_action = int(np.argmax(q_values))
    return float(q_values[best_action]), best_action


def qmdp(model: DiscretePOMDP, iterations: int = 100000, tol: float = 1e-9) -> np.ndarray:
    """Q values of the fully observable MDP, iterated to sup-norm change < tol."""
    if model.gamma >= 1.0:
        raise ValueError("qmdp requires gamma < 1")
    q = np.zeros((model.n_states, model.n_actions))
    for _ in range(iterations):
        v = q.max(axis=1)
        q_new = model.reward + model.gamma * np.einsum("ijk,k->ij", model.transition, v)
        if np.max(np.abs(q_new - q)) < tol:
            return q_new
        q = q_new
    return q


def histogram_estimate(
    data: Dataset,
    state_vocab,
    action_vocab,
    obs_vocab,
    gamma: float = 0.95,
    reward_fn=None,
) -> DiscretePOMDP:
    """Estimate a tabular model from transition tuples by plain frequencies.

    Unseen (s, a) transition rows and unseen-state observation rows fall back
    to uniform. Rewards are per-(s, a) sample means, or ``reward_fn(s, a)``
    evaluated on vocabulary entries when given.
    """
    s_idx = encode_values(data.states, state_vocab, "state")
    a_idx = encode_values(data.actions, action_vocab, "action")
    o_idx = encode_values(data.obs, obs_vocab, "observation")
    sp_idx = encode_values(data.next_states, state_vocab, "state")
    ns, na, no = len(state_vocab), len(action_vocab), len(obs_vocab)
    if ns == 0 or na == 0 or no == 0:
        raise ValueError("empty vocabulary")

    t_counts = np.zeros((ns, na, ns))
    np.add.at(t_counts, (s_idx, a_idx, sp_idx), 1.0)
    sa_totals = t_counts.sum(axis=2)
    transition = np.where(
        sa_totals[:, :, None] > 0, t_counts / np.maximum(sa_totals, 1.0)[:, :, None], 1.0 / ns
    )

    z_counts = np.zeros((ns, no))
    np.add.at(z_counts, (s_idx, o_idx), 1.0)
    s_totals = z_counts.sum(axis=1)
    observation = np.where(
        s_totals[:, None] > 0, z_counts / np.maximum(s_totals, 1.0)[:, None], 1.0 / no
    )

    if reward_fn is not None:
        reward = np.array(
            [[reward_fn(state_vocab[s], action_vocab[a]) for a in range(na)] for s in range(ns)]
        )
    else:
        sums = np.zeros((ns, na))
        np.add.at(sums, (s_idx, a_idx), data.rewards)
        reward = np.where(sa_totals > 0, sums / np.maximum(sa_totals, 1.0), 0.0)
    return DiscretePOMDP(transition, observation, reward, gamma)


def qmdp_on_samples(model: DiscretePOMDP, sample_states, state_vocab, **qmdp_kwargs) -> np.ndarray:
    """QMDP table mapped onto sample states: entry [a, i] = Q_mdp(state(s_i), a)."""
    q = qmdp(model, **qmdp_kwargs)
    idx = encode_values(sample_states, state_vocab, "sample state")
    return q[idx, :].T.copy()


def save_discrete_pomdp(model: DiscretePOMDP, path) -> None:
    """Structured text: dimensions and discount, then row-major tables."""
    with open(path, "w") as fh:
        fh.write(f"{model.n_states} {model.n_actions} {model.n_obs} {model.gamma!r}\n")
        for name, table in (
            ("transition", model.transition),
            ("observation", model.observation),
            ("reward", model.reward),
        ):
            fh.write(name + "\n")
            fh.write(" ".join(format(v, ".17g") for v in table.ravel()) + "\n")


def load_discrete_pomdp(path) -> DiscretePOMDP:
    with open(path) as fh:
        lines = [line.strip() for line in fh if line.strip()]
    ns, na, no = (int(x) for x in lines[0].split()[:3])
    gamma = float(lines[0].split()[3])
    tables = {}
    for i in range(1, len(lines), 2):
        tables[lines[i]] = np.array([float(v) for v in lines[i + 1].split()])
    return DiscretePOMDP(
        tables["transition"].reshape(ns, na, ns),
        tables["observation"].reshape(ns, no),
        tables["reward"].reshape(ns, na),
        gamma,
    )


def encode_values(values, vocab, what: str = "value") -> np.ndarray:
    """Map an array of raw values onto indices in a vocabulary sequence."""
    values = np.asarray(values)
    lookup = {}
    for i, entry in enumerate(vocab):
        key = tuple(np.atleast_1d(np.asarray(entry)).tolist())
        lookup[key] = i
    out = np.empty(values.shape[0], dtype=np.int64)
    rows = values if values.ndim > 1 else values[:, None]
    for r in range(rows.shape[0]):
        key = tuple(np.atleast_1d(rows[r]).tolist())
        if key not in lookup:
            raise ValueError(f"unmappable {what}: {key}")
        out[r] = lookup[key]
    return out
