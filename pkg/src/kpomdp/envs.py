"""Simulated POMDP environments and training-data collection.

Environments are value-semantics state machines: ``step`` and ``observe`` are
pure functions of their inputs plus an explicit RNG, so independent episodes
can run on independently seeded streams. Ground-truth state is available to
the data collector; controllers only ever receive rewards and observations.
"""

import numpy as np

from .data import Dataset
from .exact import DiscretePOMDP

# ---------------------------------------------------------------------------
# grid world

GRID_ACTIONS = ("N", "E", "S", "W")
_MOVES = {"N": (-1, 0), "E": (0, 1), "S": (1, 0), "W": (0, -1)}


def grid_observe(state, width: int = 10) -> str:
    """Wall pattern of a cell: which of the 4 neighbors are walls."""
    row, col = int(state[0]), int(state[1])
    walls = []
    if row == 0:
        walls.append("N")
    if col == width - 1:
        walls.append("E")
    if row == width - 1:
        walls.append("S")
    if col == 0:
        walls.append("W")
    if not walls:
        return "no-walls"
    return "walls-" + "-".join(walls)


def grid_step(state, action: str, rng, width: int = 10, goal=(9, 9)):
    """One move. Boundary moves stay put; any action at the goal pays 1 and
    teleports to a uniformly random non-goal cell."""
    row, col = int(state[0]), int(state[1])
    if (row, col) == tuple(goal):
        k = int(rng.integers(width * width - 1))
        goal_flat = goal[0] * width + goal[1]
        if k >= goal_flat:
            k += 1
        nxt = np.array([k // width, k % width], dtype=np.int64)
        return nxt, 1.0, grid_observe(nxt, width)
    dr, dc = _MOVES[action]
    nr = min(max(row + dr, 0), width - 1)
    nc = min(max(col + dc, 0), width - 1)
    nxt = np.array([nr, nc], dtype=np.int64)
    return nxt, 0.0, grid_observe(nxt, width)


class GridWorld:
    """W x W grid with deterministic moves, a rewarding goal cell that
    teleports, and 9-pattern wall observations."""

    discrete = True
    name = "grid"

    def __init__(self, width: int = 10, goal=(9, 9)):
        self.width = width
        self.goal = tuple(goal)
        self.actions = list(GRID_ACTIONS)

    def state_vocab(self):
        return [np.array([r, c], dtype=np.int64) for r in range(self.width) for c in range(self.width)]

    def obs_vocab(self):
        patterns = sorted({grid_observe((r, c), self.width) for r in range(self.width) for c in range(self.width)})
        return patterns

    def observe(self, state, rng=None) -> str:
        return grid_observe(state, self.width)

    def reward(self, state, action) -> float:
        return 1.0 if (int(state[0]), int(state[1])) == self.goal else 0.0

    def step(self, state, action, rng):
        return grid_step(state, action, rng, self.width, self.goal)

    def random_state(self, rng):
        k = int(rng.integers(self.width * self.width))
        return np.array([k // self.width, k % self.width], dtype=np.int64)

    def reset(self, rng):
        state = self.random_state(rng)
        while (int(state[0]), int(state[1])) == self.goal:
            state = self.random_state(rng)
        return state, self.observe(state)

    def metric(self, state):
        return None

    def exact_model(self, gamma: float = 0.95) -> DiscretePOMDP:
        w = self.width
        ns = w * w
        states = self.state_vocab()
        obs_vocab = self.obs_vocab()
        obs_index = {o: i for i, o in enumerate(obs_vocab)}
        goal_flat = self.goal[0] * w + self.goal[1]
        transition = np.zeros((ns, len(self.actions), ns))
        observation = np.zeros((ns, len(obs_vocab)))
        reward = np.zeros((ns, len(self.actions)))
        for s, cell in enumerate(states):
            observation[s, obs_index[grid_observe(cell, w)]] = 1.0
            for a, action in enumerate(self.actions):
                if s == goal_flat:
                    reward[s, a] = 1.0
                    transition[s, a, :] = 1.0 / (ns - 1)
                    transition[s, a, goal_flat] = 0.0
                else:
                    dr, dc = _MOVES[action]
                    nr = min(max(int(cell[0]) + dr, 0), w - 1)
                    nc = min(max(int(cell[1]) + dc, 0), w - 1)
                    transition[s, a, nr * w + nc] = 1.0
        return DiscretePOMDP(transition, observation, reward, gamma)


# ---------------------------------------------------------------------------
# cart-pole swing-up (pendulum on a cart; the cart position is not modeled)

PENDULUM_ACTIONS = (-250, -150, -50, 0, 50, 150, 250)

_CART_MASS = 8.0
_POLE_MASS = 2.0
_POLE_LENGTH = 0.5
_GRAVITY = 9.8
_DT = 0.1
_INV_TOTAL_MASS = 1.0 / (_CART_MASS + _POLE_MASS)
_THETA_RANGE = np.pi / 3.0
_THETA_DOT_RANGE = 3.0
# reward spread: variances of the uniform training ranges
_SIGMA1_SQ = _THETA_RANGE**2 / 3.0
_SIGMA2_SQ = _THETA_DOT_RANGE**2 / 3.0


def _theta_ddot(theta, theta_dot, force):
    ml = _POLE_MASS * _POLE_LENGTH
    num = (
        _GRAVITY * np.sin(theta)
        - 0.5 * _INV_TOTAL_MASS * ml * theta_dot**2 * np.sin(2.0 * theta)
        - _INV_TOTAL_MASS * np.cos(theta) * force
    )
    den = 4.0 * _POLE_LENGTH / 3.0 - _INV_TOTAL_MASS * ml * np.cos(theta) ** 2
    return num / den


def wrap_angle(theta):
    """Wrap to (-pi, pi]."""
    wrapped = np.remainder(theta + np.pi, 2.0 * np.pi) - np.pi
    return np.where(wrapped == -np.pi, np.pi, wrapped) if np.ndim(wrapped) else (
        np.pi if wrapped == -np.pi else wrapped
    )


def pendulum_rk4(theta, theta_dot, force, dt: float = _DT):
    """One fourth-order Runge-Kutta step of the swing-up dynamics."""

    def deriv(th, om):
        return om, _theta_ddot(th, om, force)

    k1t, k1o = deriv(theta, theta_dot)
    k2t, k2o = deriv(theta + 0.5 * dt * k1t, theta_dot + 0.5 * dt * k1o)
    k3t, k3o = deriv(theta + 0.5 * dt * k2t, theta_dot + 0.5 * dt * k2o)
    k4t, k4o = deriv(theta + dt * k3t, theta_dot + dt * k3o)
    new_theta = theta + dt * (k1t + 2.0 * k2t + 2.0 * k3t + k4t) / 6.0
    new_theta_dot = theta_dot + dt * (k1o + 2.0 * k2o + 2.0 * k3o + k4o) / 6.0
    return new_theta, new_theta_dot


def pendulum_reward(state) -> float:
    theta, theta_dot = float(state[0]), float(state[1])
    return float(np.exp(-(theta**2) / (2.0 * _SIGMA1_SQ) - (theta_dot**2) / (10.0 * _SIGMA2_SQ)))


def pendulum_step(state, force, rng=None):
    """Apply a horizontal force for one 0.1 s step. The reward is paid for the
    state the action was taken in; the observation is the landing angle."""
    theta, theta_dot = float(state[0]), float(state[1])
    reward = pendulum_reward(state)
    new_theta, new_theta_dot = pendulum_rk4(theta, theta_dot, float(force))
    new_theta = float(wrap_angle(new_theta))
    nxt = np.array([new_theta, new_theta_dot])
    return nxt, reward, new_theta


class Pendulum:
    """Swing-up cart-balancing system observed through the angle only."""

    discrete = False
    name = "pendulum"

    def __init__(self):
        self.actions = list(PENDULUM_ACTIONS)

    def observe(self, state, rng=None) -> float:
        return float(state[0])

    def reward(self, state, action) -> float:
        return pendulum_reward(state)

    def step(self, state, action, rng=None):
        return pendulum_step(state, action, rng)

    def random_state(self, rng):
        theta = rng.uniform(-_THETA_RANGE, _THETA_RANGE)
        theta_dot = rng.uniform(-_THETA_DOT_RANGE, _THETA_DOT_RANGE)
        return np.array([theta, theta_dot])

    def reset(self, rng):
        state = self.random_state(rng)
        return state, self.observe(state)

    def metric(self, state) -> float:
        return float(np.cos(state[0]))


# ---------------------------------------------------------------------------
# sampler for tabular models (used by the two-state oracle environment)


class DiscreteSimulator:
    """Wraps a DiscretePOMDP as a sampling environment with labeled
    states/actions/observations."""

    discrete = True

    def __init__(self, model: DiscretePOMDP, state_labels, action_labels, obs_labels, name="discrete"):
        self.model = model
        self.name = name
        self._states = list(state_labels)
        self.actions = list(action_labels)
        self._obs = list(obs_labels)
        self._action_index = {a: i for i, a in enumerate(self.actions)}
        self._state_index = {s: i for i, s in enumerate(self._states)}

    def state_vocab(self):
        return list(self._states)

    def obs_vocab(self):
        return list(self._obs)

    def observe(self, state, rng):
        s = self._state_index[state]
        return self._obs[rng.choice(self.model.n_obs, p=self.model.observation[s])]

    def reward(self, state, action) -> float:
        return float(self.model.reward[self._state_index[state], self._action_index[action]])

    def step(self, state, action, rng):
        s = self._state_index[state]
        a = self._action_index[action]
        sp = int(rng.choice(self.model.n_states, p=self.model.transition[s, a]))
        obs = self._obs[int(rng.choice(self.model.n_obs, p=self.model.observation[sp]))]
        return self._states[sp], float(self.model.reward[s, a]), obs

    def random_state(self, rng):
        return self._states[int(rng.integers(self.model.n_states))]

    def reset(self, rng):
        state = self.random_state(rng)
        return state, self.observe(state, rng)

    def metric(self, state):
        return None

    def exact_model(self, gamma: float = None) -> DiscretePOMDP:
        if gamma is None or gamma == self.model.gamma:
            return self.model
        return DiscretePOMDP(self.model.transition, self.model.observation, self.model.reward, gamma)


def two_state_oracle(gamma: float = 0.9) -> DiscreteSimulator:
    """A 2-state / 2-action / 2-observation POMDP with quarter-integer
    probabilities, so an exhaustive balanced dataset reproduces it exactly."""
    # transition[s, a] is the next-state row; all entries quarter-integers
    transition = np.array(
        [
            [[0.75, 0.25], [0.25, 0.75]],
            [[0.25, 0.75], [0.50, 0.50]],
        ]
    )
    observation = np.array([[0.75, 0.25], [0.25, 0.75]])
    reward = np.array([[1.0, 0.25], [0.0, 0.75]])
    model = DiscretePOMDP(transition, observation, reward, gamma)
    return DiscreteSimulator(model, ["s0", "s1"], ["a0", "a1"], ["o0", "o1"], name="twostate")


def balanced_dataset(sim: DiscreteSimulator) -> Dataset:
    """Exhaustive dataset whose empirical frequencies equal the model exactly.

    Requires all transition and observation probabilities to be multiples of
    some 1/k; tuples are replicated in exact proportion.
    """
    model = sim.model
    denom = 1
    for p in np.concatenate([model.transition.ravel(), model.observation.ravel()]):
        for k in range(1, 65):
            if abs(p * k - round(p * k)) < 1e-12:
                denom = max(denom, k)
                break
        else:
            raise ValueError("model probabilities are not small rationals")
    states, obs, actions, rewards, next_states, next_obs = [], [], [], [], [], []
    for s in range(model.n_states):
        for a in range(model.n_actions):
            for o in range(model.n_obs):
                c_o = int(round(model.observation[s, o] * denom))
                for sp in range(model.n_states):
                    c_sp = int(round(model.transition[s, a, sp] * denom))
                    for op in range(model.n_obs):
                        c_op = int(round(model.observation[sp, op] * denom))
                        for _ in range(c_o * c_sp * c_op):
                            states.append(sim.state_vocab()[s])
                            obs.append(sim.obs_vocab()[o])
                            actions.append(sim.actions[a])
                            rewards.append(model.reward[s, a])
                            next_states.append(sim.state_vocab()[sp])
                            next_obs.append(sim.obs_vocab()[op])
    return Dataset(
        states=np.array(states),
        obs=np.array(obs),
        actions=np.array(actions),
        rewards=np.array(rewards, dtype=float),
        next_states=np.array(next_states),
        next_obs=np.array(next_obs),
    )


# ---------------------------------------------------------------------------
# dataset collection


def collect_dataset(env, n: int, rng, mode: str = "trajectory", prior: int = 0) -> Dataset:
    """Collect n transition tuples with uniform random actions.

    ``trajectory`` rolls out one chain from a random start; ``restart`` draws
    every tuple from an independent uniform state. ``prior`` appends that many
    extra tuples whose (state, action) pair is uniform, with the environment
    generating the consequences.
    """
    if n < 1:
        raise ValueError("need at least one tuple")
    if mode not in ("trajectory", "restart"):
        raise ValueError(f"unknown collection mode {mode!r}")
    states, obs, actions, rewards, next_states, next_obs = [], [], [], [], [], []

    def record(s, o, a, r, sp, op):
        states.append(s)
        obs.append(o)
        actions.append(a)
        rewards.append(r)
        next_states.append(sp)
        next_obs.append(op)

    if mode == "trajectory":
        state, observation = env.reset(rng)
        for _ in range(n):
            action = env.actions[int(rng.integers(len(env.actions)))]
            nxt, reward, next_observation = env.step(state, action, rng)
            record(state, observation, action, reward, nxt, next_observation)
            state, observation = nxt, next_observation
    else:
        for _ in range(n):
            state, observation = env.reset(rng)
            action = env.actions[int(rng.integers(len(env.actions)))]
            nxt, reward, next_observation = env.step(state, action, rng)
            record(state, observation, action, reward, nxt, next_observation)

    for _ in range(prior):
        state = env.random_state(rng)
        observation = env.observe(state, rng)
        action = env.actions[int(rng.integers(len(env.actions)))]
        nxt, reward, next_observation = env.step(state, action, rng)
        record(state, observation, action, reward, nxt, next_observation)

    return Dataset(
        states=np.array(states),
        obs=np.array(obs),
        actions=np.array(actions),
        rewards=np.array(rewards, dtype=float),
        next_states=np.array(next_states),
        next_obs=np.array(next_obs),
    )
