"""Belief embeddings as weight vectors over training samples.

A trained model caches the Gram matrices (or their low-rank factors) built
from one dataset and exposes the two weight-vector updates that drive
planning and filtering:

* the predictive update  alpha -> beta' = L_a alpha  with
  L_a = (G_S + eps_S n I)^-1 G_SS' (G_SA + eps_SA n I)^-1 D(k_A(a)) G_S,
* the posterior update  beta' -> alpha' = (D(beta') G_O + delta n I)^-1
  D(beta') k_O(o'),

plus the prior-free initial belief (G_O + n eps_O I)^-1 k_O(o). Beliefs are
identified with their n-vectors of weights; expectations of a function are
plain dot products against its sample values.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg

from . import kernels
from .data import Dataset
from .exceptions import DegenerateWeightsError, PredictionFailureError
from ._accel import flush_tiny
from .linalg import (
    LowRankRegularizedSolver,
    RegularizedSolver,
    icf,
    lowrank_inner_factor,
    lowrank_shift_solve,
)


@dataclass(frozen=True)
class Regularizers:
    """Ridge parameters for the four regularized inversions."""

    eps_s: float
    eps_sa: float
    kbr: float
    eps_o: float

    @classmethod
    def default(cls, n: int) -> "Regularizers":
        r = 0.1 / math.sqrt(n)
        return cls(r, r, r, r)


@dataclass(frozen=True)
class LowRankConfig:
    """Low-rank solve settings: dense ("off"), rank-capped, or tolerance-driven.

    ``tol`` is relative to the Gram trace; in "rank" mode both the cap and the
    tolerance can stop the factorization, whichever binds first.
    """

    mode: str = "off"
    rank: int = 0
    tol: float = 1e-10

    def __post_init__(self):
        if self.mode not in ("off", "rank", "tol"):
            raise ValueError(f"unknown low-rank mode {self.mode!r}")

    @property
    def enabled(self) -> bool:
        return self.mode != "off"


@dataclass
class BeliefWeights:
    """An n-vector identifying a belief embedding over the state samples."""

    weights: np.ndarray
    normalized: bool = False


@dataclass
class PredictiveObsWeights:
    """Predicted next-observation weights over the observation samples."""

    weights: np.ndarray
    action: object


def normalize(w) -> np.ndarray:
    """Clip negatives and rescale to a probability vector.

    Raises DegenerateWeightsError when no entry is positive.
    """
    w = np.asarray(w, dtype=float)
    clipped = np.maximum(w, 0.0)
    total = clipped.sum()
    if total <= 0.0:
        raise DegenerateWeightsError("degenerate weights")
    return clipped / total


def expectation(alpha, f_values) -> float:
    """<embedding, f> estimated as the weight/sample-value dot product."""
    w = alpha.weights if isinstance(alpha, BeliefWeights) else np.asarray(alpha, dtype=float)
    f = np.asarray(f_values, dtype=float)
    if w.shape != f.shape:
        raise ValueError("weight/value length mismatch")
    return float(w @ f)


class _KBRFactor:
    """Per-(belief, action) factorization of the posterior operator.

    Solves alpha' = (D(b) G_O + delta n I)^-1 D(b) k for one prior-weight
    vector b and many observation feature columns k. The "squared" variant
    uses D(b) G_O ((D(b) G_O)^2 + delta n I)^-1 D(b) k instead.
    """

    def __init__(self, model: "TrainedModel", prior_weights: np.ndarray, variant: str = None):
        self._b = flush_tiny(np.array(prior_weights, dtype=float))
        self._model = model
        n = model.n
        shift = model.regs.kbr * n
        if variant is None:
            variant = model.kbr_variant
        # the posterior shares the prior's support: every term carries D(b),
        # so the solve can run on the nonzero rows alone (exact restriction)
        self._support = np.nonzero(self._b)[0]
        if self._support.size == 0:
            def _fail(rhs):
                raise PredictionFailureError("prediction failure")

            self._apply = _fail
            return
        if model.low_rank.enabled:
            lo = model._obs_factor[self._support]
            b = self._b[self._support]
            u = b[:, None] * lo
            if variant == "squared":
                u2 = u @ (lo.T @ u)
                self._apply = self._make_lowrank_squared(u, u2, lo, shift)
            else:
                self._apply = self._make_lowrank_plain(u, lo, shift)
        else:
            g_obs = model.gram_obs[np.ix_(self._support, self._support)]
            b = self._b[self._support]
            m = b[:, None] * g_obs
            ns = self._support.size
            if variant == "squared":
                lu = scipy.linalg.lu_factor(m @ m + shift * np.eye(ns))
                self._apply = lambda rhs: m @ scipy.linalg.lu_solve(lu, rhs)
            else:
                lu = scipy.linalg.lu_factor(m + shift * np.eye(ns))
                self._apply = lambda rhs: scipy.linalg.lu_solve(lu, rhs)

    def _make_lowrank_plain(self, u, lo, shift):
        inner = lowrank_inner_factor(u, lo, shift)
        return lambda rhs: lowrank_shift_solve(u, lo, shift, rhs, inner)

    def _make_lowrank_squared(self, u, u2, lo, shift):
        inner = lowrank_inner_factor(u2, lo, shift)
        return lambda rhs: u @ (lo.T @ lowrank_shift_solve(u2, lo, shift, rhs, inner))

    def _solve_on_support(self, rhs):
        """Solve with full-length right-hand sides, scattering back to n rows."""
        compressed = self._apply(rhs[self._support])
        if rhs.ndim == 1:
            out = np.zeros(self._model.n)
        else:
            out = np.zeros((self._model.n, rhs.shape[1]))
        out[self._support] = compressed
        return out

    def posterior(self, obs_column: np.ndarray) -> np.ndarray:
        """Posterior weights for one observation feature column."""
        rhs = self._b * obs_column
        if not np.any(rhs != 0.0):
            raise PredictionFailureError("prediction failure")
        return flush_tiny(self._solve_on_support(rhs))

    def posterior_batch(self, obs_columns: np.ndarray) -> np.ndarray:
        """Posterior weights for many feature columns at once (n x m)."""
        return flush_tiny(self._solve_on_support(self._b[:, None] * obs_columns))


class TrainedModel:
    """Cached Gram machinery for one dataset; immutable after construction."""

    def __init__(
        self,
        data: Dataset,
        state_kernel: kernels.KernelSpec,
        action_kernel: kernels.KernelSpec,
        obs_kernel: kernels.KernelSpec,
        regs: Regularizers,
        actions: list,
        low_rank: LowRankConfig,
        kbr_variant: str,
    ):
        self.data = data
        self.n = data.n
        self.state_kernel = kernels.resolve_bandwidths(state_kernel, data.states)
        self.obs_kernel = kernels.resolve_bandwidths(obs_kernel, data.obs)
        self.action_kernel = action_kernel
        self.regs = regs
        self.actions = list(actions)
        self.low_rank = low_rank
        if kbr_variant not in ("plain", "squared"):
            raise ValueError(f"unknown KBR variant {kbr_variant!r}")
        self.kbr_variant = kbr_variant

        n = self.n
        action_array = np.asarray(self.actions)
        self.action_features = kernels.gram(action_kernel, data.actions, action_array)

        # distinct observation values: planner branches expand one per value
        obs_2d = data.obs if data.obs.ndim > 1 else data.obs[:, None]
        _, rep_idx, group_index = np.unique(
            obs_2d, axis=0, return_index=True, return_inverse=True
        )
        self.obs_group_index = group_index.ravel()
        self.obs_group_reps = rep_idx
        self.n_obs_groups = rep_idx.size
        rep_obs = data.obs[rep_idx]
        self.obs_group_columns = kernels.gram(self.obs_kernel, data.obs, rep_obs)

        gram_s = kernels.gram(self.state_kernel, data.states, data.states)
        gram_a = kernels.gram(action_kernel, data.actions, data.actions)
        gram_sa = kernels.hadamard(gram_s, gram_a)
        gram_ss_next = kernels.gram(self.state_kernel, data.states, data.next_states)
        gram_obs = kernels.gram(self.obs_kernel, data.obs, data.obs)

        if not low_rank.enabled:
            self.gram_s = gram_s
            self.gram_sa = gram_sa
            self.gram_ss_next = gram_ss_next
            self.gram_obs = gram_obs
            self._solver_s = RegularizedSolver(gram_s, regs.eps_s, n)
            self._solver_sa = RegularizedSolver(gram_sa, regs.eps_sa, n)
            self._solver_o = RegularizedSolver(gram_obs, regs.eps_o, n)
            return

        cap = low_rank.rank if low_rank.mode == "rank" else n
        self.icf_state = icf(gram_s, cap, low_rank.tol * np.trace(gram_s))
        self.icf_state_action = icf(gram_sa, cap, low_rank.tol * np.trace(gram_sa))
        self.icf_obs = icf(gram_obs, cap, low_rank.tol * np.trace(gram_obs))

        ls = flush_tiny(self.icf_state.matrix)
        lsa = flush_tiny(self.icf_state_action.matrix)
        self._state_factor = ls
        self._sa_factor = lsa
        self._obs_factor = flush_tiny(self.icf_obs.matrix)

        # next-state features in the state pivot basis (Nystrom extension)
        pivot_states = data.states[self.icf_state.pivots]
        cross = kernels.gram(self.state_kernel, pivot_states, data.next_states)
        block = self.icf_state.pivot_block()
        self._next_state_factor = scipy.linalg.solve_triangular(block, cross, lower=True).T

        solver_s = LowRankRegularizedSolver(ls, regs.eps_s, n)
        proj_state = solver_s.solve(ls)  # (G_S + eps n I)^-1 L_S
        self._solver_o = LowRankRegularizedSolver(self._obs_factor, regs.eps_o, n)

        # collapse the per-action predictive chain through the pivot basis:
        # beta'_a = P_a @ (L_S^T alpha), all P_a stacked action-major
        shift_sa = regs.eps_sa * n
        inner_sa = lowrank_inner_factor(lsa, lsa, shift_sa)
        cross_next_sa = self._next_state_factor.T @ lsa
        blocks = []
        for a in range(len(self.actions)):
            ka = self.action_features[:, a]
            s_a = self._next_state_factor.T @ (ka[:, None] * ls)
            t_a = lsa.T @ (ka[:, None] * ls)
            w_a = (s_a - cross_next_sa @ scipy.linalg.lu_solve(inner_sa, t_a)) / shift_sa
            blocks.append(proj_state @ w_a)
        self._pred_stack = flush_tiny(np.vstack(blocks))
        flush_tiny(self._next_state_factor)

    # -- predictive update ---------------------------------------------------

    def action_index(self, action) -> int:
        for i, a in enumerate(self.actions):
            if a == action or np.array_equal(np.asarray(a), np.asarray(action)):
                return i
        raise ValueError(f"unknown action {action!r}")

    def apply_predictive(self, action_idx: int, weights: np.ndarray) -> np.ndarray:
        """beta' = L_a @ weights for one action."""
        w = flush_tiny(np.array(weights, dtype=float))
        if self.low_rank.enabled:
            u = self._state_factor.T @ w
            n = self.n
            out = self._pred_stack[action_idx * n : (action_idx + 1) * n] @ u
        else:
            z = self.action_features[:, action_idx] * (self.gram_s @ w)
            out = self._solver_s.solve(self.gram_ss_next @ self._solver_sa.solve(z))
        return flush_tiny(out)

    def apply_predictive_all(self, weights: np.ndarray) -> np.ndarray:
        """beta' for every action at once, shape (|A|, n)."""
        w = flush_tiny(np.array(weights, dtype=float))
        if self.low_rank.enabled:
            u = self._state_factor.T @ w
            out = (self._pred_stack @ u).reshape(len(self.actions), self.n)
        else:
            z = self.action_features * (self.gram_s @ w)[:, None]
            out = self._solver_s.solve(self.gram_ss_next @ self._solver_sa.solve(z)).T
        return flush_tiny(out)

    def predictive_matrix(self, action_idx: int) -> np.ndarray:
        """Materialized n x n matrix L_a (for diagnostics and small models)."""
        if self.low_rank.enabled:
            n = self.n
            return self._pred_stack[action_idx * n : (action_idx + 1) * n] @ self._state_factor.T
        rhs = self.action_features[:, action_idx][:, None] * self.gram_s
        return self._solver_s.solve(self.gram_ss_next @ self._solver_sa.solve(rhs))

    # -- posterior update ----------------------------------------------------

    def kbr_factor(self, prior_weights: np.ndarray, variant: str = None) -> _KBRFactor:
        return _KBRFactor(self, prior_weights, variant)

    def obs_feature_column(self, obs_value) -> np.ndarray:
        return kernels.feature_column(self.obs_kernel, self.data.obs, obs_value)

    def group_mass(self, weights: np.ndarray) -> np.ndarray:
        """Aggregate per-sample weights over distinct observation values."""
        return np.bincount(self.obs_group_index, weights=weights, minlength=self.n_obs_groups)

    # -- initial belief ------------------------------------------------------

    def initial_belief_weights(self, obs_value) -> np.ndarray:
        return flush_tiny(self._solver_o.solve(self.obs_feature_column(obs_value)))


def train_model(
    data: Dataset,
    state_kernel: kernels.KernelSpec,
    action_kernel: kernels.KernelSpec,
    obs_kernel: kernels.KernelSpec,
    regularizers: Optional[Regularizers] = None,
    actions: Optional[list] = None,
    low_rank: Optional[LowRankConfig] = None,
    kbr_variant: str = "plain",
) -> TrainedModel:
    """Build the cached Gram machinery for a dataset.

    ``actions`` fixes the canonical action ordering (argmax ties break toward
    its first element); by default the sorted distinct actions in the data.
    """
    if regularizers is None:
        regularizers = Regularizers.default(data.n)
    if actions is None:
        if data.actions.ndim > 1:
            uniq = np.unique(data.actions, axis=0)
            actions = [uniq[i] for i in range(uniq.shape[0])]
        else:
            actions = list(np.unique(data.actions))
    if low_rank is None:
        low_rank = LowRankConfig()
    return TrainedModel(
        data, state_kernel, action_kernel, obs_kernel, regularizers, actions, low_rank, kbr_variant
    )


def predict_obs_weights(model: TrainedModel, alpha, action) -> PredictiveObsWeights:
    """Predicted next-observation weights beta' = L_a alpha."""
    w = alpha.weights if isinstance(alpha, BeliefWeights) else np.asarray(alpha, dtype=float)
    if w.shape[0] != model.n:
        raise ValueError("belief weight length mismatch")
    idx = model.action_index(action)
    return PredictiveObsWeights(model.apply_predictive(idx, w), action)


def _posterior(model, beta_hat, obs_value, variant) -> BeliefWeights:
    weights = beta_hat.weights if isinstance(beta_hat, PredictiveObsWeights) else np.asarray(beta_hat)
    column = model.obs_feature_column(obs_value)
    return BeliefWeights(model.kbr_factor(weights, variant).posterior(column))


def kbr_posterior(model: TrainedModel, beta_hat, obs_value) -> BeliefWeights:
    """Posterior belief weights for one realized observation.

    ``beta_hat`` should already be normalized (the corrected-operator
    convention); raises PredictionFailureError when the prior weights give the
    observation's feature column no support.
    """
    return _posterior(model, beta_hat, obs_value, "plain")


def kbr_posterior_squared(model: TrainedModel, beta_hat, obs_value) -> BeliefWeights:
    """Posterior via the squared-regularization estimator."""
    return _posterior(model, beta_hat, obs_value, "squared")


def initial_belief(model: TrainedModel, obs_value) -> BeliefWeights:
    """Prior-free belief estimate from a single observation."""
    return BeliefWeights(model.initial_belief_weights(obs_value))
