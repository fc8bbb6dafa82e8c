"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The fast criteria (P1, P2, P3, P8) run the same checks as the ``verify`` CLI
subcommand. The benchmark-scale criteria (P4 to P7) run the grid-world and
pendulum protocols end to end and take several minutes each; datasets are
cached in a session-scoped directory so the pendulum runs share their
training data.
"""

import time

import numpy as np
import pytest

from kpomdp import embed, harness, kernels, plan, verify
from kpomdp.config import default_config, with_overrides
from kpomdp.data import Dataset
from kpomdp.embed import LowRankConfig, train_model
from kpomdp.plan import PlanConfig, kernel_value_iteration


def report(pid: str, passed: bool, detail: str) -> None:
    print(f"[{pid}] {'PASS' if passed else 'FAIL'} {detail}")
    assert passed, f"{pid}: {detail}"


@pytest.fixture(scope="session", autouse=True)
def acceptance_data_dir(tmp_path_factory):
    import os

    path = tmp_path_factory.mktemp("acceptance_data")
    old = os.environ.get(harness.DATA_DIR_ENV)
    os.environ[harness.DATA_DIR_ENV] = str(path)
    yield path
    if old is None:
        os.environ.pop(harness.DATA_DIR_ENV, None)
    else:
        os.environ[harness.DATA_DIR_ENV] = old


def pendulum_config(**overrides):
    base = dict(
        env="pendulum",
        sweep=(2000,),
        controllers=("kernel",),
        episodes=20,
        horizon=100,
        depth=1,
        init="reward",
        pruning=False,
        collect_mode="restart",
        gamma=0.95,
        lowrank_mode="rank",
        lowrank_rank=1000,
        seed=1234,
    )
    base.update(overrides)
    return with_overrides(default_config(), **base)


@pytest.fixture(scope="session")
def pendulum_rows(acceptance_data_dir):
    cfg = pendulum_config(controllers=("kernel", "histogram"))
    return {row.controller: row for row in harness.run_sweep(cfg)}


def test_p1_filter_oracle_equivalence():
    start = time.time()
    result = verify.check_filter_equivalence(tol=1e-4)
    elapsed = time.time() - start
    report("P1", result.passed and elapsed < 10.0, f"{result.detail}, {elapsed:.1f}s (< 10s)")


def test_p2_planning_oracle_equivalence():
    start = time.time()
    result = verify.check_planning_equivalence(tol=1e-4)
    elapsed = time.time() - start
    report("P2", result.passed and elapsed < 30.0, f"{result.detail}, {elapsed:.1f}s (< 30s)")


def test_p3_corrected_operator_properties():
    start = time.time()
    result = verify.check_operator_properties(instances=120)
    elapsed = time.time() - start
    report("P3", result.passed and elapsed < 60.0, f"{result.detail}, {elapsed:.1f}s (< 60s)")


def test_p4_grid_world_trend(acceptance_data_dir):
    sweep = (500, 1000, 2000, 4000)
    cfg = with_overrides(
        default_config(),
        env="grid",
        sweep=sweep,
        controllers=("kernel",),
        episodes=20,
        horizon=100,
        depth=2,
        gamma=0.95,
        init="qmdp",
        pruning=True,
        lowrank_mode="tol",
        lowrank_tol=1e-12,
        seed=1234,
    )
    kernel_rows = {row.n: row for row in harness.run_sweep(cfg)}
    exact_cfg = with_overrides(cfg, sweep=(4000,), controllers=("exact",))
    exact_row = harness.run_sweep(exact_cfg)[0]

    means = [kernel_rows[n].mean_return for n in sweep]
    errs = [kernel_rows[n].stderr for n in sweep]
    inversions = []
    for i in range(len(sweep) - 1):
        if means[i + 1] < means[i]:
            deficit = means[i] - means[i + 1]
            band = np.hypot(errs[i], errs[i + 1])
            inversions.append((sweep[i], sweep[i + 1], deficit, band))
    monotone_ok = len(inversions) <= 1 and all(d <= b for *_, d, b in inversions)

    ratio = kernel_rows[4000].mean_return / exact_row.mean_return
    detail = (
        "means " + ", ".join(f"n={n}: {kernel_rows[n].mean_return:.3f}+-{kernel_rows[n].stderr:.3f}" for n in sweep)
        + f"; exact {exact_row.mean_return:.3f}; ratio at n=4000 {ratio:.3f} (>= 0.85);"
        + f" inversions {len(inversions)} (<= 1 within 1 stderr)"
    )
    report("P4", monotone_ok and ratio >= 0.85, detail)


def test_p5_pendulum_height(pendulum_rows):
    row = pendulum_rows["kernel"]
    detail = f"mean height {row.mean_return:.1f} +- {row.stderr:.1f} of max 100 (>= 85)"
    report("P5", row.mean_return >= 85.0, detail)


def test_p6_kernel_beats_histogram(pendulum_rows):
    kernel = pendulum_rows["kernel"].mean_return
    hist = pendulum_rows["histogram"].mean_return
    report("P6", kernel > hist, f"kernel {kernel:.1f} vs 5x5 histogram {hist:.1f}")


def _small_gaussian_model(low_rank=None):
    rng = np.random.default_rng(17)
    n = 80
    states = np.column_stack([rng.uniform(-1, 1, n), rng.uniform(-2, 2, n)])
    nexts = states + 0.25 * rng.normal(size=(n, 2))
    data = Dataset(
        states=states,
        obs=states[:, 0] + 0.05 * rng.normal(size=n),
        actions=rng.integers(0, 3, size=n),
        rewards=np.exp(-np.abs(states).sum(axis=1)),
        next_states=nexts,
        next_obs=nexts[:, 0],
    )
    spec_s = kernels.KernelSpec(kernels.GAUSSIAN, divisors=(5.0, 5.0))
    spec_o = kernels.KernelSpec(kernels.GAUSSIAN, divisors=(5.0,))
    model = train_model(
        data, spec_s, kernels.delta_kernel(), spec_o, actions=[0, 1, 2], low_rank=low_rank
    )
    reward_table = plan.build_reward_table(
        lambda s, a: float(np.exp(-np.abs(np.asarray(s, dtype=float)).sum())), data.states, [0, 1, 2]
    )
    return model, reward_table


def test_p7_low_rank_fidelity(pendulum_rows):
    # full-rank factorization must reproduce the dense planner everywhere
    dense_model, rewards = _small_gaussian_model()
    full_model, _ = _small_gaussian_model(LowRankConfig("rank", rank=80, tol=0.0))
    rng = np.random.default_rng(23)
    worst = 0.0
    action_mismatches = 0
    for depth in (1, 2):
        cfg = PlanConfig(depth=depth, discount=0.9)
        for _ in range(8):
            alpha = embed.normalize(np.abs(rng.normal(size=dense_model.n)))
            res_d = kernel_value_iteration(dense_model, alpha, cfg, rewards, rewards)
            res_f = kernel_value_iteration(full_model, alpha, cfg, rewards, rewards)
            worst = max(worst, abs(res_d.value - res_f.value))
            action_mismatches += res_d.action != res_f.action
    sim, data, oracle_dense = verify.oracle_setup(regularizer=1e-3)
    oracle_full = train_model(
        data, kernels.delta_kernel(), kernels.delta_kernel(), kernels.delta_kernel(),
        regularizers=embed.Regularizers(1e-3, 1e-3, 1e-3, 1e-3), actions=sim.actions,
        low_rank=LowRankConfig("rank", rank=data.n, tol=0.0),
    )
    oracle_rewards = plan.build_reward_table(sim.reward, data.states, sim.actions)
    cfg = PlanConfig(depth=2, discount=0.9)
    for belief in verify.belief_grid():
        alpha = embed.normalize(verify.frequency_weights(data, sim.state_vocab(), belief))
        res_d = kernel_value_iteration(oracle_dense, alpha, cfg, oracle_rewards, oracle_rewards)
        res_f = kernel_value_iteration(oracle_full, alpha, cfg, oracle_rewards, oracle_rewards)
        worst = max(worst, abs(res_d.value - res_f.value))
        action_mismatches += res_d.action != res_f.action
    full_rank_ok = worst <= 1e-6 and action_mismatches == 0

    # a rank cap of n/4 on the pendulum may cost at most 10% of the return
    capped_cfg = pendulum_config(lowrank_rank=500)
    capped_row = harness.run_sweep(capped_cfg)[0]
    baseline = pendulum_rows["kernel"].mean_return
    drop = (baseline - capped_row.mean_return) / abs(baseline)
    detail = (
        f"full-rank vs dense max gap {worst:.2e} (<= 1e-6), action mismatches {action_mismatches};"
        f" rank n/4 return {capped_row.mean_return:.1f} vs {baseline:.1f} (drop {100 * drop:.1f}% < 10%)"
    )
    report("P7", full_rank_ok and drop < 0.10, detail)


def test_p8_micro_invariants():
    start = time.time()
    results = verify.run_quick_checks()
    elapsed = time.time() - start
    failed = [r for r in results if not r.passed and not r.skipped]
    report(
        "P8",
        not failed and elapsed < 120.0,
        f"{len(results) - 1} checks, failures {len(failed)}, {elapsed:.1f}s (< 2min)",
    )
