"""Experiment harness: dataset/model persistence, benchmark sweeps, result
tables, optional plots, and the self-check command.

All randomness derives from the master seed through fixed-entropy streams:
dataset streams depend on (seed, n), evaluation episodes on (seed, episode),
so episode starts are shared across sweep cells and controllers.
"""

import configparser
import csv
import io
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import embed, envs, kernels, plan, verify
from .config import ExperimentConfig, dump_config
from .data import Dataset, load_dataset, save_dataset
from .exact import histogram_estimate, qmdp, qmdp_on_samples
from .exceptions import ConfigError
from .online import DiscreteActionAdapter, DiscreteController, KernelController, evaluate

DATA_DIR_ENV = "KPOMDP_DATA_DIR"


def data_dir() -> Path:
    return Path(os.environ.get(DATA_DIR_ENV, "data"))


def make_env(cfg: ExperimentConfig):
    if cfg.env == "grid":
        return envs.GridWorld(cfg.width, cfg.goal)
    if cfg.env == "pendulum":
        return envs.Pendulum()
    if cfg.env == "twostate":
        return envs.two_state_oracle(cfg.gamma)
    raise ConfigError(f"unknown environment {cfg.env!r}")


def metric_name(cfg: ExperimentConfig) -> str:
    return "height" if cfg.env == "pendulum" else "discounted"


def dataset_seed(cfg: ExperimentConfig, n: int):
    return np.random.SeedSequence([cfg.seed, 101, n, cfg.prior])


def episode_seeds(cfg: ExperimentConfig):
    # shared across sweep cells and controllers: common random numbers
    return [np.random.SeedSequence([cfg.seed, 202, k]) for k in range(cfg.episodes)]


def dataset_path(cfg: ExperimentConfig, n: int) -> Path:
    name = f"{cfg.env}_{cfg.collect_mode}_n{n}_prior{cfg.prior}_seed{cfg.seed}.csv"
    return data_dir() / name


def get_dataset(cfg: ExperimentConfig, n: int, env=None) -> Dataset:
    """Load the cached dataset for this sweep cell, collecting it if absent."""
    path = dataset_path(cfg, n)
    if path.exists():
        return load_dataset(path)
    if env is None:
        env = make_env(cfg)
    rng = np.random.default_rng(dataset_seed(cfg, n))
    data = envs.collect_dataset(env, n, rng, mode=cfg.collect_mode, prior=cfg.prior)
    path.parent.mkdir(parents=True, exist_ok=True)
    save_dataset(data, path)
    return data


def env_kernels(cfg: ExperimentConfig, env):
    if env.discrete:
        return kernels.delta_kernel(), kernels.delta_kernel(), kernels.delta_kernel()
    state = kernels.KernelSpec(kernels.GAUSSIAN, divisors=tuple(cfg.state_divisors))
    obs = kernels.KernelSpec(kernels.GAUSSIAN, divisors=tuple(cfg.obs_divisors))
    return state, kernels.delta_kernel(), obs


def build_kernel_controller(cfg: ExperimentConfig, env, data: Dataset) -> KernelController:
    state_kernel, action_kernel, obs_kernel = env_kernels(cfg, env)
    model = embed.train_model(
        data,
        state_kernel,
        action_kernel,
        obs_kernel,
        regularizers=cfg.regularizers(data.n),
        actions=env.actions,
        low_rank=cfg.low_rank(),
        kbr_variant=cfg.kbr_variant,
    )
    reward_table = plan.build_reward_table(env.reward, data.states, env.actions)
    q_mdp_table = None
    if cfg.init == "qmdp" or cfg.pruning:
        if not env.discrete:
            raise ConfigError("QMDP initialization needs a discrete environment")
        estimated = histogram_estimate(
            data, env.state_vocab(), env.actions, env.obs_vocab(), gamma=cfg.gamma,
            reward_fn=env.reward,
        )
        q_mdp_table = qmdp_on_samples(estimated, data.states, env.state_vocab())
    q0_table = reward_table if cfg.init == "reward" else q_mdp_table
    return KernelController(model, cfg.plan_config(), reward_table, q0_table, q_mdp_table)


def build_exact_controller(cfg: ExperimentConfig, env) -> DiscreteActionAdapter:
    if not env.discrete:
        raise ConfigError("no exact controller exists for this environment")
    model = env.exact_model(cfg.gamma)
    obs_vocab = env.obs_vocab()
    obs_index = {o: i for i, o in enumerate(obs_vocab)}
    q_sa = qmdp(model) if (cfg.init == "qmdp" or cfg.pruning) else None
    controller = DiscreteController(
        model,
        cfg.depth,
        lambda o: obs_index[o],
        q0_table=model.reward if cfg.init == "reward" else q_sa,
        q_mdp_table=q_sa,
        pruning=cfg.pruning,
    )
    return DiscreteActionAdapter(controller, env.actions)


class BoxDiscretizer:
    """Uniform bins over a box; out-of-box points clip to the edge bins."""

    def __init__(self, lows, highs, bins):
        self.lows = np.asarray(lows, dtype=float)
        self.highs = np.asarray(highs, dtype=float)
        self.bins = np.asarray(bins, dtype=int)

    @property
    def n_cells(self) -> int:
        return int(np.prod(self.bins))

    def coords(self, point) -> np.ndarray:
        point = np.atleast_1d(np.asarray(point, dtype=float))
        rel = (point - self.lows) / (self.highs - self.lows)
        idx = np.floor(rel * self.bins).astype(int)
        return np.clip(idx, 0, self.bins - 1)

    def index(self, point) -> int:
        coords = self.coords(point)
        flat = 0
        for d in range(coords.size):
            flat = flat * self.bins[d] + coords[d]
        return int(flat)

    def center(self, index: int) -> np.ndarray:
        coords = np.zeros(self.bins.size, dtype=int)
        for d in reversed(range(self.bins.size)):
            coords[d] = index % self.bins[d]
            index //= self.bins[d]
        widths = (self.highs - self.lows) / self.bins
        return self.lows + (coords + 0.5) * widths


def build_histogram_controller(cfg: ExperimentConfig, env, data: Dataset) -> DiscreteActionAdapter:
    if env.discrete:
        state_vocab = env.state_vocab()
        obs_vocab = env.obs_vocab()
        obs_index = {o: i for i, o in enumerate(obs_vocab)}
        model = histogram_estimate(
            data, state_vocab, env.actions, obs_vocab, gamma=cfg.gamma, reward_fn=env.reward
        )
        encoder = lambda o: obs_index[o]
    else:
        state_binner = BoxDiscretizer(
            [-envs._THETA_RANGE, -envs._THETA_DOT_RANGE],
            [envs._THETA_RANGE, envs._THETA_DOT_RANGE],
            [cfg.bins, cfg.bins],
        )
        obs_binner = BoxDiscretizer([-envs._THETA_RANGE], [envs._THETA_RANGE], [cfg.bins])
        binned = Dataset(
            states=np.array([state_binner.index(s) for s in data.states]),
            obs=np.array([obs_binner.index(o) for o in data.obs]),
            actions=data.actions,
            rewards=data.rewards,
            next_states=np.array([state_binner.index(s) for s in data.next_states]),
            next_obs=np.array([obs_binner.index(o) for o in data.next_obs]),
        )
        model = histogram_estimate(
            binned,
            list(range(state_binner.n_cells)),
            env.actions,
            list(range(obs_binner.n_cells)),
            gamma=cfg.gamma,
            reward_fn=lambda s, a: env.reward(state_binner.center(s), a),
        )
        encoder = obs_binner.index
    q_sa = qmdp(model) if (cfg.init == "qmdp" or cfg.pruning) else None
    controller = DiscreteController(
        model,
        cfg.depth,
        encoder,
        q0_table=model.reward if cfg.init == "reward" else q_sa,
        q_mdp_table=q_sa,
        pruning=cfg.pruning,
    )
    return DiscreteActionAdapter(controller, env.actions)


def build_controller(name: str, cfg: ExperimentConfig, env, data: Dataset):
    if name == "kernel":
        return build_kernel_controller(cfg, env, data)
    if name == "exact":
        return build_exact_controller(cfg, env)
    if name == "histogram":
        return build_histogram_controller(cfg, env, data)
    raise ConfigError(f"unknown controller {name!r}")


@dataclass
class ResultRow:
    fingerprint: str
    env: str
    controller: str
    n: int
    gamma: float
    depth: int
    episodes: int
    horizon: int
    seed: int
    mean_return: float
    stderr: float
    wall_time: float
    reset_rate: float
    nodes_expanded: int


RESULT_FIELDS = [
    "fingerprint", "env", "controller", "n", "gamma", "depth", "episodes",
    "horizon", "seed", "mean_return", "stderr", "wall_time", "reset_rate",
    "nodes_expanded",
]


def run_sweep(cfg: ExperimentConfig, progress=None) -> list:
    """Evaluate every (n, controller) sweep cell; returns ResultRow list."""
    env = make_env(cfg)
    metric = metric_name(cfg)
    seeds = episode_seeds(cfg)
    fingerprint = cfg.fingerprint()
    rows = []
    for n in cfg.sweep:
        data = get_dataset(cfg, n, env)
        for name in cfg.controllers:
            start = time.time()
            controller = build_controller(name, cfg, env, data)
            summary = evaluate(env, controller, cfg.horizon, cfg.episodes, seeds, cfg.gamma, metric)
            wall = time.time() - start
            row = ResultRow(
                fingerprint=fingerprint,
                env=cfg.env,
                controller=name,
                n=n,
                gamma=cfg.gamma,
                depth=cfg.depth,
                episodes=cfg.episodes,
                horizon=cfg.horizon,
                seed=cfg.seed,
                mean_return=summary.mean,
                stderr=summary.stderr,
                wall_time=wall,
                reset_rate=summary.reset_rate,
                nodes_expanded=summary.nodes_expanded,
            )
            rows.append(row)
            if progress:
                progress(row)
    return rows


def rows_to_csv(rows) -> str:
    out = io.StringIO()
    writer = csv.writer(out)
    writer.writerow(RESULT_FIELDS)
    for row in rows:
        writer.writerow(
            [
                row.fingerprint, row.env, row.controller, row.n,
                format(row.gamma, ".17g"), row.depth, row.episodes, row.horizon,
                row.seed, format(row.mean_return, ".17g"), format(row.stderr, ".17g"),
                format(row.wall_time, ".3f"), format(row.reset_rate, ".6f"),
                row.nodes_expanded,
            ]
        )
    return out.getvalue()


def write_plot(rows, path) -> None:
    """Mean return vs sample size with stderr bars, one line per controller."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    by_controller = {}
    for row in rows:
        by_controller.setdefault(row.controller, []).append(row)
    for name, group in sorted(by_controller.items()):
        group = sorted(group, key=lambda r: r.n)
        ns = [r.n for r in group]
        means = [r.mean_return for r in group]
        errs = [r.stderr for r in group]
        ax.errorbar(ns, means, yerr=errs, marker="o", capsize=3, label=name)
    ax.set_xlabel("training samples")
    ax.set_ylabel("mean return")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


# ---------------------------------------------------------------------------
# model persistence: dataset reference + parameters, matrices recomputed


def save_model_spec(cfg: ExperimentConfig, n: int, dataset_file, model: embed.TrainedModel, path) -> None:
    parser = configparser.ConfigParser()
    sk = model.state_kernel
    ok = model.obs_kernel
    parser.read_dict(
        {
            "model": {
                "dataset": str(dataset_file),
                "env": cfg.env,
                "n": str(n),
                "kbr_variant": model.kbr_variant,
                "actions": ",".join(str(a) for a in model.actions),
            },
            "kernels": {
                "state_family": sk.family,
                "state_bandwidths": ",".join(format(b, ".17g") for b in (sk.bandwidths or ())),
                "obs_family": ok.family,
                "obs_bandwidths": ",".join(format(b, ".17g") for b in (ok.bandwidths or ())),
            },
            "regularizers": {
                "eps_s": format(model.regs.eps_s, ".17g"),
                "eps_sa": format(model.regs.eps_sa, ".17g"),
                "kbr": format(model.regs.kbr, ".17g"),
                "eps_o": format(model.regs.eps_o, ".17g"),
            },
            "lowrank": {
                "mode": model.low_rank.mode,
                "rank": str(model.low_rank.rank),
                "tol": format(model.low_rank.tol, ".17g"),
            },
        }
    )
    with open(path, "w") as fh:
        parser.write(fh)


def load_model_spec(path) -> embed.TrainedModel:
    parser = configparser.ConfigParser()
    with open(path) as fh:
        parser.read_string(fh.read())
    data = load_dataset(parser.get("model", "dataset"))
    env_name = parser.get("model", "env")

    def kernel_of(prefix):
        family = parser.get("kernels", f"{prefix}_family")
        if family == kernels.DELTA:
            return kernels.delta_kernel()
        bw = tuple(float(x) for x in parser.get("kernels", f"{prefix}_bandwidths").split(","))
        return kernels.gaussian_kernel(bw)

    regs = embed.Regularizers(
        parser.getfloat("regularizers", "eps_s"),
        parser.getfloat("regularizers", "eps_sa"),
        parser.getfloat("regularizers", "kbr"),
        parser.getfloat("regularizers", "eps_o"),
    )
    low_rank = embed.LowRankConfig(
        parser.get("lowrank", "mode"),
        parser.getint("lowrank", "rank"),
        parser.getfloat("lowrank", "tol"),
    )
    actions_raw = parser.get("model", "actions").split(",")
    if env_name == "pendulum":
        actions = [int(a) for a in actions_raw]
    else:
        actions = actions_raw
    return embed.train_model(
        data,
        kernel_of("state"),
        kernels.delta_kernel(),
        kernel_of("obs"),
        regularizers=regs,
        actions=actions,
        low_rank=low_rank,
        kbr_variant=parser.get("model", "kbr_variant"),
    )


# ---------------------------------------------------------------------------
# commands (shared by the CLI)


def cmd_collect(cfg: ExperimentConfig, out=print) -> list:
    env = make_env(cfg)
    paths = []
    for n in cfg.sweep:
        path = dataset_path(cfg, n)
        if not path.exists():
            get_dataset(cfg, n, env)
        data = load_dataset(path)
        out(f"collected n={data.n} -> {path}")
        paths.append(path)
    return paths


def cmd_train(cfg: ExperimentConfig, out=print) -> list:
    env = make_env(cfg)
    paths = []
    for n in cfg.sweep:
        data = get_dataset(cfg, n, env)
        controller = build_kernel_controller(cfg, env, data)
        path = data_dir() / f"{cfg.env}_n{n}_seed{cfg.seed}_model.ini"
        save_model_spec(cfg, n, dataset_path(cfg, n), controller.model, path)
        out(f"trained n={n} -> {path}")
        paths.append(path)
    return paths


def cmd_run(cfg: ExperimentConfig, results_path, plot_path=None, out=print) -> list:
    def progress(row):
        out(
            f"{row.env} {row.controller} n={row.n}: "
            f"mean={row.mean_return:.4f} stderr={row.stderr:.4f} "
            f"resets={row.reset_rate:.3f} wall={row.wall_time:.1f}s"
        )

    rows = run_sweep(cfg, progress=progress)
    results_path = Path(results_path)
    results_path.parent.mkdir(parents=True, exist_ok=True)
    results_path.write_text(rows_to_csv(rows))
    out(f"results -> {results_path}")
    if plot_path:
        write_plot(rows, plot_path)
        out(f"plot -> {plot_path}")
    return rows


def cmd_verify(cfg: ExperimentConfig = None, out=print) -> bool:
    corrected = True if cfg is None else cfg.corrected
    results = verify.run_quick_checks(corrected=corrected)
    ok = True
    for res in results:
        out(f"[{res.status}] {res.name}: {res.detail}")
        if not res.passed and not res.skipped:
            ok = False
    return ok


def cmd_defaults(out=print) -> str:
    from .config import default_config

    text = dump_config(default_config())
    out(text)
    return text
