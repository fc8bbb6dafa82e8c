"""Experiment configuration: flat key = value sections, versioned.

The file format is INI as understood by configparser. ``default_config()``
returns the built-in defaults; ``parse_config`` layers a file over them and
validates. A config's fingerprint is a hash of its canonical dump, carried
into every result row.
"""

import configparser
import hashlib
import io
import math
from dataclasses import dataclass, replace

from .embed import LowRankConfig, Regularizers
from .exceptions import ConfigError
from .plan import PlanConfig

CONFIG_VERSION = 1

_DEFAULTS = {
    "experiment": {
        "version": str(CONFIG_VERSION),
        "env": "grid",
        "sweep": "500,1000,2000,4000",
        "controllers": "kernel,exact",
        "seed": "1234",
        "episodes": "20",
        "horizon": "100",
    },
    "env": {
        "width": "10",
        "goal": "9,9",
        "bins": "5",
    },
    "collect": {
        "mode": "trajectory",
        "prior": "0",
    },
    "kernel": {
        "state_divisors": "30,10",
        "obs_divisors": "30",
    },
    "regularizers": {
        "eps_s": "auto",
        "eps_sa": "auto",
        "kbr": "auto",
        "eps_o": "auto",
    },
    "plan": {
        "gamma": "0.95",
        "depth": "2",
        "init": "qmdp",
        "pruning": "true",
        "corrected": "true",
        "kbr_variant": "plain",
        "branch_cutoff": "1e-6",
    },
    "lowrank": {
        "mode": "off",
        "rank": "0",
        "tol": "1e-10",
    },
}

_ENVS = ("grid", "pendulum", "twostate")
_CONTROLLERS = ("kernel", "histogram", "exact")


@dataclass(frozen=True)
class ExperimentConfig:
    env: str = "grid"
    sweep: tuple = (500, 1000, 2000, 4000)
    controllers: tuple = ("kernel", "exact")
    seed: int = 1234
    episodes: int = 20
    horizon: int = 100
    width: int = 10
    goal: tuple = (9, 9)
    bins: int = 5
    collect_mode: str = "trajectory"
    prior: int = 0
    state_divisors: tuple = (30.0, 10.0)
    obs_divisors: tuple = (30.0,)
    eps_s: object = "auto"
    eps_sa: object = "auto"
    kbr: object = "auto"
    eps_o: object = "auto"
    gamma: float = 0.95
    depth: int = 2
    init: str = "qmdp"
    pruning: bool = True
    corrected: bool = True
    kbr_variant: str = "plain"
    branch_cutoff: float = 1e-6
    lowrank_mode: str = "off"
    lowrank_rank: int = 0
    lowrank_tol: float = 1e-10

    def regularizers(self, n: int) -> Regularizers:
        auto = 0.1 / math.sqrt(n)
        pick = lambda v: auto if v == "auto" else float(v)
        return Regularizers(pick(self.eps_s), pick(self.eps_sa), pick(self.kbr), pick(self.eps_o))

    def low_rank(self) -> LowRankConfig:
        return LowRankConfig(self.lowrank_mode, self.lowrank_rank, self.lowrank_tol)

    def plan_config(self) -> PlanConfig:
        return PlanConfig(
            depth=self.depth,
            discount=self.gamma,
            init_mode=self.init,
            pruning=self.pruning,
            normalize_weights=self.corrected,
            branch_cutoff=self.branch_cutoff,
        )

    def fingerprint(self) -> str:
        return hashlib.sha256(dump_config(self).encode()).hexdigest()[:16]


def default_config() -> ExperimentConfig:
    return ExperimentConfig()


def _parse_tuple(text, conv, what):
    try:
        items = tuple(conv(part.strip()) for part in str(text).split(",") if part.strip())
    except ValueError as err:
        raise ConfigError(f"{what}: cannot parse {text!r}") from err
    if not items:
        raise ConfigError(f"{what}: empty list")
    return items


def _parse_bool(text, what):
    t = str(text).strip().lower()
    if t in ("true", "1", "yes", "on"):
        return True
    if t in ("false", "0", "no", "off"):
        return False
    raise ConfigError(f"{what}: expected a boolean, got {text!r}")


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser()
    parser.read_dict(_DEFAULTS)
    try:
        parser.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"config parse error: {err}") from err

    for section in parser.sections():
        if section not in _DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _DEFAULTS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")

    get = parser.get
    version = get("experiment", "version")
    if int(version) != CONFIG_VERSION:
        raise ConfigError(f"unsupported config version {version}")

    def reg(key):
        raw = get("regularizers", key).strip()
        if raw == "auto":
            return "auto"
        try:
            value = float(raw)
        except ValueError as err:
            raise ConfigError(f"regularizers.{key}: {raw!r}") from err
        if value < 0:
            raise ConfigError(f"regularizers.{key}: must be nonnegative")
        return value

    cfg = ExperimentConfig(
        env=get("experiment", "env"),
        sweep=_parse_tuple(get("experiment", "sweep"), int, "experiment.sweep"),
        controllers=_parse_tuple(get("experiment", "controllers"), str, "experiment.controllers"),
        seed=parser.getint("experiment", "seed"),
        episodes=parser.getint("experiment", "episodes"),
        horizon=parser.getint("experiment", "horizon"),
        width=parser.getint("env", "width"),
        goal=_parse_tuple(get("env", "goal"), int, "env.goal"),
        bins=parser.getint("env", "bins"),
        collect_mode=get("collect", "mode"),
        prior=parser.getint("collect", "prior"),
        state_divisors=_parse_tuple(get("kernel", "state_divisors"), float, "kernel.state_divisors"),
        obs_divisors=_parse_tuple(get("kernel", "obs_divisors"), float, "kernel.obs_divisors"),
        eps_s=reg("eps_s"),
        eps_sa=reg("eps_sa"),
        kbr=reg("kbr"),
        eps_o=reg("eps_o"),
        gamma=parser.getfloat("plan", "gamma"),
        depth=parser.getint("plan", "depth"),
        init=get("plan", "init"),
        pruning=_parse_bool(get("plan", "pruning"), "plan.pruning"),
        corrected=_parse_bool(get("plan", "corrected"), "plan.corrected"),
        kbr_variant=get("plan", "kbr_variant"),
        branch_cutoff=parser.getfloat("plan", "branch_cutoff"),
        lowrank_mode=get("lowrank", "mode"),
        lowrank_rank=parser.getint("lowrank", "rank"),
        lowrank_tol=parser.getfloat("lowrank", "tol"),
    )
    validate_config(cfg)
    return cfg


def validate_config(cfg: ExperimentConfig) -> None:
    if cfg.env not in _ENVS:
        raise ConfigError(f"experiment.env: unknown environment {cfg.env!r}")
    for c in cfg.controllers:
        if c not in _CONTROLLERS:
            raise ConfigError(f"experiment.controllers: unknown controller {c!r}")
    if any(n < 1 for n in cfg.sweep):
        raise ConfigError("experiment.sweep: sample sizes must be positive")
    if cfg.episodes < 1 or cfg.horizon < 0:
        raise ConfigError("experiment.episodes/horizon out of range")
    if not 0.0 < cfg.gamma < 1.0:
        raise ConfigError("plan.gamma must lie in (0, 1)")
    if cfg.depth < 0:
        raise ConfigError("plan.depth must be nonnegative")
    if cfg.init not in ("reward", "qmdp"):
        raise ConfigError(f"plan.init: unknown mode {cfg.init!r}")
    if cfg.kbr_variant not in ("plain", "squared"):
        raise ConfigError(f"plan.kbr_variant: unknown variant {cfg.kbr_variant!r}")
    if cfg.collect_mode not in ("trajectory", "restart"):
        raise ConfigError(f"collect.mode: unknown mode {cfg.collect_mode!r}")
    if cfg.prior < 0:
        raise ConfigError("collect.prior must be nonnegative")
    if cfg.lowrank_mode not in ("off", "rank", "tol"):
        raise ConfigError(f"lowrank.mode: unknown mode {cfg.lowrank_mode!r}")
    if cfg.lowrank_mode == "rank" and cfg.lowrank_rank < 1:
        raise ConfigError("lowrank.rank must be positive in rank mode")
    if cfg.env == "pendulum":
        if cfg.init == "qmdp" or cfg.pruning:
            raise ConfigError("pendulum supports init = reward without pruning only")
        if "exact" in cfg.controllers:
            raise ConfigError("no exact controller exists for the pendulum")
    if cfg.env == "grid":
        if len(cfg.goal) != 2 or not all(0 <= g < cfg.width for g in cfg.goal):
            raise ConfigError("env.goal must be a cell inside the grid")


def dump_config(cfg: ExperimentConfig) -> str:
    parser = configparser.ConfigParser()
    fmt_f = lambda x: format(float(x), ".17g")
    parser.read_dict(
        {
            "experiment": {
                "version": str(CONFIG_VERSION),
                "env": cfg.env,
                "sweep": ",".join(str(n) for n in cfg.sweep),
                "controllers": ",".join(cfg.controllers),
                "seed": str(cfg.seed),
                "episodes": str(cfg.episodes),
                "horizon": str(cfg.horizon),
            },
            "env": {
                "width": str(cfg.width),
                "goal": ",".join(str(g) for g in cfg.goal),
                "bins": str(cfg.bins),
            },
            "collect": {"mode": cfg.collect_mode, "prior": str(cfg.prior)},
            "kernel": {
                "state_divisors": ",".join(fmt_f(d) for d in cfg.state_divisors),
                "obs_divisors": ",".join(fmt_f(d) for d in cfg.obs_divisors),
            },
            "regularizers": {
                "eps_s": str(cfg.eps_s),
                "eps_sa": str(cfg.eps_sa),
                "kbr": str(cfg.kbr),
                "eps_o": str(cfg.eps_o),
            },
            "plan": {
                "gamma": fmt_f(cfg.gamma),
                "depth": str(cfg.depth),
                "init": cfg.init,
                "pruning": str(cfg.pruning).lower(),
                "corrected": str(cfg.corrected).lower(),
                "kbr_variant": cfg.kbr_variant,
                "branch_cutoff": fmt_f(cfg.branch_cutoff),
            },
            "lowrank": {
                "mode": cfg.lowrank_mode,
                "rank": str(cfg.lowrank_rank),
                "tol": fmt_f(cfg.lowrank_tol),
            },
        }
    )
    out = io.StringIO()
    parser.write(out)
    return out.getvalue()


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        return parse_config(fh.read())


def with_overrides(cfg: ExperimentConfig, **kwargs) -> ExperimentConfig:
    new = replace(cfg, **kwargs)
    validate_config(new)
    return new
