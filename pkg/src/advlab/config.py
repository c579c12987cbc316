"""INI experiment configuration with a fixed schema.

Every key has a type and a default; unknown sections or keys are rejected so
a typo never silently falls back to a default.
"""

from __future__ import annotations

import configparser
from pathlib import Path
from types import SimpleNamespace

from .attacks import AttackConfig
from .train import TrainConfig


def _opt_float(s: str):
    return None if s.strip().lower() in ("", "none") else float(s)


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _ints(s: str) -> tuple:
    return tuple(int(v) for v in s.replace(" ", "").split(",") if v)


def _strs(s: str) -> tuple:
    return tuple(v.strip() for v in s.split(",") if v.strip())


SCHEMA = {
    "data": {
        "task": (str, "regression_quadratic"),
        "d": (int, 1),
        "alpha": (float, 1.0),
        "J": (int, 8),
        "target_seed": (int, 0),
        "sigma": (float, 0.2),
        "n": (int, 256),
        "eps": (float, 0.05),
        "margin": (float, 0.1),
        "n_eval": (int, 2000),
    },
    "model": {
        "hidden": (_ints, ()),
        "K": (float, 4.0),
        "width_const": (float, 1.0),
        "c_K": (float, 1.0),
        "c_WL": (float, 1.0),
    },
    "attack": {
        "method": (str, "cover"),
        "tau": (_opt_float, None),
        "tau_ratio": (_opt_float, None),
        "steps": (int, 20),
        "step_size": (_opt_float, None),
        "restarts": (int, 3),
        "resolution": (_opt_float, None),
        "seed": (int, 0),
    },
    "train": {
        "epochs": (int, 30),
        "batch": (int, 32),
        "lr": (float, 0.05),
        "lr_schedule": (str, "constant"),
        "clamp": (_opt_float, None),
        "seed": (int, 0),
        "project": (_bool, True),
    },
    "sweep": {
        "n_list": (_ints, (128, 256, 512)),
        "seeds": (_ints, (0,)),
        "eps_rule": (str, "fixed"),
        "eps_const": (float, 1.0),
        "use_schedule": (_bool, True),
        "max_runs": (int, 500),
    },
    "verify": {
        "suites": (_strs, ("all",)),
        "scale": (float, 1.0),
        "seed": (int, 0),
    },
}

TASKS = ("regression_quadratic", "regression_hinge", "classification_hinge")
EPS_RULES = ("fixed", "schedule_en")


class ConfigError(ValueError):
    pass


def defaults() -> SimpleNamespace:
    return SimpleNamespace(**{
        sec: SimpleNamespace(**{k: default for k, (_, default) in keys.items()}) for sec, keys in SCHEMA.items()
    })


def parse_config(text: str, source: str = "<string>") -> SimpleNamespace:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str  # keys are case sensitive (K, J)
    parser.read_string(text, source=source)
    cfg = defaults()
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            conv = SCHEMA[section][key][0]
            try:
                setattr(getattr(cfg, section), key, conv(raw))
            except ValueError as exc:
                raise ConfigError(f"{source}: bad value for {section}.{key}: {exc}") from exc
    validate(cfg)
    return cfg


def load_config(path=None) -> SimpleNamespace:
    if path is None:
        cfg = defaults()
        validate(cfg)
        return cfg
    return parse_config(Path(path).read_text(), str(path))


def validate(cfg: SimpleNamespace):
    if cfg.data.task not in TASKS:
        raise ConfigError(f"data.task must be one of {TASKS}")
    if cfg.sweep.eps_rule not in EPS_RULES:
        raise ConfigError(f"sweep.eps_rule must be one of {EPS_RULES}")
    ns = cfg.sweep.n_list
    if not ns or any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("sweep.n_list must be nonempty and strictly increasing")
    if not cfg.sweep.seeds:
        raise ConfigError("sweep.seeds must be nonempty")
    if not 0 <= cfg.data.eps < 0.5:
        raise ConfigError("data.eps must lie in [0, 0.5)")
    # construct once so the dataclass validators run
    attack_config(cfg, cfg.data.eps)
    train_config(cfg, K=max(cfg.model.K, 1.0), eps=cfg.data.eps)


def attack_config(cfg: SimpleNamespace, eps: float) -> AttackConfig:
    a = cfg.attack
    return AttackConfig(eps=eps, method=a.method, tau=a.tau, tau_ratio=a.tau_ratio, steps=a.steps,
                        step_size=a.step_size, restarts=a.restarts, resolution=a.resolution, seed=a.seed)


def train_config(cfg: SimpleNamespace, K: float, eps: float, seed: int | None = None) -> TrainConfig:
    t = cfg.train
    return TrainConfig(epochs=t.epochs, batch=t.batch, lr=t.lr, lr_schedule=t.lr_schedule,
                       attack=attack_config(cfg, eps), K=K, clamp=t.clamp,
                       seed=t.seed if seed is None else seed, project=t.project)


def dump(cfg: SimpleNamespace) -> dict:
    return {sec: dict(vars(getattr(cfg, sec))) for sec in SCHEMA}
