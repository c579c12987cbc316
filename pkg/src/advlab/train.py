"""Adversarial empirical risk minimisation over norm-constrained networks.

Each step attacks the batch, takes the parameter gradient of the attacked loss
with the witnesses held fixed, applies plain SGD, and projects back onto
``kappa <= K``. With ``eps = 0`` the attack returns the clean inputs, so the
trajectory is exactly that of clean training.
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attacks import AttackConfig, run_attack
from .losses import LossSpec, loss_deriv_u, loss_eval
from .nn import Architecture, NetworkParams, forward, forward_backward, init_params, kappa, project_kappa, save_params

SCHEDULES = ("constant", "inv_sqrt")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 20
    batch: int = 32
    lr: float = 0.05
    lr_schedule: str = "constant"
    attack: AttackConfig | None = None
    K: float = 4.0
    clamp: float | None = None
    seed: int = 0
    project: bool = True  # switching this off is only meant for fault-injection runs

    def __post_init__(self):
        if self.epochs < 1 or self.batch < 1:
            raise ValueError("epochs and batch must be at least 1")
        if self.lr < 0:
            raise ValueError("learning rate must be nonnegative")
        if self.lr_schedule not in SCHEDULES:
            raise ValueError(f"unknown lr schedule {self.lr_schedule!r}")
        if self.K < 1:
            raise ValueError("norm budget K must be >= 1")
        if self.clamp is not None and self.clamp <= 0:
            raise ValueError("output clamp must be positive")

    def lr_at(self, t: int) -> float:
        return self.lr if self.lr_schedule == "constant" else self.lr / math.sqrt(t)

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs, "batch": self.batch, "lr": self.lr, "lr_schedule": self.lr_schedule,
            "attack": None if self.attack is None else self.attack.to_dict(), "K": self.K,
            "clamp": self.clamp, "seed": self.seed, "project": self.project,
        }


class ClampedNetwork:
    """``x -> min(M, max(-M, f(x)))``; the clamp's derivative is 0 outside ``[-M, M]``."""

    def __init__(self, params: NetworkParams, M: float):
        if M <= 0:
            raise ValueError("clamp level must be positive")
        self.params, self.M = params, float(M)

    @property
    def input_dim(self) -> int:
        return self.params.input_dim

    def predict(self, X):
        return np.clip(forward(self.params, np.atleast_2d(X)), -self.M, self.M)

    def value_and_input_grad(self, X):
        out, gx, _ = forward_backward(self.params, np.atleast_2d(X))
        inside = np.abs(out) <= self.M
        return np.clip(out, -self.M, self.M), gx * inside[:, None]

    def lipschitz_bound(self) -> float:
        return kappa(self.params)


def clamp_output(params: NetworkParams, M: float) -> ClampedNetwork:
    return ClampedNetwork(params, M)


def as_model(params: NetworkParams, clamp: float | None):
    return params if clamp is None else ClampedNetwork(params, clamp)


def _sub(params: NetworkParams, grads: NetworkParams, lr: float) -> NetworkParams:
    return NetworkParams(
        tuple(A - lr * G for A, G in zip(params.weights, grads.weights)),
        tuple(b - lr * g for b, g in zip(params.biases, grads.biases)),
    )


def train_step(params: NetworkParams, X, y, loss: LossSpec, attack: AttackConfig | None, lr: float, K: float,
               clamp: float | None = None, salt=(), indices=None, project: bool = True) -> NetworkParams:
    """One SGD step on the mean attacked loss of the batch, then projection to ``kappa <= K``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] == 0:
        raise ValueError("empty batch")
    model = as_model(params, clamp)
    x_adv = X if attack is None else run_attack(model, loss, X, y, attack, salt=salt, indices=indices).x_adv
    raw = forward(params, x_adv)
    upstream = np.asarray(loss_deriv_u(loss, np.clip(raw, -clamp, clamp) if clamp else raw, y))
    if clamp is not None:
        upstream = upstream * (np.abs(raw) <= clamp)
    _, _, grads = forward_backward(params, x_adv, upstream / X.shape[0])
    new = _sub(params, grads, lr)
    return project_kappa(new, K) if project else new


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    trajectory_hash: str = ""

    COLUMNS = ("epoch", "adv_risk_est", "nat_risk", "kappa", "seconds")

    def kappas(self) -> np.ndarray:
        return np.array([r["kappa"] for r in self.records])

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.records])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.COLUMNS)
            for r in self.records:
                w.writerow([r[c] for c in self.COLUMNS])


def _epoch_risks(params, loss, data, attack, clamp):
    model = as_model(params, clamp)
    nat = float(np.mean(loss_eval(loss, model.predict(data.X), data.Y)))
    if attack is None or attack.eps == 0:
        return nat, nat
    adv = run_attack(model, loss, data.X, data.Y, attack, salt=(0,)).mean()
    return adv, nat


def adv_train(data, arch: Architecture, cfg: TrainConfig, loss: LossSpec, eval_each_epoch: bool = True):
    """Shuffled mini-batch adversarial training; returns ``(params, TrainHistory)``."""
    if arch.input_dim != data.d:
        raise ValueError(f"architecture expects d={arch.input_dim}, data has d={data.d}")
    params = init_params(arch, np.random.default_rng([cfg.seed, 0]), cfg.K)
    shuffle = np.random.default_rng([cfg.seed, 1])
    digest = hashlib.sha256(params.flat().tobytes())
    history = TrainHistory()
    t = 0
    start = time.perf_counter()
    for epoch in range(1, cfg.epochs + 1):
        order = shuffle.permutation(data.n)
        for b, lo in enumerate(range(0, data.n, cfg.batch)):
            idx = order[lo:lo + cfg.batch]
            t += 1
            params = train_step(params, data.X[idx], data.Y[idx], loss, cfg.attack, cfg.lr_at(t), cfg.K,
                                clamp=cfg.clamp, salt=(epoch, b), indices=idx, project=cfg.project)
            digest.update(params.flat().tobytes())
        if eval_each_epoch or epoch == cfg.epochs:
            adv, nat = _epoch_risks(params, loss, data, cfg.attack, cfg.clamp)
        else:
            adv = nat = float("nan")
        history.records.append({
            "epoch": epoch, "adv_risk_est": adv, "nat_risk": nat, "kappa": kappa(params),
            "seconds": time.perf_counter() - start,
        })
    history.trajectory_hash = digest.hexdigest()
    return params, history


def save_checkpoint(params: NetworkParams, cfg: TrainConfig, path) -> None:
    save_params(params, path, extra={"train_config": cfg.to_dict()})
