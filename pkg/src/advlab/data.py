"""Synthetic smooth targets, samplers, and the on-disk dataset format.

Targets are random cosine series

    f0(x) = s * sum_k c_k cos(pi <m_k, x> + phi_k),   |c_k| = ||m_k||^(-alpha-1),

with the scale ``s`` chosen so that ``sup |f0| <= 0.8`` and the sup-norm
Lipschitz constant is at most 1. Inputs are drawn uniformly from the
eps-shrunk cube so every eps-ball stays inside ``[0, 1]^d``.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .errors import AssumptionViolation

SUP_CAP = 0.8
_MARGIN = 1.01  # slack on grid-measured maxima
_BOX_TOL = 1e-12


def _frequencies(d: int, J: int) -> np.ndarray:
    """First ``J`` nonzero integer vectors up to sign, ordered by Euclidean norm."""
    R = 1
    while True:
        vecs = []
        for m in itertools.product(range(-R, R + 1), repeat=d):
            nz = [v for v in m if v != 0]
            if nz and nz[0] > 0:
                vecs.append(m)
        vecs.sort(key=lambda m: (sum(v * v for v in m), tuple(-v for v in m)))
        if len(vecs) >= J and math.sqrt(sum(v * v for v in vecs[J - 1])) <= R:
            return np.array(vecs[:J], dtype=np.float64)
        R *= 2


def _grid(d: int, points: int) -> np.ndarray:
    per_axis = max(2, math.ceil(points ** (1.0 / d)))
    axis = np.linspace(0.0, 1.0, per_axis)
    return np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)


@dataclass(frozen=True, eq=False)
class HolderTarget:
    d: int
    alpha: float
    freqs: np.ndarray
    coefs: np.ndarray
    phases: np.ndarray
    scale: float
    seed: int | None = None
    sup_bound: float = SUP_CAP
    lip: float = 1.0

    @property
    def J(self) -> int:
        return int(self.freqs.shape[0])

    def _raw(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            X = X.reshape(-1, self.d)
        return X, np.pi * X @ self.freqs.T + self.phases

    def predict(self, X) -> np.ndarray:
        _, arg = self._raw(X)
        return self.scale * (np.cos(arg) @ self.coefs)

    def value_and_input_grad(self, X):
        _, arg = self._raw(X)
        out = self.scale * (np.cos(arg) @ self.coefs)
        grad = -self.scale * np.pi * (np.sin(arg) * self.coefs) @ self.freqs
        return out, grad

    def __call__(self, X):
        return self.predict(X)

    def lipschitz_bound(self) -> float:
        return self.lip

    def to_dict(self) -> dict:
        return {
            "kind": "cosine_series", "d": self.d, "alpha": self.alpha, "J": self.J, "seed": self.seed,
            "certified_order": 1, "sup_bound": self.sup_bound, "lip": self.lip,
            "scale": self.scale, "freqs": self.freqs.tolist(), "coefs": self.coefs.tolist(),
            "phases": self.phases.tolist(),
        }


def _certify(d, freqs, coefs, phases, grid_points):
    """Grid (d <= 2) or analytic (d >= 3) bounds on sup |g| and sup ||grad g||_1."""
    if d <= 2:
        X = _grid(d, grid_points)
        arg = np.pi * X @ freqs.T + phases
        sup = float(np.abs(np.cos(arg) @ coefs).max()) * _MARGIN
        grad = np.pi * (np.sin(arg) * coefs) @ freqs
        lip = float(np.abs(grad).sum(axis=1).max()) * _MARGIN
        return sup, lip
    sup = float(np.abs(coefs).sum())
    lip = float(np.pi * (np.abs(coefs) * np.abs(freqs).sum(axis=1)).sum())
    return sup, lip


def make_holder_target(d: int, alpha: float, J: int, seed: int, phases=None, signs=None,
                       grid_points: int = 40_000) -> HolderTarget:
    """Random cosine series rescaled to ``sup|f0| <= 0.8`` and ``Lip(f0) <= 1``.

    Signs and phases depend only on ``(seed, J)``, so two targets that differ
    only in ``alpha`` share them.
    """
    if d < 1 or J < 1:
        raise ValueError("d and J must be positive")
    if alpha < 1:
        raise ValueError("only alpha >= 1 is supported")
    rng = np.random.default_rng(seed)
    freqs = _frequencies(d, J)
    drawn_signs = rng.choice([-1.0, 1.0], size=J)
    drawn_phases = rng.uniform(0.0, 2 * np.pi, size=J)
    signs = drawn_signs if signs is None else np.asarray(signs, dtype=np.float64)
    phases = drawn_phases if phases is None else np.asarray(phases, dtype=np.float64)
    coefs = signs * np.linalg.norm(freqs, axis=1) ** (-alpha - 1.0)
    sup, lip = _certify(d, freqs, coefs, phases, grid_points)
    scale = min(SUP_CAP / sup, 1.0 / lip)
    return HolderTarget(d, float(alpha), freqs, coefs, phases, float(scale), seed,
                        sup_bound=min(SUP_CAP, scale * sup), lip=min(1.0, scale * lip))


class ConstantTarget:
    """``x -> value``; handy as a reference or degenerate target in tests."""

    def __init__(self, d: int, value: float = 0.0):
        self.d, self.value = d, float(value)
        self.sup_bound = abs(self.value)

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.d)
        return np.full(X.shape[0], self.value)

    def value_and_input_grad(self, X):
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.d)
        return np.full(X.shape[0], self.value), np.zeros_like(X)

    def lipschitz_bound(self) -> float:
        return 0.0

    def to_dict(self) -> dict:
        return {"kind": "constant", "d": self.d, "value": self.value}


# -- datasets ----------------------------------------------------------------


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    Y: np.ndarray
    eps: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self.X.ndim == 1:
            self.X = self.X.reshape(-1, 1)
        self.Y = np.asarray(self.Y, dtype=np.float64).reshape(-1)
        self.validate()

    @property
    def n(self) -> int:
        return int(self.X.shape[0])

    @property
    def d(self) -> int:
        return int(self.X.shape[1])

    def validate(self):
        if self.X.shape[0] != self.Y.shape[0]:
            raise ValueError(f"{self.X.shape[0]} inputs but {self.Y.shape[0]} labels")
        if not 0 <= self.eps < 0.5:
            raise ValueError("eps must lie in [0, 0.5)")
        if self.n and (self.X.min() - self.eps < -_BOX_TOL or self.X.max() + self.eps > 1 + _BOX_TOL):
            raise AssumptionViolation("some eps-ball around an input leaves [0, 1]^d")
        if self.n and np.abs(self.Y).max() > 1.0:
            raise ValueError("labels must lie in [-1, 1]")

    def subset(self, idx) -> "Dataset":
        return Dataset(self.X[idx], self.Y[idx], self.eps, dict(self.meta))

    def sidecar(self) -> dict:
        return {"n": self.n, "d": self.d, "eps": self.eps, **self.meta}

    def save(self, path) -> None:
        """CSV with columns ``x_1..x_d, y`` plus a ``.json`` metadata sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x_{j + 1}" for j in range(self.d)] + ["y"])
            for x, y in zip(self.X, self.Y):
                w.writerow([repr(float(v)) for v in x] + [repr(float(y))])
        path.with_suffix(".json").write_text(json.dumps(self.sidecar(), indent=1, sort_keys=True))


def load_dataset(path) -> Dataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = len(header) - 1
    if header != [f"x_{j + 1}" for j in range(d)] + ["y"]:
        raise ValueError(f"unexpected dataset header {header}")
    arr = np.array(body, dtype=np.float64).reshape(-1, d + 1)
    if meta.get("d", d) != d or meta.get("n", arr.shape[0]) != arr.shape[0]:
        raise ValueError("dataset sidecar disagrees with the CSV contents")
    eps = meta.pop("eps")
    meta.pop("n", None)
    meta.pop("d", None)
    return Dataset(arr[:, :d], arr[:, d], eps, meta)


def uniform_inputs(rng: np.random.Generator, n: int, d: int, eps: float) -> np.ndarray:
    if not 0 <= eps < 0.5:
        raise ValueError("eps must lie in [0, 0.5)")
    return rng.uniform(eps, 1.0 - eps, size=(n, d))


def sample_regression(target, sigma: float, n: int, eps: float, seed: int) -> Dataset:
    """``Y = f0(X) + noise`` with noise uniform on ``[-sigma, sigma]`` and X uniform on the shrunk cube."""
    if sigma < 0:
        raise ValueError("noise half-width must be nonnegative")
    sup = getattr(target, "sup_bound", SUP_CAP)
    if sup + sigma > 1.0 + 1e-12:
        raise AssumptionViolation(f"sup|f0| + sigma = {sup + sigma:.3g} exceeds 1; labels would leave [-1, 1]")
    rng = np.random.default_rng(seed)
    X = uniform_inputs(rng, n, target.d, eps)
    noise = rng.uniform(-sigma, sigma, size=n) if sigma > 0 else np.zeros(n)
    Y = target.predict(X) + noise
    meta = {"task": "regression", "sigma": sigma, "seed": seed, "alpha": getattr(target, "alpha", None),
            "noise": "uniform", "target": target.to_dict() if hasattr(target, "to_dict") else None}
    return Dataset(X, Y, eps, meta)


@dataclass(frozen=True, eq=False)
class PosteriorSpec:
    """Posterior ``eta(x) = P(Y = 1 | X = x)`` kept away from 1/2 by ``margin``.

    With a smooth base ``g`` the posterior is
    ``1/2 + sgn(g) * (c + (1/2 - c) * (1 + tanh|g|) / 2)`` with ``sgn(0) = +1``,
    so ``|eta - 1/2| >= (1/2 + c) / 2 > c``. ``eta_fn`` overrides the construction.
    """

    margin: float
    d: int
    base: object = None
    eta_fn: Callable | None = None

    def __post_init__(self):
        if not 0 <= self.margin < 0.5:
            raise ValueError("margin must lie in [0, 0.5)")
        if self.base is None and self.eta_fn is None:
            raise ValueError("need a base function or an explicit eta_fn")

    def eta(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64).reshape(-1, self.d)
        if self.eta_fn is not None:
            return np.broadcast_to(np.asarray(self.eta_fn(X), dtype=np.float64), (X.shape[0],)).copy()
        g = np.asarray(self.base.predict(X))
        sgn = np.where(g >= 0.0, 1.0, -1.0)
        c = self.margin
        return 0.5 + sgn * (c + (0.5 - c) * (1.0 + np.tanh(np.abs(g))) / 2.0)


def sample_classification(post: PosteriorSpec, n: int, eps: float, seed: int) -> Dataset:
    rng = np.random.default_rng(seed)
    X = uniform_inputs(rng, n, post.d, eps)
    u = rng.uniform(size=n)
    Y = np.where(u < post.eta(X), 1.0, -1.0)
    base = post.base.to_dict() if hasattr(post.base, "to_dict") else None
    return Dataset(X, Y, eps, {"task": "classification", "margin": post.margin, "seed": seed, "base": base})


def bayes_risk(post: PosteriorSpec, mc_n: int, seed: int, eps: float = 0.0):
    """Monte Carlo ``E[min(eta, 1 - eta)]`` under uniform X; returns ``(value, stderr)``."""
    if mc_n < 1:
        raise ValueError("mc_n must be positive")
    rng = np.random.default_rng(seed)
    eta = post.eta(uniform_inputs(rng, mc_n, post.d, eps))
    vals = np.minimum(eta, 1.0 - eta)
    stderr = float(vals.std(ddof=1) / math.sqrt(mc_n)) if mc_n > 1 else 0.0
    return float(vals.mean()), stderr
