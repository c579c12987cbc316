"""Inner maximisation over the sup-norm ball ``{x' : ||x' - x||_inf <= eps}``.

Three solvers share one convention: the clean point is always a candidate,
ties go to the earliest candidate, and the clean point is listed last so it
only wins when it is strictly better. Each solver returns the witness
``x_adv`` along with the loss recomputed at the witness.

Models are duck-typed: anything with ``predict(X)`` and, for PGD,
``value_and_input_grad(X)`` works (networks, clamped networks, targets).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import AssumptionViolation, BudgetExceeded, UnsupportedLoss
from .losses import LossSpec, lip1, loss_deriv_u, loss_eval

METHODS = ("cover", "pgd", "brute")
_BOX_TOL = 1e-12
_CHUNK = 200_000  # candidate points evaluated per forward pass


@dataclass(frozen=True, eq=False)
class Cover:
    eps: float
    tau: float
    d: int
    offsets: np.ndarray

    @property
    def size(self) -> int:
        return int(self.offsets.shape[0])


def _cover_axis(eps: float, tau: float) -> np.ndarray:
    m = math.ceil(eps / tau - 1e-9)
    centers = -eps + tau * (2 * np.arange(m) + 1)
    return np.minimum(centers, eps - tau)


def _product(axis: np.ndarray, d: int) -> np.ndarray:
    mesh = np.meshgrid(*([axis] * d), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, d)


def cover_count(eps: float, tau: float, d: int) -> int:
    if eps == 0:
        return 1
    return math.ceil(eps / tau - 1e-9) ** d


def build_cover(eps: float, tau: float, d: int, budget: float = 1e6) -> Cover:
    """Product tau-net of the eps-ball: ``ceil(eps/tau)`` centres per axis."""
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if d < 1:
        raise ValueError("dimension must be positive")
    if eps == 0:
        return Cover(0.0, float(tau), d, np.zeros((1, d)))
    if not 0 < tau <= eps * (1 + 1e-12):
        raise ValueError(f"cover radius must lie in (0, eps], got tau={tau}, eps={eps}")
    count = cover_count(eps, tau, d)
    if count > budget:
        raise BudgetExceeded(f"cover needs M_tau={count} offsets, budget is {int(budget)}")
    return Cover(float(eps), float(tau), d, _product(_cover_axis(eps, tau), d))


def default_tau(eps: float, n: int, d: int, budget: float = 1e6) -> float:
    """``eps / max(n, 10)``, coarsened until the cover fits the budget."""
    per_axis = max(int(n), 10)
    cap = int(math.floor(budget ** (1.0 / d) + 1e-9))
    return eps / max(1, min(per_axis, cap))


@dataclass(frozen=True)
class AttackConfig:
    eps: float
    method: str = "cover"
    tau: float | None = None
    tau_ratio: float | None = None
    steps: int = 20
    step_size: float | None = None
    restarts: int = 3
    resolution: float | None = None
    seed: int = 0
    budget: float = 1e6

    def __post_init__(self):
        if self.eps < 0 or not np.isfinite(self.eps):
            raise ValueError("eps must be a finite nonnegative number")
        if self.method not in METHODS:
            raise ValueError(f"unknown attack method {self.method!r}; expected one of {METHODS}")
        if self.steps < 1 or self.restarts < 1:
            raise ValueError("steps and restarts must be at least 1")
        if self.step_size is not None and self.step_size <= 0:
            raise ValueError("step_size must be positive")
        if self.resolution is not None and self.resolution <= 0:
            raise ValueError("resolution must be positive")
        if self.tau is not None and self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.tau_ratio is not None and not 0 < self.tau_ratio <= 1:
            raise ValueError("tau_ratio must lie in (0, 1]")

    @property
    def pgd_step(self) -> float:
        return self.eps / 4 if self.step_size is None else self.step_size

    def cover_tau(self, n: int, d: int) -> float:
        if self.tau is not None:
            return min(self.tau, self.eps)
        if self.tau_ratio is not None:
            return self.eps * self.tau_ratio
        return default_tau(self.eps, n, d, self.budget)

    def brute_resolution(self) -> float:
        if self.resolution is not None:
            return self.resolution
        return self.eps / 50 if self.eps > 0 else 1.0

    def with_eps(self, eps: float) -> "AttackConfig":
        return AttackConfig(**{**self.to_dict(), "eps": eps})

    def to_dict(self) -> dict:
        return {
            "eps": self.eps, "method": self.method, "tau": self.tau, "tau_ratio": self.tau_ratio,
            "steps": self.steps, "step_size": self.step_size, "restarts": self.restarts,
            "resolution": self.resolution, "seed": self.seed, "budget": self.budget,
        }

    def describe(self) -> str:
        if self.method == "cover":
            detail = f"tau={self.tau:g}" if self.tau else (f"tau_ratio={self.tau_ratio:g}" if self.tau_ratio else "tau=auto")
        elif self.method == "pgd":
            detail = f"steps={self.steps},step={self.pgd_step:g},restarts={self.restarts}"
        else:
            detail = f"res={self.brute_resolution():g}"
        return f"{self.method}(eps={self.eps:g},{detail})"


@dataclass(eq=False)
class AttackResult:
    x_adv: np.ndarray
    value: np.ndarray
    clean: np.ndarray
    method: str
    meta: dict = field(default_factory=dict)

    def mean(self) -> float:
        return float(np.mean(self.value))


def _check_ball(X: np.ndarray, eps: float):
    lo = X.min() - eps
    hi = X.max() + eps
    if lo < -_BOX_TOL or hi > 1 + _BOX_TOL:
        raise AssumptionViolation(
            f"eps-ball leaves the unit cube (min x - eps = {lo:.3g}, max x + eps = {hi:.3g}); "
            "sample inputs from the eps-shrunk cube"
        )


def _prep(X, y):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} labels")
    return X, y


def _grid_max(score, X: np.ndarray, offsets: np.ndarray):
    """Per-row argmax of ``score(points, rows)`` over ``x + offsets`` and ``x`` itself."""
    n, d = X.shape
    cand = np.vstack([offsets, np.zeros((1, d))])
    m = cand.shape[0]
    rows_per_chunk = max(1, _CHUNK // m)
    x_adv = np.empty_like(X)
    for start in range(0, n, rows_per_chunk):
        rows = np.arange(start, min(n, start + rows_per_chunk))
        P = X[rows, None, :] + cand[None, :, :]
        vals = score(P.reshape(-1, d), np.repeat(rows, m)).reshape(rows.size, m)
        j = np.argmax(vals, axis=1)
        x_adv[rows] = P[np.arange(rows.size), j]
    return x_adv


def _loss_score(model, loss: LossSpec, y):
    return lambda P, rows: np.asarray(loss_eval(loss, model.predict(P), y[rows]))


def _finish(model, loss, X, y, x_adv, method, meta):
    value = np.asarray(loss_eval(loss, model.predict(x_adv), y), dtype=np.float64)
    clean = np.asarray(loss_eval(loss, model.predict(X), y), dtype=np.float64)
    return AttackResult(x_adv, value, clean, method, meta)


def cover_attack(model, loss: LossSpec, X, y, cover: Cover, check_domain: bool = True) -> AttackResult:
    X, y = _prep(X, y)
    if X.shape[1] != cover.d:
        raise ValueError(f"cover dimension {cover.d} does not match inputs ({X.shape[1]})")
    if check_domain:
        _check_ball(X, cover.eps)
    x_adv = _grid_max(_loss_score(model, loss, y), X, cover.offsets)
    return _finish(model, loss, X, y, x_adv, "cover", {"tau": cover.tau, "M": cover.size})


def brute_offsets(eps: float, resolution: float, d: int, budget: float = 1e7) -> np.ndarray:
    if d > 2:
        raise ValueError("brute-force attack is limited to d <= 2")
    if eps == 0:
        return np.zeros((1, d))
    k = math.floor(eps / resolution + 1e-9)
    if (2 * k + 1) ** d > budget:
        raise BudgetExceeded(f"brute grid has {(2 * k + 1) ** d} points, budget is {int(budget)}")
    return _product(resolution * np.arange(-k, k + 1), d)


def brute_attack(model, loss: LossSpec, X, y, eps: float, resolution: float,
                 budget: float = 1e7, check_domain: bool = True) -> AttackResult:
    """Exhaustive search over the lattice ``resolution * Z^d`` inside the ball."""
    X, y = _prep(X, y)
    offsets = brute_offsets(eps, resolution, X.shape[1], budget)
    if check_domain:
        _check_ball(X, eps)
    x_adv = _grid_max(_loss_score(model, loss, y), X, offsets)
    return _finish(model, loss, X, y, x_adv, "brute", {"resolution": resolution, "M": offsets.shape[0]})


def pgd_attack(model, loss: LossSpec, X, y, eps: float, steps: int = 20, step_size: float | None = None,
               restarts: int = 3, seed=0, indices=None, check_domain: bool = True) -> AttackResult:
    """Sign-gradient ascent from uniform random starts, keeping the best iterate.

    Sample ``i`` draws its starts from ``default_rng([*seed, indices[i]])`` so
    results do not depend on how a batch is split.
    """
    if loss.kind == "zero_one":
        raise UnsupportedLoss("PGD needs a loss with a derivative in the prediction")
    X, y = _prep(X, y)
    n, d = X.shape
    step = eps / 4 if step_size is None else step_size
    if eps == 0:
        return _finish(model, loss, X, y, X.copy(), "pgd", {"steps": 0})
    if check_domain:
        _check_ball(X, eps)
    key = list(seed) if isinstance(seed, (tuple, list)) else [int(seed)]
    idx = np.arange(n) if indices is None else np.asarray(indices)
    noise = np.empty((n, restarts, d))
    for i in range(n):
        noise[i] = np.random.default_rng([*key, int(idx[i])]).uniform(-eps, eps, size=(restarts, d))

    base = np.repeat(X, restarts, axis=0)
    yr = np.repeat(y, restarts)
    lo, hi = base - eps, base + eps
    Z = np.clip(base + noise.reshape(-1, d), lo, hi)
    best_val = np.full(n * restarts, -np.inf)
    best_pt = Z.copy()
    for t in range(steps + 1):
        out, gx = model.value_and_input_grad(Z)
        val = np.asarray(loss_eval(loss, out, yr))
        better = val > best_val
        best_val[better] = val[better]
        best_pt[better] = Z[better]
        if t == steps:
            break
        g = np.asarray(loss_deriv_u(loss, out, yr))[:, None] * gx
        Z = np.clip(Z + step * np.sign(g), lo, hi)

    best_val = best_val.reshape(n, restarts)
    best_pt = best_pt.reshape(n, restarts, d)
    clean = np.asarray(loss_eval(loss, model.predict(X), y))
    r = np.argmax(best_val, axis=1)
    x_adv = best_pt[np.arange(n), r]
    x_adv = np.where((clean > best_val[np.arange(n), r])[:, None], X, x_adv)
    return _finish(model, loss, X, y, x_adv, "pgd", {"steps": steps, "step_size": step, "restarts": restarts})


def run_attack(model, loss: LossSpec, X, y, cfg: AttackConfig, salt=(), indices=None) -> AttackResult:
    """Dispatch on ``cfg.method``; eps = 0 returns the clean points."""
    X, y = _prep(X, y)
    if cfg.eps == 0:
        return _finish(model, loss, X, y, X.copy(), cfg.method, {"eps": 0.0})
    if cfg.method == "cover":
        tau = cfg.cover_tau(X.shape[0], X.shape[1])
        return cover_attack(model, loss, X, y, build_cover(cfg.eps, tau, X.shape[1], cfg.budget))
    if cfg.method == "brute":
        return brute_attack(model, loss, X, y, cfg.eps, cfg.brute_resolution())
    return pgd_attack(model, loss, X, y, cfg.eps, cfg.steps, cfg.pgd_step, cfg.restarts,
                      seed=(cfg.seed, *salt), indices=indices)


class _Signed:
    def __init__(self, model, sign: float):
        self.model, self.sign = model, sign

    def predict(self, X):
        return self.sign * np.asarray(self.model.predict(X))

    def value_and_input_grad(self, X):
        out, g = self.model.value_and_input_grad(X)
        return self.sign * out, self.sign * g


def bracket_outputs(model, X, cfg: AttackConfig):
    """Attack-based estimates of ``(min f, max f)`` over each ball.

    The configured attack runs twice, once ascending ``f`` and once ascending ``-f``.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    hi = _extreme(_Signed(model, 1.0), X, cfg)
    lo = _extreme(_Signed(model, -1.0), X, cfg)
    return np.asarray(model.predict(lo)), np.asarray(model.predict(hi))


def _extreme(signed, X, cfg: AttackConfig):
    """Witness maximising ``signed.predict`` over each ball."""
    n, d = X.shape
    if cfg.eps == 0:
        return X.copy()
    _check_ball(X, cfg.eps)
    score = lambda P, rows: signed.predict(P)
    if cfg.method == "brute":
        return _grid_max(score, X, brute_offsets(cfg.eps, cfg.brute_resolution(), d))
    if cfg.method == "cover":
        cover = build_cover(cfg.eps, cfg.cover_tau(n, d), d, cfg.budget)
        return _grid_max(score, X, cover.offsets)
    best = X.copy()
    best_val = signed.predict(X)
    lo, hi = X - cfg.eps, X + cfg.eps
    noise = np.stack([np.random.default_rng([cfg.seed, i]).uniform(-cfg.eps, cfg.eps, size=(cfg.restarts, d))
                      for i in range(n)], axis=1)
    for r in range(cfg.restarts):
        Z = np.clip(X + noise[r], lo, hi)
        for t in range(cfg.steps + 1):
            out, g = signed.value_and_input_grad(Z)
            better = out > best_val
            best_val = np.where(better, out, best_val)
            best[better] = Z[better]
            if t < cfg.steps:
                Z = np.clip(Z + cfg.pgd_step * np.sign(g), lo, hi)
    return best


def certified_gap(loss: LossSpec, model, tau: float) -> float:
    """``Lip1(loss) * kappa(f) * tau``: how far a tau-cover can undershoot the ball sup."""
    if tau == 0:
        return 0.0
    return lip1(loss) * float(model.lipschitz_bound()) * tau


# single-sample wrappers


def _single(result: AttackResult) -> AttackResult:
    return AttackResult(result.x_adv[0], float(result.value[0]), float(result.clean[0]), result.method, result.meta)


def attack_cover(model, loss: LossSpec, x, y, cover: Cover) -> AttackResult:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return _single(cover_attack(model, loss, x, [y], cover))


def attack_pgd(model, loss: LossSpec, x, y, cfg: AttackConfig, rng=None) -> AttackResult:
    """PGD on one point; ``rng`` (a Generator) overrides the seed-derived starts."""
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    seed = cfg.seed if rng is None else int(rng.integers(2**63 - 1))
    return _single(pgd_attack(model, loss, x, [y], cfg.eps, cfg.steps, cfg.pgd_step, cfg.restarts, seed=seed))


def attack_brute(model, loss: LossSpec, x, y, eps: float, resolution: float) -> AttackResult:
    x = np.asarray(x, dtype=np.float64).reshape(1, -1)
    return _single(brute_attack(model, loss, x, [y], eps, resolution))


def dump_trace(result: AttackResult, X, path) -> None:
    """Write one JSON line per sample: ``{index, x, x_adv, clean, adv}``."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    with Path(path).open("w") as fh:
        for i in range(X.shape[0]):
            fh.write(json.dumps({
                "index": i,
                "x": X[i].tolist(),
                "x_adv": np.atleast_2d(result.x_adv)[i].tolist(),
                "clean": float(np.atleast_1d(result.clean)[i]),
                "adv": float(np.atleast_1d(result.value)[i]),
            }) + "\n")
