"""Loss functions, their Lipschitz constants, and margin-loss calibration checks.

Margin losses are written as ``l(u, y) = phi(u * y)`` for labels in {-1, 1}.
The calibration quantities follow the usual pointwise notation:

    C_phi(eta, f)   = phi(f) eta + phi(-f) (1 - eta)
    C*_phi(eta)     = inf_a phi(a) eta + phi(-a) (1 - eta)
    C_class(eta, f) = 1{f < 0} eta + 1{f >= 0} (1 - eta)
    C*_class(eta)   = min(eta, 1 - eta)
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import UnsupportedLoss

KINDS = ("hinge", "rho_margin", "quadratic", "zero_one")
MARGIN_KINDS = ("hinge", "rho_margin")


@dataclass(frozen=True)
class LossSpec:
    kind: str
    rho: float = 1.0
    bound: float = 1.0  # |u| <= bound, used for the quadratic Lipschitz constant

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if self.bound <= 0:
            raise ValueError("prediction bound must be positive")

    @property
    def is_margin(self) -> bool:
        return self.kind in MARGIN_KINDS

    def describe(self) -> str:
        if self.kind == "rho_margin":
            return f"rho_margin(rho={self.rho:g})"
        if self.kind == "quadratic":
            return f"quadratic(M_u={self.bound:g})"
        return self.kind


def hinge() -> LossSpec:
    return LossSpec("hinge")


def rho_margin(rho: float) -> LossSpec:
    return LossSpec("rho_margin", rho=rho)


def quadratic(bound: float = 1.0) -> LossSpec:
    return LossSpec("quadratic", bound=bound)


def zero_one() -> LossSpec:
    return LossSpec("zero_one")


def phi(spec: LossSpec, t):
    """Margin function of a margin loss."""
    t = np.asarray(t, dtype=np.float64)
    if spec.kind == "hinge":
        return np.maximum(0.0, 1.0 - t)
    if spec.kind == "rho_margin":
        return np.minimum(1.0, np.maximum(0.0, 1.0 - t / spec.rho))
    raise UnsupportedLoss(f"{spec.kind} is not a margin loss")


def _out(value, *inputs):
    if all(np.ndim(a) == 0 for a in inputs):
        return float(value)
    return value


def loss_eval(spec: LossSpec, u, y):
    u_arr = np.asarray(u, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64)
    if spec.kind == "quadratic":
        value = (u_arr - y_arr) ** 2
    elif spec.kind == "zero_one":
        sign = np.where(u_arr >= 0.0, 1.0, -1.0)
        value = (sign * y_arr <= 0.0).astype(np.float64)
    else:
        value = phi(spec, u_arr * y_arr)
    return _out(value, u, y)


def loss_deriv_u(spec: LossSpec, u, y):
    """Derivative in the prediction; kinks take the value 0."""
    u_arr = np.asarray(u, dtype=np.float64)
    y_arr = np.asarray(y, dtype=np.float64)
    if spec.kind == "zero_one":
        raise UnsupportedLoss("the 0-1 loss has no useful derivative")
    if spec.kind == "quadratic":
        value = 2.0 * (u_arr - y_arr)
    elif spec.kind == "hinge":
        value = np.where(u_arr * y_arr < 1.0, -y_arr, 0.0)
    else:
        t = u_arr * y_arr
        value = np.where((t > 0.0) & (t < spec.rho), -y_arr / spec.rho, 0.0)
    return _out(value * 1.0, u, y)


def lip1(spec: LossSpec) -> float:
    """Lipschitz constant of ``u -> l(u, y)``, uniform over labels in [-1, 1]."""
    if spec.kind == "hinge":
        return 1.0
    if spec.kind == "rho_margin":
        return 1.0 / spec.rho
    if spec.kind == "quadratic":
        return 2.0 * (spec.bound + 1.0)
    raise UnsupportedLoss("the 0-1 loss is not Lipschitz in its prediction")


def lip_joint(spec: LossSpec) -> float:
    """Default joint Lipschitz constant in (u, y) used by the W1 worst-case bound."""
    if spec.kind == "zero_one":
        raise UnsupportedLoss("the 0-1 loss is not Lipschitz")
    return lip1(spec)


# -- calibration ----------------------------------------------------------------


def _grid(lo: float, hi: float, step: float, extra=()) -> np.ndarray:
    k = int(round((hi - lo) / step))
    pts = np.round(lo + step * np.arange(k + 1), 12)
    pts = np.concatenate([pts, [p for p in extra if lo <= p <= hi]])
    return np.unique(pts)


@dataclass(frozen=True)
class CalibrationGrid:
    eta: np.ndarray
    f: np.ndarray
    alpha: np.ndarray = field(default=None)

    def __post_init__(self):
        eta = np.unique(np.asarray(self.eta, dtype=np.float64))
        f = np.unique(np.asarray(self.f, dtype=np.float64))
        alpha = f if self.alpha is None else self.alpha
        alpha = np.unique(np.concatenate([np.asarray(alpha, dtype=np.float64), [-1.0, 0.0, 1.0]]))
        if eta.size == 0 or f.size == 0:
            raise ValueError("calibration grids must be nonempty")
        if eta.min() < 0.0 or eta.max() > 1.0:
            raise ValueError("eta grid must lie in [0, 1]")
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "alpha", alpha)

    @classmethod
    def regular(cls, f_bound: float = 2.0, eta_step: float = 0.01, f_step: float = 0.1,
                alpha_bound: float | None = None, alpha_step: float | None = None) -> "CalibrationGrid":
        alpha_bound = max(f_bound, 2.0) if alpha_bound is None else alpha_bound
        alpha_step = f_step if alpha_step is None else alpha_step
        return cls(
            eta=_grid(0.0, 1.0, eta_step),
            f=_grid(-f_bound, f_bound, f_step),
            alpha=_grid(-alpha_bound, alpha_bound, alpha_step, extra=(-1.0, 0.0, 1.0)),
        )

    def describe(self) -> dict:
        return {
            "eta": [float(self.eta.min()), float(self.eta.max()), int(self.eta.size)],
            "f": [float(self.f.min()), float(self.f.max()), int(self.f.size)],
            "alpha": [float(self.alpha.min()), float(self.alpha.max()), int(self.alpha.size)],
        }


def _require_margin(spec: LossSpec):
    if not spec.is_margin:
        raise UnsupportedLoss(f"calibration quantities need a margin loss, got {spec.kind}")


def c_phi(spec: LossSpec, eta, f):
    _require_margin(spec)
    eta = np.asarray(eta, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    return phi(spec, f) * eta + phi(spec, -f) * (1.0 - eta)


def cphi_star(spec: LossSpec, eta, alpha_grid=None):
    """Grid minimum of ``phi(a) eta + phi(-a)(1 - eta)``; the grid always contains -1, 0, 1."""
    _require_margin(spec)
    if alpha_grid is None:
        alpha_grid = CalibrationGrid.regular().alpha
    alpha = np.unique(np.concatenate([np.asarray(alpha_grid, dtype=np.float64), [-1.0, 0.0, 1.0]]))
    eta_arr = np.asarray(eta, dtype=np.float64)
    vals = phi(spec, alpha)[None, :] * eta_arr.reshape(-1, 1) + phi(spec, -alpha)[None, :] * (1.0 - eta_arr.reshape(-1, 1))
    best = vals.min(axis=1)
    return float(best[0]) if eta_arr.ndim == 0 else best


def c_class(eta, f):
    eta = np.asarray(eta, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    return np.where(f < 0.0, eta, 1.0 - eta)


def c_class_star(eta):
    eta = np.asarray(eta, dtype=np.float64)
    return np.minimum(eta, 1.0 - eta)


_POS_TOL = 1e-9
_GAP_TOL = 1e-12


def check_assumption_41(spec: LossSpec, grid: CalibrationGrid):
    """Grid check of ``C_phi - C*_phi >= a (C_class - C*_class)``.

    Returns ``(holds, best_a)`` where ``best_a`` is the smallest ratio over grid
    points with a positive classification gap (``inf`` when there are none).
    """
    _require_margin(spec)
    eta = grid.eta[:, None]
    f = grid.f[None, :]
    star = cphi_star(spec, grid.eta, grid.alpha)[:, None]
    gap_phi = c_phi(spec, eta, f) - star
    gap_class = c_class(eta, f) - c_class_star(eta)
    positive = bool((gap_phi >= -_POS_TOL).all())
    mask = gap_class > _GAP_TOL
    best_a = float((gap_phi[mask] / gap_class[mask]).min()) if mask.any() else math.inf
    return positive and best_a > 0.0, best_a


def margin_mask(eta, c: float):
    """Grid points with ``|eta - 1/2| >= c``.

    The constraint set is open (strict inequality) but the ratio is continuous in
    eta, so its infimum is attained on the closure; the 1e-12 slack absorbs
    decimal grid rounding (e.g. 0.4 - 0.5).
    """
    return np.abs(np.asarray(eta) - 0.5) >= c - 1e-12


def check_assumption_42(spec: LossSpec, c: float, grid: CalibrationGrid):
    """Grid check of ``phi(0) - C*_phi >= b (1 - C*_class)`` away from eta = 1/2."""
    _require_margin(spec)
    if not 0.0 < c < 0.5:
        raise ValueError("margin c must lie in (0, 0.5)")
    eta = grid.eta[margin_mask(grid.eta, c)]
    if eta.size == 0:
        return True, math.inf
    num = float(phi(spec, 0.0)) - cphi_star(spec, eta, grid.alpha)
    den = 1.0 - c_class_star(eta)
    best_b = float((num / den).min())
    return best_b > 0.0, best_b


def check_adversarial_calibration(spec: LossSpec, a: float, c: float, grid: CalibrationGrid):
    """Pointwise adversarial calibration over interval extremes.

    For every ``eta`` with ``|eta - 1/2| > c`` and every pair ``lo <= hi`` of
    grid values (the inf and sup of f over a perturbation ball), checks

        phi(lo) eta + phi(-hi)(1 - eta) - C*_phi  >=  a * (1{lo<0} eta + 1{hi>=0}(1-eta) - C*_class).

    Returns ``(holds, worst_slack, counts)`` with per sign-case counts
    ``{"nonneg", "neg", "straddle"}``.
    """
    _require_margin(spec)
    eta = grid.eta[margin_mask(grid.eta, c)]
    f = grid.f
    lo, hi = np.meshgrid(f, f, indexing="ij")
    keep = lo <= hi
    lo, hi = lo[keep], hi[keep]
    if eta.size == 0:
        return True, math.inf, {"nonneg": 0, "neg": 0, "straddle": 0}
    E = eta[:, None]
    star = cphi_star(spec, eta, grid.alpha)[:, None]
    gap_phi = phi(spec, lo)[None, :] * E + phi(spec, -hi)[None, :] * (1.0 - E) - star
    gap_class = np.where(lo < 0.0, 1.0, 0.0)[None, :] * E + np.where(hi >= 0.0, 1.0, 0.0)[None, :] * (1.0 - E) - c_class_star(E)
    slack = gap_phi - a * gap_class
    counts = {
        "nonneg": int(((lo >= 0) & (hi >= 0)).sum()) * eta.size,
        "neg": int(((lo < 0) & (hi < 0)).sum()) * eta.size,
        "straddle": int(((lo < 0) & (hi >= 0)).sum()) * eta.size,
    }
    worst = float(slack.min())
    return worst >= -_POS_TOL, worst, counts


def calibration_report(spec: LossSpec, grid: CalibrationGrid, c: float) -> dict:
    holds_41, best_a = check_assumption_41(spec, grid)
    holds_42, best_b = check_assumption_42(spec, c, grid)

    def num(v):
        return "inf" if math.isinf(v) else v

    return {
        "loss": spec.describe(),
        "grid_spec": grid.describe(),
        "holds_41": holds_41,
        "best_a": num(best_a),
        "holds_42": holds_42,
        "c": c,
        "best_b": num(best_b),
    }
