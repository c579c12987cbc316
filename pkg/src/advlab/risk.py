"""Empirical risk functionals and the certified bracket around the adversarial risk.

For a loss with finite ``Lip1`` and a model with certificate ``kappa``:

    natural  <=  adv_lower  <=  sup-risk  <=  natural + Lip1 * kappa * eps = adv_upper

``adv_lower`` comes from an attack (every attack returns a feasible point) and
``adv_upper`` from the Lipschitz certificate.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .attacks import AttackConfig, bracket_outputs, run_attack
from .errors import AssumptionViolation, InvariantViolation, UnsupportedLoss
from .losses import LossSpec, lip1, lip_joint, loss_eval

TOL = 1e-9


@dataclass(frozen=True)
class RiskReport:
    natural: float
    adv_lower: float
    adv_upper: float
    n_eval: int
    eps: float
    kappa: float
    attack: str
    loss: str

    def check(self):
        if self.natural > self.adv_lower + TOL or self.adv_lower > self.adv_upper + TOL:
            raise InvariantViolation(
                f"sandwich ordering broken: natural={self.natural!r}, adv_lower={self.adv_lower!r}, "
                f"adv_upper={self.adv_upper!r}"
            )
        return self

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    CSV_COLUMNS = ("natural", "adv_lower", "adv_upper", "n_eval", "eps", "kappa", "attack", "loss")

    def csv_row(self) -> list:
        return [getattr(self, c) for c in self.CSV_COLUMNS]


def _nonempty(data):
    if data.n == 0:
        raise ValueError("risk of an empty dataset is undefined")


def natural_risk(model, loss: LossSpec, data) -> float:
    _nonempty(data)
    return float(np.mean(loss_eval(loss, model.predict(data.X), data.Y)))


def adversarial_risk_lower(model, loss: LossSpec, data, attack: AttackConfig) -> float:
    _nonempty(data)
    return run_attack(model, loss, data.X, data.Y, attack).mean()


def _check_quadratic_range(model, loss, X, x_adv):
    if loss.kind != "quadratic":
        return
    worst = max(np.abs(model.predict(X)).max(), np.abs(model.predict(x_adv)).max())
    if worst > loss.bound + 1e-12:
        raise AssumptionViolation(
            f"predictions reach {worst:.4g} but the quadratic Lipschitz constant assumes |u| <= {loss.bound:g}"
        )


def sandwich(model, loss: LossSpec, data, eps: float, attack: AttackConfig | None = None) -> RiskReport:
    """Natural risk, attack lower estimate, and certified upper bound on one dataset."""
    _nonempty(data)
    if loss.kind == "zero_one":
        raise UnsupportedLoss("the 0-1 loss has no finite Lipschitz constant for the upper bound")
    attack = AttackConfig(eps) if attack is None else attack.with_eps(eps)
    res = run_attack(model, loss, data.X, data.Y, attack)
    _check_quadratic_range(model, loss, data.X, res.x_adv)
    k = float(model.lipschitz_bound())
    natural = float(np.mean(res.clean))
    report = RiskReport(
        natural=natural,
        adv_lower=res.mean(),
        adv_upper=natural + lip1(loss) * k * eps,
        n_eval=data.n,
        eps=float(eps),
        kappa=k,
        attack=attack.describe(),
        loss=loss.describe(),
    )
    return report.check()


def excess_adversarial(model, loss: LossSpec, data_eval, attack: AttackConfig, reference: float) -> float:
    """Attack-estimated adversarial risk minus a supplied reference value (may be slightly negative)."""
    if not math.isfinite(reference):
        raise ValueError("reference risk must be finite")
    return adversarial_risk_lower(model, loss, data_eval, attack) - reference


def l2_sq_distance(model, target, mc_n: int, eps: float, seed: int):
    """Monte Carlo ``E|f(X) - f0(X)|^2`` with X uniform on the eps-shrunk cube; ``(value, stderr)``."""
    if mc_n < 1:
        raise ValueError("mc_n must be positive")
    rng = np.random.default_rng(seed)
    X = rng.uniform(eps, 1.0 - eps, size=(mc_n, target.d))
    sq = (np.asarray(model.predict(X)) - np.asarray(target.predict(X))) ** 2
    stderr = float(sq.std(ddof=1) / math.sqrt(mc_n)) if mc_n > 1 else 0.0
    return float(sq.mean()), stderr


def zero_one_adversarial(model, data, attack: AttackConfig) -> float:
    """Lower estimate of the adversarial 0-1 risk from bracketed ball extremes of ``f``."""
    _nonempty(data)
    lo, hi = bracket_outputs(model, data.X, attack)
    err = np.where(data.Y > 0, lo < 0.0, hi >= 0.0)
    return float(np.mean(err))


def w1_worst_case_upper(report: RiskReport, loss: LossSpec, K: float, eps: float) -> float:
    """Certified upper bound plus the ``2 * Lip(l) * (K + 1) * eps`` transport term."""
    return report.adv_upper + 2.0 * lip_joint(loss) * (K + 1.0) * eps
