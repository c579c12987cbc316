"""Acceptance criteria 1-10; each test prints one PASS/FAIL line.

The lines are also collected and repeated in the pytest terminal summary.
"""

import math
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from advlab import bounds
from advlab.attacks import AttackConfig, build_cover, cover_attack
from advlab.config import load_config
from advlab.data import PosteriorSpec, make_holder_target, sample_classification, sample_regression
from advlab.losses import hinge, quadratic
from advlab.nn import Architecture, init_params, kappa
from advlab.sweep import run_sweep
from advlab.train import TrainConfig, adv_train
from advlab.verify import suite_calibration, suite_cover_gap, suite_equivalence, suite_kappa, suite_sandwich

ROOT = Path(__file__).resolve().parents[1]
RESULTS = []

# pinned tolerances
SLOPE_TOL = 1e-9
REGIME_REL_TOL = 0.15
B_CAL_TOL = 0.01
SWEEP_MAX_SLOPE = -0.1


def report(number, passed, detail):
    line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    RESULTS.append(line)
    print(line)
    assert passed, line


def timed(fn, *args, **kw):
    start = time.perf_counter()
    out = fn(*args, **kw)
    return out, time.perf_counter() - start


def test_01_kappa_certificate():
    # 1000 random nets (d <= 3, W <= 16, L <= 4), 100 pairs each
    res, secs = timed(suite_kappa, np.random.default_rng([1, 0]), 5.0)
    ok = res["failures"] == 0 and res["checks"] >= 1000 * 100 and secs < 30
    report(1, ok, f"{res['checks'] // 200} nets, {res['failures']} violations, {secs:.1f}s")


def test_02_sandwich():
    res, secs = timed(suite_sandwich, np.random.default_rng([2, 0]), 5.0)
    ok = res["failures"] == 0 and res["checks"] >= 500 and secs < 120
    report(2, ok, f"{res['checks']} (model, data, loss) cases, {res['failures']} violations, {secs:.1f}s")


def test_03_cover_gap():
    res, secs = timed(suite_cover_gap, np.random.default_rng([3, 0]), 5.0)
    ok = res["failures"] == 0 and res["checks"] >= 500
    report(3, ok, f"{res['checks']} instances, {res['failures']} violations, {res['detail']}, {secs:.1f}s")


def test_04_distributional_equivalence():
    res, secs = timed(suite_equivalence, np.random.default_rng([4, 0]), 1.0)
    ok = res["failures"] == 0 and res["checks"] >= 120 and secs < 60
    report(4, ok, f"100 relocation + 20 splitting instances, {res['failures']} mismatches, {secs:.1f}s")


def test_05_calibration():
    res, secs = timed(suite_calibration)
    ok = res["passed"] and secs < 10
    report(5, ok, f"{res['detail']} (target b = 1/3 +- {B_CAL_TOL}), {secs:.2f}s")


def test_06_rate_formulas():
    ex = bounds.rate_exponents(1, 1)
    K, WL = bounds.schedule(1024, 1, 1, "lipschitz")
    expected = tuple(Fraction(*p) for p in [(1, 5), (2, 7), (3, 5), (2, 5), (2, 7)])
    ok = ex.as_tuple() == expected and (K, WL) == (16, 8) and isinstance(K, Fraction) and isinstance(WL, Fraction)
    report(6, ok, f"r = {tuple(str(r) for r in ex.as_tuple())}, K = {K}, WL = {WL}")


def _log_ratio(power, correction=lambda n: 1.0):
    lo, hi = 10**2, 10**4
    v_lo = bounds.dudley(lambda u: u**-power, 1.0, lo)[0] / correction(lo)
    v_hi = bounds.dudley(lambda u: u**-power, 1.0, hi)[0] / correction(hi)
    return math.log(v_hi / v_lo) / math.log(hi / lo)


@pytest.mark.parametrize("case, d, alpha, target, correction", [
    ("gamma>1", 4, 1, -1 / 4, None),
    ("d=2alpha", 2, 1, -1 / 2, math.log),
    ("gamma<1", 1, 1, -1 / 2, None),
])
def test_07_dudley_regimes(case, d, alpha, target, correction):
    measured = _log_ratio(d / alpha, correction or (lambda n: 1.0))
    rel = abs(measured - target) / abs(target)
    report(7, rel <= REGIME_REL_TOL,
           f"[{case}] entropy u^-{d / alpha:g}: exponent {measured:.4f} vs {target:.4f} (rel err {rel:.1%})")


def test_08_scaling_diagnostic(tmp_path):
    cfg = load_config(ROOT / "configs" / "sweep_quadratic.ini")
    summary, secs = timed(run_sweep, cfg, tmp_path)
    slope = summary.get("slope", math.nan)
    ok = summary["ok_runs"] == summary["runs"] == 30 and slope <= SWEEP_MAX_SLOPE and secs < 900
    report(8, ok, f"fitted slope {slope:.3f} +- {summary.get('stderr', math.nan):.3f} "
                  f"(theory {-2 / 7:.3f}), {summary['ok_runs']}/{summary['runs']} runs, {secs:.0f}s")


def test_09_eps_zero_reduction():
    target = make_holder_target(2, 1.0, 6, 0)
    cases = [
        (sample_regression(target, 0.2, 96, 0.0, 1), quadratic(1.0), 1.0),
        (sample_classification(PosteriorSpec(0.1, 2, base=target), 96, 0.0, 2), hinge(), None),
    ]
    matches = 0
    for data, loss, clamp in cases:
        for method in ("cover", "pgd", "brute"):
            kw = dict(epochs=3, batch=16, lr=0.1, K=3.0, clamp=clamp, seed=5)
            _, h_adv = adv_train(data, Architecture(2, (8, 8)), TrainConfig(attack=AttackConfig(0.0, method), **kw), loss)
            _, h_clean = adv_train(data, Architecture(2, (8, 8)), TrainConfig(**kw), loss)
            matches += h_adv.trajectory_hash == h_clean.trajectory_hash
    report(9, matches == 6, f"{matches}/6 eps=0 trajectories hash-identical to clean training")


def test_10_rademacher():
    exact, _ = bounds.empirical_rademacher(np.full((1, 16), 0.37))
    # 50 width-2 one-hidden-layer nets with kappa <= 2, attacked by a tau-cover
    n, eps, tau, W, L = 200, 0.1, 0.05, 2, 1
    rng = np.random.default_rng(10)
    X = rng.uniform(eps, 1 - eps, size=(n, 1))
    y = rng.choice([-1.0, 1.0], size=n)
    cover = build_cover(eps, tau, 1)
    rows = []
    for j in range(50):
        p = init_params(Architecture(1, (W,)), np.random.default_rng([10, j]))
        p = p.replace_final(p.weights[-1] * (2.0 / max(kappa(p), 1e-12)))
        rows.append(cover_attack(p, hinge(), X, y, cover).value)
    V = np.array(rows)
    estimate, se = bounds.empirical_rademacher(V, draws=2000, seed=10)
    B = float(V.max())
    dudley_bound, _ = bounds.dudley(lambda u: bounds.covering_nn(u, W, L, n), B, n)
    ok = exact == 0.0 and estimate <= dudley_bound
    report(10, ok, f"constant class {exact}; tau-cover class MC {estimate:.4f} +- {se:.4f} "
                   f"<= Dudley bound {dudley_bound:.4f}")

