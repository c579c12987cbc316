"""Invariant suites behind ``advlab verify``.

Each suite returns a dict with ``passed``, ``checks`` (instances examined),
``failures`` and a short ``detail``. ``scale`` multiplies instance counts.
"""

from __future__ import annotations

import json
import time
from fractions import Fraction

import numpy as np

from . import bounds
from .attacks import AttackConfig, brute_attack, build_cover, certified_gap, cover_attack
from .data import make_holder_target, sample_regression
from .losses import CalibrationGrid, check_assumption_41, check_assumption_42, hinge, quadratic
from .nn import Architecture, forward, forward_backward, kappa, random_params
from .risk import sandwich
from .train import TrainConfig, adv_train
from .transport import dp_sup_risk, random_instance, split_sup_risk, verify_equivalence

FAULTS = ("skip_projection",)


def random_arch(rng, d_max=3, w_max=16, l_max=4, l_min=1) -> Architecture:
    d = int(rng.integers(1, d_max + 1))
    L = int(rng.integers(l_min, l_max + 1))
    return Architecture(d, tuple(int(w) for w in rng.integers(1, w_max + 1, size=L)))


def _result(checks, failures, detail="", **extra):
    return {"passed": failures == 0, "checks": checks, "failures": failures, "detail": detail, **extra}


def suite_kappa(rng, scale=1.0):
    """Lipschitz certificate and gradient dual-norm bound on random networks."""
    nets = max(1, int(200 * scale))
    fails = worst = 0
    for _ in range(nets):
        arch = random_arch(rng)
        p = random_params(arch, rng, scale=float(rng.uniform(0.5, 3.0)))
        k = kappa(p)
        x1 = rng.uniform(size=(100, arch.input_dim))
        x2 = rng.uniform(size=(100, arch.input_dim))
        lhs = np.abs(forward(p, x1) - forward(p, x2))
        rhs = k * np.abs(x1 - x2).max(axis=1) + 1e-9
        _, g, _ = forward_backward(p, x1)
        fails += int((lhs > rhs).sum()) + int((np.abs(g).sum(axis=1) > k + 1e-9).sum())
        worst = max(worst, float((lhs / np.maximum(rhs, 1e-300)).max()))
    return _result(nets * 200, fails, f"max observed slope/kappa ratio {worst:.3f}")


def suite_gradients(rng, scale=1.0, h=1e-5):
    """Central finite differences against reverse-mode gradients."""
    nets = max(1, int(20 * scale))
    fails = checks = 0
    for _ in range(nets):
        arch = random_arch(rng, w_max=6, l_max=3)
        p = random_params(arch, rng)
        x = rng.uniform(size=arch.input_dim)
        _, g, grads = forward_backward(p, x[None, :])
        for j in range(arch.input_dim):
            e = np.zeros_like(x)
            e[j] = h
            fd = (forward(p, x + e) - forward(p, x - e)) / (2 * h)
            checks += 1
            fails += int(abs(fd - g[0, j]) > 1e-4 * max(1.0, abs(fd)))
        for li, A in enumerate(p.weights):
            i, j = int(rng.integers(A.shape[0])), int(rng.integers(A.shape[1]))
            vals = []
            for sgn in (1.0, -1.0):
                A2 = np.array(A)
                A2[i, j] += sgn * h
                vals.append(forward(p.replace_layer(li, A2), x))
            fd = (vals[0] - vals[1]) / (2 * h)
            checks += 1
            fails += int(abs(fd - grads.weights[li][i, j]) > 1e-4 * max(1.0, abs(fd)))
    return _result(checks, fails, "tolerance 1e-4 relative")


def suite_feasibility(rng, scale=1.0, faults=()):
    """Training keeps kappa within the budget after every epoch."""
    target = make_holder_target(1, 1.0, 4, 0)
    data = sample_regression(target, 0.1, 128, 0.05, 0)
    K = 1.0
    cfg = TrainConfig(epochs=max(2, int(5 * scale)), batch=16, lr=0.5, K=K,
                      attack=AttackConfig(0.05, "cover", tau_ratio=0.5), seed=0,
                      project="skip_projection" not in faults)
    _, hist = adv_train(data, Architecture(1, (16, 16)), cfg, quadratic(2.0))
    ks = hist.kappas()
    fails = int((ks > K * (1 + 1e-9)).sum())
    return _result(len(ks), fails, f"max kappa {ks.max():.4f} vs K={K}")


def suite_sandwich(rng, scale=1.0):
    """natural <= attack estimate <= natural + Lip1 * kappa * eps on random models."""
    trials = max(1, int(100 * scale))
    fails = 0
    for t in range(trials):
        arch = random_arch(rng, d_max=2, w_max=8, l_max=3)
        p = random_params(arch, rng)
        eps = float(rng.uniform(0.0, 0.2))
        target = make_holder_target(arch.input_dim, 1.0, 4, t)
        data = sample_regression(target, 0.1, 20, eps, t)
        k = kappa(p)
        bound = float(np.abs(forward(p, data.X)).max()) + k * eps + 1e-9
        for loss in (hinge(), quadratic(max(1.0, bound))):
            method = ("cover", "pgd")[t % 2]
            try:
                sandwich(p, loss, data, eps, AttackConfig(eps, method, tau_ratio=0.25))
            except AssertionError:
                fails += 1
    return _result(2 * trials, fails)


def suite_cover_gap(rng, scale=1.0):
    """brute(tau/20) - cover(tau) <= Lip1 * kappa * (tau + tau/20)."""
    trials = max(1, int(100 * scale))
    fails = 0
    worst = 0.0
    for t in range(trials):
        d = 1 + t % 2
        p = random_params(Architecture(d, (int(rng.integers(2, 8)),)), rng)
        eps = float(rng.uniform(0.02, 0.2))
        tau = eps / int(rng.integers(1, 5))
        x = rng.uniform(eps, 1 - eps, size=(1, d))
        y = [float(rng.choice([-1.0, 1.0]))]
        loss = hinge()
        cov = cover_attack(p, loss, x, y, build_cover(eps, tau, d)).value[0]
        bru = brute_attack(p, loss, x, y, eps, tau / 20).value[0]
        slack = certified_gap(loss, p, tau) + certified_gap(loss, p, tau / 20) + 1e-9
        worst = max(worst, (bru - cov) / slack)
        fails += int(bru - cov > slack)
    return _result(trials, fails, f"max gap / certificate {worst:.3f}")


def suite_calibration(rng=None, scale=1.0):
    grid = CalibrationGrid.regular()
    holds41, a = check_assumption_41(hinge(), grid)
    holds42, b = check_assumption_42(hinge(), 0.1, grid)
    ok = holds41 and a >= 1 - 1e-9 and holds42 and abs(b - 1 / 3) <= 0.01
    return _result(2, 0 if ok else 1, f"best_a={a:.6f}, best_b={b:.6f}")


def suite_equivalence(rng, scale=1.0):
    trials = max(1, int(100 * scale))
    fails = 0
    for _ in range(trials):
        inst = random_instance(rng, max_atoms=5, N=50, d=1)
        p = random_params(Architecture(1, (int(rng.integers(1, 5)),)), rng, scale=2.0)
        equal, _, _ = verify_equivalence(inst, p, hinge())
        fails += int(not equal)
    splits = max(1, int(20 * scale))
    for _ in range(splits):
        inst = random_instance(rng, max_atoms=2, N=50, d=1)
        while len(inst.P.atoms) != 2:
            inst = random_instance(rng, max_atoms=2, N=50, d=1)
        p = random_params(Architecture(1, (3,)), rng, scale=2.0)
        relocated = float(dp_sup_risk(p, hinge(), inst))
        fails += int(split_sup_risk(p, hinge(), inst) > relocated + 1e-12)
    return _result(trials + splits, fails)


def suite_bounds(rng=None, scale=1.0):
    fails = 0
    ex = bounds.rate_exponents(1, 1)
    fails += ex.as_tuple() != (Fraction(1, 5), Fraction(2, 7), Fraction(3, 5), Fraction(2, 5), Fraction(2, 7))
    fails += bounds.schedule(1024, 1, 1, "lipschitz") != (16, 8)
    for d in range(1, 7):
        for a in (Fraction(1), Fraction(3, 2), Fraction(2), Fraction(5, 2), Fraction(3)):
            e = bounds.rate_exponents(d, a)
            fails += e.r3 + e.r4 != 1
    return _result(32, int(fails))


SUITES = {
    "kappa": suite_kappa,
    "gradients": suite_gradients,
    "feasibility": suite_feasibility,
    "sandwich": suite_sandwich,
    "cover_gap": suite_cover_gap,
    "calibration": suite_calibration,
    "equivalence": suite_equivalence,
    "bounds": suite_bounds,
}


def run_verify(suites=("all",), seed: int = 0, scale: float = 1.0, faults=()):
    """Run the selected suites; returns ``(exit_status, report)``."""
    unknown = set(faults) - set(FAULTS)
    if unknown:
        raise ValueError(f"unknown fault(s) {sorted(unknown)}; available: {FAULTS}")
    names = list(SUITES) if "all" in suites else list(suites)
    bad = [s for s in names if s not in SUITES]
    if bad:
        raise ValueError(f"unknown suite(s) {bad}; available: {list(SUITES)}")
    report = {}
    for i, name in enumerate(names):
        rng = np.random.default_rng([seed, i])
        start = time.perf_counter()
        fn = SUITES[name]
        res = fn(rng, scale, faults) if name == "feasibility" else fn(rng, scale)
        res["seconds"] = round(time.perf_counter() - start, 3)
        report[name] = res
    status = 0 if all(r["passed"] for r in report.values()) else 1
    return status, report


def format_report(report: dict) -> str:
    lines = []
    for name, r in report.items():
        mark = "PASS" if r["passed"] else "FAIL"
        lines.append(f"{mark}  {name:<12} checks={r['checks']:<6} failures={r['failures']:<4} {r['detail']}")
    return "\n".join(lines)


def report_json(report: dict) -> str:
    return json.dumps(report, indent=1, sort_keys=True)
