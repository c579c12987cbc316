import json

import numpy as np
import pytest

from advlab.attacks import AttackConfig, certified_gap
from advlab.data import ConstantTarget, Dataset, make_holder_target, sample_regression
from advlab.errors import AssumptionViolation, InvariantViolation, UnsupportedLoss
from advlab.losses import hinge, quadratic, zero_one
from advlab.nn import Architecture, NetworkParams, linear_params, random_params
from advlab.risk import (
    RiskReport, adversarial_risk_lower, excess_adversarial, l2_sq_distance, natural_risk, sandwich,
    w1_worst_case_upper, zero_one_adversarial,
)


def zero_net(d):
    return NetworkParams((np.zeros((1, d)),), ())


def offset_net(d, c):
    return NetworkParams((np.zeros((1, d)), np.array([[c]])), (np.ones(1),))


@pytest.fixture
def data():
    return sample_regression(make_holder_target(1, 1.0, 4, 0), 0.1, 200, 0.1, seed=0)


def test_natural_risk_examples(data):
    assert natural_risk(zero_net(1), hinge(), Dataset(data.X, np.sign(data.Y) + (data.Y == 0), 0.1)) == 1.0
    t = make_holder_target(1, 1.0, 4, 0)
    clean = sample_regression(t, 0.0, 50, 0.1, seed=1)
    assert natural_risk(t, quadratic(), clean) == 0.0
    one = data.subset([3])
    assert natural_risk(linear_params([0.5]), quadratic(), one) == pytest.approx((0.5 * one.X[0, 0] - one.Y[0]) ** 2)
    with pytest.raises(ValueError):
        natural_risk(zero_net(1), hinge(), data.subset([]))


def test_adversarial_lower_reductions(data):
    f = linear_params([0.7])
    assert adversarial_risk_lower(f, hinge(), data, AttackConfig(0.0)) == natural_risk(f, hinge(), data)
    const = offset_net(1, 0.2)
    assert adversarial_risk_lower(const, quadratic(), data, AttackConfig(0.1, "pgd")) == pytest.approx(
        natural_risk(const, quadratic(), data))


def test_cover_mean_close_to_brute(data):
    f = random_params(Architecture(1, (6,)), np.random.default_rng(0))
    cov = adversarial_risk_lower(f, hinge(), data, AttackConfig(0.1, "cover", tau=0.01))
    bru = adversarial_risk_lower(f, hinge(), data, AttackConfig(0.1, "brute", resolution=0.0005))
    assert abs(bru - cov) <= certified_gap(hinge(), f, 0.01) + certified_gap(hinge(), f, 0.0005) + 1e-9


def test_sandwich_examples(data):
    rep = sandwich(offset_net(1, 0.3), hinge(), data, 0.1)
    assert rep.natural == rep.adv_lower
    rep = sandwich(zero_net(1), hinge(), data, 0.1)
    assert rep.kappa == 0 and rep.adv_upper == rep.natural
    rep = sandwich(linear_params([0.9]), hinge(), data, 0.0)
    assert rep.natural == rep.adv_lower == rep.adv_upper
    with pytest.raises(UnsupportedLoss):
        sandwich(zero_net(1), zero_one(), data, 0.1)


def test_sandwich_quadratic_range_check(data):
    with pytest.raises(AssumptionViolation):
        sandwich(offset_net(1, 3.0), quadratic(1.0), data, 0.1)


def test_sandwich_ordering_on_random_models():
    rng = np.random.default_rng(1)
    for t in range(100):
        d = 1 + t % 2
        p = random_params(Architecture(d, (int(rng.integers(1, 8)),)), rng)
        eps = float(rng.uniform(0, 0.2))
        data = sample_regression(make_holder_target(d, 1.0, 3, t), 0.1, 15, eps, t)
        bound = float(np.abs(p.predict(data.X)).max()) + p.lipschitz_bound() * eps + 1e-9
        for loss in (hinge(), quadratic(max(1.0, bound))):
            rep = sandwich(p, loss, data, eps, AttackConfig(eps, ("cover", "pgd")[t % 2], tau_ratio=0.5))
            assert rep.natural <= rep.adv_lower + 1e-9 <= rep.adv_upper + 2e-9


def test_report_serialisation_and_check():
    rep = RiskReport(0.1, 0.2, 0.3, 5, 0.1, 1.0, "cover", "hinge")
    assert json.loads(rep.to_json())["adv_upper"] == 0.3
    assert rep.csv_row()[:3] == [0.1, 0.2, 0.3]
    with pytest.raises(InvariantViolation):
        RiskReport(0.3, 0.2, 0.4, 5, 0.1, 1.0, "cover", "hinge").check()


def test_excess_examples(data):
    f = linear_params([0.4])
    cfg = AttackConfig(0.1, "cover", tau_ratio=0.5)
    ref = adversarial_risk_lower(f, hinge(), data, cfg)
    assert excess_adversarial(f, hinge(), data, cfg, ref) == pytest.approx(0.0, abs=1e-9)
    assert excess_adversarial(f, hinge(), data, cfg, 0.0) == ref
    t = make_holder_target(1, 1.0, 4, 0)
    clean = sample_regression(t, 0.0, 50, 0.0, seed=1)
    assert excess_adversarial(t, quadratic(), clean, AttackConfig(0.0), 0.0) == 0.0
    with pytest.raises(ValueError):
        excess_adversarial(f, hinge(), data, cfg, float("nan"))


def test_l2_distance_examples():
    t = make_holder_target(2, 1.0, 4, 0)
    assert l2_sq_distance(t, t, 100, 0.1, 0)[0] == 0.0

    class Shifted:
        def predict(self, X):
            return t.predict(X) + 0.1

    value, se = l2_sq_distance(Shifted(), t, 1000, 0.1, 0)
    assert value == pytest.approx(0.01, abs=3 * se + 1e-15)
    _, se1 = l2_sq_distance(offset_net(2, 0.0), t, 4000, 0.1, 0)
    _, se2 = l2_sq_distance(offset_net(2, 0.0), t, 8000, 0.1, 0)
    assert se1 / se2 == pytest.approx(np.sqrt(2), rel=0.15)


def affine_net(w, b):
    """``x -> w x + b`` on [0, 1] via a ReLU identity unit and a constant unit."""
    return NetworkParams((np.array([[1.0], [0.0]]), np.array([[w, b]])), (np.array([0.0, 1.0]),))


def test_zero_one_adversarial_examples():
    X = np.linspace(0.2, 0.8, 7)[:, None]
    brute = AttackConfig(0.1, "brute", resolution=0.001)
    assert zero_one_adversarial(affine_net(1.0, 0.5), Dataset(X, np.ones(7), 0.1), brute) == 0.0
    wide = Dataset(np.array([[0.5], [0.4]]), np.array([1.0, -1.0]), 0.4)
    f = affine_net(1.0, -0.45)
    assert zero_one_adversarial(f, wide, AttackConfig(0.0)) == 0.0
    assert zero_one_adversarial(f, wide, brute.with_eps(0.4)) == 1.0
    labels = np.where(X[:, 0] > 0.5, 1.0, -1.0)
    clean_err = np.mean(np.where(f.predict(X) >= 0, 1.0, -1.0) != labels)
    assert zero_one_adversarial(f, Dataset(X, labels, 0.0), AttackConfig(0.0)) == pytest.approx(clean_err)


def test_w1_upper_examples():
    rep = RiskReport(0.1, 0.2, 0.3, 5, 0.01, 1.0, "cover", "hinge")
    assert w1_worst_case_upper(rep, hinge(), 16, 0.0) == 0.3
    assert w1_worst_case_upper(rep, hinge(), 16, 0.01) == pytest.approx(0.64)
    assert w1_worst_case_upper(rep, hinge(), 32, 0.01) >= w1_worst_case_upper(rep, hinge(), 16, 0.01)
    with pytest.raises(UnsupportedLoss):
        w1_worst_case_upper(rep, zero_one(), 16, 0.01)


def test_constant_target_is_a_model():
    const = ConstantTarget(2, 0.5)
    data = sample_regression(const, 0.1, 10, 0.1, 0)
    rep = sandwich(const, quadratic(), data, 0.1)
    assert rep.natural == rep.adv_lower == rep.adv_upper
