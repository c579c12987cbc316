import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from advlab.errors import StructuralError
from advlab.nn import (
    Architecture, NetworkParams, NormBudget, backward, empirical_lipschitz, forward, forward_backward,
    init_params, kappa, layer_norms, linear_params, load_params, project_kappa, random_params, save_params,
)


def reference_forward(params, x):
    """Loop-based evaluation used as an independent oracle."""
    h = list(np.asarray(x, dtype=float))
    for A, b in zip(params.weights[:-1], params.biases):
        h = [max(0.0, sum(A[i, j] * h[j] for j in range(A.shape[1])) + b[i]) for i in range(A.shape[0])]
    A = params.weights[-1]
    return sum(A[0, j] * h[j] for j in range(A.shape[1]))


def reference_kappa(params):
    value = 1.0
    for A, b in zip(params.weights[:-1], params.biases):
        best = 0.0
        for i in range(A.shape[0]):
            best = max(best, sum(abs(v) for v in A[i]) + abs(b[i]))
        value *= max(best, 1.0)
    return value * sum(abs(v) for v in params.weights[-1][0])


archs = st.builds(
    Architecture,
    st.integers(1, 3),
    st.lists(st.integers(1, 6), min_size=0, max_size=3).map(tuple),
)


def test_identity_network():
    assert forward(linear_params([1.0]), [0.7]) == pytest.approx(0.7)


def test_relu_kills_negative_preactivation():
    p = NetworkParams((np.array([[1.0]]), np.array([[1.0]])), (np.array([-0.5]),))
    assert forward(p, [0.2]) == 0.0
    assert forward(p, [0.9]) == pytest.approx(0.4)


def test_forward_matches_loop_oracle(rng):
    for _ in range(20):
        arch = Architecture(int(rng.integers(1, 4)), tuple(rng.integers(1, 7, size=int(rng.integers(0, 4)))))
        p = random_params(arch, rng)
        X = rng.uniform(size=(5, arch.input_dim))
        batch = forward(p, X)
        for x, v in zip(X, batch):
            assert abs(v - reference_forward(p, x)) <= 1e-12


def test_dimension_mismatch_raises():
    p = linear_params([1.0, 2.0])
    with pytest.raises(StructuralError):
        forward(p, [0.1, 0.2, 0.3])
    with pytest.raises(StructuralError):
        NetworkParams((np.ones((2, 1)), np.ones((1, 3))), (np.zeros(2),))
    with pytest.raises(StructuralError):
        NetworkParams((np.ones((2, 1)),), ())


def test_kappa_examples():
    assert kappa(NetworkParams((np.array([[2.0, -1.0]]),), ())) == 3.0
    p = NetworkParams((np.array([[0.5], [-0.25]]), np.array([[0.5, 0.0]])), (np.array([0.1, 0.2]),))
    assert kappa(p) == 0.5


def test_kappa_matches_row_oracle(rng):
    for _ in range(20):
        p = random_params(Architecture(3, (4, 5)), rng, scale=2.0)
        assert kappa(p) == pytest.approx(reference_kappa(p), rel=1e-12)
        assert len(layer_norms(p)) == 3


def test_projection_examples(rng):
    p = NetworkParams((np.array([[0.5]]),), ())
    assert project_kappa(p, 1.0) is p
    q = project_kappa(NetworkParams((np.array([[4.0]]),), ()), 2.0)
    np.testing.assert_array_equal(q.weights[0], [[2.0]])

    big = random_params(Architecture(2, (6, 6)), rng, scale=3.0)
    big = big.replace_final(big.weights[-1] * 10.0 / kappa(big))
    assert kappa(big) == pytest.approx(10.0)
    proj = project_kappa(big, NormBudget(3.0))
    assert abs(kappa(proj) - 3.0) <= 1e-12
    for a, b in zip(big.weights[:-1], proj.weights[:-1]):
        np.testing.assert_array_equal(a, b)


def test_norm_budget_rejects_small_K():
    with pytest.raises(ValueError):
        NormBudget(0.5)


def test_empirical_lipschitz_examples():
    zero = NetworkParams((np.ones((3, 1)), np.zeros((1, 3))), (np.zeros(3),))
    pairs = np.array([[[0.1], [0.4]], [[0.9], [0.2]]])
    assert empirical_lipschitz(zero, pairs) == 0.0
    assert empirical_lipschitz(linear_params([-2.5]), pairs) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        empirical_lipschitz(linear_params([1.0]), np.array([[[0.3], [0.3]]]))


@settings(max_examples=60, deadline=None)
@given(arch=archs, seed=st.integers(0, 2**32 - 1), scale=st.floats(0.2, 3.0))
def test_kappa_dominates_observed_slopes(arch, seed, scale):
    rng = np.random.default_rng(seed)
    p = random_params(arch, rng, scale)
    X1 = rng.uniform(size=(50, arch.input_dim))
    X2 = rng.uniform(size=(50, arch.input_dim))
    lhs = np.abs(forward(p, X1) - forward(p, X2))
    assert np.all(lhs <= kappa(p) * np.abs(X1 - X2).max(axis=1) + 1e-9)


@settings(max_examples=40, deadline=None)
@given(arch=archs, seed=st.integers(0, 2**32 - 1))
def test_input_gradient_matches_finite_differences(arch, seed):
    rng = np.random.default_rng(seed)
    p = random_params(arch, rng)
    x = rng.uniform(size=arch.input_dim)
    g, _ = backward(p, x)
    h = 1e-6
    for j in range(arch.input_dim):
        e = np.zeros_like(x)
        e[j] = h
        fd = (forward(p, x + e) - forward(p, x - e)) / (2 * h)
        assert abs(fd - g[j]) <= 1e-5 * max(1.0, abs(fd))
    assert np.abs(g).sum() <= kappa(p) + 1e-9


def test_parameter_gradients_match_finite_differences(rng):
    p = random_params(Architecture(2, (4, 3)), rng)
    X = rng.uniform(size=(6, 2))
    up = rng.normal(size=6)
    _, _, grads = forward_backward(p, X, up)
    h = 1e-6

    def obj(q):
        return float(up @ forward(q, X))

    for li, A in enumerate(p.weights):
        for i in range(A.shape[0]):
            for j in range(A.shape[1]):
                Ap, Am = A.copy(), A.copy()
                Ap[i, j] += h
                Am[i, j] -= h
                fd = (obj(p.replace_layer(li, Ap)) - obj(p.replace_layer(li, Am))) / (2 * h)
                assert grads.weights[li][i, j] == pytest.approx(fd, abs=1e-6)
    for li, b in enumerate(p.biases):
        for i in range(b.shape[0]):
            bp, bm = list(p.biases), list(p.biases)
            bp[li] = b.copy()
            bp[li][i] += h
            bm[li] = b.copy()
            bm[li][i] -= h
            fd = (obj(NetworkParams(p.weights, tuple(bp))) - obj(NetworkParams(p.weights, tuple(bm)))) / (2 * h)
            assert grads.biases[li][i] == pytest.approx(fd, abs=1e-6)


def test_init_is_deterministic_and_feasible():
    arch = Architecture(2, (8, 8))
    a = init_params(arch, np.random.default_rng(3), K=1.5)
    b = init_params(arch, np.random.default_rng(3), K=1.5)
    np.testing.assert_array_equal(a.flat(), b.flat())
    assert kappa(a) <= 1.5 * (1 + 1e-12)


def test_params_roundtrip(tmp_path, rng):
    p = random_params(Architecture(3, (5, 2)), rng)
    path = tmp_path / "net.json"
    save_params(p, path, extra={"note": "x"})
    q = load_params(path)
    np.testing.assert_array_equal(p.flat(), q.flat())
    assert json.loads(path.read_text())["note"] == "x"


def test_params_are_immutable(rng):
    p = random_params(Architecture(1, (2,)), rng)
    with pytest.raises(ValueError):
        p.weights[0][0, 0] = 1.0
