"""Dense ReLU feedforward networks with a weight-norm Lipschitz certificate.

A network with depth L is the composition

    g(x) = A_L relu(A_{L-1} ... relu(A_0 x + b_0) ... + b_{L-1})

with a bias-free final layer and scalar output. ``kappa`` is the product
``||A_L|| * prod_i max(||(A_i, b_i)||, 1)`` where ``||.||`` is the operator
norm induced by the sup-norm (the maximum absolute row sum). It upper bounds
the sup-norm Lipschitz constant of ``g``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import StructuralError


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden_widths: tuple[int, ...]
    output_dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "hidden_widths", tuple(int(w) for w in self.hidden_widths))
        if self.input_dim < 1:
            raise StructuralError(f"input_dim must be positive, got {self.input_dim}")
        if any(w < 1 for w in self.hidden_widths):
            raise StructuralError(f"hidden widths must be positive, got {self.hidden_widths}")
        if self.output_dim != 1:
            raise StructuralError("only scalar-output networks are supported")

    @property
    def depth(self) -> int:
        return len(self.hidden_widths)

    @property
    def width(self) -> int:
        return max(self.hidden_widths, default=1)

    @property
    def layer_dims(self) -> tuple[int, ...]:
        return (self.input_dim, *self.hidden_widths, self.output_dim)

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim,
            "hidden_widths": list(self.hidden_widths),
            "output_dim": self.output_dim,
        }


@dataclass(frozen=True)
class NormBudget:
    K: float

    def __post_init__(self):
        if not np.isfinite(self.K) or self.K < 1:
            raise ValueError(f"norm budget K must be a finite value >= 1, got {self.K}")


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=np.float64, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class NetworkParams:
    """Weights ``A_0..A_L`` and biases ``b_0..b_{L-1}``; immutable once built."""

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]

    def __post_init__(self):
        weights = tuple(_frozen(A) for A in self.weights)
        biases = tuple(_frozen(b).reshape(-1) for b in self.biases)
        if len(weights) != len(biases) + 1:
            raise StructuralError(
                f"need exactly one more weight matrix than bias vectors, "
                f"got {len(weights)} and {len(biases)}"
            )
        for i, A in enumerate(weights):
            if A.ndim != 2:
                raise StructuralError(f"weight {i} is not a matrix (shape {A.shape})")
            if i > 0 and A.shape[1] != weights[i - 1].shape[0]:
                raise StructuralError(
                    f"weight {i} expects input dim {A.shape[1]}, previous layer emits {weights[i - 1].shape[0]}"
                )
        for i, b in enumerate(biases):
            if b.shape[0] != weights[i].shape[0]:
                raise StructuralError(f"bias {i} has length {b.shape[0]}, expected {weights[i].shape[0]}")
        if weights[-1].shape[0] != 1:
            raise StructuralError("final layer must have a single output row")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "biases", biases)

    @property
    def arch(self) -> Architecture:
        return Architecture(self.weights[0].shape[1], tuple(A.shape[0] for A in self.weights[:-1]))

    @property
    def input_dim(self) -> int:
        return self.weights[0].shape[1]

    @property
    def depth(self) -> int:
        return len(self.biases)

    # Model protocol shared with targets and clamped wrappers.
    def predict(self, X) -> np.ndarray:
        return forward(self, np.atleast_2d(X))

    def value_and_input_grad(self, X):
        out, gx, _ = forward_backward(self, np.atleast_2d(X))
        return out, gx

    def lipschitz_bound(self) -> float:
        return kappa(self)

    def replace_final(self, A_L) -> "NetworkParams":
        return NetworkParams(self.weights[:-1] + (np.asarray(A_L, dtype=np.float64),), self.biases)

    def replace_layer(self, i: int, A) -> "NetworkParams":
        weights = list(self.weights)
        weights[i] = np.asarray(A, dtype=np.float64)
        return NetworkParams(tuple(weights), self.biases)

    def flat(self) -> np.ndarray:
        return np.concatenate([A.ravel() for A in self.weights] + [b.ravel() for b in self.biases])


def _as_batch(params: NetworkParams, x):
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim <= 1
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1)
    elif X.ndim != 2:
        raise StructuralError(f"inputs must be a point or a 2-d batch, got shape {X.shape}")
    if X.shape[1] != params.input_dim:
        raise StructuralError(f"input dimension {X.shape[1]} does not match network input {params.input_dim}")
    return X, single


def forward(params: NetworkParams, x):
    """Evaluate the network at a point (returns float) or a batch of rows (returns array)."""
    X, single = _as_batch(params, x)
    h = X
    for A, b in zip(params.weights[:-1], params.biases):
        h = np.maximum(h @ A.T + b, 0.0)
    out = (h @ params.weights[-1].T)[:, 0]
    return float(out[0]) if single else out


def forward_backward(params: NetworkParams, X, upstream=None):
    """Outputs, input gradients and upstream-weighted parameter gradients for a batch.

    Parameter gradients are summed over the batch with weights ``upstream``
    (default all ones). ReLU has derivative 0 at 0.
    """
    X, _ = _as_batch(params, X)
    n = X.shape[0]
    g = np.ones(n) if upstream is None else np.asarray(upstream, dtype=np.float64).reshape(n)

    acts = [X]
    pre = []
    h = X
    for A, b in zip(params.weights[:-1], params.biases):
        z = h @ A.T + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    A_L = params.weights[-1]
    out = (h @ A_L.T)[:, 0]

    gW = [None] * len(params.weights)
    gb = [None] * len(params.biases)
    gW[-1] = g[None, :] @ acts[-1]
    delta_param = g[:, None] * A_L
    delta_input = np.broadcast_to(A_L, (n, A_L.shape[1]))
    for i in reversed(range(len(params.biases))):
        mask = pre[i] > 0.0
        delta_param = delta_param * mask
        delta_input = delta_input * mask
        gW[i] = delta_param.T @ acts[i]
        gb[i] = delta_param.sum(axis=0)
        delta_param = delta_param @ params.weights[i]
        delta_input = delta_input @ params.weights[i]
    input_grad = np.array(delta_input, dtype=np.float64)
    return out, input_grad, NetworkParams(tuple(gW), tuple(gb))


def backward(params: NetworkParams, x):
    """Input gradient and parameter gradients of the network output at ``x``.

    For a single point returns ``(d-vector, NetworkParams-shaped gradients)``.
    For a batch the input gradient has one row per point and the parameter
    gradients are summed over the batch.
    """
    _, single = _as_batch(params, x)
    _, gx, grads = forward_backward(params, x)
    return (gx[0] if single else gx), grads


def _row_sum_norm(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.abs(M).sum(axis=1).max())


def layer_norms(params: NetworkParams) -> list[float]:
    """``||(A_i, b_i)||`` for hidden layers followed by ``||A_L||``."""
    norms = [_row_sum_norm(np.column_stack([A, b])) for A, b in zip(params.weights[:-1], params.biases)]
    norms.append(_row_sum_norm(params.weights[-1]))
    return norms


def kappa(params: NetworkParams) -> float:
    *hidden, final = layer_norms(params)
    value = final
    for nrm in hidden:
        value *= max(nrm, 1.0)
    return float(value)


def project_kappa(params: NetworkParams, budget) -> NetworkParams:
    """Rescale the final layer so that ``kappa <= K``; feasible inputs are returned as-is."""
    K = budget.K if isinstance(budget, NormBudget) else NormBudget(float(budget)).K
    current = kappa(params)
    if current <= K:
        return params
    return params.replace_final(params.weights[-1] * (K / current))


def empirical_lipschitz(params: NetworkParams, pairs) -> float:
    """Largest observed slope ``|f(x1) - f(x2)| / ||x1 - x2||_inf`` over point pairs."""
    P = np.asarray(pairs, dtype=np.float64)
    if P.ndim == 2:
        P = P[:, :, None]
    if P.ndim != 3 or P.shape[1] != 2:
        raise StructuralError(f"pairs must have shape (m, 2, d), got {P.shape}")
    dist = np.abs(P[:, 0] - P[:, 1]).max(axis=1)
    keep = dist > 0
    if not keep.any():
        raise ValueError("every pair has coincident points")
    P, dist = P[keep], dist[keep]
    f1 = forward(params, P[:, 0])
    f2 = forward(params, P[:, 1])
    return float((np.abs(f1 - f2) / dist).max())


def init_params(arch: Architecture, rng: np.random.Generator, K=None) -> NetworkParams:
    """Uniform ``[-1/fan_in, 1/fan_in]`` initialisation, projected onto ``kappa <= K`` if given."""
    dims = arch.layer_dims
    weights, biases = [], []
    for i in range(len(dims) - 1):
        fan_in = dims[i]
        bound = 1.0 / fan_in
        weights.append(rng.uniform(-bound, bound, size=(dims[i + 1], fan_in)))
        if i < len(dims) - 2:
            biases.append(rng.uniform(-bound, bound, size=dims[i + 1]))
    params = NetworkParams(tuple(weights), tuple(biases))
    return project_kappa(params, K) if K is not None else params


def random_params(arch: Architecture, rng: np.random.Generator, scale: float = 1.0) -> NetworkParams:
    """Gaussian weights and biases; used by property tests and verification suites."""
    dims = arch.layer_dims
    weights = [rng.normal(0.0, scale / np.sqrt(dims[i]), size=(dims[i + 1], dims[i])) for i in range(len(dims) - 1)]
    biases = [rng.normal(0.0, scale, size=dims[i + 1]) for i in range(len(dims) - 2)]
    return NetworkParams(tuple(weights), tuple(biases))


def params_to_dict(params: NetworkParams) -> dict:
    layers = [{"A": A.tolist(), "b": b.tolist()} for A, b in zip(params.weights[:-1], params.biases)]
    layers.append({"A": params.weights[-1].tolist()})
    return {"arch": params.arch.to_dict(), "layers": layers}


def params_from_dict(doc: dict) -> NetworkParams:
    layers = doc["layers"]
    weights = [np.array(layer["A"], dtype=np.float64).reshape(len(layer["A"]), -1) for layer in layers]
    biases = [np.array(layer["b"], dtype=np.float64) for layer in layers[:-1]]
    params = NetworkParams(tuple(weights), tuple(biases))
    arch = doc.get("arch")
    if arch is not None:
        expected = Architecture(arch["input_dim"], tuple(arch["hidden_widths"]), arch.get("output_dim", 1))
        if expected != params.arch:
            raise StructuralError(f"layer shapes {params.arch} disagree with recorded arch {expected}")
    return params


def save_params(params: NetworkParams, path, extra: dict | None = None) -> None:
    doc = params_to_dict(params)
    if extra:
        doc.update(extra)
    Path(path).write_text(json.dumps(doc, indent=1))


def load_params(path) -> NetworkParams:
    return params_from_dict(json.loads(Path(path).read_text()))


def linear_params(w: Sequence[float]) -> NetworkParams:
    """Depth-0 network ``x -> w . x``."""
    return NetworkParams((np.asarray(w, dtype=np.float64).reshape(1, -1),), ())
