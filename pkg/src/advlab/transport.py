"""Grid-supported distributions, W-infinity / W1 distances, and a brute-force
check that the pointwise adversarial risk equals the worst risk over label-
preserving W-infinity shifts of the data law.

Atoms live on the lattice ``pitch * Z^d`` inside ``[0, 1]^d`` and carry exact
``Fraction`` masses. The ground metric is ``||x - x'||_inf`` between atoms with
the same label and infinity across labels.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .errors import BudgetExceeded
from .losses import LossSpec, loss_eval

EXPANSION_BUDGET = 5000
RELOCATION_BUDGET = 2_000_000


@dataclass(frozen=True)
class Atom:
    k: tuple
    y: float
    mass: Fraction


@dataclass(frozen=True, eq=False)
class DiscreteDistribution:
    atoms: tuple
    pitch: Fraction

    def __post_init__(self):
        pitch = Fraction(self.pitch)
        if pitch <= 0 or Fraction(1) / pitch != int(Fraction(1) / pitch):
            raise ValueError("grid pitch must be 1/N for a positive integer N")
        atoms = tuple(Atom(tuple(int(v) for v in a.k), float(a.y), Fraction(a.mass)) for a in self.atoms)
        if not atoms:
            raise ValueError("a distribution needs at least one atom")
        if sum(a.mass for a in atoms) != 1:
            raise ValueError("masses must sum to exactly 1")
        if any(a.mass <= 0 for a in atoms):
            raise ValueError("masses must be positive")
        if len({(a.k, a.y) for a in atoms}) != len(atoms):
            raise ValueError("atoms must be distinct")
        N = int(1 / pitch)
        d = len(atoms[0].k)
        for a in atoms:
            if len(a.k) != d or min(a.k) < 0 or max(a.k) > N:
                raise ValueError(f"atom {a.k} is off the grid [0, {N}]^{d}")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pitch", pitch)

    @property
    def N(self) -> int:
        return int(1 / self.pitch)

    @property
    def d(self) -> int:
        return len(self.atoms[0].k)

    def points(self) -> np.ndarray:
        return np.array([[float(v * self.pitch) for v in a.k] for a in self.atoms])

    def labels(self) -> list:
        return sorted({a.y for a in self.atoms})

    def label_mass(self, y) -> Fraction:
        return sum((a.mass for a in self.atoms if a.y == y), Fraction(0))

    def conditional(self, y) -> "DiscreteDistribution":
        total = self.label_mass(y)
        return DiscreteDistribution(tuple(Atom(a.k, a.y, a.mass / total) for a in self.atoms if a.y == y), self.pitch)


def make_distribution(entries, pitch) -> DiscreteDistribution:
    """Build from ``(k, y, mass)`` triples, merging repeated ``(k, y)`` pairs."""
    merged = defaultdict(Fraction)
    for k, y, mass in entries:
        k = (int(k),) if np.ndim(k) == 0 else tuple(int(v) for v in k)
        merged[(k, float(y))] += Fraction(mass)
    return DiscreteDistribution(tuple(Atom(k, y, m) for (k, y), m in sorted(merged.items())), Fraction(pitch))


def from_points(X, Y, pitch) -> DiscreteDistribution:
    """Empirical distribution of grid points (mass ``1/n`` each, duplicates merged)."""
    pitch = Fraction(pitch)
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    K = np.rint(X / float(pitch)).astype(int)
    if np.abs(K * float(pitch) - X).max() > 1e-9:
        raise ValueError("points are not on the grid")
    n = X.shape[0]
    return make_distribution(((tuple(K[i]), Y[i], Fraction(1, n)) for i in range(n)), pitch)


@dataclass(frozen=True, eq=False)
class GammaInstance:
    P: DiscreteDistribution
    eps: Fraction

    def __post_init__(self):
        eps = Fraction(self.eps)
        if eps < 0:
            raise ValueError("eps must be nonnegative")
        object.__setattr__(self, "eps", eps)

    @property
    def radius(self) -> int:
        """Ball radius in grid steps."""
        return math.floor(self.eps / self.P.pitch)

    @property
    def exact(self) -> bool:
        return self.radius * self.P.pitch == self.eps


def _radius(P: DiscreteDistribution, eps) -> int:
    return math.floor(Fraction(eps) / P.pitch)


def _ball(k: tuple, r: int, N: int) -> np.ndarray:
    axes = [np.arange(max(0, c - r), min(N, c + r) + 1) for c in k]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(k))


def _loss_on(f, loss: LossSpec, K: np.ndarray, pitch: Fraction, y: float) -> np.ndarray:
    X = K * float(pitch)
    return np.asarray(loss_eval(loss, np.asarray(f.predict(X)), np.full(X.shape[0], y)), dtype=np.float64)


def _fsum(terms) -> Fraction:
    return sum((Fraction(m) * Fraction(float(v)) for m, v in terms), Fraction(0))


def adversarial_risk_discrete(f, loss: LossSpec, P: DiscreteDistribution, eps, budget: int = 10**6) -> Fraction:
    """Exact ``sum_j m_j max_{x' in ball(x_j) cap grid} l(f(x'), y_j)`` as a Fraction."""
    r = _radius(P, eps)
    # one evaluation table for the whole grid keeps float results independent of batching
    table = _grid_losses(f, loss, P)[1] if (P.N + 1) ** P.d <= budget else None
    terms = []
    for a in P.atoms:
        pts = _ball(a.k, r, P.N)
        if pts.shape[0] > budget:
            raise BudgetExceeded(f"ball has {pts.shape[0]} grid points, budget is {budget}")
        vals = table[a.y][_flat_index(pts, P.N)] if table is not None else _loss_on(f, loss, pts, P.pitch, a.y)
        terms.append((a.mass, vals.max()))
    return _fsum(terms)


def natural_risk_discrete(f, loss: LossSpec, P: DiscreteDistribution) -> Fraction:
    _, table = _grid_losses(f, loss, P)
    return _fsum((a.mass, table[a.y][_flat_index(np.array([a.k]), P.N)][0]) for a in P.atoms)


def _grid_losses(f, loss, P):
    """Loss of every grid point under each label, keyed by label."""
    N, d = P.N, P.d
    allpts = np.stack(np.meshgrid(*([np.arange(N + 1)] * d), indexing="ij"), axis=-1).reshape(-1, d)
    return allpts, {y: _loss_on(f, loss, allpts, P.pitch, y) for y in P.labels()}


def _flat_index(K: np.ndarray, N: int) -> np.ndarray:
    idx = np.zeros(K.shape[0], dtype=np.int64)
    for j in range(K.shape[1]):
        idx = idx * (N + 1) + K[:, j]
    return idx


def dp_sup_risk(f, loss: LossSpec, inst: GammaInstance, max_atoms: int = 6, max_ball: int = 200,
                return_witness: bool = False):
    """Worst risk over grid distributions reachable by moving each atom inside its ball.

    Enumerates the full product of per-atom relocations, takes the best joint
    choice, re-evaluates it exactly, and confirms it lies in the W-infinity
    neighbourhood of the base law label by label.
    """
    P = inst.P
    if len(P.atoms) > max_atoms:
        raise BudgetExceeded(f"{len(P.atoms)} atoms exceed the limit of {max_atoms}")
    r = inst.radius
    allpts, table = _grid_losses(f, loss, P)
    balls = [_ball(a.k, r, P.N) for a in P.atoms]
    if max(b.shape[0] for b in balls) > max_ball:
        raise BudgetExceeded(f"a ball holds more than {max_ball} grid points")
    total = math.prod(b.shape[0] for b in balls)
    if total > RELOCATION_BUDGET:
        raise BudgetExceeded(f"{total} joint relocations exceed the budget")

    masses = np.array([float(a.mass) for a in P.atoms])
    per_atom = [table[a.y][_flat_index(b, P.N)] for a, b in zip(P.atoms, balls)]
    risk = np.zeros(1)
    for m, vals in zip(masses, per_atom):
        risk = (risk[:, None] + m * vals[None, :]).ravel()
    best = int(np.argmax(risk))
    choice = np.unravel_index(best, [b.shape[0] for b in balls])

    moved = [(tuple(balls[j][c]), a.y, a.mass) for j, (a, c) in enumerate(zip(P.atoms, choice))]
    Q = make_distribution(moved, P.pitch)
    for y in P.labels():
        if w_inf_discrete(Q.conditional(y), P.conditional(y)) > inst.eps:
            raise AssertionError("relocated law left the W-infinity neighbourhood")
    value = _fsum((mass, table[y][_flat_index(np.array([k]), P.N)][0]) for k, y, mass in moved)
    return (value, Q) if return_witness else value


def split_sup_risk(f, loss: LossSpec, inst: GammaInstance, denominator: int = 16) -> float:
    """Best risk when each atom may split its mass over two ball points in steps of ``1/denominator``.

    Limited to two atoms; used to confirm that splitting never beats relocation.
    """
    P = inst.P
    if len(P.atoms) > 2:
        raise BudgetExceeded("mass-splitting enumeration is limited to two atoms")
    r = inst.radius
    _, table = _grid_losses(f, loss, P)
    w = np.arange(denominator + 1) / denominator
    options = []
    for a in P.atoms:
        vals = table[a.y][_flat_index(_ball(a.k, r, P.N), P.N)]
        i, j = np.triu_indices(vals.size)
        mix = w[:, None] * vals[i][None, :] + (1 - w[:, None]) * vals[j][None, :]
        options.append(float(a.mass) * mix.ravel())
    risk = np.zeros(1)
    for opt in options:
        risk = (risk[:, None] + opt[None, :]).ravel()
    return float(risk.max())


def _expand(P: DiscreteDistribution, D: int):
    units = []
    for a in P.atoms:
        count = a.mass * D
        if count.denominator != 1:
            raise ValueError("masses do not share the expansion denominator")
        units.extend([a] * int(count))
    return units


def _common_units(P, Q):
    if P.pitch != Q.pitch:
        raise ValueError("distributions live on different grids")
    D = math.lcm(*(a.mass.denominator for a in P.atoms + Q.atoms))
    if D > EXPANSION_BUDGET:
        raise BudgetExceeded(f"equal-mass expansion needs {D} units, budget is {EXPANSION_BUDGET}")
    return _expand(P, D), _expand(Q, D)


def _cost_matrix(A, B) -> np.ndarray:
    ka = np.array([a.k for a in A])
    kb = np.array([b.k for b in B])
    dist = np.abs(ka[:, None, :] - kb[None, :, :]).max(axis=2).astype(np.float64)
    ya = np.array([a.y for a in A])
    yb = np.array([b.y for b in B])
    dist[ya[:, None] != yb[None, :]] = np.inf
    return dist


def w_inf_discrete(P: DiscreteDistribution, Q: DiscreteDistribution):
    """Bottleneck matching after splitting both laws into equal-mass units."""
    A, B = _common_units(P, Q)
    C = _cost_matrix(A, B)
    candidates = np.unique(C[np.isfinite(C)])
    n = len(A)

    def feasible(t):
        graph = csr_matrix((C <= t).astype(np.int8))
        return (maximum_bipartite_matching(graph, perm_type="column") >= 0).sum() == n

    if candidates.size == 0 or not feasible(candidates[-1]):
        return math.inf  # label masses differ, no coupling exists
    lo, hi = 0, candidates.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if feasible(candidates[mid]):
            hi = mid
        else:
            lo = mid + 1
    return int(candidates[lo]) * P.pitch


def w1_discrete(P: DiscreteDistribution, Q: DiscreteDistribution, max_vars: int = 10_000) -> float:
    """Minimum transport cost by linear programming over the coupling polytope."""
    if P.pitch != Q.pitch:
        raise ValueError("distributions live on different grids")
    p = np.array([float(a.mass) for a in P.atoms])
    q = np.array([float(a.mass) for a in Q.atoms])
    C = _cost_matrix(P.atoms, Q.atoms) * float(P.pitch)
    m, n = C.shape
    if m * n > max_vars:
        raise BudgetExceeded(f"{m * n} transport variables exceed {max_vars}")
    allowed = np.isfinite(C)
    A_eq = np.zeros((m + n, m * n))
    for i in range(m):
        A_eq[i, i * n:(i + 1) * n] = 1.0
    for j in range(n):
        A_eq[m + j, j::n] = 1.0
    bounds = [(0, None) if ok else (0, 0) for ok in allowed.ravel()]
    res = linprog(np.where(allowed, C, 0.0).ravel(), A_eq=A_eq, b_eq=np.concatenate([p, q]),
                  bounds=bounds, method="highs")
    if res.status != 0:
        return math.inf
    return float(res.fun)


def verify_equivalence(inst: GammaInstance, f, loss: LossSpec):
    """``(equal, pointwise risk, distributional sup risk)``."""
    lhs = adversarial_risk_discrete(f, loss, inst.P, inst.eps)
    rhs = dp_sup_risk(f, loss, inst)
    equal = lhs == rhs or abs(float(lhs - rhs)) <= 1e-12
    return equal, lhs, rhs


def random_instance(rng: np.random.Generator, max_atoms: int = 5, N: int = 50, d: int = 1,
                    max_radius: int = 4, labels=(-1.0, 1.0)) -> GammaInstance:
    """Random grid law with distinct atoms, integer-weighted masses and ``eps = radius / N``."""
    n_atoms = int(rng.integers(1, max_atoms + 1))
    seen = set()
    entries = []
    while len(entries) < n_atoms:
        k = tuple(int(v) for v in rng.integers(0, N + 1, size=d))
        y = float(rng.choice(labels))
        if (k, y) in seen:
            continue
        seen.add((k, y))
        entries.append([k, y, int(rng.integers(1, 5))])
    total = sum(e[2] for e in entries)
    P = make_distribution(((k, y, Fraction(w, total)) for k, y, w in entries), Fraction(1, N))
    return GammaInstance(P, Fraction(int(rng.integers(0, max_radius + 1)), N))

