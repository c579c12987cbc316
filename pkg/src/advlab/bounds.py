"""Rate exponents, schedules, capacity bounds and the chaining integral.

Exponents are exact ``Fraction``s; floats appear only when a power of ``n``
has no exact rational value. Every hidden constant defaults to 1 and logs are
natural.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable

import numpy as np
from scipy.integrate import trapezoid

TASKS = ("lipschitz", "quadratic")


def _frac(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x).limit_denominator(10**6)


def smoothness_split(alpha) -> tuple[int, Fraction]:
    """``alpha = r + beta`` with integer ``r`` and ``beta`` in ``(0, 1]``."""
    a = _frac(alpha)
    r = math.ceil(a) - 1
    return r, a - r


def gamma_of(d: int, alpha) -> int:
    """``ceil(log2(d + r))`` computed on integers."""
    r, _ = smoothness_split(alpha)
    return (d + r - 1).bit_length()


@dataclass(frozen=True)
class RateExponents:
    d: int
    alpha: Fraction
    r1: Fraction
    r2: Fraction
    r3: Fraction
    r4: Fraction
    r5: Fraction
    xi: Fraction
    lam: Fraction
    en_exponent: Fraction
    gamma: int
    c: int

    def as_tuple(self) -> tuple:
        return (self.r1, self.r2, self.r3, self.r4, self.r5)


def rate_exponents(d: int, alpha) -> RateExponents:
    if d < 1:
        raise ValueError("d must be a positive integer")
    a = _frac(alpha)
    if a < 1:
        raise ValueError("alpha must be at least 1")
    g = gamma_of(d, a)
    lip_den = 2 * d + 3 * a
    quad_den = 2 * d + 5 * a
    return RateExponents(
        d=d,
        alpha=a,
        r1=a / lip_den,
        r2=2 * a / quad_den,
        r3=(d + 3 * a - 1) / lip_den,
        r4=Fraction(d + 1) / lip_den,
        r5=Fraction(d + 1) / quad_den,
        xi=max(Fraction(1), g * a / (d + 1)),
        lam=max(Fraction(1), 2 * g * a / (d + 1)),
        en_exponent=(d + 2 * a - 1) / lip_den,
        gamma=g,
        c=int(d == 2 * a),
    )


def schedule_exponents(d: int, alpha, task: str) -> tuple[Fraction, Fraction]:
    """Exponents of ``n`` in ``(K, W*L)``."""
    a = _frac(alpha)
    if task == "lipschitz":
        return Fraction(d + 1) / (2 * d + 3 * a), (2 * d + a) / (4 * d + 6 * a)
    if task == "quadratic":
        return Fraction(d + 1) / (2 * d + 5 * a), (2 * d + a) / (4 * d + 10 * a)
    raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")


def exact_power(n, p: Fraction):
    """``n ** p`` as a Fraction when it is rational, otherwise a float."""
    p = _frac(p)
    if isinstance(n, int) or (isinstance(n, Fraction) and n.denominator == 1):
        n = int(n)
        if n >= 1:
            q = p.denominator
            root = round(n ** (1.0 / q))
            for cand in (root - 1, root, root + 1):
                if cand >= 1 and cand**q == n:
                    return Fraction(cand) ** p.numerator
    return float(n) ** float(p)


def schedule(n, d: int, alpha, task: str, c_K: float = 1.0, c_WL: float = 1.0):
    """``(K, W*L)`` with unit leading constants unless overridden."""
    if n < 1:
        raise ValueError("n must be positive")
    ek, ew = schedule_exponents(d, alpha, task)
    K, WL = exact_power(n, ek), exact_power(n, ew)
    if c_K != 1:
        K = float(K) * c_K
    if c_WL != 1:
        WL = float(WL) * c_WL
    return K, WL


def eps_schedule(n, d: int, alpha, task: str, c: float = 1.0) -> float:
    """Attack radius paired with the sample size in sweeps.

    quadratic: ``c * n^(-(d + 2 alpha + 1)/(2d + 5 alpha))``;
    lipschitz: ``c * n^(-(d + 2 alpha - 1)/(2d + 3 alpha))``.
    """
    a = _frac(alpha)
    if task == "quadratic":
        p = -(d + 2 * a + 1) / (2 * d + 5 * a)
    elif task == "lipschitz":
        p = -(d + 2 * a - 1) / (2 * d + 3 * a)
    else:
        raise ValueError(f"unknown task {task!r}")
    return c * float(exact_power(n, p))


@dataclass(frozen=True)
class ArchChoice:
    K: float
    W: int
    L: int
    WL: float
    width_floor: float
    below_floor: bool


def architecture_for(n, d: int, alpha, task: str, c_K: float = 1.0, c_WL: float = 1.0,
                     width_const: float = 1.0) -> ArchChoice:
    """Depth ``max(4 gamma + 2, 2)`` and width ``ceil(width_const * WL / L)``.

    ``below_floor`` flags widths under ``(K / log^gamma K)^((2d + alpha)/(2d + 2))``.
    """
    K, WL = schedule(n, d, alpha, task, c_K, c_WL)
    K, WL = float(K), float(WL)
    g = gamma_of(d, alpha)
    L = max(4 * g + 2, 2)
    W = max(1, math.ceil(width_const * WL / L - 1e-12))
    a = float(_frac(alpha))
    floor = (K / math.log(K) ** g) ** ((2 * d + a) / (2 * d + 2)) if K > math.e else 1.0
    return ArchChoice(max(K, 1.0), W, L, WL, floor, W < floor)


def pdim_bound(W: int, L: int, C: float = 1.0) -> float:
    """``C * W^2 L^2 log(W^2 L)``."""
    if W < 1 or L < 1 or C <= 0:
        raise ValueError("need W, L >= 1 and C > 0")
    value = C * W**2 * L**2 * math.log(W**2 * L)
    if value == 0:
        warnings.warn("pseudo-dimension bound is 0 because log(W^2 L) = 0", stacklevel=2)
    return value


def covering_nn(u: float, W: int, L: int, n: int, C1: float = 1.0) -> float:
    """``C1 * W^2 L^2 log(W^2 L) log(n / u)``."""
    if u <= 0 or n < 1:
        raise ValueError("need u > 0 and n >= 1")
    if u >= n:
        raise ValueError(f"log(n/u) is nonpositive for u={u}, n={n}")
    return C1 * W**2 * L**2 * math.log(W**2 * L) * math.log(n / u)


def covering_holder(u: float, d: int, alpha, c: float = 1.0) -> float:
    if u <= 0:
        raise ValueError("u must be positive")
    return c * u ** (-d / float(_frac(alpha)))


def ball_cover_count(eps: float, tau: float, d: int, c: float = 1.0) -> tuple[int, float]:
    if not 0 < tau <= eps:
        raise ValueError("need 0 < tau <= eps")
    M = math.ceil(eps / tau - 1e-9) ** d
    return M, c * d * math.log(max(eps / tau, math.e))


def _evaluate(entropy: Callable, u: np.ndarray) -> np.ndarray:
    """Vectorised call when the entropy accepts arrays, pointwise otherwise."""
    try:
        with np.errstate(all="ignore"):
            vals = np.asarray(entropy(u), dtype=np.float64)
        if vals.shape == u.shape:
            return vals
    except (TypeError, ValueError):
        pass
    return np.array([entropy(float(x)) for x in u], dtype=np.float64)


def _integral(entropy: Callable, lo: float, hi: float, n: float, panels: int) -> float:
    if hi <= lo:
        return 0.0
    u = np.geomspace(lo, hi, panels + 1) if lo > 0 else np.linspace(lo, hi, panels + 1)
    vals = _evaluate(entropy, u)
    vals = np.sqrt(np.maximum(vals, 0.0) / n)
    return float(trapezoid(vals, u))


def dudley(entropy: Callable, B: float, n: float, delta_grid=None, panels: int = 1000):
    """``min over delta of 4 delta + 12 * int_delta^B sqrt(entropy(u)/n) du``.

    Returns ``(value, argmin delta)``; the integral is a trapezoid rule on a
    geometric grid with ``panels`` panels.
    """
    if B <= 0:
        raise ValueError("upper limit B must be positive")
    if panels < 1000:
        raise ValueError("use at least 1000 panels")
    grid = np.geomspace(B * 1e-6, B, 400) if delta_grid is None else np.asarray(delta_grid, dtype=np.float64)
    if grid.size == 0 or grid.min() < 0 or grid.max() > B:
        raise ValueError("delta grid must be a nonempty subset of [0, B]")
    if (grid == 0).any():
        try:
            at_zero = float(entropy(0.0))
        except (ZeroDivisionError, OverflowError, ValueError):
            at_zero = math.inf
        if not math.isfinite(at_zero):
            raise ValueError("entropy is unbounded at 0, so delta = 0 is not allowed in the grid")
    best, best_delta = math.inf, None
    for delta in grid:
        value = 4 * delta + 12 * _integral(entropy, float(delta), B, n, panels)
        if value < best:
            best, best_delta = value, float(delta)
    return best, best_delta


def gen_app_bounds(n: float, W: float, L: float, K: float, eps: float, d: int, alpha):
    """Generalisation and approximation terms with unit constants; ``(E_gen, E_app)``."""
    if K <= math.e:
        raise ValueError(f"K={K} must exceed e for the log-power approximation term")
    if n < 3:
        raise ValueError("n must be at least 3")
    ex = rate_exponents(d, alpha)
    a = float(ex.alpha)
    log_n = math.log(n)
    capacity = W * L * math.sqrt(math.log(W**2 * L)) if W**2 * L > 1 else 0.0
    e_gen = K * eps / n + capacity * math.sqrt(log_n / n) + n ** (-min(0.5, a / d)) * log_n**ex.c
    e_app = (K / math.log(K) ** ex.gamma) ** (-a / (d + 1))
    return e_gen, e_app


def _sign_vectors(n: int) -> np.ndarray:
    codes = np.arange(2**n)[:, None]
    bits = (codes >> np.arange(n)[None, :]) & 1
    return 2.0 * bits - 1.0


def empirical_rademacher(values, draws: int = 0, seed: int = 0):
    """``E_sigma max_rows (1/n) sum_i sigma_i v_i``; ``(value, stderr)``.

    ``draws = 0`` with ``n <= 20`` enumerates every sign vector exactly.
    """
    V = np.atleast_2d(np.asarray(values, dtype=np.float64))
    m, n = V.shape
    if m < 1 or n < 1:
        raise ValueError("need at least one function and one sample")
    if draws == 0:
        if n > 20:
            raise ValueError("exact enumeration is limited to n <= 20; pass draws > 0")
        S = _sign_vectors(n)
        return float((S @ V.T).max(axis=1).mean() / n), 0.0
    if draws < 1:
        raise ValueError("draws must be positive")
    sups = np.empty(draws)
    for k in range(draws):
        sigma = np.random.default_rng([seed, k]).choice([-1.0, 1.0], size=n)
        sups[k] = (V @ sigma).max() / n
    stderr = float(sups.std(ddof=1) / math.sqrt(draws)) if draws > 1 else 0.0
    return float(sups.mean()), stderr
