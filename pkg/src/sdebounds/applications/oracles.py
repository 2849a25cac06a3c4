"""Independent reference values: closed forms and quadratures.

None of these touch the moment machinery, so agreement with the relaxations
is a genuine cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from ..polyalg import Polynomial, to_fraction


def _double_factorial(k: int) -> int:
    out = 1
    while k > 1:
        out *= k
        k -= 2
    return out


def oracle_circle_moment(R, alpha: Sequence[int]) -> Fraction:
    """Moment x1^a x2^b of the uniform law on the circle of radius R.

    Zero when either index is odd, else (a-1)!! (b-1)!! / (a+b)!! R^(a+b).
    """
    R = to_fraction(R)
    if R < 0:
        raise ValueError("radius must be nonnegative")
    a, b = (int(v) for v in alpha)
    if a < 0 or b < 0:
        raise ValueError("exponents must be nonnegative")
    if a % 2 or b % 2:
        return Fraction(0)
    return Fraction(_double_factorial(a - 1) * _double_factorial(b - 1),
                    _double_factorial(a + b)) * R ** (a + b)


def oracle_inverse_gamma_moment(lam: int, k: int) -> Fraction:
    """k-th moment of the density x^(-lam-2) e^(-1/x) / lam!, i.e. prod 1/(lam - j)."""
    if lam <= 0 or lam % 2:
        raise ValueError("lambda must be a positive even integer")
    if not 0 <= k <= lam:
        raise ValueError(f"moment order must lie in 0..{lam}")
    out = Fraction(1)
    for j in range(k):
        out /= lam - j
    return out


def _simpson_periodic(g: Callable[[np.ndarray], np.ndarray], n: int) -> float:
    phi = np.linspace(0.0, 2.0 * np.pi, n + 1)
    return float(integrate.simpson(g(phi), x=phi))


def oracle_lyapunov(c1, c2, sigma, grid: int = 1000, tol: float = 1e-10,
                    max_grid: int = 1 << 22) -> float:
    """Ratio of the two periodic integrals giving pi(Q) for the planar counterexample.

    Composite Simpson on ``grid`` intervals, doubled until successive values
    agree to ``tol``.  The exponential weight is shifted by its maximum so
    small sigma does not overflow.
    """
    c1, c2, sigma = float(c1), float(c2), float(sigma)
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    if grid < 1000 or grid % 2:
        raise ValueError("grid must be an even count >= 1000")
    k = (c1 - c2) / sigma ** 2
    shift = max(k, 0.0)

    def weight(phi):
        return np.exp(k * np.cos(phi) ** 2 - shift)

    def q(phi):
        return sigma ** 2 / 2 + c1 * np.cos(phi) ** 2 + c2 * np.sin(phi) ** 2

    def ratio(n):
        return _simpson_periodic(lambda p: q(p) * weight(p), n) / \
            _simpson_periodic(weight, n)

    prev = ratio(grid)
    n = grid
    while n < max_grid:
        n *= 2
        cur = ratio(n)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise ArithmeticError("Simpson refinement did not settle")


# ---------------------------------------------------------------------------
# Duffing oscillator, density exp(-(v^2/2 + y^2/2 + y^4/8))


def _duffing_potential(y):
    return y * y / 2 + y ** 4 / 8


_QUAD = {"epsabs": 0.0, "epsrel": 1e-13, "limit": 500}


def _duffing_mass() -> float:
    return 2 * integrate.quad(lambda y: math.exp(-_duffing_potential(y)), 0, math.inf,
                              **_QUAD)[0]


def duffing_sigma() -> float:
    """Standard deviation of the displacement under the stationary law."""
    m2 = 2 * integrate.quad(lambda y: y * y * math.exp(-_duffing_potential(y)), 0, math.inf,
                            **_QUAD)[0]
    return math.sqrt(m2 / _duffing_mass())


@dataclass(frozen=True)
class DuffingExact:
    u: float
    T: float
    F: float
    v: float
    P: float


def oracle_duffing(u: float, T: float = 100.0) -> DuffingExact:
    """Exact fraction of time beyond u, Rice up-crossing rate and P_u = 1 - exp(-v T).

    The density factorises, so each quantity is a 1D adaptive quadrature in
    the displacement times a Gaussian integral in the velocity.
    """
    u = float(u)
    if u < 0:
        raise ValueError("threshold must be nonnegative")
    if T < 0:
        raise ValueError("horizon must be nonnegative")
    Z = _duffing_mass()
    tail = integrate.quad(lambda y: math.exp(-_duffing_potential(y)), u, math.inf, **_QUAD)[0]
    F = tail / Z
    # slice density at y = u times int_0^inf w exp(-w^2/2) dw / sqrt(2 pi)
    v = math.exp(-_duffing_potential(u)) / Z / math.sqrt(2 * math.pi)
    return DuffingExact(u, float(T), F, v, -math.expm1(-v * T))


# ---------------------------------------------------------------------------
# Posterior means by tensor quadrature


@dataclass(frozen=True)
class PosteriorQuadrature:
    means: tuple[float, ...]
    second_moment: float
    total_variance: float
    nodes: int


def _simpson_weights(n: int, h: float) -> np.ndarray:
    w = np.ones(n + 1)
    w[1:-1:2] = 4
    w[2:-1:2] = 2
    return w * h / 3


def _slice_moments(v: Polynomial, axes: Sequence[np.ndarray], weights: Sequence[np.ndarray]):
    """Weighted mass, first and second moments, one slice of the first axis at a time.

    Memory stays O(k^(n-1)); a running log-shift keeps exp from overflowing.
    """
    n = v.n
    rest = np.meshgrid(*axes[1:], indexing="ij") if n > 1 else []
    by_tail: dict[tuple, list[tuple[int, float]]] = {}
    for alpha, c in v.terms.items():
        by_tail.setdefault(alpha[1:], []).append((alpha[0], float(c)))
    tails = []
    for tail, heads in by_tail.items():
        mono = np.ones(rest[0].shape) if rest else np.ones(())
        for g, a in zip(rest, tail):
            if a:
                mono = mono * g ** a
        tails.append((heads, mono))
    wrest = np.ones(())
    for i in range(n - 1):
        shape = [1] * (n - 1)
        shape[i] = len(axes[i + 1])
        wrest = wrest * weights[i + 1].reshape(shape)
    shift = -math.inf
    mass = 0.0
    first = np.zeros(n)
    second = 0.0
    for x1, wx in zip(axes[0], weights[0]):
        logp = sum(sum(c * x1 ** a for a, c in heads) * mono for heads, mono in tails)
        top = float(np.max(logp))
        if top > shift:
            scale = math.exp(shift - top) if shift > -math.inf else 0.0
            mass, first, second = mass * scale, first * scale, second * scale
            shift = top
        W = np.exp(logp - shift) * wrest * wx
        m0 = float(W.sum())
        mass += m0
        first[0] += x1 * m0
        second += x1 * x1 * m0
        for i, g in enumerate(rest):
            first[i + 1] += float((W * g).sum())
            second += float((W * g * g).sum())
    return first / mass, second / mass


def _support_box(v: Polynomial, box: float, k: int, trim: float) -> list[tuple[float, float]]:
    """Per-axis range of the grid nodes where v >= max v - trim, padded by two cells."""
    axis = np.linspace(-box, box, k + 1)
    grids = np.meshgrid(*([axis] * v.n), indexing="ij")
    logp = v.evaluate_float(grids)
    logp = np.broadcast_to(logp, grids[0].shape)
    live = np.nonzero(logp >= logp.max() - trim)
    h = 2 * box / k
    return [(max(-box, axis[idx.min()] - 2 * h), min(box, axis[idx.max()] + 2 * h))
            for idx in live]


def oracle_posterior(v: Polynomial, box: float = 3.0, nodes: int = 64, tol: float = 1e-6,
                     max_nodes: int = 1024, trim: float = 60.0) -> PosteriorQuadrature:
    """Means and total variance of the density prop. to exp(v) on [-box, box]^n.

    A coarse pass over the box finds the sub-box outside which the density is
    below exp(-trim) times its peak; the tensor Simpson rule then runs there
    with ``nodes`` intervals per axis, doubled until the means and second
    moment move by less than ``tol``.
    """
    if nodes % 2:
        raise ValueError("nodes must be even")
    ranges = _support_box(v, box, nodes, trim)

    def moments(k):
        axes = [np.linspace(lo, hi, k + 1) for lo, hi in ranges]
        weights = [_simpson_weights(k, (hi - lo) / k) for lo, hi in ranges]
        return _slice_moments(v, axes, weights)

    k = nodes
    prev = moments(k)
    while k < max_nodes:
        k *= 2
        cur = moments(k)
        change = max(np.abs(cur[0] - prev[0]).max(), abs(cur[1] - prev[1]))
        if change < tol:
            means, second = cur
            return PosteriorQuadrature(tuple(float(m) for m in means), second,
                                       second - float(np.sum(means ** 2)), k)
        prev = cur
    raise ArithmeticError("tensor quadrature did not settle")
