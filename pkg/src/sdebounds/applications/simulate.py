"""Euler-Maruyama time averages, an independent stochastic cross-check."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numba
import numpy as np

from ..polyalg import Polynomial, SdeModel

CHUNK = 1 << 18
BLOWUP = 1e8


class DivergenceError(ArithmeticError):
    def __init__(self, time: float):
        super().__init__(f"path left the ball of radius {BLOWUP:g} at t = {time:.6g}")
        self.time = time


def _pack(polys) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Flatten polynomials into (exponents, coefficients, owner index)."""
    exps, coefs, owner = [], [], []
    for k, p in enumerate(polys):
        for alpha, c in p.terms.items():
            exps.append(alpha)
            coefs.append(float(c))
            owner.append(k)
    n = polys[0].n
    return (np.array(exps, dtype=np.int64).reshape(-1, n), np.array(coefs, dtype=np.float64),
            np.array(owner, dtype=np.int64))


# inlining matters: a call per term evaluation costs several times the arithmetic
@numba.njit(cache=True, inline="always")
def _eval_packed(x, exps, coefs, owner, out):
    for k in range(out.shape[0]):
        out[k] = 0.0
    for t in range(coefs.shape[0]):
        v = coefs[t]
        for i in range(x.shape[0]):
            for _ in range(exps[t, i]):
                v *= x[i]
        out[owner[t]] += v


# noise modes: 0 constant matrix, 1 polynomial sigma, 2 scalar sqrt(a(x))
@numba.njit(cache=True)
def _run_chunk(x, dW, dt, mode, S, b_pack, s_pack, f_pack, n_burn, step0, size, sums):
    n = x.shape[0]
    m = dW.shape[1]
    drift = np.empty(n)
    sig = np.empty(n * m)
    fv = np.empty(1)
    for s in range(dW.shape[0]):
        _eval_packed(x, b_pack[0], b_pack[1], b_pack[2], drift)
        if mode == 1:
            _eval_packed(x, s_pack[0], s_pack[1], s_pack[2], sig)
        elif mode == 2:
            _eval_packed(x, s_pack[0], s_pack[1], s_pack[2], sig)
            sig[0] = math.sqrt(max(sig[0], 0.0))
        else:
            for k in range(n * m):
                sig[k] = S[k]
        for i in range(n):
            inc = drift[i] * dt
            for j in range(m):
                inc += sig[i * m + j] * dW[s, j]
            x[i] += inc
        norm = 0.0
        for i in range(n):
            norm += x[i] * x[i]
        if not norm < BLOWUP * BLOWUP:
            return step0 + s + 1
        k = step0 + s - n_burn
        if k >= 0 and k // size < sums.shape[0]:
            _eval_packed(x, f_pack[0], f_pack[1], f_pack[2], fv)
            sums[k // size] += fv[0]
    return -1


@dataclass(frozen=True)
class TimeAverage:
    mean: float
    stderr: float
    batches: int
    steps: int


def _noise(model: SdeModel):
    """Diffusion mode, constant matrix and packed polynomial sigma."""
    n = model.n
    empty = _pack([Polynomial.zero(n)])
    if model.sigma is not None:
        flat = [p for row in model.sigma for p in row]
        if all(p.degree <= 0 for p in flat):
            S = np.array([float(p.terms.get((0,) * n, 0)) for p in flat])
            return model.m, 0, S, empty
        return model.m, 1, np.zeros(0), _pack(flat)
    if all(p.degree <= 0 for row in model.a for p in row):
        A = np.array([[float(p.terms.get((0,) * n, 0)) for p in row] for row in model.a])
        w, V = np.linalg.eigh(A)
        S = V @ np.diag(np.sqrt(np.clip(w, 0.0, None)))
        return n, 0, S.ravel(), empty
    if n == 1:
        return 1, 2, np.zeros(0), _pack([model.a[0][0]])
    raise ValueError("state-dependent diffusion matrix needs an explicit sigma")


def simulate_time_average(model: SdeModel, f: Polynomial, T: float, dt: float = 1e-4,
                          seed: int = 0, burn_in: float = 0.0, x0=None,
                          batches: int = 50) -> TimeAverage:
    """Time average of f along one Euler-Maruyama path after ``burn_in``.

    The standard error comes from ``batches`` equal batch means (at least 30);
    steps left over after the last full batch are discarded.
    Gaussian increments are drawn in chunks from a Philox stream, so the path
    is a deterministic function of ``seed``.
    """
    if dt <= 0 or T <= 0:
        raise ValueError("T and dt must be positive")
    if not 0 <= burn_in < T:
        raise ValueError("burn-in must lie in [0, T)")
    if batches < 30:
        raise ValueError("at least 30 batches are required")
    if f.n != model.n:
        raise ValueError("f has the wrong number of variables")
    if f.degree <= 0:
        c = float(f.terms.get((0,) * model.n, 0))
        return TimeAverage(c, 0.0, batches, 0)
    steps = int(round(T / dt))
    n_burn = int(round(burn_in / dt))
    kept = steps - n_burn
    if kept < batches:
        raise ValueError("too few steps for the requested batches")
    m, mode, S, s_pack = _noise(model)
    b_pack = _pack(list(model.b))
    f_pack = _pack([f])
    x = np.zeros(model.n) if x0 is None else np.array(x0, dtype=np.float64)
    rng = np.random.Generator(np.random.Philox(seed))
    size = kept // batches
    sums = np.zeros(batches)
    sq = math.sqrt(dt)
    done = 0
    while done < steps:
        k = min(CHUNK, steps - done)
        dW = rng.standard_normal((k, m)) * sq
        fail = _run_chunk(x, dW, dt, mode, S, b_pack, s_pack, f_pack, n_burn, done, size, sums)
        if fail >= 0:
            raise DivergenceError(fail * dt)
        done += k
    means = sums / size
    return TimeAverage(float(means.mean()), float(means.std(ddof=1) / math.sqrt(batches)),
                       batches, steps)
