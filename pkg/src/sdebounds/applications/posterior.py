"""Langevin diffusions and a polynomial-potential Bayesian posterior.

The Langevin diffusion dX = grad v(X) dt + sqrt(2) dW has the unique
stationary density proportional to exp(v), so moment relaxations of its
generator bound integrals against that density without sampling.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from ..conic import BoundPair, SolverSettings, lower_and_upper
from ..momentsdp import AssemblyError, assemble_outer
from ..polyalg import Polynomial, SdeModel, parse_polynomial

NOISE_POTENTIAL = "3*x^2 - x^4"
DEFAULT_PARAMS = (Fraction(1, 2), Fraction(2), Fraction(1))
DEFAULT_GRID = {"lo": -10.0, "hi": 10.0, "step": 1e-4}
PARAM_NAMES = ("p1", "p2", "p3")


def build_langevin(v: Polynomial, names: Sequence[str] | None = None) -> SdeModel:
    """Drift grad v, diffusion matrix 2 I."""
    n = v.n
    zero = Polynomial.zero(n)
    two = Polynomial.constant(n, 2)
    a = [[two if i == j else zero for j in range(n)] for i in range(n)]
    return SdeModel.create(v.gradient(), a=a, names=names)


# ---------------------------------------------------------------------------
# synthetic data


def _noise_table(u_xi: Polynomial, grid: dict) -> tuple[np.ndarray, np.ndarray]:
    lo, hi, step = float(grid["lo"]), float(grid["hi"]), float(grid["step"])
    count = int(round((hi - lo) / step))
    x = np.linspace(lo, hi, count + 1)
    logp = np.broadcast_to(u_xi.evaluate_float(x[np.newaxis]), x.shape)
    p = np.exp(logp - logp.max())
    cdf = np.concatenate([[0.0], np.cumsum((p[1:] + p[:-1]) / 2)])
    cdf /= cdf[-1]
    # flat stretches (underflowed density) would make the inverse multivalued
    keep = np.concatenate([[True], np.diff(cdf) > 0])
    return cdf[keep], x[keep]


def sample_noise(u_xi: Polynomial, count: int, rng: np.random.Generator,
                 grid: dict | None = None) -> np.ndarray:
    """Inverse-CDF draws from the density prop. to exp(u_xi) on a uniform grid,
    linearly interpolated between nodes."""
    cdf, x = _noise_table(u_xi, grid or DEFAULT_GRID)
    return np.interp(rng.random(count), cdf, x)


def _rng(seed: int) -> np.random.Generator:
    # Philox is a 64-bit counter-based generator with a published spec
    return np.random.Generator(np.random.Philox(seed))


@dataclass(frozen=True)
class RecurrenceDataset:
    z0: float
    z: tuple[float, ...]
    params_true: tuple[Fraction, Fraction, Fraction]
    seed: int
    grid: dict = field(default_factory=lambda: dict(DEFAULT_GRID))

    @property
    def N(self) -> int:
        return len(self.z)

    def regressors(self, k: int) -> tuple[float, float, float]:
        """Coefficients of (p1, p2, p3) in the one-step prediction of z_k, k >= 1.

        Computed in double precision; this is where transcendental values
        enter, before the exact conversion done by the posterior assembly.
        """
        prev = self.z0 if k == 1 else self.z[k - 2]
        return prev, prev / (1.0 + prev * prev), math.cos(1.2 * (k - 1))


def generate_recurrence(params: Sequence = DEFAULT_PARAMS, z0: float = 2.0, N: int = 50,
                        seed: int = 7, grid: dict | None = None,
                        u_xi: Polynomial | None = None) -> RecurrenceDataset:
    """z_k = p1 z_{k-1} + p2 z_{k-1}/(1 + z_{k-1}^2) + p3 cos(1.2(k-1)) + xi_k."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    grid = dict(grid or DEFAULT_GRID)
    u_xi = u_xi or parse_polynomial(NOISE_POTENTIAL, ["x"])
    p = tuple(Fraction(v) if not isinstance(v, float) else Fraction(v) for v in params)
    if len(p) != 3:
        raise ValueError("three parameters expected")
    pf = [float(v) for v in p]
    xi = sample_noise(u_xi, N, _rng(seed), grid) if N else np.zeros(0)
    z = []
    prev = float(z0)
    for k in range(1, N + 1):
        nxt = pf[0] * prev + pf[1] * prev / (1.0 + prev * prev) \
            + pf[2] * math.cos(1.2 * (k - 1)) + float(xi[k - 1])
        z.append(nxt)
        prev = nxt
    return RecurrenceDataset(float(z0), tuple(z), p, int(seed), grid)


def write_dataset(data: RecurrenceDataset, path: str | Path) -> Path:
    """CSV with header k,z (row 0 holds z0) plus a JSON sidecar with the provenance."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "z"])
    w.writerow([0, repr(data.z0)])
    for k, zk in enumerate(data.z, start=1):
        w.writerow([k, repr(zk)])
    path.write_text(buf.getvalue())
    meta = {"seed": data.seed, "N": data.N, "z0": data.z0,
            "params": [str(v) for v in data.params_true], "grid": data.grid,
            "generator": "numpy Philox (inverse CDF, linear interpolation)"}
    side = path.with_suffix(path.suffix + ".json")
    side.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return side


def read_dataset(path: str | Path) -> RecurrenceDataset:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    with path.open() as fh:
        rows = list(csv.DictReader(fh))
    values = [float(r["z"]) for r in sorted(rows, key=lambda r: int(r["k"]))]
    return RecurrenceDataset(values[0], tuple(values[1:]),
                             tuple(Fraction(v) for v in meta["params"]),
                             int(meta["seed"]), dict(meta["grid"]))


# ---------------------------------------------------------------------------
# posterior


def default_prior() -> Polynomial:
    return parse_polynomial("-1/2*(p1^2 + p2^2 + p3^2)", list(PARAM_NAMES))


def posterior_potential(data: RecurrenceDataset, u_xi: Polynomial | None = None,
                        u0: Polynomial | None = None) -> Polynomial:
    """v(p) = sum_k u_xi(z_k - <r_k, p>) + u0(p).

    Each residual is affine in p; its coefficients are the double-precision
    regressors converted exactly, so v has dyadic rational coefficients.
    """
    u_xi = u_xi or parse_polynomial(NOISE_POTENTIAL, ["x"])
    u0 = u0 if u0 is not None else default_prior()
    if u_xi.n != 1:
        raise AssemblyError("noise potential must be univariate")
    if u0.n != 3:
        raise AssemblyError("prior potential must be trivariate")
    p = [Polynomial.variable(3, i) for i in range(3)]
    v = u0
    for k in range(1, data.N + 1):
        r = data.regressors(k)
        arg = Polynomial.constant(3, Fraction(data.z[k - 1]))
        for pi, ri in zip(p, r):
            arg = arg - pi.scale(Fraction(ri))
        v = v + u_xi.substitute_affine([arg])
    return v


@dataclass
class PosteriorReport:
    N: int
    d: int
    means: tuple[BoundPair, BoundPair, BoundPair]
    second_moment: BoundPair

    @property
    def total_variance_upper(self) -> float:
        """eta(|p|^2) - sum_i min over [rho_i, eta_i] of m^2."""
        out = self.second_moment.eta
        for b in self.means:
            lo, hi = b.rho, b.eta
            out -= 0.0 if lo <= 0.0 <= hi else min(lo * lo, hi * hi)
        return out


def posterior_bounds(data: RecurrenceDataset, d: int = 5,
                     settings: SolverSettings | None = None,
                     u_xi: Polynomial | None = None,
                     u0: Polynomial | None = None) -> PosteriorReport:
    v = posterior_potential(data, u_xi, u0)
    model = build_langevin(v, PARAM_NAMES)
    p = [Polynomial.variable(3, i) for i in range(3)]
    base = assemble_outer(model, p[0], d)
    means = tuple(lower_and_upper(base.with_objective(pi), settings) for pi in p)
    norm2 = p[0] * p[0] + p[1] * p[1] + p[2] * p[2]
    second = lower_and_upper(base.with_objective(norm2), settings)
    return PosteriorReport(data.N, d, means, second)
