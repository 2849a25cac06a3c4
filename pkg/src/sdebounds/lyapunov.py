"""Lyapunov exponents of linear SDEs with multiplicative noise.

The system dX = A X dt + sum_i B_i X dW_i is projected onto the unit sphere
(Khas'minskii).  The exponents are stationary averages of a quartic Q under
the projected diffusion, so the moment relaxation on the sphere brackets them.
"""

from __future__ import annotations

import csv
import enum
import io
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

from .conic import BoundPair, SolverSettings, Status, lower_and_upper
from .momentsdp import assemble_outer, restrict_to_standard_monomials
from .polyalg import Polynomial, SdeModel, to_fraction


class Calculus(str, enum.Enum):
    ITO = "ito"
    STRATONOVICH = "stratonovich"


Matrix = tuple[tuple[Fraction, ...], ...]


def _as_matrix(rows, n: int | None = None) -> Matrix:
    out = tuple(tuple(to_fraction(v) for v in row) for row in rows)
    size = len(out) if n is None else n
    if len(out) != size or any(len(row) != size for row in out):
        raise ValueError(f"expected a square {size}x{size} matrix")
    return out


def _matmul(P: Matrix, R: Matrix) -> Matrix:
    n = len(P)
    return tuple(tuple(sum(P[i][k] * R[k][j] for k in range(n)) for j in range(n))
                 for i in range(n))


@dataclass(frozen=True)
class LinearNoiseSystem:
    n: int
    A: Matrix
    B: tuple[Matrix, ...] = ()
    calculus: Calculus = Calculus.ITO

    @classmethod
    def create(cls, A, B: Iterable = (), calculus: str | Calculus = Calculus.ITO
               ) -> "LinearNoiseSystem":
        """Entries may be ints, Fractions, floats or decimal strings (read exactly)."""
        A = _as_matrix(A)
        n = len(A)
        if n == 0:
            raise ValueError("empty system")
        B = tuple(_as_matrix(Bi, n) for Bi in B)
        return cls(n, A, B, Calculus(calculus))


def stratonovich_to_ito(sys: LinearNoiseSystem) -> LinearNoiseSystem:
    """A' = A + 1/2 sum_i B_i^2."""
    if sys.calculus is not Calculus.STRATONOVICH:
        raise ValueError("system is already in Ito form")
    A = [list(row) for row in sys.A]
    for Bi in sys.B:
        sq = _matmul(Bi, Bi)
        for i in range(sys.n):
            for j in range(sys.n):
                A[i][j] += sq[i][j] / 2
    return LinearNoiseSystem(sys.n, tuple(tuple(r) for r in A), sys.B, Calculus.ITO)


def khasminskii_counterexample(c1, c2, sigma, convention: str = "shifted") -> LinearNoiseSystem:
    """The planar counterexample with B_1 = sigma I and B_2 = sigma J.

    ``convention="shifted"`` returns the Ito system whose exponent is the
    closed-form ratio of periodic integrals used by :func:`oracle_lyapunov`,
    i.e. the drift carries an extra sigma^2/2 I.  ``"stratonovich"`` returns
    the literal Stratonovich system; its Ito correction vanishes since
    J^2 = -I, so its exponent lacks that sigma^2/2 shift.
    """
    c1, c2, s = to_fraction(c1), to_fraction(c2), to_fraction(sigma)
    B1 = ((s, Fraction(0)), (Fraction(0), s))
    B2 = ((Fraction(0), s), (-s, Fraction(0)))
    if convention == "shifted":
        shift = s * s / 2
        A = ((c1 + shift, Fraction(0)), (Fraction(0), c2 + shift))
        return LinearNoiseSystem(2, A, (B1, B2), Calculus.ITO)
    if convention == "stratonovich":
        A = ((c1, Fraction(0)), (Fraction(0), c2))
        return LinearNoiseSystem(2, A, (B1, B2), Calculus.STRATONOVICH)
    raise ValueError(f"unknown convention {convention!r}")


def reduce_on_sphere(p: Polynomial) -> Polynomial:
    """Lowest-degree polynomial agreeing with ``p`` on the unit sphere.

    Each parity class is homogenised to its top degree with powers of
    |x|^2, then divided by |x|^2 for as long as the division is exact.
    """
    n = p.n
    r2 = sum((Polynomial.variable(n, i) ** 2 for i in range(n)), Polynomial.zero(n))
    out = Polynomial.zero(n)
    for parity in (0, 1):
        parts: dict[int, dict] = {}
        for alpha, c in p.terms.items():
            k = sum(alpha)
            if k % 2 == parity:
                parts.setdefault(k, {})[alpha] = c
        if not parts:
            continue
        top = max(parts)
        h = sum((Polynomial(n, t) * r2 ** ((top - k) // 2) for k, t in parts.items()),
                Polynomial.zero(n))
        while top >= 2 and not h.is_zero:
            q, rem = h.divmod_by(r2)
            if not rem.is_zero:
                break
            h, top = q, top - 2
        out = out + h
    return out


@dataclass(frozen=True)
class ProjectedSystem:
    model: SdeModel
    Q: Polynomial

    def reduced(self) -> tuple[SdeModel, Polynomial]:
        """Same generator on the sphere with coefficients of least degree.

        The generator at a point only sees b and a at that point, so for
        measures on the sphere the stationarity rows are unchanged while d_A
        can drop, letting a given degree carry more rows.
        """
        m = self.model
        b = [reduce_on_sphere(p) for p in m.b]
        a = [[reduce_on_sphere(p) for p in row] for row in m.a]
        return SdeModel.create(b, a=a, varieties=m.varieties, names=m.names), \
            reduce_on_sphere(self.Q)


def _linear_image(M: Matrix, xs: Sequence[Polynomial]) -> list[Polynomial]:
    n = len(M)
    zero = Polynomial.zero(n)
    return [sum((xs[j].scale(M[i][j]) for j in range(n) if M[i][j]), zero) for i in range(n)]


def _dot(u: Sequence[Polynomial], v: Sequence[Polynomial]) -> Polynomial:
    return sum((ui * vi for ui, vi in zip(u, v)), Polynomial.zero(u[0].n))


def build_projection(sys: LinearNoiseSystem) -> ProjectedSystem:
    if sys.calculus is not Calculus.ITO:
        raise ValueError("projection needs the Ito form; convert with stratonovich_to_ito")
    n = sys.n
    xs = [Polynomial.variable(n, i) for i in range(n)]
    Ax = _linear_image(sys.A, xs)
    xAx = _dot(xs, Ax)
    u0 = [Ax[i] - xAx * xs[i] for i in range(n)]
    Q = xAx
    cols = []
    for Bi in sys.B:
        Bx = _linear_image(Bi, xs)
        nrm = _dot(Bx, Bx)
        xBx = _dot(xs, Bx)
        xBx2 = xBx * xBx
        for i in range(n):
            u0[i] = u0[i] - (nrm * xs[i]).scale(Fraction(1, 2)) - xBx * Bx[i] \
                + (xBx2 * xs[i]).scale(Fraction(3, 2))
        cols.append([Bx[i] - xBx * xs[i] for i in range(n)])
        Q = Q + nrm.scale(Fraction(1, 2)) - xBx2
    sphere = _dot(xs, xs) - 1
    if cols:
        sigma = [[cols[k][i] for k in range(len(cols))] for i in range(n)]
        model = SdeModel.create(u0, sigma=sigma, varieties=[sphere])
    else:
        zero = Polynomial.zero(n)
        model = SdeModel.create(u0, a=[[zero] * n for _ in range(n)], varieties=[sphere])
    return ProjectedSystem(model, Q)


def lyapunov_bounds(sys: LinearNoiseSystem, d: int, settings: SolverSettings | None = None,
                    reduce: bool = True, rows: str = "sharp") -> BoundPair:
    """rho^d <= lambda_- <= lambda_+ <= eta^d.

    With ``reduce`` the projected coefficients are replaced by their
    least-degree representatives on the sphere and the PSD maps by their
    standard-monomial restrictions; both leave the feasible set unchanged.
    ``rows`` selects the stationarity rows (see ``stationarity_rows``).
    """
    if sys.calculus is Calculus.STRATONOVICH:
        sys = stratonovich_to_ito(sys)
    proj = build_projection(sys)
    if reduce:
        model, Q = proj.reduced()
        problem = assemble_outer(model, Q, d, rows=rows)
        problem = restrict_to_standard_monomials(problem, model.varieties)
    else:
        problem = assemble_outer(proj.model, proj.Q, d, rows=rows)
    return lower_and_upper(problem, settings)


def first_finite_degree(sys: LinearNoiseSystem, start: int = 2, stop: int = 20,
                        settings: SolverSettings | None = None) -> tuple[int, BoundPair] | None:
    """Smallest d in [start, stop] with both bounds finite, and those bounds.

    Finiteness is only guaranteed for sufficiently large d; nothing here
    claims the returned degree is minimal beyond the scan.
    """
    for d in range(start, stop + 1):
        b = lyapunov_bounds(sys, d, settings)
        if b.lower.finite and b.upper.finite:
            return d, b
    return None


class Verdict(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    INCONCLUSIVE = "Inconclusive"


@dataclass(frozen=True)
class StabilityVerdict:
    kind: Verdict
    interval: BoundPair
    degree: int


def classify(bounds: BoundPair) -> StabilityVerdict:
    """Stable needs an Optimal eta < 0, Unstable an Optimal rho > 0."""
    up, lo = bounds.upper, bounds.lower
    if up is not None and up.status is Status.OPTIMAL and up.value < 0:
        kind = Verdict.STABLE
    elif lo is not None and lo.status is Status.OPTIMAL and lo.value > 0:
        kind = Verdict.UNSTABLE
    else:
        kind = Verdict.INCONCLUSIVE
    return StabilityVerdict(kind, bounds, bounds.degree)


# ---------------------------------------------------------------------------
# sigma sweeps

SWEEP_COLUMNS = ("sigma", "d", "rho", "eta", "status_rho", "status_eta", "verdict",
                 "solve_seconds")


@dataclass
class SweepRecord:
    sigma: Fraction
    d: int
    verdict: StabilityVerdict
    solve_seconds: float
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        b = self.verdict.interval
        return {
            "sigma": format_number(float(self.sigma)),
            "d": self.d,
            "rho": format_number(b.rho),
            "eta": format_number(b.eta),
            "status_rho": b.lower.status.value if b.lower else "",
            "status_eta": b.upper.status.value if b.upper else "",
            "verdict": self.verdict.kind.value,
            "solve_seconds": f"{self.solve_seconds:.3f}",
        }


def format_number(v: float) -> str:
    if isinstance(v, float) and math.isinf(v):
        return "unbounded"
    if isinstance(v, float) and math.isnan(v):
        return "nan"
    return repr(float(v))


def sigma_grid(start, stop, step) -> list[Fraction]:
    """Exact rational grid start, start+step, ..., up to stop inclusive."""
    start, stop, step = to_fraction(start), to_fraction(stop), to_fraction(step)
    if step <= 0:
        raise ValueError("step must be positive")
    out, k = [], 0
    while start + k * step <= stop:
        out.append(start + k * step)
        k += 1
    return out


def sigma_sweep(c1, c2, sigmas: Sequence, d: int = 16,
                settings: SolverSettings | None = None, workers: int = 1,
                convention: str = "shifted") -> list[SweepRecord]:
    """Bound and classify the counterexample for each sigma, in sigma order."""
    sigmas = [to_fraction(s) for s in sigmas]

    def point(s):
        t0 = time.perf_counter()
        sys = khasminskii_counterexample(c1, c2, s, convention)
        verdict = classify(lyapunov_bounds(sys, d, settings))
        return SweepRecord(s, d, verdict, time.perf_counter() - t0)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(point, sigmas))
    return [point(s) for s in sigmas]


def sweep_csv(records: Sequence[SweepRecord]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    for rec in records:
        w.writerow(rec.row())
    return buf.getvalue()
