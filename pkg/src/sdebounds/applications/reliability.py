"""Reliability of a Duffing oscillator under white noise.

Y'' + Y' + Y + Y^3/2 = sqrt(2) W' in state form X1 = Y, X2 = Y'.  Upper
bounds on the fraction of time spent beyond a level u and on the up-crossing
rate come from the piecewise relaxation; the rate gives the Poisson estimate
of the first-passage probability over a horizon T.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from fractions import Fraction

from ..conic import BoundPair, SolverSettings, Status, lower_and_upper
from ..momentsdp import (AssemblyError, MomentProblem, PiecewiseObjective, assemble_piecewise,
                         prune_free_rows, restrict_to_standard_monomials)
from ..polyalg import Polynomial, SdeModel, parse_polynomial, to_fraction

MIN_DEGREE = 4


def duffing_model() -> SdeModel:
    names = ["x1", "x2"]
    b = [parse_polynomial("x2", names), parse_polynomial("-x2 - x1 - 1/2*x1^3", names)]
    a = [[Polynomial.zero(2), Polynomial.zero(2)],
         [Polynomial.zero(2), Polynomial.constant(2, 2)]]
    return SdeModel.create(b, a=a, names=names)


def _level(u) -> Polynomial:
    return Polynomial.variable(2, 0) - Polynomial.constant(2, u)


def exceedance_problem(u, d: int) -> MomentProblem:
    """pi(1_{x1 >= u})."""
    pieces = PiecewiseObjective.create([(Polynomial.constant(2, 1), [], [_level(u)])])
    return prune_free_rows(assemble_piecewise(duffing_model(), pieces, d))


def crossing_problem(u, d: int) -> MomentProblem:
    """pi(x2 1_{x1 = u, x2 >= 0}), the relaxation counterpart of Rice's rate."""
    g = _level(u)
    x2 = Polynomial.variable(2, 1)
    pieces = PiecewiseObjective.create([(x2, [g], [x2])])
    problem = assemble_piecewise(duffing_model(), pieces, d)
    # the piece lives on {x1 = u}: drop rows divisible by x1 in that block only
    problem = restrict_to_standard_monomials(problem, [g], blocks=(1,))
    return prune_free_rows(problem)


@dataclass
class ReliabilityResult:
    u: float
    T: float
    d: int
    F: BoundPair
    v: BoundPair
    seconds: float

    @property
    def F_upper(self) -> float:
        return self.F.eta

    @property
    def v_upper(self) -> float:
        return self.v.eta

    @property
    def P_upper(self) -> float:
        return poisson_probability(self.v_upper, self.T)

    @property
    def statuses(self) -> dict[str, Status]:
        return {"F": self.F.upper.status, "v": self.v.upper.status}


def poisson_probability(rate: float, T: float) -> float:
    """1 - exp(-rate T), monotone in the rate; 0 for an empty horizon."""
    if T == 0:
        return 0.0
    if math.isinf(rate):
        return 1.0
    return -math.expm1(-rate * T)


def reliability_bounds(u, T: float = 100.0, d: int = 14,
                       settings: SolverSettings | None = None) -> ReliabilityResult:
    u = to_fraction(u) if not isinstance(u, float) else Fraction(u)
    if u <= 0:
        raise AssemblyError("threshold must be positive")
    if T < 0:
        raise AssemblyError("horizon must be nonnegative")
    if d < MIN_DEGREE:
        raise AssemblyError(f"degree {d} is below the minimum {MIN_DEGREE}")
    start = time.perf_counter()
    F = lower_and_upper(exceedance_problem(u, d), settings)
    v = lower_and_upper(crossing_problem(u, d), settings)
    return ReliabilityResult(float(u), float(T), d, F, v, time.perf_counter() - start)
