"""Assembly of moment relaxations for stationary averages.

A :class:`MomentProblem` lives on one or more blocks of moment variables,
each block indexed by the monomial basis of degree ``d``.  Block ``i`` owns
global variables ``i * r(d) .. (i + 1) * r(d) - 1``; within a block the
order is graded lex, so variable ``i * r(d)`` is the mass of that block.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from math import comb
from typing import Callable, Mapping, Sequence

import numpy as np

from .polyalg import Exponent, Polynomial, SdeModel, apply_generator, to_fraction

DEFAULT_MAX_VARIABLES = 5000


class AssemblyError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Monomial bookkeeping


@dataclass(frozen=True)
class MonomialBasis:
    n: int
    d: int
    exponents: tuple[Exponent, ...]
    index: Mapping[Exponent, int] = field(repr=False, compare=False)

    def __len__(self) -> int:
        return len(self.exponents)

    def truncated(self, k: int) -> tuple[Exponent, ...]:
        """Exponents of total degree at most ``k`` (a prefix in grlex order)."""
        if k < 0:
            return ()
        return self.exponents[: comb(self.n + k, k)]


def _exponents_of_degree(n: int, k: int):
    # compositions of k into n parts, descending lex
    if n == 1:
        yield (k,)
        return
    for first in range(k, -1, -1):
        for rest in _exponents_of_degree(n - 1, k - first):
            yield (first,) + rest


@lru_cache(maxsize=None)
def _basis(n: int, d: int) -> MonomialBasis:
    exps = tuple(e for k in range(d + 1) for e in _exponents_of_degree(n, k))
    return MonomialBasis(n, d, exps, {e: i for i, e in enumerate(exps)})


def basis(n: int, d: int, max_size: int = DEFAULT_MAX_VARIABLES) -> MonomialBasis:
    """All exponents with |alpha| <= d in graded lex order."""
    if n < 1 or d < 0:
        raise AssemblyError("basis needs n >= 1 and d >= 0")
    size = comb(n + d, d)
    if size > max_size:
        raise AssemblyError(
            f"r({d}) = {size} moment variables for n={n} exceeds the cap of {max_size}; "
            "lower the degree or raise max_variables")
    return _basis(n, d)


def r(n: int, d: int) -> int:
    return comb(n + d, d) if d >= 0 else 0


# ---------------------------------------------------------------------------
# Rows and PSD maps


@dataclass(frozen=True)
class LinearRow:
    """The constraint ``sum_k coeffs[k] * y[k] == rhs``."""

    coeffs: Mapping[int, Fraction]
    rhs: Fraction
    label: str

    def shifted(self, offset: int, label: str | None = None) -> "LinearRow":
        return LinearRow({k + offset: c for k, c in self.coeffs.items()}, self.rhs,
                         label or self.label)

    def residual(self, y) -> Fraction:
        return sum((c * y[k] for k, c in self.coeffs.items()), Fraction(0)) - self.rhs


def _row_from_poly(p: Polynomial, b: MonomialBasis, rhs=0, label="") -> LinearRow:
    coeffs = {}
    for alpha, c in p.terms.items():
        try:
            coeffs[b.index[alpha]] = c
        except KeyError:
            raise AssemblyError(f"monomial {alpha} exceeds degree {b.d} ({label})") from None
    return LinearRow(coeffs, to_fraction(rhs), label)


@dataclass(frozen=True)
class PsdMap:
    """Affine (linear) matrix map ``y -> M(y)`` constrained to be PSD.

    ``entries`` holds the upper triangle: ``(i, j)`` with ``i <= j`` maps to
    a sparse combination of global variable indices.  ``row_exponents``
    records the exponent labelling each row/column (needed for rescaling).
    """

    side: int
    entries: Mapping[tuple[int, int], Mapping[int, Fraction]]
    block: int
    row_exponents: tuple[Exponent, ...]
    label: str

    def entry(self, i: int, j: int) -> Mapping[int, Fraction]:
        return self.entries.get((i, j) if i <= j else (j, i), {})

    def evaluate(self, y) -> np.ndarray:
        M = np.zeros((self.side, self.side))
        for (i, j), combo in self.entries.items():
            v = sum(float(c) * y[k] for k, c in combo.items())
            M[i, j] = M[j, i] = v
        return M

    def evaluate_exact(self, y) -> list[list[Fraction]]:
        M = [[Fraction(0)] * self.side for _ in range(self.side)]
        for (i, j), combo in self.entries.items():
            v = sum((c * y[k] for k, c in combo.items()), Fraction(0))
            M[i][j] = M[j][i] = v
        return M


def moment_matrix_map(b: MonomialBasis, block: int = 0, offset: int = 0) -> PsdMap:
    """M_{s(d)}(y) with entries y_{beta + gamma}, s(d) = floor(d / 2)."""
    rows = b.truncated(b.d // 2)
    entries = {}
    for i, beta in enumerate(rows):
        for j in range(i, len(rows)):
            k = b.index[tuple(x + y for x, y in zip(beta, rows[j]))]
            entries[(i, j)] = {k + offset: Fraction(1)}
    return PsdMap(len(rows), entries, block, rows, f"moment[{block}]")


def localizing_map(q: Polynomial, b: MonomialBasis, block: int = 0, offset: int = 0,
                   label: str | None = None) -> PsdMap:
    """M_{s(d - d_q)}(theta_q y): entries sum_delta q_delta y_{beta+gamma+delta}."""
    if q.n != b.n:
        raise AssemblyError("localizing polynomial has the wrong number of variables")
    if q.is_zero:
        raise AssemblyError("zero localizing polynomial is degenerate")
    if q.degree > b.d:
        raise AssemblyError(f"deg q = {q.degree} exceeds relaxation degree {b.d}")
    rows = b.truncated((b.d - q.degree) // 2)
    entries = {}
    for i, beta in enumerate(rows):
        for j in range(i, len(rows)):
            bg = tuple(x + y for x, y in zip(beta, rows[j]))
            combo: dict[int, Fraction] = {}
            for delta, c in q.terms.items():
                k = b.index[tuple(x + y for x, y in zip(bg, delta))] + offset
                combo[k] = combo.get(k, 0) + c
            entries[(i, j)] = {k: c for k, c in combo.items() if c}
    return PsdMap(len(rows), entries, block, rows, label or f"localize[{block}]")


ROW_MODES = ("standard", "sharp")


def stationarity_rows(model: SdeModel, d: int, max_size: int = DEFAULT_MAX_VARIABLES,
                      mode: str = "standard") -> list[LinearRow]:
    """Rows <y, A x^alpha> = 0.

    ``mode="standard"`` takes every nonconstant alpha with |alpha| <= d - d_A.
    ``mode="sharp"`` takes every nonconstant alpha whose image A x^alpha has
    degree <= d, which is a superset whenever the generator lowers degree.
    """
    if mode not in ROW_MODES:
        raise AssemblyError(f"unknown stationarity row mode {mode!r}")
    dA = model.generator_degree
    if d < dA:
        raise AssemblyError(f"degree {d} is below the generator degree d_A = {dA}")
    b = basis(model.n, d, max_size)
    rows = []
    candidates = b.truncated(d - dA) if mode == "standard" else b.exponents
    for alpha in candidates[1:]:
        p = apply_generator(Polynomial.monomial(alpha), model)
        if mode == "sharp" and (p.is_zero or p.degree > d):
            continue
        rows.append(_row_from_poly(p, b, 0, f"stationarity{alpha}"))
    return rows


def variety_rows(g: Polynomial, b: MonomialBasis, label: str = "variety") -> list[LinearRow]:
    """Rows <y, g x^alpha> = 0 for |alpha| <= d - deg g."""
    if g.is_zero:
        raise AssemblyError("zero polynomial does not define a variety")
    if g.n != b.n:
        raise AssemblyError("variety polynomial has the wrong number of variables")
    if g.degree > b.d:
        raise AssemblyError(f"deg g = {g.degree} exceeds relaxation degree {b.d}")
    rows = []
    for alpha in b.truncated(b.d - g.degree):
        rows.append(_row_from_poly(g * Polynomial.monomial(alpha), b, 0, f"{label}{alpha}"))
    return rows


# ---------------------------------------------------------------------------
# Problems


@dataclass(frozen=True)
class PiecewiseObjective:
    """f = sum_i f_i 1_{K_i}, K_i = {p = 0 for p in equalities, q >= 0 for q in inequalities}.

    ``sign`` states whether f is nonnegative or nonpositive on the pieces; it
    selects which bound of the multi-block relaxation is informative.
    """

    pieces: tuple[tuple[Polynomial, tuple[Polynomial, ...], tuple[Polynomial, ...]], ...]
    sign: str = "nonnegative"

    @classmethod
    def create(cls, pieces, sign: str = "nonnegative") -> "PiecewiseObjective":
        if sign not in ("nonnegative", "nonpositive"):
            raise AssemblyError("sign must be 'nonnegative' or 'nonpositive'")
        return cls(tuple((f, tuple(eqs), tuple(ineqs)) for f, eqs, ineqs in pieces), sign)


@dataclass(frozen=True)
class MomentProblem:
    n: int
    d: int
    blocks: tuple[tuple[int, MonomialBasis], ...]
    equalities: tuple[LinearRow, ...]
    psd_maps: tuple[PsdMap, ...]
    objective: Mapping[int, Fraction]
    informative: str = "both"      # "both", "upper" or "lower"
    scaling: tuple[Fraction, ...] | None = None

    @property
    def block_size(self) -> int:
        return len(self.blocks[0][1])

    @property
    def n_vars(self) -> int:
        return self.block_size * len(self.blocks)

    def variable_exponent(self, k: int) -> Exponent:
        return self.blocks[0][1].exponents[k % self.block_size]

    def objective_value(self, y) -> float:
        return sum(float(c) * y[k] for k, c in self.objective.items())

    def with_objective(self, f: Polynomial | Mapping[int, Fraction]) -> "MomentProblem":
        """Same constraints, new single-block objective (used for sweeps)."""
        if isinstance(f, Polynomial):
            f = _objective_from_poly(f, self.blocks[0][1], 0)
            if self.scaling is not None:
                f = {k: c * _zpow(self.scaling, self.variable_exponent(k)) for k, c in f.items()}
        return replace(self, objective=dict(f))


def _objective_from_poly(f: Polynomial, b: MonomialBasis, offset: int) -> dict[int, Fraction]:
    out = {}
    for alpha, c in f.terms.items():
        if alpha not in b.index:
            raise AssemblyError(f"objective degree {f.degree} exceeds relaxation degree {b.d}")
        out[b.index[alpha] + offset] = c
    return out


def _normalisation(offsets: Sequence[int]) -> LinearRow:
    return LinearRow({o: Fraction(1) for o in offsets}, Fraction(1), "normalisation")


def assemble_outer(model: SdeModel, f: Polynomial, d: int,
                   max_size: int = DEFAULT_MAX_VARIABLES, rows: str = "standard") -> MomentProblem:
    """Single-measure outer approximation of degree ``d``.

    Stationarity rows are present only when ``d >= d_A``; below that the
    relaxation only knows the measure is a probability on the variety, which
    is what the low-order sets of the hierarchy look like.
    """
    if f.n != model.n:
        raise AssemblyError("objective has the wrong number of variables")
    if d < f.degree:
        raise AssemblyError(f"degree {d} is below the objective degree {f.degree}")
    b = basis(model.n, d, max_size)
    mode = rows
    rows = [_normalisation([0])]
    if d >= model.generator_degree:
        rows += stationarity_rows(model, d, max_size, mode)
    for j, g in enumerate(model.varieties):
        if g.degree <= d:
            rows += variety_rows(g, b, f"variety{j}")
    return MomentProblem(
        n=model.n, d=d, blocks=((0, b),), equalities=tuple(rows),
        psd_maps=(moment_matrix_map(b),), objective=_objective_from_poly(f, b, 0))


def assemble_piecewise(model: SdeModel, pieces: PiecewiseObjective, d: int,
                       max_size: int = DEFAULT_MAX_VARIABLES, rows: str = "standard"
                       ) -> MomentProblem:
    """Multi-block relaxation for f = sum_i f_i 1_{K_i}; block 0 is the complement."""
    if not pieces.pieces:
        raise AssemblyError("piecewise objective has no pieces")
    for f, eqs, ineqs in pieces.pieces:
        for p in (f, *eqs, *ineqs):
            if p.n != model.n:
                raise AssemblyError("piece polynomial has the wrong number of variables")
            if p.degree > d:
                raise AssemblyError(f"piece polynomial of degree {p.degree} exceeds d = {d}")
    b = basis(model.n, d, max_size * (len(pieces.pieces) + 1))
    size = len(b)
    n_blocks = len(pieces.pieces) + 1
    offsets = [i * size for i in range(n_blocks)]
    mode = rows
    rows = [_normalisation(offsets)]
    if d >= model.generator_degree:
        for row in stationarity_rows(model, d, max_size, mode):
            coeffs = {}
            for o in offsets:
                coeffs.update({k + o: c for k, c in row.coeffs.items()})
            rows.append(LinearRow(coeffs, row.rhs, row.label))
    maps = []
    objective: dict[int, Fraction] = {}
    for i, o in enumerate(offsets):
        for j, g in enumerate(model.varieties):
            if g.degree <= d:
                rows += [r_.shifted(o, f"block{i}:{r_.label}")
                         for r_ in variety_rows(g, b, f"variety{j}")]
        maps.append(moment_matrix_map(b, block=i, offset=o))
        if i == 0:
            continue
        f, eqs, ineqs = pieces.pieces[i - 1]
        for j, p in enumerate(eqs):
            rows += [r_.shifted(o, f"block{i}:{r_.label}")
                     for r_ in variety_rows(p, b, f"piece_eq{j}")]
        for k, q in enumerate(ineqs):
            maps.append(localizing_map(q, b, block=i, offset=o, label=f"localize[{i}:{k}]"))
        for key, c in _objective_from_poly(f, b, o).items():
            objective[key] = objective.get(key, 0) + c
    informative = "upper" if pieces.sign == "nonnegative" else "lower"
    return MomentProblem(
        n=model.n, d=d, blocks=tuple((i, b) for i in range(n_blocks)),
        equalities=tuple(rows), psd_maps=tuple(maps),
        objective={k: c for k, c in objective.items() if c}, informative=informative)


# ---------------------------------------------------------------------------
# Rescaling and presolve


def _zpow(z: Sequence[Fraction], alpha: Exponent) -> Fraction:
    out = Fraction(1)
    for zi, a in zip(z, alpha):
        if a:
            out *= zi ** a
    return out


def rescale(problem: MomentProblem, z: Sequence) -> tuple[MomentProblem, Callable]:
    """Substitute y_alpha = z^alpha * ytilde_alpha in every row, map and the objective.

    PSD maps are additionally congruence-transformed by diag(z^-beta), so the
    rescaled moment matrix is again a plain moment matrix in ytilde.  Returns
    the rescaled problem and a function mapping ytilde back to y.
    """
    z = tuple(to_fraction(v) for v in z)
    if len(z) != problem.n:
        raise AssemblyError(f"scaling vector needs {problem.n} entries")
    if any(v <= 0 for v in z):
        raise AssemblyError("scaling entries must be positive")
    size = problem.block_size
    exps = problem.blocks[0][1].exponents
    w = [_zpow(z, a) for a in exps]

    def weight(k: int) -> Fraction:
        return w[k % size]

    rows = tuple(
        LinearRow({k: c * weight(k) for k, c in row.coeffs.items()}, row.rhs, row.label)
        for row in problem.equalities)
    maps = []
    for pm in problem.psd_maps:
        rw = [_zpow(z, e) for e in pm.row_exponents]
        entries = {
            (i, j): {k: c * weight(k) / (rw[i] * rw[j]) for k, c in combo.items()}
            for (i, j), combo in pm.entries.items()}
        maps.append(replace(pm, entries=entries))
    objective = {k: c * weight(k) for k, c in problem.objective.items()}
    prev = problem.scaling or (Fraction(1),) * problem.n
    scaling = tuple(p * q for p, q in zip(prev, z))
    if all(s == 1 for s in scaling):
        scaling = None
    scaled = replace(problem, equalities=rows, psd_maps=tuple(maps), objective=objective,
                     scaling=scaling)
    wf = np.array([float(weight(k)) for k in range(problem.n_vars)])

    def back(ytilde):
        return np.asarray(ytilde, dtype=float) * wf

    return scaled, back


def presolve(problem: MomentProblem) -> MomentProblem:
    """Drop linearly dependent equality rows (exact Gaussian elimination).

    Raises :class:`AssemblyError` if the equalities are inconsistent.
    """
    return replace(problem, equalities=independent_rows(problem.equalities))


def independent_rows(equalities: Sequence[LinearRow]) -> tuple[LinearRow, ...]:
    pivots: dict[int, dict[int, Fraction]] = {}   # pivot column -> reduced row (incl. rhs at -1)
    keep = []
    for row in equalities:
        v = dict(row.coeffs)
        v[-1] = row.rhs
        for col in sorted(k for k in v if k in pivots):
            if col not in v:
                continue
            factor = v[col]
            for k, c in pivots[col].items():
                nv = v.get(k, 0) - factor * c
                if nv:
                    v[k] = nv
                else:
                    v.pop(k, None)
        cols = [k for k in v if k >= 0]
        if not cols:
            if v.get(-1, 0):
                raise AssemblyError(f"inconsistent equality rows (at {row.label})")
            continue
        piv = min(cols)
        scale = v[piv]
        red = {k: c / scale for k, c in v.items()}
        # keep the basis fully reduced so later rows only touch pivot columns once
        for other in pivots.values():
            if piv in other:
                factor = other[piv]
                for k, c in red.items():
                    nv = other.get(k, 0) - factor * c
                    if nv:
                        other[k] = nv
                    else:
                        other.pop(k, None)
        pivots[piv] = red
        keep.append(row)
    return tuple(keep)


def _keep_rows(pm: PsdMap, keep: Sequence[int]) -> PsdMap:
    pos = {i: k for k, i in enumerate(keep)}
    entries = {(pos[i], pos[j]): combo for (i, j), combo in pm.entries.items()
               if i in pos and j in pos}
    return replace(pm, side=len(keep), entries=entries,
                   row_exponents=tuple(pm.row_exponents[i] for i in keep))


def restrict_to_standard_monomials(problem: MomentProblem, varieties: Sequence[Polynomial],
                                   blocks: Sequence[int] | None = None) -> MomentProblem:
    """Drop PSD rows/columns labelled by monomials divisible by a leading term.

    Division by the varieties writes any such monomial as a combination of
    the remaining ones plus multiples of the g_j that the variety rows already
    annihilate, so every PSD map equals C^T M' C for a surjective C and the
    restricted problem has the same feasible set.  The benefit is numerical:
    on a variety the full moment matrix is singular at every feasible point.
    Only varieties whose rows are present (deg g <= d) are used.  ``blocks``
    limits the restriction to maps of those blocks (piece equalities hold on
    one block only).
    """
    from .polyalg import grlex_key
    leads = [max(g.terms, key=grlex_key) for g in varieties
             if not g.is_zero and g.degree <= problem.d]
    if not leads:
        return problem

    def standard(beta):
        return not any(all(x >= y for x, y in zip(beta, lt)) for lt in leads)

    maps = []
    for pm in problem.psd_maps:
        if blocks is not None and pm.block not in blocks:
            maps.append(pm)
            continue
        maps.append(_keep_rows(pm, [i for i, beta in enumerate(pm.row_exponents)
                                    if standard(beta)]))
    return replace(problem, psd_maps=tuple(maps))


def prune_free_rows(problem: MomentProblem) -> MomentProblem:
    """Drop PSD rows whose diagonal entry only involves unconstrained variables.

    A variable is unconstrained when no equality row and no objective term
    mentions it.  Such a diagonal can grow without bound, so the optimum is
    approached but not attained and interior point methods stall.  Keeping a
    principal submatrix is a relaxation, so bounds stay valid; when the
    dropped rows only meet unconstrained entries the optimal value is
    unchanged.
    """
    used = set(problem.objective)
    for row in problem.equalities:
        used.update(row.coeffs)
    maps = []
    for pm in problem.psd_maps:
        keep = [i for i in range(pm.side) if any(k in used for k in pm.entry(i, i))]
        maps.append(pm if len(keep) == pm.side else _keep_rows(pm, keep))
    return replace(problem, psd_maps=tuple(maps))


def is_feasible_point(problem: MomentProblem, y, psd_tol: float = 1e-10) -> bool:
    """Exact row check plus floating-point PSD check of every map."""
    if any(row.residual(y) != 0 for row in problem.equalities):
        return False
    yf = [float(v) for v in y]
    for pm in problem.psd_maps:
        M = pm.evaluate(yf)
        if np.linalg.eigvalsh(M).min() < -psd_tol * max(1.0, np.abs(M).max()):
            return False
    return True


def moment_vector(problem: MomentProblem, moment: Callable[[Exponent], Fraction]) -> list:
    """Single-block y from a moment oracle, in the problem's variable order."""
    return [moment(e) for e in problem.blocks[0][1].exponents]


__all__ = [
    "AssemblyError", "MonomialBasis", "LinearRow", "PsdMap", "PiecewiseObjective",
    "MomentProblem", "basis", "r", "stationarity_rows", "variety_rows",
    "moment_matrix_map", "localizing_map", "assemble_outer", "assemble_piecewise",
    "rescale", "presolve", "independent_rows", "restrict_to_standard_monomials",
    "prune_free_rows", "is_feasible_point", "moment_vector",
]
