"""Conic form of a moment relaxation, solver backends and the momsdp-v1 format."""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy import linalg

from .momentsdp import LinearRow, MomentProblem, PsdMap

log = logging.getLogger(__name__)

FORMAT_VERSION = "momsdp-v1"


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    UNBOUNDED = "Unbounded"
    INFEASIBLE = "Infeasible"
    INACCURATE = "Inaccurate"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class SolverSettings:
    tolerance: float = 1e-8
    max_iter: int = 200_000
    inaccurate_threshold: float = 1e-5
    unbounded_threshold: float = 1e10
    probe_threshold: float = 100.0
    backend: str = "clarabel"
    fallback: str | None = "cvxopt"
    presolve: bool = False
    workers: int = 1
    verbose: bool = False


@dataclass(frozen=True)
class PsdBlock:
    side: int
    entries: Mapping[tuple[int, int], Mapping[int, Fraction]]   # upper triangle


@dataclass(frozen=True)
class ConicProblem:
    """min/max <c, y> s.t. A y = b and sum_k y_k F_k >= 0 for every PSD block.

    Data is held as exact rationals; floating-point views are produced by
    round-to-nearest conversion when a backend asks for them.
    """

    n_vars: int
    objective: Mapping[int, Fraction]
    equalities: tuple[LinearRow, ...]
    psd_blocks: tuple[PsdBlock, ...]
    block_metadata: tuple[Mapping, ...] = ()

    def __post_init__(self):
        for k in self.objective:
            if not 0 <= k < self.n_vars:
                raise ValueError(f"objective index {k} out of range")
        for row in self.equalities:
            for k in row.coeffs:
                if not 0 <= k < self.n_vars:
                    raise ValueError(f"equality index {k} out of range ({row.label})")
        for blk in self.psd_blocks:
            for (i, j), combo in blk.entries.items():
                if not 0 <= i <= j < blk.side:
                    raise ValueError(f"PSD entry ({i}, {j}) not in the upper triangle")
                for k in combo:
                    if not 0 <= k < self.n_vars:
                        raise ValueError(f"PSD index {k} out of range")

    @classmethod
    def from_moment_problem(cls, problem: MomentProblem) -> "ConicProblem":
        meta = tuple(
            {"block": bid, "n": b.n, "d": b.d, "offset": i * len(b), "size": len(b)}
            for i, (bid, b) in enumerate(problem.blocks))
        return cls(
            n_vars=problem.n_vars,
            objective=dict(problem.objective),
            equalities=tuple(problem.equalities),
            psd_blocks=tuple(PsdBlock(pm.side, pm.entries) for pm in problem.psd_maps),
            block_metadata=meta)

    # -- floating-point views ------------------------------------------

    def objective_vector(self) -> np.ndarray:
        c = np.zeros(self.n_vars)
        for k, v in self.objective.items():
            c[k] = float(v)
        return c

    def equality_matrix(self) -> tuple[sp.csr_matrix, np.ndarray]:
        rows, cols, vals = [], [], []
        for i, row in enumerate(self.equalities):
            for k, v in row.coeffs.items():
                rows.append(i)
                cols.append(k)
                vals.append(float(v))
        A = sp.csr_matrix((vals, (rows, cols)), shape=(len(self.equalities), self.n_vars))
        b = np.array([float(row.rhs) for row in self.equalities])
        return A, b

    def psd_matrix(self, y, block: int) -> np.ndarray:
        blk = self.psd_blocks[block]
        M = np.zeros((blk.side, blk.side))
        for (i, j), combo in blk.entries.items():
            M[i, j] = M[j, i] = sum(float(c) * y[k] for k, c in combo.items())
        return M


@dataclass
class SolveOutcome:
    status: Status
    value: float
    primal_residual: float = math.nan
    dual_residual: float = math.nan
    gap: float = math.nan
    solve_time: float = 0.0
    iterations: int = 0
    backend: str = ""
    message: str = ""
    x: np.ndarray | None = field(default=None, repr=False)

    @property
    def finite(self) -> bool:
        return self.status in (Status.OPTIMAL, Status.INACCURATE)


@dataclass
class BoundPair:
    """Lower bound rho and upper bound eta of degree ``d``.

    For piecewise problems only one side is informative; the other is
    ``None`` and named in ``trivial_side``.
    """

    lower: SolveOutcome | None
    upper: SolveOutcome | None
    degree: int
    fingerprint: str
    trivial_side: str | None = None

    @property
    def rho(self) -> float:
        return self.lower.value if self.lower is not None else math.nan

    @property
    def eta(self) -> float:
        return self.upper.value if self.upper is not None else math.nan

    @property
    def gap(self) -> float:
        return self.eta - self.rho


# ---------------------------------------------------------------------------
# Backends


def _backend_version(name: str) -> str:
    if name == "clarabel":
        import clarabel
        return f"clarabel-{clarabel.__version__}"
    if name == "cvxopt":
        import cvxopt
        return f"cvxopt-{cvxopt.__version__}"
    raise ValueError(f"unknown backend {name!r}")


def _svec_rows(blk: PsdBlock, n_vars: int) -> sp.csr_matrix:
    # upper triangle, column-wise, off-diagonals scaled by sqrt(2)
    r2 = math.sqrt(2.0)
    rows, cols, vals = [], [], []
    pos = 0
    for j in range(blk.side):
        for i in range(j + 1):
            scale = 1.0 if i == j else r2
            for k, c in blk.entries.get((i, j), {}).items():
                rows.append(pos)
                cols.append(k)
                vals.append(scale * float(c))
            pos += 1
    return sp.csr_matrix((vals, (rows, cols)), shape=(pos, n_vars))


def _residuals(problem: ConicProblem, y: np.ndarray) -> float:
    """Relative equality residual plus PSD violation, in the max norm."""
    A, b = problem.equality_matrix()
    res = 0.0
    if A.shape[0]:
        res = float(np.abs(A @ y - b).max()) / (1.0 + float(np.abs(b).max(initial=0.0)))
    scale = 1.0 + float(np.abs(y).max(initial=0.0))
    for i in range(len(problem.psd_blocks)):
        M = problem.psd_matrix(y, i)
        if M.size:
            res = max(res, max(0.0, -float(np.linalg.eigvalsh(M).min())) / scale)
    return res


def _solve_clarabel(problem: ConicProblem, sign: float, settings: SolverSettings,
                    floor: float | None = None):
    # with ``floor`` set this is a feasibility problem with -sign*<c,y> >= floor
    import clarabel

    n = problem.n_vars
    A_eq, b_eq = problem.equality_matrix()
    blocks = [A_eq]
    b_parts = [b_eq]
    cones = []
    if A_eq.shape[0]:
        cones.append(clarabel.ZeroConeT(A_eq.shape[0]))
    if floor is not None:
        blocks.append(sp.csr_matrix(sign * problem.objective_vector()[None, :]))
        b_parts.append(np.array([-floor]))
        cones.append(clarabel.NonnegativeConeT(1))
    for blk in problem.psd_blocks:
        S = _svec_rows(blk, n)
        blocks.append(-S)
        b_parts.append(np.zeros(S.shape[0]))
        cones.append(clarabel.PSDTriangleConeT(blk.side))
    A = sp.vstack(blocks, format="csc")
    b = np.concatenate(b_parts)
    q = sign * problem.objective_vector() if floor is None else np.zeros(n)
    P = sp.csc_matrix((n, n))
    opts = clarabel.DefaultSettings()
    opts.verbose = settings.verbose
    opts.tol_gap_abs = settings.tolerance
    opts.tol_gap_rel = settings.tolerance
    opts.tol_feas = settings.tolerance
    opts.max_iter = settings.max_iter
    opts.reduced_tol_gap_abs = settings.inaccurate_threshold
    opts.reduced_tol_gap_rel = settings.inaccurate_threshold
    opts.reduced_tol_feas = settings.inaccurate_threshold
    sol = clarabel.DefaultSolver(P, q, A, b, cones, opts).solve()
    raw = str(sol.status)
    S = clarabel.SolverStatus
    mapping = {
        S.Solved: Status.OPTIMAL,
        S.AlmostSolved: Status.INACCURATE,
        S.DualInfeasible: Status.UNBOUNDED,
        S.AlmostDualInfeasible: Status.UNBOUNDED,
        S.PrimalInfeasible: Status.INFEASIBLE,
        S.AlmostPrimalInfeasible: Status.INFEASIBLE,
    }
    status = mapping.get(sol.status, Status.NUMERICAL_FAILURE)
    x = np.array(sol.x, dtype=float)
    value = sign * float(sol.obj_val)
    dual = sign * float(sol.obj_val_dual)
    gap = abs(float(sol.obj_val) - float(sol.obj_val_dual)) / (1.0 + abs(float(sol.obj_val)))
    return (status, value, dual, x, float(sol.r_prim), float(sol.r_dual), gap,
            int(sol.iterations), raw)


def _solve_cvxopt(problem: ConicProblem, sign: float, settings: SolverSettings):
    from cvxopt import matrix, solvers, spmatrix

    from .momentsdp import independent_rows

    n = problem.n_vars
    # cvxopt insists on full row rank
    A_eq, b_eq = ConicProblem(n, {}, independent_rows(problem.equalities), ()).equality_matrix()
    # and on rank [G; A] = n: project out variables seen by no cone and no objective
    in_cone = {k for blk in problem.psd_blocks for combo in blk.entries.values() for k in combo}
    free = [k for k in range(n) if k not in in_cone and k not in problem.objective]
    keep = [k for k in range(n) if k not in set(free)]
    A_full, b_full = A_eq.toarray(), b_eq
    if free:
        N = linalg.null_space(A_full[:, free].T)
        A_red, b_red = N.T @ A_full[:, keep], N.T @ b_eq
        if A_red.shape[0]:
            U, s, Vt = linalg.svd(A_red, full_matrices=False)
            rank = int((s > s.max(initial=0.0) * 1e-12).sum())
            A_red, b_red = s[:rank, None] * Vt[:rank], U[:, :rank].T @ b_red
        A_eq, b_eq = sp.csr_matrix(A_red), b_red
    c = matrix(sign * problem.objective_vector()[keep])
    col = {k: i for i, k in enumerate(keep)}
    Gs, hs = [], []
    for blk in problem.psd_blocks:
        # column k of G holds -vec(F_k) (column-major, full square)
        rows, cols, vals = [], [], []
        for (i, j), combo in blk.entries.items():
            for k, v in combo.items():
                rows.append(i + j * blk.side)
                cols.append(col[k])
                vals.append(-float(v))
                if i != j:
                    rows.append(j + i * blk.side)
                    cols.append(col[k])
                    vals.append(-float(v))
        Gs.append(spmatrix(vals, rows, cols, (blk.side ** 2, len(keep))))
        hs.append(matrix(0.0, (blk.side, blk.side)))
    coo = A_eq.tocoo()
    A = spmatrix(coo.data.tolist(), coo.row.tolist(), coo.col.tolist(), A_eq.shape)
    opts = {"show_progress": settings.verbose, "abstol": settings.tolerance,
            "reltol": settings.tolerance, "feastol": settings.tolerance,
            # interior-point runs converge in tens of iterations or not at all
            "maxiters": min(settings.max_iter, 100),
            # extra KKT refinement steps rescue near-singular moment matrices
            "refinement": 3}
    res = solvers.sdp(c, Gs=Gs, hs=hs, A=A if A_eq.shape[0] else None,
                      b=matrix(b_eq) if A_eq.shape[0] else None, options=opts)
    raw = res["status"]
    x = np.full(n, np.nan)
    if res["x"] is not None:
        x[keep] = np.array(res["x"]).ravel()
        if free:
            # any completion satisfying the original rows
            rhs = b_full - A_full[:, keep] @ x[keep]
            x[free] = linalg.lstsq(A_full[:, free], rhs)[0]
    if raw == "optimal":
        status = Status.OPTIMAL
    elif raw == "dual infeasible":
        status = Status.UNBOUNDED
    elif raw == "primal infeasible":
        status = Status.INFEASIBLE
    else:
        status = Status.INACCURATE
    pobj, dobj = res.get("primal objective"), res.get("dual objective")
    value = sign * float(pobj) if pobj is not None else math.nan
    dual = sign * float(dobj) if dobj is not None else math.nan
    return (status, value, dual, x, float(res.get("primal infeasibility") or math.nan),
            float(res.get("dual infeasibility") or math.nan),
            float(res.get("relative gap") or math.nan), int(res.get("iterations", 0)), raw)


_BACKENDS = {"clarabel": _solve_clarabel, "cvxopt": _solve_cvxopt}


def _variable_degrees(problem: ConicProblem) -> list[int] | None:
    from .momentsdp import _basis
    deg = [0] * problem.n_vars
    covered = 0
    for meta in problem.block_metadata:
        try:
            b = _basis(int(meta["n"]), int(meta["d"]))
            off, size = int(meta["offset"]), int(meta["size"])
        except (KeyError, TypeError, ValueError):
            return None
        if size != len(b) or off + size > problem.n_vars:
            return None
        for k, alpha in enumerate(b.exponents):
            deg[off + k] = sum(alpha)
        covered += size
    return deg if covered == problem.n_vars else None


def _scaled_for_growth(problem: ConicProblem, target: float) -> ConicProblem | None:
    """Substitute y_k = s^|alpha_k| w_k with s = target^(1/deg objective).

    Rows are normalised, PSD blocks get a diagonal congruence and the
    objective is divided by ``target``, so that reaching ``target`` in the
    original problem means reaching 1 in the scaled one with O(1) data.
    """
    deg = _variable_degrees(problem)
    if deg is None or not problem.objective:
        return None
    top = max(deg[k] for k in problem.objective)
    if top == 0:
        return None
    s = Fraction(max(2, round(target ** (1.0 / top))))
    pw = [s ** e for e in range(max(deg) + 1)]
    objective = {k: v * pw[deg[k]] / Fraction(target) for k, v in problem.objective.items()}
    rows = []
    for row in problem.equalities:
        coeffs = {k: v * pw[deg[k]] for k, v in row.coeffs.items()}
        big = max((abs(v) for v in coeffs.values()), default=Fraction(1)) or Fraction(1)
        rows.append(LinearRow({k: v / big for k, v in coeffs.items()}, row.rhs / big, row.label))
    blocks = []
    for blk in problem.psd_blocks:
        half = []
        for i in range(blk.side):
            combo = blk.entries.get((i, i), {})
            half.append(max((deg[k] for k in combo), default=0) // 2)
        entries = {(i, j): {k: v * pw[deg[k]] / (pw[half[i]] * pw[half[j]])
                            for k, v in combo.items()}
                   for (i, j), combo in blk.entries.items()}
        blocks.append(PsdBlock(blk.side, entries))
    return ConicProblem(problem.n_vars, objective, tuple(rows), tuple(blocks),
                        problem.block_metadata)


def _growth_certified(problem: ConicProblem, sign: float, settings: SolverSettings) -> bool:
    """True when a verified feasible point pushes the objective past the
    unbounded threshold in the direction being optimised.

    Relaxations whose dual is infeasible without an improving ray make
    interior point methods stall rather than report unboundedness; this
    probe settles those cases.
    """
    scaled = _scaled_for_growth(problem, settings.unbounded_threshold)
    if scaled is None:
        return False
    try:
        status, _, _, x, *_ = _solve_clarabel(scaled, sign, settings, floor=1.0)
    except Exception as exc:
        log.debug("growth probe failed: %s", exc)
        return False
    if status is not Status.OPTIMAL or not np.all(np.isfinite(x)):
        return False
    reached = -sign * float(scaled.objective_vector() @ x)
    return reached >= 1.0 - 1e-6 and _residuals(scaled, x) <= 100 * settings.tolerance


_RANK = {Status.OPTIMAL: 0, Status.INACCURATE: 1, Status.NUMERICAL_FAILURE: 2}


def _attempt(problem: ConicProblem, sign: float, settings: SolverSettings, name: str,
             loosen: float = 1.0) -> SolveOutcome:
    """One backend run; statuses are re-judged from our own residuals.

    ``loosen`` relaxes only the backend's internal stopping tolerance.
    """
    inf = -math.inf if sign > 0 else math.inf
    try:
        backend = _BACKENDS[name]
        version = _backend_version(name)
    except (KeyError, ImportError) as exc:
        return SolveOutcome(Status.NUMERICAL_FAILURE, math.nan,
                            message=f"backend unavailable: {exc}")
    t0 = time.perf_counter()
    try:
        inner = settings if loosen == 1.0 else \
            dataclasses.replace(settings, tolerance=settings.tolerance * loosen)
        status, value, dual, x, rp, rd, gap, iters, raw = backend(problem, sign, inner)
    except Exception as exc:  # backend failures must not escape
        log.info("backend %s failed: %s", name, exc)
        return SolveOutcome(Status.NUMERICAL_FAILURE, math.nan, backend=version,
                            solve_time=time.perf_counter() - t0, message=repr(exc))
    out = SolveOutcome(status, value, rp, rd, gap, time.perf_counter() - t0, iters,
                       version, str(raw), x)
    if loosen != 1.0 and status is Status.OPTIMAL and not gap <= settings.tolerance:
        # converged only to the loosened rule, so not Optimal by our contract
        status = out.status = Status.INACCURATE
    if status in (Status.OPTIMAL, Status.INACCURATE, Status.NUMERICAL_FAILURE) \
            and np.all(np.isfinite(x)):
        resid = _residuals(problem, x)
        out.primal_residual = resid
        if abs(value) > settings.unbounded_threshold:
            out.status, out.value = Status.UNBOUNDED, inf
            out.message = f"{raw}; objective beyond {settings.unbounded_threshold:g}"
        elif status is Status.OPTIMAL and resid > 100 * settings.tolerance:
            out.status = (Status.INACCURATE if resid <= settings.inaccurate_threshold
                          else Status.NUMERICAL_FAILURE)
        elif status is Status.NUMERICAL_FAILURE and resid <= settings.inaccurate_threshold \
                and math.isfinite(value):
            out.status = Status.INACCURATE
        elif status is Status.INACCURATE and resid > settings.inaccurate_threshold:
            out.status = Status.NUMERICAL_FAILURE
        if out.status is Status.INACCURATE and math.isfinite(dual):
            # report the weaker of the two objectives so the bound errs outward
            out.value = min(value, dual) if sign > 0 else max(value, dual)
    return out


def solve(problem: ConicProblem, sense: str, settings: SolverSettings | None = None
          ) -> SolveOutcome:
    """Minimise (``sense="min"``) or maximise the objective over the spectrahedron.

    A solve that ends neither Optimal nor with a certificate is retried with
    ``settings.fallback`` and the better-ranked outcome is kept; if that is
    still not Optimal a rescaled growth probe decides unboundedness.
    """
    settings = settings or SolverSettings()
    if sense not in ("min", "max"):
        raise ValueError("sense must be 'min' or 'max'")
    sign = 1.0 if sense == "min" else -1.0
    inf = -math.inf if sense == "min" else math.inf
    if problem.n_vars == 0:
        return SolveOutcome(Status.NUMERICAL_FAILURE, math.nan, backend=settings.backend,
                            message="problem has no variables")
    t0 = time.perf_counter()
    problem, offset = _split_pinned_objective(problem)
    out = _attempt(problem, sign, settings, settings.backend)
    if out.status in _RANK and out.status is not Status.OPTIMAL \
            and settings.fallback and settings.fallback != settings.backend:
        alt = _attempt(problem, sign, settings, settings.fallback)
        if alt.status in _RANK and alt.status is not Status.OPTIMAL:
            # a slightly looser stopping rule often gets past a failed factorisation
            loose = _attempt(problem, sign, settings, settings.fallback, loosen=10.0)
            loose.message = f"{loose.message} (stopping tolerance x10)"
            if loose.status is Status.UNBOUNDED or (
                    loose.status in _RANK and _RANK[loose.status] < _RANK[alt.status]):
                alt = loose
        if alt.status is Status.UNBOUNDED or \
                (alt.status in _RANK and _RANK[alt.status] < _RANK[out.status]):
            alt.message = f"{alt.message}; after {out.backend or settings.backend}: {out.message}"
            out = alt
    # the probe can be fooled when low-degree rows wash out under its scaling,
    # so it only decides solves that produced no usable value
    stalled = out.status is Status.NUMERICAL_FAILURE or (
        out.status is Status.INACCURATE
        and abs(out.value) > settings.probe_threshold)
    if stalled and _growth_certified(problem, sign, settings):
        out.status = Status.UNBOUNDED
        out.message = f"{out.message}; objective exceeds " \
                      f"{settings.unbounded_threshold:g} at a verified point"
    out.solve_time = time.perf_counter() - t0
    if out.status is Status.UNBOUNDED:
        out.value = inf
    elif out.status is Status.INFEASIBLE:
        out.value = -inf
    elif out.status is Status.NUMERICAL_FAILURE:
        out.value = math.nan
    else:
        out.value += float(offset)
    return out


def _split_pinned_objective(problem: ConicProblem) -> tuple[ConicProblem, Fraction]:
    """Move objective weight on variables fixed by a one-term row into an exact offset.

    Constants in f land on the normalised y_0; keeping them out of the
    solver makes f and f + c the same conic program.
    """
    pinned = {}
    for row in problem.equalities:
        if len(row.coeffs) == 1:
            (k, a), = row.coeffs.items()
            if a:
                pinned.setdefault(k, row.rhs / a)
    offset = sum((c * pinned[k] for k, c in problem.objective.items() if k in pinned),
                 Fraction(0))
    if not any(k in pinned for k in problem.objective):
        return problem, offset
    objective = {k: c for k, c in problem.objective.items() if k not in pinned}
    return dataclasses.replace(problem, objective=objective), offset


def lower_and_upper(problem: MomentProblem | ConicProblem,
                    settings: SolverSettings | None = None) -> BoundPair:
    """Solve both senses; for piecewise problems only the informative one."""
    settings = settings or SolverSettings()
    informative = getattr(problem, "informative", "both")
    degree = getattr(problem, "d", -1)
    if isinstance(problem, MomentProblem):
        if settings.presolve:
            from .momentsdp import presolve
            problem = presolve(problem)
        problem = ConicProblem.from_moment_problem(problem)
    fp = fingerprint(problem)
    senses = []
    if informative in ("both", "lower"):
        senses.append("min")
    if informative in ("both", "upper"):
        senses.append("max")
    if settings.workers > 1 and len(senses) > 1:
        with ThreadPoolExecutor(max_workers=2) as pool:
            outcomes = dict(zip(senses, pool.map(lambda s: solve(problem, s, settings), senses)))
    else:
        outcomes = {s: solve(problem, s, settings) for s in senses}
    trivial = {"both": None, "upper": "lower", "lower": "upper"}[informative]
    return BoundPair(outcomes.get("min"), outcomes.get("max"), degree, fp, trivial)


# ---------------------------------------------------------------------------
# momsdp-v1 interchange


# decimal int <-> str conversion is capped near 4300 digits; hex is exempt
_BIG_BITS = 12_000


def _int(i: int) -> int | str:
    return i if abs(i).bit_length() < _BIG_BITS else hex(i)


def _unint(v: int | str) -> int:
    return int(v, 16) if isinstance(v, str) else v


def _q(v: Fraction) -> list:
    return [_int(v.numerator), _int(v.denominator)]


def _fr(n, d) -> Fraction:
    return Fraction(_unint(n), _unint(d))


def export_canonical(problem: ConicProblem) -> str:
    doc = {
        "version": FORMAT_VERSION,
        "n_vars": problem.n_vars,
        "objective": [[k, *_q(v)] for k, v in sorted(problem.objective.items()) if v],
        "equalities": [
            {"coeffs": [[k, *_q(v)] for k, v in sorted(row.coeffs.items()) if v],
             "rhs": _q(row.rhs), "label": row.label}
            for row in problem.equalities],
        "psd_blocks": [
            {"side": blk.side,
             "entries": [[i, j, k, *_q(v)]
                         for (i, j) in sorted(blk.entries)
                         for k, v in sorted(blk.entries[(i, j)].items()) if v]}
            for blk in problem.psd_blocks],
        "block_metadata": [dict(m) for m in problem.block_metadata],
    }
    return json.dumps(doc, separators=(",", ":")) + "\n"


def parse_canonical(text: str) -> ConicProblem:
    doc = json.loads(text)
    if doc.get("version") != FORMAT_VERSION:
        raise ValueError(f"unsupported document version {doc.get('version')!r}")
    expected = {"version", "n_vars", "objective", "equalities", "psd_blocks", "block_metadata"}
    if set(doc) != expected:
        raise ValueError(f"unexpected fields {sorted(set(doc) ^ expected)}")
    objective = {k: _fr(n, d) for k, n, d in doc["objective"]}
    equalities = tuple(
        LinearRow({k: _fr(n, d) for k, n, d in e["coeffs"]}, _fr(*e["rhs"]), e["label"])
        for e in doc["equalities"])
    blocks = []
    for blk in doc["psd_blocks"]:
        entries: dict[tuple[int, int], dict[int, Fraction]] = {}
        for i, j, k, n, d in blk["entries"]:
            entries.setdefault((i, j), {})[k] = _fr(n, d)
        blocks.append(PsdBlock(blk["side"], entries))
    return ConicProblem(doc["n_vars"], objective, equalities, tuple(blocks),
                        tuple(doc["block_metadata"]))


def fingerprint(problem: ConicProblem) -> str:
    return hashlib.sha256(export_canonical(problem).encode()).hexdigest()


def psd_map_as_block(pm: PsdMap) -> PsdBlock:
    return PsdBlock(pm.side, pm.entries)


def bounds_for(problem: MomentProblem, settings: SolverSettings | None = None,
               scale: Sequence | None = None) -> BoundPair:
    """lower_and_upper with optional rescaling by a positive vector."""
    if scale is not None:
        from .momentsdp import rescale
        problem, _ = rescale(problem, scale)
    return lower_and_upper(problem, settings)
