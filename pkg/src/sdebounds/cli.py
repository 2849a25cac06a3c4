"""Command line front end: ``sdebounds <subcommand> [flags]``.

Exit codes: 0 success (solver statuses are in the report), 2 invalid input,
3 a solve failed outright.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .applications import (duffing_sigma, generate_recurrence, oracle_circle_moment,
                           oracle_duffing, oracle_inverse_gamma_moment, oracle_lyapunov,
                           oracle_posterior, posterior_bounds, posterior_potential,
                           reliability_bounds, simulate_time_average, write_dataset)
from .applications.simulate import DivergenceError
from .conic import (ConicProblem, SolverSettings, Status, export_canonical, fingerprint,
                    lower_and_upper)
from .lyapunov import (SWEEP_COLUMNS, LinearNoiseSystem, SweepRecord, classify, lyapunov_bounds,
                       sigma_grid, sigma_sweep)
from .momentsdp import (AssemblyError, MomentProblem, PiecewiseObjective, assemble_outer,
                        assemble_piecewise, prune_free_rows, rescale,
                        restrict_to_standard_monomials)
from .polyalg import Polynomial, PolynomialError, SdeModel, parse_polynomial

SCHEMA = "specfile-v1"
REPORT_SCHEMA = "report-v1"
EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 2, 3
MONOTONE_SLACK = 1e-6


class SpecError(ValueError):
    pass


# ---------------------------------------------------------------------------
# spec files


def _check_keys(obj: Any, where: str, required: Sequence[str], optional: Sequence[str] = ()):
    if not isinstance(obj, dict):
        raise SpecError(f"{where}: expected an object")
    unknown = set(obj) - set(required) - set(optional)
    if unknown:
        raise SpecError(f"{where}: unknown field(s) {', '.join(sorted(unknown))}")
    missing = [k for k in required if k not in obj]
    if missing:
        raise SpecError(f"{where}: missing field(s) {', '.join(missing)}")


def _str_list(v, where: str) -> list[str]:
    if not isinstance(v, list) or not all(isinstance(s, str) for s in v):
        raise SpecError(f"{where}: expected a list of strings")
    return list(v)


def _matrix(v, where: str) -> list[list[str]]:
    if not isinstance(v, list) or not v:
        raise SpecError(f"{where}: expected a nonempty list of rows")
    return [_str_list(row, f"{where}[{i}]") for i, row in enumerate(v)]


def _exact(v, where: str) -> Fraction:
    if isinstance(v, bool) or not isinstance(v, (int, str)):
        raise SpecError(f"{where}: numbers are given as integers or decimal strings")
    try:
        return Fraction(v)
    except (ValueError, ZeroDivisionError) as exc:
        raise SpecError(f"{where}: {exc}") from None


def _degrees(v, where: str) -> list[int]:
    if isinstance(v, int) and not isinstance(v, bool):
        return [v]
    _check_keys(v, where, ("min", "max"))
    lo, hi = v["min"], v["max"]
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in (lo, hi)) or lo > hi:
        raise SpecError(f"{where}: expected integers with min <= max")
    return list(range(lo, hi + 1))


@dataclass
class ProblemSpec:
    """A diffusion, an objective and relaxation settings, as read from JSON."""

    variables: list[str]
    drift: list[str]
    diffusion: dict[str, list[list[str]]]
    objective: Any
    degree: Any = None
    varieties: list[str] = field(default_factory=list)
    scaling: list[str] | None = None
    solver: dict | None = None
    rows: str = "standard"
    name: str = ""
    description: str = ""

    FIELDS = ("schema", "variables", "drift", "diffusion", "objective", "degree", "varieties",
              "scaling", "solver", "rows", "name", "description")

    @classmethod
    def from_dict(cls, doc: dict) -> "ProblemSpec":
        _check_keys(doc, "spec", ("schema", "variables", "drift", "diffusion", "objective"),
                    cls.FIELDS)
        if doc["schema"] != SCHEMA:
            raise SpecError(f"unsupported schema {doc['schema']!r}, expected {SCHEMA!r}")
        spec = cls(
            variables=_str_list(doc["variables"], "variables"),
            drift=_str_list(doc["drift"], "drift"),
            diffusion=doc["diffusion"],
            objective=doc["objective"],
            degree=doc.get("degree"),
            varieties=_str_list(doc.get("varieties", []), "varieties"),
            scaling=_str_list(doc["scaling"], "scaling") if "scaling" in doc else None,
            solver=doc.get("solver"),
            rows=doc.get("rows", "standard"),
            name=doc.get("name", ""),
            description=doc.get("description", ""),
        )
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        out = {"schema": SCHEMA, "variables": self.variables, "drift": self.drift,
               "diffusion": self.diffusion, "objective": self.objective}
        for key in ("degree", "scaling", "solver"):
            if getattr(self, key) is not None:
                out[key] = getattr(self, key)
        if self.varieties:
            out["varieties"] = self.varieties
        if self.rows != "standard":
            out["rows"] = self.rows
        for key in ("name", "description"):
            if getattr(self, key):
                out[key] = getattr(self, key)
        return out

    def validate(self):
        n = len(self.variables)
        if n == 0 or len(set(self.variables)) != n:
            raise SpecError("variables must be distinct and nonempty")
        if len(self.drift) != n:
            raise SpecError("drift needs one entry per variable")
        _check_keys(self.diffusion, "diffusion", (), ("a", "sigma"))
        if len(self.diffusion) != 1:
            raise SpecError("diffusion: give exactly one of 'a' or 'sigma'")
        key, rows = next(iter(self.diffusion.items()))
        _matrix(rows, f"diffusion.{key}")
        if isinstance(self.objective, dict):
            _check_keys(self.objective, "objective", ("pieces",), ("sign",))
            if not isinstance(self.objective["pieces"], list) or not self.objective["pieces"]:
                raise SpecError("objective.pieces: expected a nonempty list")
            for i, piece in enumerate(self.objective["pieces"]):
                _check_keys(piece, f"objective.pieces[{i}]", ("f",),
                            ("equalities", "inequalities"))
                if not isinstance(piece["f"], str):
                    raise SpecError(f"objective.pieces[{i}].f: expected a string")
                _str_list(piece.get("equalities", []), f"objective.pieces[{i}].equalities")
                _str_list(piece.get("inequalities", []), f"objective.pieces[{i}].inequalities")
        elif not isinstance(self.objective, str):
            raise SpecError("objective: expected a polynomial string or a piecewise object")
        if self.degree is not None:
            _degrees(self.degree, "degree")
        if self.scaling is not None and len(self.scaling) != n:
            raise SpecError("scaling needs one entry per variable")
        if self.solver is not None:
            _check_keys(self.solver, "solver", (), ("tolerance", "backend", "fallback"))
        if self.rows not in ("standard", "sharp"):
            raise SpecError("rows must be 'standard' or 'sharp'")
        # parse everything once so grammar errors surface as validation errors
        try:
            self.model()
            self.objective_polys()
        except PolynomialError as exc:
            raise SpecError(str(exc)) from None

    def _poly(self, text: str) -> Polynomial:
        return parse_polynomial(text, self.variables)

    def model(self) -> SdeModel:
        b = [self._poly(t) for t in self.drift]
        key, rows = next(iter(self.diffusion.items()))
        mat = [[self._poly(t) for t in row] for row in rows]
        varieties = [self._poly(t) for t in self.varieties]
        if key == "a":
            return SdeModel.create(b, a=mat, varieties=varieties, names=self.variables)
        return SdeModel.create(b, sigma=mat, varieties=varieties, names=self.variables)

    @property
    def piecewise(self) -> bool:
        return isinstance(self.objective, dict)

    def objective_polys(self) -> Polynomial | PiecewiseObjective:
        if not self.piecewise:
            return self._poly(self.objective)
        pieces = [(self._poly(p["f"]), [self._poly(t) for t in p.get("equalities", [])],
                   [self._poly(t) for t in p.get("inequalities", [])])
                  for p in self.objective["pieces"]]
        try:
            return PiecewiseObjective.create(pieces, self.objective.get("sign", "nonnegative"))
        except AssemblyError as exc:
            raise SpecError(str(exc)) from None


def _read_json(path: str) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise SpecError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from None


def load_spec(path: str) -> ProblemSpec:
    return ProblemSpec.from_dict(_read_json(_resolve(path)))


def _resolve(path: str) -> str:
    """A path on disk, or the name of a shipped spec such as ``cubic``."""
    if Path(path).exists():
        return path
    name = path if path.endswith(".json") else f"{path}.json"
    shipped = resources.files("sdebounds") / "specs" / name
    if shipped.is_file():
        return str(shipped)
    return path


def shipped_specs() -> list[str]:
    return sorted(p.name[:-5] for p in (resources.files("sdebounds") / "specs").iterdir()
                  if p.name.endswith(".json"))


def build_problem(spec: ProblemSpec, d: int) -> MomentProblem:
    """Assemble the degree-d relaxation described by ``spec``.

    Piecewise objectives get their per-block standard-monomial restriction and
    the pruning of unconstrained rows; both keep the bounds valid.
    """
    model = spec.model()
    objective = spec.objective_polys()
    if d < model.generator_degree:
        raise SpecError(f"degree {d} is below the generator degree {model.generator_degree}")
    if not spec.piecewise:
        problem = assemble_outer(model, objective, d, rows=spec.rows)
    else:
        problem = assemble_piecewise(model, objective, d, rows=spec.rows)
        for i, (_, eqs, _) in enumerate(objective.pieces, start=1):
            if eqs:
                problem = restrict_to_standard_monomials(problem, eqs, blocks=(i,))
        problem = prune_free_rows(problem)
    return problem


# ---------------------------------------------------------------------------
# reports


def _cell(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "unbounded"
        if math.isnan(v):
            return "nan"
        return repr(v)
    if isinstance(v, Fraction):
        return str(v)
    return "" if v is None else str(v)


def _json_value(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, Fraction):
        return str(v)
    return v


@dataclass
class Report:
    command: str
    columns: Sequence[str]
    records: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)
    failed: bool = False

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for rec in self.records:
            w.writerow([_cell(rec.get(c)) for c in self.columns])
        return buf.getvalue()

    def json(self) -> str:
        doc = {"schema": REPORT_SCHEMA, "command": self.command, "version": __version__,
               "meta": self.meta,
               "records": [{c: _json_value(rec.get(c)) for c in self.columns}
                           for rec in self.records],
               "warnings": self.warnings}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def render(self, fmt: str) -> str:
        return self.json() if fmt == "json" else self.csv()


def write_atomic(path: str, text: str):
    """Write via a temporary file in the same directory, then rename."""
    target = Path(path)
    fd, tmp = tempfile.mkstemp(dir=target.parent or ".", prefix=f".{target.name}.")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def emit(report: Report, args) -> int:
    text = report.render(args.format)
    if args.out:
        write_atomic(args.out, text)
    else:
        sys.stdout.write(text)
    for w in report.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return EXIT_SOLVER if report.failed else EXIT_OK


def _status(outcome) -> str:
    return outcome.status.value if outcome is not None else "trivial"


def _failed(outcome) -> bool:
    return outcome is not None and outcome.status is Status.NUMERICAL_FAILURE


def _settings(args, spec: ProblemSpec | None = None) -> SolverSettings:
    kw = {}
    if spec is not None and spec.solver:
        kw.update(spec.solver)
    if args.tolerance is not None:
        kw["tolerance"] = args.tolerance
    return SolverSettings(**kw)


def _parse_range(text: str, parts: int, kind=int) -> list:
    pieces = text.split(":")
    if len(pieces) != parts:
        raise SpecError(f"expected {parts} colon-separated values, got {text!r}")
    try:
        return [kind(p) for p in pieces]
    except ValueError:
        raise SpecError(f"bad range {text!r}") from None


def _requested_degrees(args, spec_degree, default: int | None) -> list[int]:
    if args.degree_range:
        lo, hi = _parse_range(args.degree_range, 2)
        if lo > hi:
            raise SpecError("degree range must be increasing")
        return list(range(lo, hi + 1))
    if args.degree is not None:
        return [args.degree]
    if spec_degree is not None:
        return _degrees(spec_degree, "degree")
    if default is None:
        raise SpecError("no degree given (use --degree or set 'degree' in the spec)")
    return [default]


def _scaling(args, spec: ProblemSpec) -> list[Fraction] | None:
    values = args.scale.split(",") if args.scale else spec.scaling
    if values is None:
        return None
    if len(values) != len(spec.variables):
        raise SpecError("--scale needs one value per variable")
    out = [_exact(v.strip(), "scale") for v in values]
    if any(z <= 0 for z in out):
        raise SpecError("scale factors must be positive")
    return out


def monotonicity_warnings(rows: Sequence[tuple[int, float, float]]) -> list[str]:
    """rho must not decrease and eta must not increase with the degree."""
    out = []
    for (d0, r0, e0), (d1, r1, e1) in zip(rows, rows[1:]):
        if math.isfinite(r0) and math.isfinite(r1) and r1 < r0 - MONOTONE_SLACK:
            out.append(f"solver accuracy: rho decreased from d={d0} to d={d1} ({r0!r} > {r1!r})")
        if math.isfinite(e0) and math.isfinite(e1) and e1 > e0 + MONOTONE_SLACK:
            out.append(f"solver accuracy: eta increased from d={d0} to d={d1} ({e0!r} < {e1!r})")
    return out


# ---------------------------------------------------------------------------
# subcommands

BOUND_COLUMNS = ("d", "rho", "eta", "gap", "status_rho", "status_eta", "solve_seconds",
                 "fingerprint")


def cmd_bound(args) -> Report:
    spec = load_spec(args.spec)
    degrees = _requested_degrees(args, spec.degree, None)
    settings = _settings(args, spec)
    z = _scaling(args, spec)
    problems = []
    for d in degrees:
        problem = build_problem(spec, d)
        if z is not None:
            problem, _ = rescale(problem, z)
        problems.append(problem)

    def run(problem):
        t0 = time.perf_counter()
        pair = lower_and_upper(problem, settings)
        return pair, time.perf_counter() - t0

    if args.workers > 1 and len(problems) > 1:
        with ThreadPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(run, problems))
    else:
        results = [run(p) for p in problems]
    report = Report("bound", BOUND_COLUMNS,
                    meta={"spec": spec.name or args.spec, "scaling": [str(v) for v in z or []]})
    trail = []
    for d, (pair, seconds) in zip(degrees, results):
        report.records.append({
            "d": d, "rho": pair.rho, "eta": pair.eta,
            "gap": pair.gap if pair.trivial_side is None else math.nan,
            "status_rho": _status(pair.lower), "status_eta": _status(pair.upper),
            "solve_seconds": round(seconds, 3), "fingerprint": pair.fingerprint[:16]})
        report.failed |= _failed(pair.lower) or _failed(pair.upper)
        trail.append((d, pair.rho if pair.lower else -math.inf,
                      pair.eta if pair.upper else math.inf))
    report.warnings += monotonicity_warnings(trail)
    return report


def _lyapunov_system(args):
    """(system factory of sigma or None, fixed system or None, sigma list)."""
    if args.matrix:
        doc = _read_json(_resolve(args.matrix))
        _check_keys(doc, "matrix file", ("schema",),
                    ("schema", "A", "B", "calculus", "counterexample", "sigma", "degree",
                     "name", "description"))
        if doc["schema"] != SCHEMA:
            raise SpecError(f"unsupported schema {doc['schema']!r}, expected {SCHEMA!r}")
        if "counterexample" in doc:
            if "A" in doc or "B" in doc:
                raise SpecError("give either A/B or counterexample, not both")
            ce = doc["counterexample"]
            _check_keys(ce, "counterexample", ("c1", "c2"), ("convention",))
            c1, c2 = _exact(ce["c1"], "c1"), _exact(ce["c2"], "c2")
            convention = ce.get("convention", "shifted")
        else:
            if "A" not in doc:
                raise SpecError("matrix file needs A or counterexample")
            try:
                sys_ = LinearNoiseSystem.create(
                    [[_exact(v, "A") for v in row] for row in doc["A"]],
                    [[[_exact(v, "B") for v in row] for row in Bi] for Bi in doc.get("B", [])],
                    doc.get("calculus", "ito"))
            except (ValueError, TypeError) as exc:
                raise SpecError(str(exc)) from None
            return None, sys_, [], doc.get("degree")
        sigmas = doc.get("sigma")
    else:
        if args.c1 is None or args.c2 is None:
            raise SpecError("give --matrix or both --c1 and --c2")
        c1, c2 = _exact(args.c1, "c1"), _exact(args.c2, "c2")
        convention = args.convention
        sigmas = None
        doc = {}
    if args.sigma_range:
        grid = sigma_grid(*_parse_range(args.sigma_range, 3, str))
    elif args.sigma:
        grid = [_exact(s.strip(), "sigma") for s in args.sigma.split(",")]
    elif isinstance(sigmas, dict):
        _check_keys(sigmas, "sigma", ("start", "stop", "step"))
        grid = sigma_grid(sigmas["start"], sigmas["stop"], sigmas["step"])
    elif sigmas is not None:
        grid = [_exact(sigmas, "sigma")] if not isinstance(sigmas, list) else \
            [_exact(s, "sigma") for s in sigmas]
    else:
        raise SpecError("no sigma given (use --sigma or --sigma-range)")
    if any(s <= 0 for s in grid):
        raise SpecError("sigma must be positive")
    return (c1, c2, convention), None, grid, doc.get("degree")


def cmd_lyapunov(args) -> Report:
    family, fixed, sigmas, spec_degree = _lyapunov_system(args)
    degrees = _requested_degrees(args, spec_degree, 16)
    if len(degrees) != 1:
        raise SpecError("lyapunov takes a single degree")
    d = degrees[0]
    if d < 2:
        raise SpecError("degree must be at least 2")
    settings = _settings(args)
    report = Report("lyapunov", SWEEP_COLUMNS)
    if fixed is not None:
        t0 = time.perf_counter()
        verdict = classify(lyapunov_bounds(fixed, d, settings))
        records = [SweepRecord(Fraction(0), d, verdict, time.perf_counter() - t0)]
    else:
        c1, c2, convention = family
        report.meta = {"c1": str(c1), "c2": str(c2), "convention": convention}
        records = sigma_sweep(c1, c2, sigmas, d, settings, args.workers, convention)
    for rec in records:
        row = rec.row()
        row["sigma"] = "" if fixed is not None else str(rec.sigma)
        row["rho"], row["eta"] = rec.verdict.interval.rho, rec.verdict.interval.eta
        row["solve_seconds"] = round(rec.solve_seconds, 3)
        report.records.append(row)
        b = rec.verdict.interval
        report.failed |= _failed(b.lower) or _failed(b.upper)
    return report


RELIABILITY_COLUMNS = ("u", "u_over_sigma", "d", "T", "F_bound", "F_exact", "v_bound", "v_exact",
                       "P_bound", "P_exact", "status_F", "status_v", "solve_seconds")


def cmd_reliability(args) -> Report:
    sig = duffing_sigma()
    if args.u:
        levels = [(_exact(s.strip(), "u"), None) for s in args.u.split(",")]
    else:
        levels = [(None, _exact(s.strip(), "levels")) for s in args.levels.split(",")]
    if args.T < 0:
        raise SpecError("T must be nonnegative")
    degrees = _requested_degrees(args, None, 14)
    settings = _settings(args)
    report = Report("reliability", RELIABILITY_COLUMNS, meta={"sigma_pi": sig})
    for d in degrees:
        for u, k in levels:
            u = Fraction(float(k) * sig) if u is None else u
            if u <= 0:
                raise SpecError("thresholds must be positive")
            res = reliability_bounds(u, args.T, d, settings)
            exact = oracle_duffing(float(u), args.T)
            report.records.append({
                "u": float(u), "u_over_sigma": float(u) / sig, "d": d, "T": args.T,
                "F_bound": res.F_upper, "F_exact": exact.F, "v_bound": res.v_upper,
                "v_exact": exact.v, "P_bound": res.P_upper, "P_exact": exact.P,
                "status_F": res.statuses["F"].value, "status_v": res.statuses["v"].value,
                "solve_seconds": round(res.seconds, 3)})
            report.failed |= _failed(res.F.upper) or _failed(res.v.upper)
    return report


POSTERIOR_COLUMNS = ("quantity", "rho", "eta", "gap", "status_rho", "status_eta", "quadrature")


def cmd_posterior(args) -> Report:
    if args.N <= 0:
        raise SpecError("N must be positive")
    seed = 7 if args.seed is None else args.seed
    degrees = _requested_degrees(args, None, 5)
    if len(degrees) != 1:
        raise SpecError("posterior takes a single degree")
    data = generate_recurrence(N=args.N, seed=seed)
    if args.dataset:
        write_dataset(data, args.dataset)
    rep = posterior_bounds(data, degrees[0], _settings(args))
    quad = oracle_posterior(posterior_potential(data)) if args.quadrature else None
    report = Report("posterior", POSTERIOR_COLUMNS,
                    meta={"N": args.N, "seed": seed, "d": degrees[0]})
    for i, b in enumerate(rep.means):
        report.records.append({
            "quantity": f"mean_p{i + 1}", "rho": b.rho, "eta": b.eta, "gap": b.gap,
            "status_rho": _status(b.lower), "status_eta": _status(b.upper),
            "quadrature": quad.means[i] if quad else None})
        report.failed |= _failed(b.lower) or _failed(b.upper)
    s = rep.second_moment
    report.records.append({
        "quantity": "second_moment", "rho": s.rho, "eta": s.eta, "gap": s.gap,
        "status_rho": _status(s.lower), "status_eta": _status(s.upper),
        "quadrature": quad.second_moment if quad else None})
    report.records.append({
        "quantity": "total_variance", "rho": None, "eta": rep.total_variance_upper,
        "status_eta": _status(s.upper), "quadrature": quad.total_variance if quad else None})
    report.failed |= _failed(s.lower) or _failed(s.upper)
    return report


def _kv(pairs: Sequence[str]) -> dict[str, str]:
    out = {}
    for p in pairs:
        if "=" not in p:
            raise SpecError(f"expected key=value, got {p!r}")
        k, v = p.split("=", 1)
        out[k.strip()] = v.strip()
    return out


ORACLES = {
    "circle": (("R", "a", "b"), lambda R, a, b: oracle_circle_moment(Fraction(R), (int(a), int(b)))),
    "inverse_gamma": (("lam", "k"), lambda lam, k: oracle_inverse_gamma_moment(int(lam), int(k))),
    "lyapunov": (("c1", "c2", "sigma"),
                 lambda c1, c2, sigma: oracle_lyapunov(float(c1), float(c2), float(sigma))),
    "duffing": (("u", "T"), None),
    "duffing_sigma": ((), lambda: duffing_sigma()),
}


def cmd_oracle(args) -> Report:
    if args.name not in ORACLES:
        raise SpecError(f"unknown oracle {args.name!r}; choose from {', '.join(ORACLES)}")
    names, fn = ORACLES[args.name]
    kv = _kv(args.params)
    for alias, key in (("λ", "lam"), ("lambda", "lam")):
        if alias in kv:
            kv[key] = kv.pop(alias)
    if set(kv) - set(names) or (args.name != "duffing" and set(names) - set(kv)):
        raise SpecError(f"{args.name} takes {', '.join(f'{n}=...' for n in names) or 'no arguments'}")
    report = Report("oracle", ("name", "quantity", "value"))
    try:
        if args.name == "duffing":
            if "u" not in kv:
                raise SpecError("duffing takes u=... [T=...]")
            ex = oracle_duffing(float(Fraction(kv["u"])), float(Fraction(kv.get("T", "100"))))
            for q in ("F", "v", "P"):
                report.records.append({"name": "duffing", "quantity": q, "value": getattr(ex, q)})
        else:
            value = fn(*(kv[n] for n in names))
            report.records.append({"name": args.name, "quantity": "value", "value": value})
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    return report


def cmd_simulate(args) -> Report:
    spec = load_spec(args.spec)
    model = spec.model()
    f = parse_polynomial(args.f, spec.variables) if args.f else spec.objective_polys()
    if not isinstance(f, Polynomial):
        raise SpecError("simulate needs a polynomial objective (use --f)")
    x0 = [float(_exact(v.strip(), "x0")) for v in args.x0.split(",")] if args.x0 else None
    if x0 is not None and len(x0) != model.n:
        raise SpecError("--x0 needs one value per variable")
    seed = 0 if args.seed is None else args.seed
    try:
        res = simulate_time_average(model, f, args.T, args.dt, seed, args.burn_in, x0)
    except DivergenceError:
        raise
    except ValueError as exc:
        raise SpecError(str(exc)) from None
    report = Report("simulate", ("mean", "stderr", "batches", "steps"),
                    meta={"spec": spec.name or args.spec, "f": f.to_text(spec.variables),
                          "T": args.T, "dt": args.dt, "burn_in": args.burn_in, "seed": seed})
    report.records.append({"mean": res.mean, "stderr": res.stderr, "batches": res.batches,
                           "steps": res.steps})
    return report


def cmd_export(args) -> tuple[str, str]:
    spec = load_spec(args.spec)
    degrees = _requested_degrees(args, spec.degree, None)
    problem = build_problem(spec, degrees[-1] if args.degree is None else args.degree)
    z = _scaling(args, spec)
    if z is not None:
        problem, _ = rescale(problem, z)
    conic = ConicProblem.from_moment_problem(problem)
    return export_canonical(conic), fingerprint(conic)


# ---------------------------------------------------------------------------
# argument parsing


def _global_flags() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--degree", "-d", type=int, help="relaxation degree")
    g.add_argument("--degree-range", metavar="LO:HI", help="inclusive degree range")
    g.add_argument("--tolerance", type=float, help="solver stopping tolerance")
    g.add_argument("--workers", type=int, default=os.cpu_count() or 1,
                   help="parallel solves (default: available cores)")
    g.add_argument("--seed", type=int, help="random seed for data and simulation")
    g.add_argument("--scale", metavar="Z1,...,ZN", help="moment rescaling x_i -> x_i / z_i")
    g.add_argument("--format", choices=("csv", "json"), default="csv")
    g.add_argument("--out", metavar="FILE", help="write the report here instead of stdout")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _global_flags()
    parser = argparse.ArgumentParser(
        prog="sdebounds", description="Moment bounds on stationary averages of polynomial SDEs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("bound", parents=[common], help="bounds for a spec file")
    p.add_argument("spec", help=f"spec file or shipped name ({', '.join(shipped_specs())})")

    p = sub.add_parser("lyapunov", parents=[common], help="Lyapunov exponent bounds and verdicts")
    p.add_argument("--matrix", metavar="FILE", help="spec file with A, B or a counterexample")
    p.add_argument("--c1", help="first drift eigenvalue of the planar counterexample")
    p.add_argument("--c2", help="second drift eigenvalue")
    p.add_argument("--sigma", help="comma-separated noise intensities")
    p.add_argument("--sigma-range", metavar="START:STOP:STEP")
    p.add_argument("--convention", choices=("shifted", "stratonovich"), default="shifted")

    p = sub.add_parser("reliability", parents=[common], help="Duffing oscillator reliability")
    p.add_argument("--levels", default="3,4,5", help="thresholds in units of the stationary std")
    p.add_argument("--u", help="absolute thresholds (overrides --levels)")
    p.add_argument("-T", type=float, default=100.0, help="time horizon")

    p = sub.add_parser("posterior", parents=[common], help="posterior moments of the recurrence")
    p.add_argument("--N", type=int, default=50, help="number of observations")
    p.add_argument("--dataset", metavar="FILE", help="also write the generated data (CSV)")
    p.add_argument("--quadrature", action="store_true", help="add tensor quadrature values")

    p = sub.add_parser("oracle", parents=[common], help="closed-form and quadrature references")
    p.add_argument("name", help=", ".join(ORACLES))
    p.add_argument("params", nargs="*", metavar="KEY=VALUE")

    p = sub.add_parser("simulate", parents=[common], help="Euler-Maruyama time average")
    p.add_argument("spec")
    p.add_argument("--f", help="function to average (default: the spec objective)")
    p.add_argument("-T", type=float, default=1e3)
    p.add_argument("--dt", type=float, default=1e-4)
    p.add_argument("--burn-in", type=float, default=10.0)
    p.add_argument("--x0", help="initial state, comma-separated")

    p = sub.add_parser("export", parents=[common], help="write the momsdp-v1 problem")
    p.add_argument("spec")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.workers < 1:
            raise SpecError("--workers must be positive")
        if args.command == "export":
            text, fp = cmd_export(args)
            if args.out:
                write_atomic(args.out, text)
            else:
                sys.stdout.write(text)
            print(f"fingerprint {fp}", file=sys.stderr)
            return EXIT_OK
        handler = {"bound": cmd_bound, "lyapunov": cmd_lyapunov, "reliability": cmd_reliability,
                   "posterior": cmd_posterior, "oracle": cmd_oracle,
                   "simulate": cmd_simulate}[args.command]
        return emit(handler(args), args)
    except (SpecError, AssemblyError, PolynomialError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DivergenceError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
