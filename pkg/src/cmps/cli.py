"""
Command-line entry point: ``cmps <command> ...``.

Exit status is 0 on success, 1 when the input fails validation (including a
failed regularity check), 2 on a numerical failure and 64 on a usage error.
Failures print a JSON error object on stderr; warnings are printed there as
JSON lines and also recorded in the report.
"""
from __future__ import annotations

import argparse
import csv
import io as _stdio
import sys
import warnings
from pathlib import Path

import numpy as np
import scipy

from . import __version__, finite, gauge, io, lattice, regularity, tangent, uniform
from .config import RunConfig, dense_budget
from .core import FiniteCMPS, UniformCMPS, left_orthonormal_residual, right_orthonormal_residual
from .errors import CMPSError, ShapeError, ValidationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NUMERICAL = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# --------------------------------------------------------------------------- output


class Reporter:
    """Collects warnings and residuals and writes reports deterministically."""

    def __init__(self, args, config: RunConfig):
        self.args = args
        self.config = config
        self.warnings: list = []
        self.residuals: dict = {}

    def warn(self, category: str, message: str):
        entry = {"warning": category, "message": message}
        self.warnings.append(entry)
        sys.stderr.write(io.dumps(entry, indent=0))

    def provenance(self) -> dict:
        c = self.config
        return {
            "versions": {"cmps": __version__, "numpy": np.__version__, "scipy": scipy.__version__},
            "tolerances": {"eig_tol": c.eig_tol, "solve_tol": c.solve_tol, "ode_tol": c.ode_tol},
            "dense_budget": c.dense_budget,
            "threads": c.threads,
            "residuals": self.residuals,
        }

    def report(self, command: str, result: dict) -> dict:
        return {"command": command, "result": result, "warnings": self.warnings,
                "provenance": self.provenance()}

    def emit_text(self, text: str, out: str | None):
        if out:
            Path(out).write_text(text)
        else:
            sys.stdout.write(text)

    def emit(self, command: str, result: dict, out: str | None = None):
        self.emit_text(io.dumps(self.report(command, result)), out)

    def wants_csv(self, out: str | None) -> bool:
        return self.config.output_format == "csv" or (out is not None and out.endswith(".csv"))


def _csv_text(header: list, rows) -> str:
    buf = _stdio.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([io.format_float(v) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


def _series_rows(xs, values):
    return [(float(x), float(np.real(v)), float(np.imag(v))) for x, v in zip(xs, values)]


def _series_doc(name: str, xs, values) -> dict:
    values = np.asarray(values)
    return {name: [float(x) for x in xs], "re": [float(v) for v in values.real],
            "im": [float(v) for v in values.imag]}


# --------------------------------------------------------------------------- helpers


def _load_state(path) -> UniformCMPS | FiniteCMPS:
    return io.read_state(path)


def _require_uniform(state, command: str) -> UniformCMPS:
    if not isinstance(state, UniformCMPS):
        raise ShapeError(f"'{command}' needs a uniform state")
    return state


def _require_finite(state, command: str) -> FiniteCMPS:
    if not isinstance(state, FiniteCMPS):
        raise ShapeError(f"'{command}' needs a finite state")
    return state


def _parse_interaction(text: str | None):
    if text is None:
        return None
    kind, _, params = text.partition(":")
    try:
        values = [float(v) for v in params.split(",")] if params else []
    except ValueError:
        raise ValidationError(f"cannot parse interaction parameters {params!r}", "--interaction") from None
    if kind == "delta" and len(values) == 1:
        return finite.InteractionKernel.delta(values[0])
    if kind == "exp" and len(values) == 2:
        return finite.InteractionKernel.exponential(values[0], values[1])
    raise ValidationError("interaction must be 'delta:c' or 'exp:c,l'", "--interaction")


def _fixed_point_residuals(fp) -> dict:
    return {"fixed_point_left": fp.residual_l, "fixed_point_right": fp.residual_r, "gap": fp.gap,
            "method": fp.method}


# --------------------------------------------------------------------------- commands


def cmd_validate(args, rep: Reporter) -> int:
    state = _load_state(args.input)
    result = {"valid": True, "kind": "uniform" if isinstance(state, UniformCMPS) else "finite",
              "D": state.D, "species": list(state.species.names)}
    if isinstance(state, FiniteCMPS):
        result.update({"N": state.N, "L": state.L, "boundary": state.boundary})
    rep.emit("validate", result, args.out)
    return EXIT_OK


def cmd_check(args, rep: Reporter) -> int:
    state = _load_state(args.input)
    if args.order == 1:
        report = regularity.check_first_order(state, args.tol)
    else:
        report = regularity.check_higher_order(state, args.order, tol=args.tol)
    result = {"order": report.order, "species": list(state.species.names),
              "residuals": [[float(v) for v in row] for row in report.residuals],
              "max_residual": report.max_residual, "passed": report.passed}
    passed = report.passed
    if args.parity:
        parity = io.read_parity(args.parity)
        ok, table = regularity.check_parity(_require_uniform(state, "check --parity"), parity, args.tol)
        result["parity"] = {"passed": ok, "residuals": table}
        passed = passed and ok
    result["passed"] = passed
    if not passed:
        rep.warn("RegularityViolation", f"state fails the order-{args.order} regularity check"
                 + (" or the parity structure" if args.parity else ""))
    rep.emit("check", result, args.out)
    return EXIT_OK if passed else EXIT_VALIDATION


def cmd_gauge(args, rep: Reporter) -> int:
    state = _load_state(args.input)
    result: dict = {"to": args.to}
    if isinstance(state, UniformCMPS):
        if args.to == "qzero":
            raise ShapeError("the Q-elimination gauge applies to finite states")
        fn = gauge.left_canonicalize_uniform if args.to == "left" else gauge.right_canonicalize_uniform
        new, g, diag = fn(state, rep.config.dense_budget)
        result["spectrum"] = [float(v) for v in diag]
        res = (left_orthonormal_residual if args.to == "left" else right_orthonormal_residual)(new)
        rep.residuals["orthonormality"] = res
    else:
        if args.to == "right":
            raise ShapeError("right orthonormalization is available for uniform states only")
        if args.to == "left":
            new, g = gauge.left_orthonormalize_finite(state)
            pointwise = gauge.pointwise_left_residual(new)
            bulk = pointwise[max(1, len(pointwise) // 20):]
            rep.residuals["orthonormality_bulk"] = float(np.max(bulk))
        else:
            g = gauge.q_elimination_gauge(state)
            new = gauge.eliminate_Q_gauge(state)
            rep.residuals["q_norm"] = float(np.max(np.linalg.norm(new.Q, axis=(1, 2))))
        result["condition_number"] = float(np.max(np.linalg.cond(g)))
    io.write_state(new, args.out)
    if args.emit_g:
        Path(args.emit_g).write_text(io.dumps(io.gauge_to_dict(g)))
    result["output"] = args.out
    rep.emit("gauge", result, None)
    return EXIT_OK


def cmd_finite(args, rep: Reporter) -> int:
    state = _require_finite(_load_state(args.input), "finite")
    pr = finite.propagate(state)
    rep.residuals["norm_deviation"] = pr.norm_deviation
    x = state.grid
    obs = args.observable
    if obs == "norm":
        rep.emit("finite", {"observable": obs, "value": pr.norm}, args.out)
        return EXIT_OK
    if obs == "energy":
        v = io.read_potential(args.potential, state.N + 1) if args.potential else None
        kin, pot, inter = finite.energy(state, args.mass, v, _parse_interaction(args.interaction), pr)
        result = {"observable": obs, "kinetic": kin, "potential": pot, "interaction": inter,
                  "total": kin + pot + inter}
        rep.emit("finite", result, args.out)
        return EXIT_OK
    alpha = args.species
    beta = args.beta if args.beta is not None else alpha
    if obs == "density":
        values = finite.density_profile(state, _species_key(alpha), _species_key(beta), pr)
    else:
        y = float(x[int(np.argmin(np.abs(x - args.y)))])
        values = finite.two_point_profile(state, _species_key(alpha), _species_key(beta), y, pr)
    if rep.wants_csv(args.out):
        rep.emit_text(_csv_text(["x", "re", "im"], _series_rows(x, values)), args.out)
    else:
        result = {"observable": obs, **_series_doc("x", x, values)}
        if obs == "g2":
            result["y"] = float(x[int(np.argmin(np.abs(x - args.y)))])
        rep.emit("finite", result, args.out)
    return EXIT_OK


def _species_key(value):
    if value is None:
        return 0
    return int(value) if str(value).isdigit() else value


def cmd_uniform(args, rep: Reporter) -> int:
    state = _require_uniform(_load_state(args.input), "uniform")
    budget = rep.config.dense_budget
    ns, fp = uniform.normalize(state, budget)
    rep.residuals.update(_fixed_point_residuals(fp))
    parity = io.read_parity(args.parity) if args.parity else None
    alpha = _species_key(args.species)
    beta = _species_key(args.beta) if args.beta is not None else alpha
    obs = args.observable
    threads = rep.config.threads

    if obs in ("np", "cutoff") and not regularity.check_first_order(ns).passed:
        rep.warn("RegularityWarning", "state violates the regularity condition; the p^-4 tail is not guaranteed")

    if obs == "density":
        result = {"observable": obs, "value": uniform.density(ns, fp, alpha, beta)}
    elif obs == "energy":
        v = None
        if args.potential:
            v = float(io.read_potential(args.potential, 1)[0])
        e = uniform.energy_densities(ns, fp, args.mass, v, _parse_interaction(args.interaction), budget)
        result = {"observable": obs, "kinetic": e.kinetic, "potential": e.potential,
                  "interaction": e.interaction, "total": e.kinetic + e.potential + e.interaction}
        rep.residuals["imag_discarded"] = e.imag_discarded
    elif obs == "xi":
        result = {"observable": obs, "value": uniform.correlation_length(ns, fp, dense_budget=budget)}
    elif obs == "cutoff":
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", uniform.RegularityWarning)
            lam = uniform.uv_cutoff(ns, fp, alpha, beta)
        result = {"observable": obs, "value": lam, "tail_coefficient": uniform.tail_coefficient(ns, fp, alpha, beta)}
    elif obs == "corr":
        xs = np.linspace(-args.xmax, args.xmax, args.xn) if args.negative else np.linspace(0.0, args.xmax, args.xn)
        series = uniform.correlation(ns, fp, alpha, beta, xs, parity, budget, threads)
        if rep.wants_csv(args.out):
            rep.emit_text(_csv_text(["x", "re", "im"], _series_rows(xs, series.values)), args.out)
            return EXIT_OK
        result = {"observable": obs, "long_range": series.long_range, **_series_doc("x", xs, series.values)}
    elif obs == "np":
        pmax = args.pmax if args.pmax is not None else 100.0 * uniform.transfer_norm(ns)
        ps = np.linspace(pmax / args.pn, pmax, args.pn)
        occ = uniform.momentum_occupation(ns, fp, alpha, beta, ps, parity, budget, threads)
        if rep.wants_csv(args.out):
            rep.emit_text(_csv_text(["p", "re", "im"], _series_rows(ps, occ.values)), args.out)
            return EXIT_OK
        result = {"observable": obs, "condensate_weight": occ.condensate_weight, **_series_doc("p", ps, occ.values)}
    else:  # match
        if not args.other:
            raise ValidationError("'match' needs --other", "--other")
        other = _require_uniform(_load_state(args.other), "uniform")
        ns2, _ = uniform.normalize(other, budget)
        m = uniform.match_states(ns, ns2, fp)
        result = {"observable": obs, "lambda": m.lam, "equivalent": m.equivalent, "phi": m.phi,
                  "g": None if m.g is None else m.g}
        if m.residual is not None:
            rep.residuals["match"] = m.residual
    rep.emit("uniform", result, args.out)
    return EXIT_OK


def cmd_tangent(args, rep: Reporter) -> int:
    base = _load_state(args.base)
    if isinstance(base, UniformCMPS):
        ns, fp = uniform.normalize(base, rep.config.dense_budget)
        rep.residuals.update(_fixed_point_residuals(fp))
        t1 = io.read_tangent(args.t1, ns)
        t2 = io.read_tangent(args.t2, ns)
        if args.p is not None:
            t1 = tangent.TangentUniform(t1.V, t1.W, args.p)
            t2 = tangent.TangentUniform(t2.V, t2.W, args.p)
        delta, extra = tangent.overlap_uniform(ns, fp, t1, t2, rep.config.dense_budget)
        result = {"kind": "uniform", "p1": t1.p, "p2": t2.p, "delta_coefficient": delta, "p0_extra": extra,
                  "base_overlap_t1": tangent.base_overlap_uniform(ns, fp, t1),
                  "base_overlap_t2": tangent.base_overlap_uniform(ns, fp, t2)}
    else:
        pr = finite.propagate(base)
        rep.residuals["norm_deviation"] = pr.norm_deviation
        t1 = io.read_tangent(args.t1, base)
        t2 = io.read_tangent(args.t2, base)
        result = {"kind": "finite", "overlap": tangent.overlap_finite(base, t1, t2, pr), "norm": pr.norm,
                  "base_overlap_t1": tangent.base_overlap_finite(base, t1, pr),
                  "base_overlap_t2": tangent.base_overlap_finite(base, t2, pr)}
    rep.emit("tangent", result, args.out)
    return EXIT_OK


def lattice_table(state: UniformCMPS, a0: float, halvings: int, dense_budget: int | None = None) -> list:
    """Rows ``(a, observable, error, ratio)`` comparing lattice and continuum values.

    Densities use the leading-order tensors with two particles per site; the
    kinetic density uses cell tensors with three particles per site, since
    cutting at two leaves an O(1) kinetic error.
    """
    ns, fp = uniform.normalize(state, dense_budget)
    q = ns.q
    dens = sum(uniform.density(ns, fp, x, x) for x in range(q)).real
    kin = uniform.kinetic_density(ns, fp, 0.5).real  # mass 1/2 gives the bare <dpsi^dag dpsi>
    rows = []
    prev: dict = {}
    for k in range(halvings + 1):
        a = a0 / 2**k
        lead = lattice.lattice_observables(lattice.discretize(ns, a, 2))
        cell = lattice.lattice_observables(lattice.discretize(ns, a, 3, "cell"))
        errors = {"density": abs(lead.density - dens), "kinetic": abs(cell.kinetic_fd - kin),
                  "transfer_residual": lattice.lattice_transfer_check(ns, a)}
        for name, err in errors.items():
            ratio = prev[name] / err if name in prev and err > 0 else float("nan")
            rows.append((a, name, float(err), float(ratio)))
        prev = errors
    return rows


def cmd_lattice(args, rep: Reporter) -> int:
    state = _require_uniform(_load_state(args.input), "lattice-check")
    a0 = args.a if args.a is not None else 1e-2 / uniform.transfer_norm(state)
    if not a0 > 0:
        raise ValidationError("--a must be positive", "--a")
    rows = lattice_table(state, a0, args.halvings, rep.config.dense_budget)
    if rep.wants_csv(args.out):
        rep.emit_text(_csv_text(["a", "observable", "error", "ratio"], rows), args.out)
    else:
        rep.emit("lattice-check", {"rows": [{"a": a, "observable": o, "error": e, "ratio": r}
                                            for a, o, e, r in rows]}, args.out)
    return EXIT_OK


# --------------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cmps", description="Continuous matrix product state toolkit.")
    p.add_argument("--version", action="version", version=f"cmps {__version__}")
    common = _Parser(add_help=False)
    common.add_argument("--threads", type=int, default=1, help="worker threads for grid evaluations")
    common.add_argument("--dense-budget", type=int, default=None,
                        help="largest D handled densely (default: $CMPS_DENSE_BUDGET or 8)")
    common.add_argument("--format", choices=("json", "csv"), default="json", dest="output_format")
    common.add_argument("--seed", type=int, default=None)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("validate", parents=[common], help="validate a state file")
    s.add_argument("--input", required=True)
    s.add_argument("--out")

    s = sub.add_parser("check", parents=[common], help="regularity and parity checks")
    s.add_argument("--input", required=True)
    s.add_argument("--order", type=int, default=1)
    s.add_argument("--parity")
    s.add_argument("--tol", type=float, default=regularity.DEFAULT_TOL)
    s.add_argument("--out")

    s = sub.add_parser("gauge", parents=[common], help="canonical forms and gauge fixing")
    s.add_argument("--input", required=True)
    s.add_argument("--to", choices=("left", "right", "qzero"), required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--emit-g")

    s = sub.add_parser("finite", parents=[common], help="finite-system observables")
    s.add_argument("--input", required=True)
    s.add_argument("--observable", choices=("norm", "density", "g2", "energy"), required=True)
    s.add_argument("--species", default=None, help="species name or index (default: first)")
    s.add_argument("--beta", default=None, help="second species (default: same as --species)")
    s.add_argument("--y", type=float, default=0.0, help="reference point of g2 (nearest grid point)")
    s.add_argument("--mass", type=float, default=1.0)
    s.add_argument("--potential")
    s.add_argument("--interaction")
    s.add_argument("--out")

    s = sub.add_parser("uniform", parents=[common], help="thermodynamic-limit observables")
    s.add_argument("--input", required=True)
    s.add_argument("--observable", choices=("density", "energy", "corr", "np", "cutoff", "xi", "match"),
                   required=True)
    s.add_argument("--species", default=None)
    s.add_argument("--beta", default=None)
    s.add_argument("--parity")
    s.add_argument("--mass", type=float, default=1.0)
    s.add_argument("--potential")
    s.add_argument("--interaction")
    s.add_argument("--pmax", type=float, default=None)
    s.add_argument("--pn", type=int, default=50)
    s.add_argument("--xmax", type=float, default=10.0)
    s.add_argument("--xn", type=int, default=50)
    s.add_argument("--negative", action="store_true", help="corr grid spans [-xmax, xmax]")
    s.add_argument("--other")
    s.add_argument("--out")

    s = sub.add_parser("tangent", parents=[common], help="tangent-vector overlaps")
    s.add_argument("--base", required=True)
    s.add_argument("--t1", required=True)
    s.add_argument("--t2", required=True)
    s.add_argument("--p", type=float, default=None)
    s.add_argument("--out")

    s = sub.add_parser("lattice-check", parents=[common], help="convergence against the lattice oracle")
    s.add_argument("--input", required=True)
    s.add_argument("--a", type=float, default=None)
    s.add_argument("--halvings", type=int, default=4)
    s.add_argument("--out")
    return p


COMMANDS = {"validate": cmd_validate, "check": cmd_check, "gauge": cmd_gauge, "finite": cmd_finite,
            "uniform": cmd_uniform, "tangent": cmd_tangent, "lattice-check": cmd_lattice}


def _error(exc: BaseException, code: int) -> int:
    doc = io.error_document(exc)
    doc["exit_code"] = code
    sys.stderr.write(io.dumps(doc, indent=0))
    return code


def main(argv: list | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        return _error(exc, EXIT_USAGE)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    try:
        config = RunConfig(dense_budget=dense_budget(args.dense_budget), seed=args.seed,
                           output_format=args.output_format, threads=args.threads)
        rep = Reporter(args, config)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            code = COMMANDS[args.command](args, rep)
        for w in caught:
            sys.stderr.write(io.dumps({"warning": w.category.__name__, "message": str(w.message)}, indent=0))
        return code
    except CMPSError as exc:
        return _error(exc, exc.exit_code)
    except (ArithmeticError, np.linalg.LinAlgError) as exc:
        return _error(exc, EXIT_NUMERICAL)
    except OSError as exc:
        return _error(exc, EXIT_VALIDATION)


if __name__ == "__main__":
    sys.exit(main())
