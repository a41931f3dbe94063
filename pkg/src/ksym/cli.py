"""Command-line entry point ``ksym``.

Exit codes: 0 every verdict passed, 1 some numeric verdict failed, 2 bad
input (problem file, expression, CSV schema, unknown catalog name), 3 runtime
failure (blow-up, integrability, singular Legendre map).
"""

import argparse
import io
import logging
import os
import sys

import numpy as np

from . import catalog
from . import hamiltonian as ham
from . import lagrangian as lag
from .errors import DomainError, KsymError, ParseError, PreconditionError, SchemaError
from .geometry import (
    PhaseGrid,
    PhasePointL,
    closedness_defect,
    closedness_defects,
    integral_section_defects,
    read_grid_csv,
    sample_box,
    write_atomic,
)
from .integrate import commutator_defect, compose_solution, path_independence_defect, solve_characteristics
from .problemfile import ProblemFileError, load_problem
from .report import Report

EXIT_PASS, EXIT_FAIL, EXIT_INPUT, EXIT_RUNTIME = 0, 1, 2, 3
REGULARITY_POINTS = 101

log = logging.getLogger("ksym")


class InputError(KsymError):
    pass


def _load(source):
    if source.startswith("builtin:"):
        name = source[len("builtin:"):]
        try:
            return catalog.catalog_problem(name)
        except KeyError as exc:
            raise InputError(exc.args[0]) from None
    if not os.path.isfile(source):
        raise InputError(f"{source}: no such file")
    return load_problem(source)


def _sample(pf):
    t = pf.tolerances
    return sample_box(t.sample_min, t.sample_max, pf.n, t.sample_points, t.sample_cap)


def _require_section(pf):
    if not pf.section:
        raise InputError(f"{pf.filename}: this command needs a [section]")


def _require_grid(pf):
    if pf.grid is None:
        raise InputError(f"{pf.filename}: this command needs a [grid]")


def _grid_tol(pf, spacing, override=None):
    if override is not None:
        return override
    return pf.tolerances.grid_c * float(np.max(spacing)) ** 2


def _check_hj(pf, problem, report, tol):
    """Preconditions then the HJ residual; returns False when a precondition failed."""
    t = pf.tolerances
    sample = _sample(pf)
    report.info("sample.points", len(sample))
    report.info("sample.box", [t.sample_min, t.sample_max])
    if pf.kind == "hamiltonian":
        closed = report.verdict("closedness", closedness_defect(problem.gamma, sample), t.closedness)
        if not closed:
            report.fail("hj", "section is not closed; the HJ condition is not evaluated")
            return False
        report.verdict("hj", ham.hj_residual(problem.H, problem.gamma, sample, tol=np.inf), tol)
        return True

    stride = max(1, len(sample) // REGULARITY_POINTS)
    worst = None
    for q in sample[::stride]:
        r = lag.regularity(problem.L, PhasePointL(q, problem.X(q)))
        if worst is None or r.min_pivot < worst.min_pivot:
            worst = r
    report.info("regularity.min_pivot", worst.min_pivot)
    report.info("regularity.condition", worst.condition)
    if not worst.regular:
        report.fail("regularity", f"velocity Hessian is singular (min pivot {worst.min_pivot:.3e})")
        return False
    report.info("regularity.verdict", "PASS")
    theta = lag.pullback_theta_L(problem.X, problem.L)
    defects = closedness_defects(theta, sample)
    closed = report.verdict("closedness", float(defects.max()), t.closedness)
    if not closed:
        a = int(np.argmax(defects))
        report.info("closedness.form", a + 1)
        report.fail("hj", "X^*omega_L does not vanish; the HJ condition is not evaluated")
        return False
    report.verdict("hj", lag.lagrangian_hj_residual(problem.L, problem.X, sample, tol=np.inf), tol)
    return True


def _field_on_q(pf, problem):
    if pf.kind == "hamiltonian":
        return ham.project_gamma(ham.build_hamiltonian_kvf(problem.H, problem.dims), problem.gamma)
    return problem.X


def _locate_max(report, name, defects, offset, grid):
    idx = np.unravel_index(int(np.argmax(defects)), defects.shape)
    node = [int(i) + offset for i in idx]
    t = [float(ax[i]) for ax, i in zip(grid.axes(), node)]
    report.info(f"{name}.max_node", node)
    report.info(f"{name}.max_t", t)


def _equation_check(pf, problem, report, grid, phase, tol):
    """Integral-section and Hamilton / Euler-Lagrange verdicts on a lattice."""
    bound = _grid_tol(pf, grid.spacing)
    if pf.section:
        defects = integral_section_defects(grid, _field_on_q(pf, problem))
        report.verdict("integral_section", float(defects.max()), bound)
        _locate_max(report, "integral_section", defects, 1, grid)
    if pf.kind == "hamiltonian":
        defects = ham.hamilton_defects(phase, problem.H)
        report.verdict("hamilton", float(defects.max()), _grid_tol(pf, grid.spacing, tol))
        _locate_max(report, "hamilton", defects, 1, grid)
    else:
        if any(m < 5 for m in grid.nodes):
            raise SchemaError(f"Euler-Lagrange check needs at least 5 nodes per axis, got {grid.nodes}")
        defects = lag.el_defects(grid, problem.L)
        report.verdict("euler_lagrange", float(defects.max()), _grid_tol(pf, grid.spacing, tol))
        _locate_max(report, "euler_lagrange", defects, 2, grid)


def cmd_check_hj(pf, args, report):
    _require_section(pf)
    with report.timed("check_hj"):
        _check_hj(pf, pf.build(), report, args.tol if args.tol is not None else pf.tolerances.hj)


def _csv_text(names, columns):
    buf = io.StringIO()
    np.savetxt(buf, np.hstack(columns), delimiter=",", fmt="%.17g", header=",".join(names), comments="")
    return buf.getvalue()


def cmd_solve(pf, args, report):
    _require_section(pf)
    _require_grid(pf)
    problem = pf.build()
    t = pf.tolerances
    with report.timed("check_hj"):
        ok = _check_hj(pf, problem, report, t.hj)
    if not report.passed:
        if not args.force:
            report.info("solve", "skipped: HJ check failed (use --force to integrate anyway)")
            return
        log.warning("HJ check failed; integrating anyway on request")
        if not ok:
            raise PreconditionError("cannot integrate: the section fails its precondition")

    X = _field_on_q(pf, problem)
    with report.timed("integrate"):
        report.verdict("commutator", commutator_defect(X, _sample(pf)), t.commutator)
        grid = solve_characteristics(X, pf.grid, tol=t.commutator, override_integrability=args.override_integrability)
        report.verdict(
            "path_independence",
            path_independence_defect(X, pf.grid, tol=t.commutator, override_integrability=True),
            t.path,
        )
    report.info("grid.nodes", list(grid.nodes))
    report.info("grid.spacing", [float(h) for h in grid.spacing])

    os.makedirs(args.out, exist_ok=True)
    psi_path = os.path.join(args.out, "psi.csv")
    grid.to_csv(psi_path)
    report.info("output.psi", psi_path)
    phase = None
    if pf.kind == "hamiltonian":
        phase = compose_solution(problem.gamma, grid)
        phase_path = os.path.join(args.out, "phase.csv")
        phase.to_csv(phase_path)
        report.info("output.phase", phase_path)
    else:
        names, cols = grid.columns()
        v = np.moveaxis(X(grid.q_batch()), (0, 1), (-2, -1))  # (*nodes, n, k)
        names += [f"v{i + 1}_{a + 1}" for a in range(grid.k) for i in range(grid.n)]
        cols.append(np.swapaxes(v, -1, -2).reshape(-1, grid.k * grid.n))
        vel_path = os.path.join(args.out, "velocity.csv")
        write_atomic(vel_path, _csv_text(names, cols))
        report.info("output.velocity", vel_path)
    with report.timed("residuals"):
        _equation_check(pf, problem, report, grid, phase, args.tol)


def _phase_from_columns(pf, problem, grid, extra):
    k, n = pf.k, pf.n
    if pf.kind == "hamiltonian":
        wanted = [f"p{a + 1}_{i + 1}" for a in range(k) for i in range(n)]
    else:
        wanted = [f"v{i + 1}_{a + 1}" for a in range(k) for i in range(n)]
    unknown = [c for c in extra if c not in wanted]
    if unknown:
        raise SchemaError(f"unexpected columns {unknown}; allowed after q1..q{n}: {wanted}")
    present = [c for c in wanted if c in extra]
    if present and len(present) != len(wanted):
        missing = [c for c in wanted if c not in extra]
        raise SchemaError(f"incomplete column block: missing {missing}")
    if pf.kind != "hamiltonian":
        return None
    if present:
        p = np.stack([extra[c] for c in wanted], axis=-1).reshape(grid.nodes + (k, n))
        return PhaseGrid(grid.t_min, grid.t_max, grid.steps, grid.values, p)
    if not pf.section:
        raise SchemaError(f"grid has no momentum columns {wanted} and the problem has no section to supply them")
    return compose_solution(problem.gamma, grid)


def cmd_verify(pf, args, report):
    problem = pf.build()
    header, grid, extra = read_grid_csv(args.grid, k=pf.k, n=pf.n)
    report.info("grid.file", args.grid)
    report.info("grid.columns", header)
    report.info("grid.nodes", list(grid.nodes))
    phase = _phase_from_columns(pf, problem, grid, extra)
    with report.timed("residuals"):
        _equation_check(pf, problem, report, grid, phase, args.tol)


def cmd_catalog(name):
    try:
        return catalog.catalog_text(name)
    except KeyError as exc:
        raise InputError(exc.args[0]) from None


def build_parser():
    parser = argparse.ArgumentParser(prog="ksym", description="Hamilton-Jacobi checks and solvers for k-symplectic field theories.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("file", help="problem file, or builtin:NAME for a catalog problem")
        p.add_argument("--tol", type=float, default=None, help="override the tolerance of the headline residual")
        p.add_argument("--report", metavar="PATH", help="also write the report to PATH")
        p.add_argument("--override-integrability", action="store_true", help="integrate even if the commutator check fails")

    common(sub.add_parser("check-hj", help="check the HJ condition for the section of a problem"))
    p = sub.add_parser("solve", help="integrate the characteristics and certify the field equations")
    common(p)
    p.add_argument("--out", required=True, metavar="DIR", help="directory for psi.csv and phase.csv / velocity.csv")
    p.add_argument("--force", action="store_true", help="integrate even if the HJ check fails")
    p = sub.add_parser("verify", help="recompute the field-equation residuals of a grid CSV")
    common(p)
    p.add_argument("--grid", required=True, metavar="CSV")
    p = sub.add_parser("catalog", help="print a built-in problem file")
    p.add_argument("name", help=f"one of: {', '.join(catalog.NAMES)}")
    return parser


COMMANDS = {"check-hj": cmd_check_hj, "solve": cmd_solve, "verify": cmd_verify}


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING, format="ksym: %(levelname)s: %(message)s")

    if args.command == "catalog":
        try:
            stdout.write(cmd_catalog(args.name))
        except InputError as exc:
            print(f"ksym: error: {exc}", file=stderr)
            return EXIT_INPUT
        return EXIT_PASS

    try:
        pf = _load(args.file)
        report = Report(args.command, args.file)
        report.info("kind", pf.kind)
        report.info("n", pf.n)
        report.info("k", pf.k)
        COMMANDS[args.command](pf, args, report)
    except (InputError, ProblemFileError, ParseError, SchemaError) as exc:
        print(f"ksym: input error: {exc}", file=stderr)
        return EXIT_INPUT
    except (PreconditionError, DomainError, KsymError, FloatingPointError) as exc:
        print(f"ksym: runtime error: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"ksym: input error: {exc}", file=stderr)
        return EXIT_INPUT

    stdout.write(report.text())
    if args.report:
        report.write(args.report)
    return EXIT_PASS if report.passed else EXIT_FAIL


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
