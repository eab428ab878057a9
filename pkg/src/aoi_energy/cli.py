"""Command-line front end.

Four subcommands: ``solve`` (single-point solve, threshold dump, structure
certificates), ``check`` (re-run the certificates on saved artifacts),
``eval`` (score explicit policies exactly or by Monte Carlo), and ``sweep``
(solve along one parameter axis and score the solved policy against the
baselines at every point, appending rows to a results CSV).

Exit codes: 0 success, 2 usage or malformed input, 3 solver non-convergence,
4 structural violation, 5 truncation inadequacy (including exact evaluations
that hit visible boundary mass).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from .evaluation import (
    BoundaryMassError,
    EvalReport,
    SimConfig,
    append_report_row,
    evaluate_exact,
    report_row_values,
    simulate,
    write_report_rows,
)
from .model import SystemParams
from .policies import PolicySpec, parse_policy_spec, policy_label
from .solver import (
    ConvergenceError,
    QTable,
    SolverConfig,
    ThresholdStructureError,
    ValueTable,
    bellman_qvalues,
    check_truncation_adequacy,
    extract_thresholds,
    greedy_policy,
    read_value_csv,
    solve,
    write_value_csv,
)
from .structure import DEFAULT_TOLERANCE, certify_structure

__all__ = [
    "EXIT_OK",
    "EXIT_USAGE",
    "EXIT_NO_CONVERGENCE",
    "EXIT_STRUCTURE",
    "EXIT_TRUNCATION",
    "StructureViolationError",
    "SweepSpec",
    "run_solve",
    "run_check",
    "run_eval",
    "run_sweep",
    "main",
]

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_STRUCTURE = 4
EXIT_TRUNCATION = 5

# p=0 rows are evaluation-only; the solver sees this clamped value instead.
P_SOLVE_CLAMP = 1e-9

_AXES = {"omega": "energy_weight", "lambda": "harvest_prob", "p": "erasure_prob"}


class StructureViolationError(RuntimeError):
    """A structure certificate came back false on a solved instance."""


@dataclass(frozen=True)
class SweepSpec:
    """One-axis experiment: solve and score all policies at every value."""

    axis: str
    values: tuple[float, ...]
    fixed: SystemParams
    policies: tuple[str, ...]
    sim: SimConfig
    out_path: str
    epsilon: float = 1e-9
    max_iters: int = 500_000
    structure_tol: float = DEFAULT_TOLERANCE

    def __post_init__(self) -> None:
        if self.axis not in _AXES:
            raise ValueError(f"axis must be one of {sorted(_AXES)}, got {self.axis!r}")
        if not self.values:
            raise ValueError("sweep needs at least one axis value")
        for value in self.values:
            if self.axis == "p" and not 0.0 <= value < 1.0:
                raise ValueError(f"p axis values must lie in [0, 1), got {value!r}")
            if self.axis == "lambda" and not 0.0 <= value <= 1.0:
                raise ValueError(f"lambda axis values must lie in [0, 1], got {value!r}")
            if self.axis == "omega" and value < 0.0:
                raise ValueError(f"omega axis values must be >= 0, got {value!r}")
        if not self.policies:
            raise ValueError("sweep needs at least one policy")


def _point_params(fixed: SystemParams, axis: str, value: float) -> SystemParams:
    return replace(fixed, **{_AXES[axis]: value})


def _derived_seed(master: int, point: int, policy: int) -> int:
    sequence = np.random.SeedSequence(entropy=[master, point, policy])
    return int(sequence.generate_state(1, np.uint64)[0])


def _evaluate_with_fallback(
    spec: PolicySpec,
    params: SystemParams,
    sim: SimConfig,
    mc_seed: int,
) -> tuple[EvalReport, int, str]:
    """Exact where possible, Monte Carlo otherwise.

    Exact evaluation retries with a doubled age cap (from max(aoi_cap, 400),
    twice) when the boundary carries visible mass; policies whose age tail
    dies too slowly for that fall back to simulation. Returns the report,
    the seed to record, and a note describing any deviation.
    """
    base_cap = max(params.aoi_cap, 400)
    for rung, cap in enumerate((base_cap, 2 * base_cap, 4 * base_cap)):
        try:
            report = evaluate_exact(spec, replace(params, aoi_cap=cap))
            note = "" if rung == 0 else f"eval_aoi_cap={cap}"
            return report, sim.seed, note
        except BoundaryMassError:
            continue
    mc = SimConfig(
        horizon=sim.horizon,
        replications=sim.replications,
        warmup=sim.warmup,
        seed=mc_seed,
        initial_state=sim.initial_state,
    )
    return simulate(spec, params, mc), mc_seed, "mc_fallback=boundary_mass"


def run_sweep(spec: SweepSpec) -> None:
    """Solve along the axis and score every policy at every grid point.

    Any solver failure, threshold-structure failure, or certificate failure
    aborts the whole sweep naming the offending grid point; nothing is
    written in that case. Output rows are buffered and written once, in axis
    order and then policy order, so equal seeds give byte-identical files.
    """
    rows: list[list] = []
    solver_cfg = SolverConfig(epsilon=spec.epsilon, max_iters=spec.max_iters)
    for point_idx, value in enumerate(spec.values):
        point = _point_params(spec.fixed, spec.axis, value)
        solver_point = point
        solved_note = ""
        if spec.axis == "p" and value == 0.0:
            solver_point = replace(point, erasure_prob=P_SOLVE_CLAMP)
            solved_note = f"solver_p_clamped={P_SOLVE_CLAMP:.0e}"
        where = f"{spec.axis}={value!r}"
        try:
            v, q = solve(solver_point, solver_cfg)
        except ConvergenceError as exc:
            raise ConvergenceError(
                f"sweep aborted at {where}: {exc}", span=exc.span, iterations=exc.iterations
            ) from exc
        try:
            thresholds = extract_thresholds(greedy_policy(v, q, solver_point), solver_point)
        except ThresholdStructureError as exc:
            raise ThresholdStructureError(
                f"sweep aborted at {where}: {exc}", witnesses=exc.witnesses
            ) from exc
        certificate = certify_structure(v, q, solver_point, spec.structure_tol)
        if not certificate.all_pass:
            raise StructureViolationError(
                f"sweep aborted at {where}: certificate failed, {certificate.to_json()}"
            )
        for policy_idx, text in enumerate(spec.policies):
            if text == "solved":
                policy: PolicySpec = thresholds
                label = "solved"
            else:
                policy = parse_policy_spec(text)
                label = policy_label(policy)
            report, seed, note = _evaluate_with_fallback(
                policy,
                point,
                spec.sim,
                _derived_seed(spec.sim.seed, point_idx, policy_idx),
            )
            notes = ";".join(n for n in ((solved_note if text == "solved" else ""), note) if n)
            rows.append(report_row_values(label, point, report, seed, notes))
    write_report_rows(spec.out_path, rows)


def _load_params(path: str) -> SystemParams:
    with open(path) as handle:
        return SystemParams.from_json(handle.read())


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    return SolverConfig(epsilon=args.epsilon, max_iters=args.max_iters)


def _apply_overrides(params: SystemParams, args: argparse.Namespace) -> SystemParams:
    if getattr(args, "aoi_cap", None) is not None:
        params = replace(params, aoi_cap=args.aoi_cap)
    return params


def run_solve(args: argparse.Namespace) -> int:
    params = _apply_overrides(_load_params(args.params), args)
    cfg = _solver_config(args)
    try:
        v, q = solve(params, cfg)
    except ConvergenceError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    try:
        thresholds = extract_thresholds(greedy_policy(v, q, params), params)
    except ThresholdStructureError as exc:
        print(f"threshold structure violated: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    report = certify_structure(v, q, params, args.structure_tol)

    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    write_value_csv(os.path.join(out_dir, "values.csv"), v)
    with open(os.path.join(out_dir, "thresholds.json"), "w") as handle:
        handle.write(thresholds.to_json() + "\n")
    thresholds.write_csv(os.path.join(out_dir, "thresholds.csv"))
    with open(os.path.join(out_dir, "structure_report.json"), "w") as handle:
        handle.write(report.to_json() + "\n")

    print(f"gain {v.gain!r} after {v.iterations} sweeps (span {v.final_span:.3e})")
    print("thresholds " + json.dumps(list(thresholds.thresholds)))
    print("certificates " + report.to_json())
    if not report.all_pass:
        print("structure certificate failed", file=sys.stderr)
        return EXIT_STRUCTURE
    if args.check_truncation:
        if not check_truncation_adequacy(thresholds, params, cfg):
            print(
                f"aoi_cap={params.aoi_cap} is inadequate: doubling it moves thresholds",
                file=sys.stderr,
            )
            return EXIT_TRUNCATION
        print("truncation adequate")
    return EXIT_OK


def run_check(args: argparse.Namespace) -> int:
    params = _load_params(args.params)
    values = read_value_csv(args.values)
    if values.shape != params.grid_shape:
        raise ValueError(
            f"value CSV grid {values.shape} does not match params grid {params.grid_shape}"
        )
    q_idle, q_tx = bellman_qvalues(values, params)
    v = ValueTable(values=values, gain=float("nan"), iterations=0, final_span=float("nan"))
    q = QTable(values=np.stack([q_idle, q_tx], axis=-1))
    report = certify_structure(v, q, params, args.structure_tol)
    print(report.to_json())
    return EXIT_OK if report.all_pass else EXIT_STRUCTURE


def run_eval(args: argparse.Namespace) -> int:
    params = _apply_overrides(_load_params(args.params), args)
    sim = SimConfig(horizon=args.horizon, replications=args.reps, seed=args.seed)
    for text in args.policies.split(","):
        policy = parse_policy_spec(text.strip())
        label = policy_label(policy)
        note = ""
        if args.method == "exact":
            report = evaluate_exact(policy, params)
        elif args.method == "mc":
            report = simulate(policy, params, sim)
        else:
            try:
                report = evaluate_exact(policy, params)
            except BoundaryMassError:
                report = simulate(policy, params, sim)
                note = "mc_fallback=boundary_mass"
        print(
            f"{label}: avg_total {report.avg_total_cost!r} "
            f"(aoi {report.avg_aoi!r}, energy {report.avg_weighted_energy!r}, "
            f"ci95 {report.ci_halfwidth_95!r}, {report.method})"
        )
        if args.out:
            append_report_row(args.out, label, params, report, args.seed, note)
    return EXIT_OK


def _run_sweep_command(args: argparse.Namespace) -> int:
    params = _apply_overrides(_load_params(args.params), args)
    values = tuple(float(v) for v in args.values.split(","))
    policies = tuple(p.strip() for p in args.policies.split(","))
    spec = SweepSpec(
        axis=args.axis,
        values=values,
        fixed=params,
        policies=policies,
        sim=SimConfig(horizon=args.horizon, replications=args.reps, seed=args.seed),
        out_path=args.out,
        epsilon=args.epsilon,
        max_iters=args.max_iters,
        structure_tol=args.structure_tol,
    )
    run_sweep(spec)
    print(f"wrote {len(values) * len(policies)} rows to {args.out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="aoi-energy",
        description="Solve and evaluate the age-vs-backup-energy trade-off",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser, *, solver: bool = False, mc: bool = False) -> None:
        p.add_argument("--params", required=True, help="system parameter JSON file")
        if solver:
            p.add_argument("--epsilon", type=float, default=1e-9, help="span stopping tolerance")
            p.add_argument("--max-iters", type=int, default=500_000)
            p.add_argument(
                "--structure-tol", type=float, default=DEFAULT_TOLERANCE,
                help="certificate tolerance",
            )
        p.add_argument("--aoi-cap", type=int, default=None, help="override the age cap")
        if mc:
            p.add_argument("--horizon", type=int, default=200_000, help="slots per replication")
            p.add_argument("--reps", type=int, default=10, help="Monte Carlo replications")
            p.add_argument("--seed", type=int, default=0)

    p_solve = sub.add_parser("solve", help="solve one instance and dump artifacts")
    common(p_solve, solver=True)
    p_solve.add_argument("--out", default=None, help="output directory (default: cwd)")
    p_solve.add_argument(
        "--check-truncation", action="store_true",
        help="re-solve at twice the age cap and require identical thresholds",
    )

    p_check = sub.add_parser("check", help="re-run structure certificates on saved values")
    p_check.add_argument("--params", required=True)
    p_check.add_argument("--values", required=True, help="value CSV from solve")
    p_check.add_argument("--structure-tol", type=float, default=DEFAULT_TOLERANCE)

    p_eval = sub.add_parser("eval", help="evaluate explicit policies")
    common(p_eval, mc=True)
    p_eval.add_argument(
        "--policies", required=True,
        help="comma list: zero-wait, energy-first, periodic:5, random:0.5, threshold:tp.json",
    )
    p_eval.add_argument(
        "--method", choices=("auto", "exact", "mc"), default="auto",
        help="auto tries exact first and falls back to Monte Carlo",
    )
    p_eval.add_argument("--out", default=None, help="append result rows to this CSV")

    p_sweep = sub.add_parser("sweep", help="solve along one axis and score all policies")
    common(p_sweep, solver=True, mc=True)
    p_sweep.add_argument("--axis", required=True, choices=sorted(_AXES))
    p_sweep.add_argument("--values", required=True, help="comma list of axis values")
    p_sweep.add_argument(
        "--policies", required=True,
        help="comma list of policy specs; 'solved' means the per-point solved policy",
    )
    p_sweep.add_argument("--out", required=True, help="results CSV path")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    runners = {
        "solve": run_solve,
        "check": run_check,
        "eval": run_eval,
        "sweep": _run_sweep_command,
    }
    try:
        return runners[args.command](args)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (ThresholdStructureError, StructureViolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STRUCTURE
    except BoundaryMassError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRUNCATION
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
