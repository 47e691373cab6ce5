"""Command-line orchestration.

Subcommands: gen | bound | optimize | sweep | inspect | sensitivity.
Exit codes: 0 success, 2 usage/config error, 3 data validation error,
4 solver failure. The worker-pool width comes from --threads, overridden by
the MEMDES_THREADS environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import bounds, generators, opb, oracles
from .config import RunSpec, load_run_config
from .errors import (ConfigurationError, FormatError, InfeasibleWordError,
                     MemdesError, SolverError, ValidationError)
from .global_step import (memetic_optimize, pareto_sweep, read_word_file,
                          write_convergence_csv, write_frontier_csv,
                          write_word_file)
from .local_step import sensitivity_map, write_sensitivity_csv
from .model import ObjectiveKind, ObjectiveSpec, Word
from .objectives import objective_value
from .reanalysis import init_state

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_SOLVER = 4


def _resolve_threads(flag_value) -> int:
    env = os.environ.get("MEMDES_THREADS")
    if env is not None:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigurationError(f"MEMDES_THREADS={env!r} is not an integer") from exc
    if flag_value is not None:
        return max(1, int(flag_value))
    return max(1, os.cpu_count() or 1)


def _load_bundle(path: str):
    try:
        return opb.read_bundle(path)
    except FileNotFoundError as exc:
        raise ValidationError("bundle file", str(exc)) from exc


def cmd_gen(args) -> int:
    if args.kind == "rlc":
        bundle = generators.gen_rlc_ladder(
            n=args.n, R=args.res, L=args.ind, C=args.cap,
            coupling=args.coupling, f=args.f)
    elif args.kind == "random":
        bundle = generators.gen_random_passive(
            n=args.n, seed=args.seed, loss_fraction=args.loss_fraction,
            n_chip=args.n_chip, n_field_rows=args.n_field_rows)
    else:  # wire
        bundle = generators.gen_wire_array(
            n_dip=args.ndip, length_over_lambda=args.length,
            spacing_over_lambda=args.spacing,
            segments_per_dipole=args.segments, wire_radius=args.radius,
            conductivity=args.sigma, f=args.f)
    opb.write_bundle(bundle, args.out)
    print(f"wrote {args.out}")
    print(f"bundle_hash={opb.bundle_hash(bundle)} n_dof={bundle.n_dof} "
          f"n_opt={bundle.n_opt} ka={bundle.meta.ka:.6g}")
    print("validation: ok")
    return EXIT_OK


def cmd_bound(args) -> int:
    bundle = _load_bundle(args.bundle)
    try:
        if args.metric == "q":
            result = bounds.q_lower_bound(bundle, tm=False)
        elif args.metric == "qtm":
            result = bounds.q_lower_bound(bundle, tm=True)
        elif args.metric == "gain":
            result = bounds.realized_gain_bound(
                bundle, field_index=args.field_index, Z0=complex(args.z0),
                v_in=args.vin, excitation_index=args.excitation_index)
        else:  # pabs
            result = bounds.absorbed_power_bound(
                bundle, excitation_index=args.excitation_index)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    record = {
        "metric": args.metric,
        "value": result.value,
        "multipliers": list(result.multipliers),
        "residuals": {k: float(v) for k, v in result.residuals.items()},
        "n_dof": bundle.n_dof,
        "bundle_hash": opb.bundle_hash(bundle),
        "converged": result.converged,
        "flags": list(result.flags),
    }
    print(json.dumps(record))
    return EXIT_OK


def _finalize_objective(spec: RunSpec, bundle) -> ObjectiveSpec:
    objective = spec.objective
    if spec.q_lb_auto or (objective.kind == ObjectiveKind.Q_MATCHED
                          and objective.q_lb_ref is None):
        qlb = bounds.q_lower_bound(bundle).value
        objective = dataclasses.replace(objective, q_lb_ref=float(qlb))
    return objective


def _bound_for_summary(spec: RunSpec, bundle, objective: ObjectiveSpec):
    if spec.bound_value is not None:
        return spec.bound_value
    if not spec.bound_auto:
        return None
    kind = objective.kind
    if kind in (ObjectiveKind.Q, ObjectiveKind.Q_MATCHED):
        return bounds.q_lower_bound(bundle).value
    if kind == ObjectiveKind.REALIZED_GAIN:
        return bounds.realized_gain_bound(
            bundle, field_index=objective.field_index, Z0=objective.Z0,
            excitation_index=objective.excitation_index).value
    return bounds.absorbed_power_bound(
        bundle, excitation_index=objective.excitation_index).value


def cmd_optimize(args) -> int:
    spec = load_run_config(args.config)
    bundle = _load_bundle(spec.bundle_path)
    objective = _finalize_objective(spec, bundle)
    threads = _resolve_threads(args.threads if args.threads else spec.threads)

    out_dir = Path(spec.config.output_dir or Path(args.config).parent)
    out_dir.mkdir(parents=True, exist_ok=True)

    result = memetic_optimize(bundle, objective, spec.config, threads=threads)
    bhash = opb.bundle_hash(bundle)

    csv_path = out_dir / "convergence.csv"
    write_convergence_csv(result.log, csv_path,
                          log_wall_time=spec.config.log_wall_time)
    word_path = out_dir / "best_word.txt"
    write_word_file(result.best.word, bhash, word_path)

    bound = _bound_for_summary(spec, bundle, objective)
    summary = {
        "bundle_hash": bhash,
        "n_dof": bundle.n_dof,
        "n_opt": bundle.n_opt,
        "global_iters_used": result.iterations_used,
        "wall_time_s": result.wall_time_s,
        "best_f": result.best.f_val,
        "bound": bound,
        "f_over_bound": (result.best.f_val / bound
                         if bound not in (None, 0) else None),
        "removals_evaluated": result.removals_evaluated,
        "additions_evaluated": result.additions_evaluated,
        "threads": threads,
    }
    summary_path = out_dir / "summary.json"
    summary_path.write_text(json.dumps(summary, indent=2) + "\n")
    print(f"best_f={result.best.f_val!r} iters={result.iterations_used} "
          f"outputs in {out_dir}")
    return EXIT_OK


def _parse_zeta_spec(spec: str) -> np.ndarray:
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigurationError("zeta spec must be start:stop:count")
    start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    if count < 1:
        raise ConfigurationError("zeta count must be >= 1")
    return np.linspace(start, stop, count)


def cmd_sweep(args) -> int:
    spec = load_run_config(args.config)
    bundle = _load_bundle(spec.bundle_path)
    objective = _finalize_objective(spec, bundle)
    if objective.kind != ObjectiveKind.Q_MATCHED:
        objective = dataclasses.replace(
            objective, kind=ObjectiveKind.Q_MATCHED,
            q_lb_ref=objective.q_lb_ref or bounds.q_lower_bound(bundle).value,
            sign=1)
    threads = _resolve_threads(args.threads if args.threads else spec.threads)
    zetas = _parse_zeta_spec(args.zeta)

    out_dir = Path(spec.config.output_dir or Path(args.config).parent)
    out_dir.mkdir(parents=True, exist_ok=True)

    points, results = pareto_sweep(bundle, objective, zetas, spec.config,
                                   threads=threads)
    write_frontier_csv(points, out_dir / "frontier.csv")
    per_run = [{
        "zeta": p.zeta,
        "q_over_qlb": p.q_over_qlb,
        "gamma_sq": p.gamma_sq,
        "best_f": p.best_f,
        "dominated": p.dominated,
        "iterations": r.iterations_used,
        "removals_evaluated": r.removals_evaluated,
        "additions_evaluated": r.additions_evaluated,
        "wall_time_s": r.wall_time_s,
    } for p, r in zip(points, results)]
    (out_dir / "sweep_summary.json").write_text(json.dumps(per_run, indent=2) + "\n")
    n_front = sum(1 for p in points if not p.dominated)
    print(f"{len(points)} runs, {n_front} on the frontier; outputs in {out_dir}")
    return EXIT_OK


def _objective_from_flags(args, bundle) -> ObjectiveSpec:
    kind = ObjectiveKind(args.objective)
    q_lb_ref = args.q_lb_ref
    if kind == ObjectiveKind.Q_MATCHED and q_lb_ref is None:
        q_lb_ref = bounds.q_lower_bound(bundle).value
    sign = -1 if kind in (ObjectiveKind.REALIZED_GAIN,
                          ObjectiveKind.ABSORBED_POWER) else 1
    return ObjectiveSpec(kind=kind, zeta=args.zeta, Z0=complex(args.z0),
                         q_lb_ref=q_lb_ref, field_index=args.field_index,
                         feed_index=None, excitation_index=args.excitation_index,
                         sign=sign)


def cmd_sensitivity(args) -> int:
    bundle = _load_bundle(args.bundle)
    bhash = opb.bundle_hash(bundle)
    word, _ = read_word_file(args.word, expected_hash=bhash)
    if len(word) != bundle.n_opt:
        raise ValidationError("word/bundle mismatch",
                              f"word has {len(word)} bits, bundle has "
                              f"{bundle.n_opt} controllable DOF")
    objective = _objective_from_flags(args, bundle)
    state = init_state(bundle, word, objective)
    rows = sensitivity_map(state, bundle, objective)
    write_sensitivity_csv(rows, args.out)
    n_improving = sum(1 for r in rows if r.tau < 0)
    print(f"wrote {args.out}: {len(rows)} DOF, {n_improving} improving moves")
    return EXIT_OK


def cmd_inspect(args) -> int:
    bundle = _load_bundle(args.bundle)
    meta = bundle.meta
    print(f"bundle_hash={opb.bundle_hash(bundle)}")
    print(f"n_dof={bundle.n_dof} n_opt={bundle.n_opt} "
          f"fixed={int(np.count_nonzero(bundle.fixed_mask))} "
          f"chip={int(np.count_nonzero(bundle.chip_mask)) if bundle.chip_mask is not None else 0}")
    present = [name for name in ("Z", "R0", "X", "W", "R_rho", "F", "V",
                                 "tm_projector")
               if getattr(bundle, name) is not None]
    print(f"sections: {', '.join(present)}")
    print(f"meta: f={meta.frequency_hz:.6g} Hz, k={meta.wavenumber:.6g} 1/m, "
          f"a={meta.radius:.6g} m, ka={meta.ka:.6g}")
    print("validation: ok")

    if args.verify:
        rng = np.random.default_rng(0)
        worst = 0.0
        checked = 0
        for _ in range(20):
            word = Word(rng.random(bundle.n_opt) < 0.6)
            ref = oracles.dense_solve(bundle, word)
            if ref is None:
                continue
            try:
                state = init_state(bundle, word)
            except InfeasibleWordError:
                continue
            cur = state.embedded_current(bundle.n_dof)
            err = np.linalg.norm(cur - ref) / max(np.linalg.norm(ref), 1e-300)
            worst = max(worst, float(err))
            checked += 1
        status = "PASS" if worst <= 1e-9 else "FAIL"
        print(f"verify: {checked} random words, max relative current error "
              f"{worst:.3e} -> {status}")
        if status == "FAIL":
            return EXIT_DATA
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="memdes",
        description="Memetic topology optimization over operator bundles")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker pool size (MEMDES_THREADS overrides)")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", help="generate a test operator bundle")
    gen_sub = gen.add_subparsers(dest="kind", required=True)
    g_rlc = gen_sub.add_parser("rlc", help="series-RLC ladder network")
    g_rlc.add_argument("--n", type=int, required=True)
    g_rlc.add_argument("--f", type=float, required=True)
    g_rlc.add_argument("--res", type=float, default=1.0)
    g_rlc.add_argument("--ind", type=float, default=1e-9)
    g_rlc.add_argument("--cap", type=float, default=1e-12)
    g_rlc.add_argument("--coupling", type=float, default=0.0)
    g_rlc.add_argument("--out", required=True)
    g_rnd = gen_sub.add_parser("random", help="random passive operators")
    g_rnd.add_argument("--n", type=int, required=True)
    g_rnd.add_argument("--seed", type=int, default=0)
    g_rnd.add_argument("--loss-fraction", type=float, default=0.1)
    g_rnd.add_argument("--n-chip", type=int, default=0)
    g_rnd.add_argument("--n-field-rows", type=int, default=1)
    g_rnd.add_argument("--out", required=True)
    g_wire = gen_sub.add_parser("wire", help="thin-wire dipole array")
    g_wire.add_argument("--ndip", type=int, required=True)
    g_wire.add_argument("--length", type=float, default=0.55,
                        help="dipole length / wavelength")
    g_wire.add_argument("--spacing", type=float, default=0.25,
                        help="element spacing / wavelength")
    g_wire.add_argument("--segments", type=int, default=21)
    g_wire.add_argument("--radius", type=float, default=None,
                        help="wire radius [m]")
    g_wire.add_argument("--sigma", type=float, default=5.96e7)
    g_wire.add_argument("--f", type=float, default=1e9)
    g_wire.add_argument("--out", required=True)

    bnd = sub.add_parser("bound", help="compute a fundamental bound")
    bnd.add_argument("bundle")
    bnd.add_argument("--metric", choices=["q", "qtm", "gain", "pabs"],
                     required=True)
    bnd.add_argument("--z0", type=complex, default=50.0 + 0.0j)
    bnd.add_argument("--vin", type=float, default=1.0)
    bnd.add_argument("--field-index", type=int, default=0)
    bnd.add_argument("--excitation-index", type=int, default=0)

    opt = sub.add_parser("optimize", help="run the memetic optimizer")
    opt.add_argument("config")
    opt.add_argument("--threads", type=int, default=None)

    swp = sub.add_parser("sweep", help="scalarized trade-off sweep over zeta")
    swp.add_argument("config")
    swp.add_argument("--zeta", required=True, help="start:stop:count")
    swp.add_argument("--threads", type=int, default=None)

    sns = sub.add_parser("sensitivity", help="export a topology-sensitivity map")
    sns.add_argument("bundle")
    sns.add_argument("word")
    sns.add_argument("--objective", choices=[k.value for k in ObjectiveKind],
                     default="q")
    sns.add_argument("--zeta", type=float, default=0.0)
    sns.add_argument("--z0", type=complex, default=50.0 + 0.0j)
    sns.add_argument("--q-lb-ref", type=float, default=None)
    sns.add_argument("--field-index", type=int, default=0)
    sns.add_argument("--excitation-index", type=int, default=0)
    sns.add_argument("--out", required=True)

    ins = sub.add_parser("inspect", help="print bundle summary")
    ins.add_argument("bundle")
    ins.add_argument("--verify", action="store_true",
                     help="cross-check currents against the dense oracle")
    return parser


_HANDLERS = {
    "gen": cmd_gen,
    "bound": cmd_bound,
    "optimize": cmd_optimize,
    "sweep": cmd_sweep,
    "sensitivity": cmd_sensitivity,
    "inspect": cmd_inspect,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValidationError, FormatError, InfeasibleWordError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except SolverError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except MemdesError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
