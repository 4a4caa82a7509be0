"""Command-line surface.

Commands: ``validate``, ``index``, ``verify``, ``bound``, ``simulate``.
Reports are JSON (index tables default to CSV) with 17-digit floats, so a
fixed seed and config reproduce byte-identical output.

Exit codes:
  0  success (model valid / table certified / no counterexample)
  1  findings: validation violations or an indexability counterexample
  2  unreadable or malformed input
  3  index table produced but not certified
  4  policy family violates connectedness
  5  exact joint computation exceeds the enumeration cap

Tolerances may also be set through the environment: GEARBANDIT_EPS_G,
GEARBANDIT_EPS_M, GEARBANDIT_EPS_OPT.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass

from . import average, dsindex, fileio, joint, metrics, model as model_mod, oracle
from .errors import (ConnectednessError, EnumerationCapError, GearBanditError,
                     ModelFormatError)
from .families import family_from_spec

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_INPUT = 2
EXIT_NOT_CERTIFIED = 3
EXIT_CONNECTEDNESS = 4
EXIT_CAP = 5

AVERAGE_SURROGATE_DISCOUNT = 0.9999


@dataclass(frozen=True)
class RunConfig:
    """Resolved settings of one CLI invocation."""

    command: str
    paths: tuple[str, ...]
    family: str
    criterion: str
    eps_g: float
    eps_m: float
    eps_opt: float
    output_format: str
    seed: int
    jobs: int
    output: str | None

    def __post_init__(self):
        if min(self.eps_g, self.eps_m, self.eps_opt) <= 0:
            raise ValueError("tolerances must be positive")


def _env_float(name: str, fallback: float) -> float:
    raw = os.environ.get(name)
    return fallback if raw is None else float(raw)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gearbandit",
        description="Index computation and verification for multi-gear bandits.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--output", help="write the report here instead of stdout")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--jobs", type=int, default=1,
                       help="cap on concurrent price solves in verify")
        p.add_argument("--eps-g", type=float,
                       default=_env_float("GEARBANDIT_EPS_G", metrics.MP_POSITIVITY_EPS))
        p.add_argument("--eps-m", type=float,
                       default=_env_float("GEARBANDIT_EPS_M", dsindex.MONOTONE_EPS))
        p.add_argument("--eps-opt", type=float,
                       default=_env_float("GEARBANDIT_EPS_OPT", oracle.OPTIMALITY_EPS))

    p = sub.add_parser("validate", help="check a model file's invariants")
    p.add_argument("model")
    common(p)

    p = sub.add_parser("index", help="compute the index table")
    p.add_argument("model")
    p.add_argument("--family", default=None,
                   help="full | multi_threshold | list:<path>; falls back to "
                        "the model file's 'family' field, then 'full'")
    p.add_argument("--criterion", choices=["discounted", "average"],
                   default="discounted")
    p.add_argument("--format", choices=["csv", "json"], default="csv")
    p.add_argument("--pcl1-scope", choices=["all", "candidates"], default="all")
    common(p)

    p = sub.add_parser("verify", help="verify a table against the Bellman oracle")
    p.add_argument("model")
    p.add_argument("table")
    common(p)

    p = sub.add_parser("bound", help="decoupled lower bound for a joint instance")
    p.add_argument("instance")
    p.add_argument("--initial", help="comma-separated per-project initial states")
    common(p)

    p = sub.add_parser("simulate", help="evaluate a joint policy")
    p.add_argument("instance")
    p.add_argument("--initial", help="comma-separated per-project initial states")
    p.add_argument("--mode", choices=["exact", "mc"], default="exact")
    p.add_argument("--reps", type=int, default=1000)
    p.add_argument("--horizon", type=int)
    p.add_argument("--policy",
                   choices=["downshift", "all-passive", "myopic", "random"],
                   default="downshift")
    p.add_argument("--family", default="full")
    p.add_argument("--with-optimum", action="store_true",
                   help="also solve the exact joint optimum")
    common(p)

    return parser


def _emit(args, payload: str) -> None:
    if args.output:
        fileio.write_text(args.output, payload)
    else:
        sys.stdout.write(payload)


def _load_policies_file(path: str):
    doc = fileio.read_json(path)
    states = tuple(int(s) for s in doc["states"])
    return [model_mod.StationaryPolicy(states, tuple(int(a) for a in gears))
            for gears in doc["policies"]]


def _initial_state(args, instance) -> tuple[int, ...]:
    if getattr(args, "initial", None):
        parts = tuple(int(x) for x in args.initial.split(","))
        if len(parts) != len(instance.projects):
            raise ModelFormatError(
                f"--initial needs {len(instance.projects)} states, got {len(parts)}")
        return parts
    return (1,) * len(instance.projects)


def _cmd_validate(args) -> int:
    mdl = fileio.load_model(args.model)
    violations = model_mod.validate(mdl)
    report = {
        "schema_version": fileio.SCHEMA_VERSION,
        "kind": "validation-report",
        "model": args.model,
        "ok": not violations,
        "violations": [
            {"code": v.code, "state": v.state, "gear": v.gear, "message": v.message}
            for v in violations],
    }
    _emit(args, fileio.dumps(report))
    return EXIT_OK if not violations else EXIT_FINDINGS


def _cmd_index(args) -> int:
    doc = fileio.read_json(args.model)
    if not isinstance(doc, dict):
        raise ModelFormatError(f"{args.model}: model document must be a JSON object")
    mdl = fileio.model_from_dict(doc)
    spec = args.family if args.family is not None else doc.get("family", "full")
    family = family_from_spec(mdl, spec, load_policies=_load_policies_file)
    runner = average.run_ds_average if args.criterion == "average" else dsindex.run_ds
    table, cert = runner(mdl, family, eps_g=args.eps_g, eps_m=args.eps_m,
                         pcl1_scope=args.pcl1_scope)
    if args.format == "csv":
        _emit(args, fileio.table_to_csv(table))
    else:
        _emit(args, fileio.dumps(fileio.table_to_dict(table, cert)))
    return EXIT_OK if cert.certified else EXIT_NOT_CERTIFIED


def _cmd_verify(args) -> int:
    mdl = fileio.load_model(args.model)
    table, _ = fileio.load_table(args.table)
    surrogate = None
    if table.criterion == "average":
        surrogate = AVERAGE_SURROGATE_DISCOUNT
        mdl = mdl.with_discount(surrogate)
    verdict = oracle.verify_indexability(mdl, table, eps_opt=args.eps_opt,
                                         seed=args.seed, jobs=args.jobs)
    doc = fileio.verdict_to_dict(verdict)
    doc["criterion"] = table.criterion
    doc["surrogate_discount"] = surrogate
    _emit(args, fileio.dumps(doc))
    return EXIT_OK if verdict.counterexample is None else EXIT_FINDINGS


def _cmd_bound(args) -> int:
    instance = fileio.load_instance(args.instance)
    initial = _initial_state(args, instance)
    dual = joint.lagrangian_bound(instance, initial)
    report = {
        "schema_version": fileio.SCHEMA_VERSION,
        "kind": "lagrangian-bound",
        "initial_state": list(initial),
        "bound": dual.bound,
        "lambda_star": dual.lambda_star,
        "per_project_values": list(dual.per_project_values),
        "iterations": dual.iterations,
    }
    _emit(args, fileio.dumps(report))
    return EXIT_OK


def _make_policy(args, instance):
    if args.policy == "all-passive":
        return joint.all_passive_policy(instance)
    if args.policy == "myopic":
        return joint.myopic_policy(instance)
    if args.policy == "random":
        return joint.random_feasible_policy(instance, seed=args.seed)
    tables = []
    for project in instance.projects:
        family = family_from_spec(project, args.family,
                                  load_policies=_load_policies_file)
        table, _ = dsindex.run_ds(project, family, eps_g=args.eps_g,
                                  eps_m=args.eps_m)
        tables.append(table)
    return joint.downshift_policy(instance, tables)


def _cmd_simulate(args) -> int:
    instance = fileio.load_instance(args.instance)
    initial = _initial_state(args, instance)
    policy = _make_policy(args, instance)
    value = joint.evaluate_joint_policy(
        instance, policy, initial, mode=args.mode, replications=args.reps,
        horizon=args.horizon, seed=args.seed)
    dual = joint.lagrangian_bound(instance, initial)
    optimum = None
    if args.with_optimum:
        optimum = joint.solve_joint_dp(instance).value_of(initial)
    report = {
        "schema_version": fileio.SCHEMA_VERSION,
        "kind": "simulation-report",
        "initial_state": list(initial),
        "policy": args.policy,
        "mode": value.mode,
        "bound": dual.bound,
        "optimum": optimum,
        "policy_value": value.value,
        "stderr": value.stderr,
        "rel_gap": (value.value - dual.bound) / max(1.0, abs(dual.bound)),
        "replications": value.replications,
        "horizon": value.horizon,
    }
    _emit(args, fileio.dumps(report))
    return EXIT_OK


_HANDLERS = {
    "validate": _cmd_validate,
    "index": _cmd_index,
    "verify": _cmd_verify,
    "bound": _cmd_bound,
    "simulate": _cmd_simulate,
}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        RunConfig(
            command=args.command,
            paths=tuple(p for p in [getattr(args, "model", None),
                                    getattr(args, "table", None),
                                    getattr(args, "instance", None)] if p),
            family=getattr(args, "family", None) or "full",
            criterion=getattr(args, "criterion", "discounted"),
            eps_g=args.eps_g, eps_m=args.eps_m, eps_opt=args.eps_opt,
            output_format=getattr(args, "format", "json"),
            seed=args.seed, jobs=args.jobs, output=args.output,
        )
        return _HANDLERS[args.command](args)
    except ModelFormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConnectednessError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONNECTEDNESS
    except EnumerationCapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except (ValueError, GearBanditError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception:
        import traceback
        traceback.print_exc()
        print("internal error (see traceback above)", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
