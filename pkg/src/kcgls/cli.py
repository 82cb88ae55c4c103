"""File formats and command-line orchestration.

Comparison files are JSON.  Covariance inputs are sparse-first: V0 as a
per-record diagonal, per-participant dense blocks with optional
cross-record triples, or a full dense lower triangle; the participant
systematic covariance as per-participant variances plus optional
cross-participant triples.  All numeric output is serialized at full
precision so covariance splits survive round trips.

Exit codes: 0 success, 2 parse, 3 validation, 4 singular, 5 cross-method
agreement failure, 6 I/O.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import __version__
from .consistency import consistency_report
from .design import build_design, check_linkage
from .errors import (
    InvalidConfig,
    IoError,
    KcglsError,
    ParseError,
    SchemaError,
    SingularAugmentedSystem,
    SingularFullCovariance,
    SingularKkt,
    SingularReducedSystem,
    ValidationError,
)
from .estimator import GlsSolution, solve_augmented, solve_by_projection, solve_full, solve_reduced
from .model import (
    ComparisonData,
    Constraint,
    CovarianceModel,
    MeasurementRecord,
    validate_comparison,
)
from .simulate import SimulationConfig, generate_comparison, monte_carlo_cov_check

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_SINGULAR = 4
EXIT_AGREEMENT = 5
EXIT_IO = 6

SCHEMA_VERSION = 1

_SINGULAR_ERRORS = (
    SingularReducedSystem,
    SingularAugmentedSystem,
    SingularFullCovariance,
    SingularKkt,
)


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path} is not valid JSON: {exc}") from exc


def _require(doc: dict, keys: set[str], optional: set[str], where: str) -> None:
    missing = keys - set(doc)
    extra = set(doc) - keys - optional
    if missing:
        raise SchemaError(f"{where}: missing fields {sorted(missing)}")
    if extra:
        raise SchemaError(f"{where}: unexpected fields {sorted(extra)}")


def _build_v0(spec: dict, data: ComparisonData) -> np.ndarray:
    m = data.m
    if not isinstance(spec, dict) or "type" not in spec:
        raise SchemaError("v0 spec must be an object with a 'type' field")
    kind = spec["type"]
    if kind == "diagonal":
        _require(spec, {"type", "variances"}, set(), "v0")
        variances = spec["variances"]
        if len(variances) != m:
            raise SchemaError(f"v0 diagonal needs {m} variances, got {len(variances)}")
        return np.diag(np.asarray(variances, dtype=float))
    if kind == "blocks":
        _require(spec, {"type", "blocks"}, {"cross"}, "v0")
        v0 = np.zeros((m, m))
        rows_by_participant = {}
        for i, rec in enumerate(data.records):
            rows_by_participant.setdefault(rec.participant_id, []).append(i)
        for pid, block in spec["blocks"].items():
            if pid not in rows_by_participant:
                raise SchemaError(f"v0 block for unknown participant {pid!r}")
            rows = rows_by_participant[pid]
            block = np.asarray(block, dtype=float)
            if block.shape != (len(rows), len(rows)):
                raise SchemaError(
                    f"v0 block for {pid!r} must be {len(rows)}x{len(rows)}, got {block.shape}"
                )
            v0[np.ix_(rows, rows)] = block
        missing = set(rows_by_participant) - set(spec["blocks"])
        if missing:
            raise SchemaError(f"v0 blocks missing for participants {sorted(missing)}")
        for i, jdx, value in spec.get("cross", []):
            v0[i, jdx] = value
            v0[jdx, i] = value
        return v0
    if kind == "dense":
        _require(spec, {"type", "lower"}, set(), "v0")
        lower = spec["lower"]
        if len(lower) != m or any(len(row) != i + 1 for i, row in enumerate(lower)):
            raise SchemaError(f"v0 dense lower triangle must have rows of length 1..{m}")
        v0 = np.zeros((m, m))
        for i, row in enumerate(lower):
            for jdx, value in enumerate(row):
                v0[i, jdx] = value
                v0[jdx, i] = value
        return v0
    raise SchemaError(f"unknown v0 type {kind!r}")


def _build_a_tilde(spec: dict, participants: tuple[str, ...]) -> np.ndarray:
    _require(spec, {"variances"}, {"covariances"}, "a_tilde")
    index = {p: i for i, p in enumerate(participants)}
    unknown = set(spec["variances"]) - set(participants)
    if unknown:
        raise SchemaError(f"a_tilde variances for unknown participants {sorted(unknown)}")
    a = np.zeros((len(participants), len(participants)))
    for pid, var in spec["variances"].items():
        a[index[pid], index[pid]] = var
    for p, q, value in spec.get("covariances", []):
        if p not in index or q not in index:
            raise SchemaError(f"a_tilde covariance references unknown participant ({p}, {q})")
        a[index[p], index[q]] = value
        a[index[q], index[p]] = value
    return a


def parse_comparison_file(path) -> tuple[ComparisonData, CovarianceModel, Constraint]:
    """Read and validate a comparison input file."""
    doc = _load_json(path)
    if not isinstance(doc, dict):
        raise SchemaError(f"{path}: top level must be an object")
    _require(
        doc,
        {"schema_version", "participants", "artefacts", "measurements", "v0", "a_tilde", "constraint"},
        {"unit", "covariates", "metadata"},
        str(path),
    )
    if doc["schema_version"] != SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {doc['schema_version']!r}")

    covariate_names = tuple(doc.get("covariates", []))
    records = []
    for entry in doc["measurements"]:
        _require(entry, {"participant", "artefact", "repeat", "value"}, {"covariates"}, "measurement")
        records.append(
            MeasurementRecord(
                participant_id=entry["participant"],
                artefact_id=entry["artefact"],
                repeat_index=int(entry["repeat"]),
                value=float(entry["value"]),
                covariates={k: float(v) for k, v in entry.get("covariates", {}).items()},
            )
        )
    data = ComparisonData(records, doc["participants"], doc["artefacts"], covariate_names)

    v0 = _build_v0(doc["v0"], data)
    a_tilde = _build_a_tilde(doc["a_tilde"], data.participants)
    cov = CovarianceModel(v0, a_tilde)

    _require(doc["constraint"], {"weights"}, {"d"}, "constraint")
    cons = Constraint(doc["constraint"]["weights"], doc["constraint"].get("d", 0.0))

    violations = validate_comparison(data, cov, cons)
    if violations:
        raise ValidationError(violations)
    return data, cov, cons


def solution_report_dict(sol: GlsSolution, report) -> dict:
    """Structured report for one solution, JSON-serializable at full precision."""
    estimates = []
    for idx, (kind, name) in enumerate(sol.labels):
        estimates.append(
            {
                "name": name,
                "kind": kind,
                "estimate": float(sol.b[idx]),
                "variance_statistical": float(sol.cov_statistical[idx, idx]),
                "variance_adjustment": float(sol.cov_adjustment[idx, idx]),
                "variance_total": float(sol.cov[idx, idx]),
            }
        )
    zscores = [
        {
            "participant": eff.participant_id,
            "effect": eff.effect,
            "uncertainty": eff.uncertainty,
            "z": eff.zscore,
            "flagged": eff.participant_id in report.flagged,
        }
        for eff in report.per_participant
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "tool_version": __version__,
        "method": sol.method,
        "c_used": sol.c_used,
        "estimates": estimates,
        "cov": sol.cov.tolist(),
        "cov_statistical": sol.cov_statistical.tolist(),
        "cov_adjustment": sol.cov_adjustment.tolist(),
        "zscores": zscores,
        "chi_square": report.chi_square,
        "dof": report.dof,
    }


def write_report(sol: GlsSolution, report, path, fmt: str = "json") -> None:
    """Write a solution report as a structured JSON file or a flat CSV table."""
    doc = solution_report_dict(sol, report)
    try:
        if fmt == "json":
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)
                fh.write("\n")
        elif fmt == "table":
            with open(path, "w", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(
                    [
                        "name",
                        "kind",
                        "estimate",
                        "variance_statistical",
                        "variance_adjustment",
                        "variance_total",
                    ]
                )
                for row in doc["estimates"]:
                    writer.writerow(
                        [
                            row["name"],
                            row["kind"],
                            repr(row["estimate"]),
                            repr(row["variance_statistical"]),
                            repr(row["variance_adjustment"]),
                            repr(row["variance_total"]),
                        ]
                    )
        else:
            raise IoError(f"unknown report format {fmt!r}")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def export_exchange_graph(data: ComparisonData, path) -> None:
    """Write the participant/artefact exchange graph in DOT syntax.

    Edges are labeled with the number of measurements of the artefact by
    the participant.
    """
    counts = {}
    for rec in data.records:
        key = (rec.participant_id, rec.artefact_id)
        counts[key] = counts.get(key, 0) + 1
    lines = ["graph exchange {"]
    for p in data.participants:
        lines.append(f'  "P:{p}" [shape=box];')
    for a in data.artefacts:
        lines.append(f'  "A:{a}" [shape=ellipse];')
    for (p, a), count in sorted(counts.items()):
        lines.append(f'  "P:{p}" -- "A:{a}" [label="{count}"];')
    lines.append("}")
    try:
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    except OSError as exc:
        raise IoError(f"cannot write {path}: {exc}") from exc


def parse_simulation_config(path) -> SimulationConfig:
    """Read a simulation configuration file (same format family as inputs)."""
    doc = _load_json(path)
    _require(
        doc,
        {"participants", "artefacts", "pattern", "theta", "delta", "constraint", "a_tilde", "v0"},
        {"covariates", "kappa", "seed", "draws", "schema_version", "unit"},
        str(path),
    )
    participants = tuple(doc["participants"])
    artefacts = tuple(doc["artefacts"])
    pattern = tuple((p, a, int(r)) for p, a, r in doc["pattern"])
    covariates = tuple(doc.get("covariates", []))

    # Build a value-free skeleton so the sparse V0 forms can be reused.
    records = []
    for pid, aid, reps in pattern:
        for r in range(1, reps + 1):
            records.append(MeasurementRecord(pid, aid, r, 0.0))
    skeleton = ComparisonData(records, participants, artefacts, covariates)

    if isinstance(doc["v0"], dict) and doc["v0"].get("type") == "iid":
        _require(doc["v0"], {"type", "variance"}, set(), "v0")
        v0 = float(doc["v0"]["variance"]) * np.eye(skeleton.m)
    else:
        v0 = _build_v0(doc["v0"], skeleton)
    a_tilde = _build_a_tilde(doc["a_tilde"], participants)
    _require(doc["constraint"], {"weights"}, {"d"}, "constraint")

    try:
        return SimulationConfig(
            participants=participants,
            artefacts=artefacts,
            pattern=pattern,
            theta=doc["theta"],
            delta=doc["delta"],
            weights=doc["constraint"]["weights"],
            d=doc["constraint"].get("d", 0.0),
            a_tilde=a_tilde,
            v0=v0,
            covariate_names=covariates,
            kappa=doc.get("kappa", {}),
            seed=doc.get("seed", 0),
            n_draws=doc.get("draws", 10_000),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"bad simulation config: {exc}") from exc


def comparison_to_dict(data: ComparisonData, cov: CovarianceModel, cons: Constraint) -> dict:
    """Serialize domain objects back to the comparison file format (dense V0)."""
    m = data.m
    lower = [[float(cov.v0[i, jdx]) for jdx in range(i + 1)] for i in range(m)]
    index = {p: i for i, p in enumerate(data.participants)}
    variances = {p: float(cov.a_tilde[index[p], index[p]]) for p in data.participants}
    covariances = [
        [data.participants[i], data.participants[jdx], float(cov.a_tilde[i, jdx])]
        for i in range(len(data.participants))
        for jdx in range(i + 1, len(data.participants))
        if cov.a_tilde[i, jdx] != 0.0
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "participants": list(data.participants),
        "artefacts": list(data.artefacts),
        "covariates": list(data.covariate_names),
        "measurements": [
            {
                "participant": rec.participant_id,
                "artefact": rec.artefact_id,
                "repeat": rec.repeat_index,
                "value": rec.value,
                "covariates": dict(rec.covariates),
            }
            for rec in data.records
        ],
        "v0": {"type": "dense", "lower": lower},
        "a_tilde": {"variances": variances, "covariances": covariances},
        "constraint": {"weights": dict(cons.weights), "d": cons.d},
    }


def _relative_deviation(a: np.ndarray, b: np.ndarray) -> float:
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-300)
    return float(np.max(np.abs(a - b))) / scale


def _pinned_constraint(data: ComparisonData) -> Constraint:
    weights = {p: 0.0 for p in data.participants}
    weights[data.participants[0]] = 1.0
    return Constraint(weights, 0.0)


def _run_solve(args) -> int:
    data, cov, cons = parse_comparison_file(args.input)
    dm = build_design(data)
    y = data.observation_vector()
    c = None if args.c == "auto" else float(args.c)

    solutions = {}
    if args.method in ("reduced", "all"):
        solutions["reduced"] = solve_reduced(dm, cov, cons, y)
    if args.method in ("augmented", "all"):
        solutions["augmented"] = solve_augmented(dm, cov, cons, y, c)
    if args.method in ("full", "all"):
        solutions["full"] = solve_full(dm, cov, cons, y, c)
    if args.method == "all":
        pinned = solve_reduced(dm, cov, _pinned_constraint(data), y)
        solutions["projection"] = solve_by_projection(
            pinned.b, pinned.cov, cons, dm, y=y, cov0_adjustment=pinned.cov_adjustment
        )

    primary = solutions[args.method if args.method != "all" else "reduced"]
    report = consistency_report(
        data, dm, primary, cov, z_crit=args.z_crit, include_adjustment=args.include_adjustment_in_z
    )

    if args.method == "all":
        names = list(solutions)
        max_b = max(
            _relative_deviation(solutions[a].b, solutions[b].b)
            for i, a in enumerate(names)
            for b in names[i + 1:]
        )
        max_cov = max(
            _relative_deviation(solutions[a].cov, solutions[b].cov)
            for i, a in enumerate(names)
            for b in names[i + 1:]
        )
        print(f"cross-method agreement: max |db| = {max_b:.3e}, max |dcov| = {max_cov:.3e}")
        if max_b > 1e-8 or max_cov > 1e-8:
            print("cross-method agreement FAILED (threshold 1e-8)", file=sys.stderr)
            return EXIT_AGREEMENT

    if args.output:
        write_report(primary, report, args.output, args.format)
    print(f"method={primary.method} chi_square={report.chi_square:.6g} dof={report.dof}")
    return EXIT_OK


def _run_check(args) -> int:
    data, cov, cons = parse_comparison_file(args.input)
    linkage = check_linkage(data)
    if not linkage.passed:
        print("comparison is not linked; components:", file=sys.stderr)
        for comp in linkage.components:
            names = sorted(f"{kind}:{name}" for kind, name in comp)
            print("  " + ", ".join(names), file=sys.stderr)
        return EXIT_VALIDATION
    dm = build_design(data)
    if not dm.full_rank:
        print("design is rank deficient (collinear covariates)", file=sys.stderr)
        return EXIT_VALIDATION
    print(f"ok: m={data.m} participants={data.n_participants} artefacts={data.n_artefacts}")
    return EXIT_OK


def _run_simulate(args) -> int:
    cfg = parse_simulation_config(args.config)
    if args.seed is not None:
        cfg = SimulationConfig(
            participants=cfg.participants,
            artefacts=cfg.artefacts,
            pattern=cfg.pattern,
            theta=cfg.theta,
            delta=cfg.delta,
            weights=cfg.weights,
            d=cfg.d,
            a_tilde=cfg.a_tilde,
            v0=cfg.v0,
            covariate_names=cfg.covariate_names,
            kappa=cfg.kappa,
            seed=args.seed,
            n_draws=cfg.n_draws,
        )
    for draw in range(args.draws):
        data, _ = generate_comparison(cfg, draw)
        doc = comparison_to_dict(data, cfg.covariance_model(), cfg.constraint())
        path = args.output if args.draws == 1 else f"{args.output}.{draw}"
        try:
            with open(path, "w") as fh:
                json.dump(doc, fh, indent=2)
                fh.write("\n")
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
    print(f"wrote {args.draws} dataset(s) from seed {cfg.seed}")
    return EXIT_OK


def _run_mc_check(args) -> int:
    cfg = parse_simulation_config(args.config)
    report = monte_carlo_cov_check(cfg, args.draws)
    print(
        f"draws={report.n_draws} max studentized deviation = {report.max_studentized:.3f}"
    )
    return EXIT_OK


def _run_graph(args) -> int:
    data, _, _ = parse_comparison_file(args.input)
    export_exchange_graph(data, args.output)
    print(f"wrote {args.output}")
    return EXIT_OK


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="kcgls",
        description="Constrained GLS evaluation of measurement comparisons.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    solve = sub.add_parser("solve", help="solve a comparison and write a report")
    solve.add_argument("--input", required=True)
    solve.add_argument("--method", choices=["reduced", "augmented", "full", "all"], default="all")
    solve.add_argument("--c", default="auto", help="augmentation weight, or 'auto'")
    solve.add_argument("--output", default=None)
    solve.add_argument("--format", choices=["json", "table"], default="json")
    solve.add_argument("--z-crit", type=float, default=2.0)
    solve.add_argument(
        "--include-adjustment-in-z",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="include the systematic-effect adjustment in z-score variances",
    )
    solve.set_defaults(func=_run_solve)

    check = sub.add_parser("check", help="validate a comparison and its linkage")
    check.add_argument("--input", required=True)
    check.set_defaults(func=_run_check)

    simulate = sub.add_parser("simulate", help="generate synthetic comparison datasets")
    simulate.add_argument("--config", required=True)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--draws", type=int, default=1)
    simulate.add_argument("--output", required=True)
    simulate.set_defaults(func=_run_simulate)

    mc = sub.add_parser("mc-check", help="Monte Carlo check of the estimate covariance")
    mc.add_argument("--config", required=True)
    mc.add_argument("--draws", type=int, default=None)
    mc.set_defaults(func=_run_mc_check)

    graph = sub.add_parser("graph", help="export the exchange graph in DOT syntax")
    graph.add_argument("--input", required=True)
    graph.add_argument("--output", required=True)
    graph.set_defaults(func=_run_graph)

    return parser


def cli_main(argv=None) -> int:
    """Entry point; returns the process exit code."""
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, SchemaError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (ValidationError, InvalidConfig) as exc:
        if isinstance(exc, ValidationError):
            print("validation failed:", file=sys.stderr)
            for violation in exc.violations:
                print(f"  - {violation}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except _SINGULAR_ERRORS as exc:
        print(f"error: singular system: {exc}", file=sys.stderr)
        return EXIT_SINGULAR
    except IoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except KcglsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
