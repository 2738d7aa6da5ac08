"""Command-line surface: space inspection, search runs, comparisons, exports.

Exit codes: 0 success, 1 runtime failure, 2 usage or validation failure.
Run configuration lives in a single JSON document; --seed and --budget may
override the configured values.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import evaluation_runtime as rt
from . import model_analytics as ma
from . import moo_core, search_engines as se
from .search_space import (
    SpecValidationError,
    baseline_genotype,
    compute_space_size,
    load_space_spec,
)


class ConfigError(ValueError):
    pass


def _load_json(path) -> dict:
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"no such file: {p}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}: invalid JSON ({exc})")


def _parse_objectives(raw) -> list[moo_core.ObjectiveSpec]:
    if not isinstance(raw, list) or not raw:
        raise ConfigError("objectives: must be a non-empty array of {name, direction}")
    out = []
    for i, item in enumerate(raw):
        try:
            out.append(moo_core.ObjectiveSpec(name=item["name"], direction=item["direction"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"objectives[{i}]: {exc}")
    if len({o.name for o in out}) != len(out):
        raise ConfigError("objectives: names must be unique")
    return out


def _build_evaluator(spec, evcfg: dict, objectives):
    kind = evcfg.get("kind", "builtin")
    if kind == "builtin":
        sur_raw = dict(evcfg.get("surrogate", {}))
        sur_raw.setdefault("seed", 7)
        cost_raw = dict(evcfg.get("cost_model", {}))
        try:
            sur = ma.SurrogateConfig(**sur_raw)
            cost = ma.CostModelConfig(**cost_raw)
            return ma.make_builtin_evaluator(spec, cost, sur, objectives)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"evaluator: {exc}")
    if kind == "tabular":
        path = evcfg.get("table_path")
        if not path:
            raise ConfigError("evaluator: tabular kind requires table_path")
        if not Path(path).exists():
            raise FileNotFoundError(f"no such file: {path}")
        binding = rt.load_tabular_evaluator(path, spec)
        missing = {o.name for o in objectives} - set(binding.objective_names)
        if missing:
            raise ConfigError(
                f"evaluator: table lacks objective columns {sorted(missing)}"
            )
        return binding
    raise ConfigError(f"evaluator: unknown kind {kind!r}")


def _algo_config(kind: str, algraw: dict):
    try:
        if kind == "nsga2":
            return se.Nsga2Config(**algraw.get("nsga2", {}))
        if kind == "linas":
            raw = dict(algraw.get("linas", {}))
            pred = algraw.get("predictor", {})
            if "kind" in pred:
                raw["predictor_kind"] = pred["kind"]
            if "lambda" in pred:
                raw["predictor_lambda"] = pred["lambda"]
            if "gamma" in pred:
                raw["predictor_gamma"] = pred["gamma"]
            if "nsga2" in raw:
                raw["nsga2"] = se.Nsga2Config(**raw["nsga2"])
            return se.LinasConfig(**raw)
        return None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"algorithm.{kind}: {exc}")


class RunSetup:
    """Validated run configuration plus the constructed pieces."""

    def __init__(self, doc: dict, seed_override=None, budget_override=None):
        for key in ("space", "objectives", "evaluator", "algorithm"):
            if key not in doc:
                raise ConfigError(f"config: missing key {key!r}")
        space_path = doc["space"]
        if not Path(space_path).exists():
            raise FileNotFoundError(f"no such file: {space_path}")
        self.spec = load_space_spec(space_path)
        self.objectives = _parse_objectives(doc["objectives"])
        self.evaluator = _build_evaluator(self.spec, doc["evaluator"], self.objectives)
        alg = doc["algorithm"]
        self.kinds = alg.get("kind", "random")
        if isinstance(self.kinds, str):
            self.kinds = [self.kinds]
        for kind in self.kinds:
            if kind not in ("random", "nsga2", "linas"):
                raise ConfigError(f"algorithm.kind: unknown {kind!r}")
        self.budget = int(budget_override or alg.get("budget", 0))
        if self.budget < 1:
            raise ConfigError("algorithm.budget must be >= 1")
        if seed_override is not None:
            self.seeds = [int(seed_override)]
        elif "seeds" in alg:
            self.seeds = [int(s) for s in alg["seeds"]]
        else:
            self.seeds = [int(alg.get("seed", 0))]
        self.configs = {kind: _algo_config(kind, alg) for kind in self.kinds}
        self.outputs = doc.get("outputs", {})
        self.doc = doc


def _say(args, message):
    if not args.quiet:
        print(message)


# -- commands ----------------------------------------------------------------------


def cmd_space_size(args) -> int:
    spec = load_space_spec(args.space)
    report = compute_space_size(spec, args.subset)
    print(f"space: {spec.name}")
    print(f"subset: {report.subset}")
    print(f"exact_log10: {report.exact_log10:.6f}")
    print(f"floor_exponent: {report.floor_exponent}")
    if args.subset == "joint":
        arch = compute_space_size(spec, "arch")
        quant = compute_space_size(spec, "quant")
        print(
            f"floor_sum_exponent: {report.joint_floor_exponent_composed} "
            f"(arch {arch.floor_exponent} + quant {quant.floor_exponent})"
        )
    return 0


def cmd_search(args) -> int:
    setup = RunSetup(_load_json(args.config), args.seed, args.budget)
    if len(setup.kinds) != 1 or len(setup.seeds) != 1:
        raise ConfigError("search runs one algorithm with one seed; use `compare`")
    kind, seed = setup.kinds[0], setup.seeds[0]
    ledger_path = setup.outputs.get("ledger_path")
    if not ledger_path:
        raise ConfigError("outputs.ledger_path is required for search")
    Path(ledger_path).parent.mkdir(parents=True, exist_ok=True)

    metadata = rt.run_metadata(
        setup.spec,
        setup.objectives,
        kind,
        seed,
        {
            "budget": setup.budget,
            "evaluator": setup.doc["evaluator"],
            "algorithm": setup.doc["algorithm"],
        },
    )
    with open(ledger_path, "w") as fh:
        fh.write(json.dumps(metadata, separators=(",", ":")) + "\n")
        fh.flush()

        def on_record(record):
            fh.write(rt.record_line(record) + "\n")

        result = se.run_algorithm(
            kind,
            setup.spec,
            setup.evaluator,
            setup.objectives,
            setup.budget,
            seed,
            setup.configs[kind],
            on_record=on_record,
        )
    # the streamed file used the cli's metadata; keep the returned ledger consistent
    result.ledger.metadata = metadata

    front = moo_core.pareto_front(result.ledger.records, setup.objectives)
    _say(args, f"evaluations: {len(result.ledger.records)}")
    _say(args, f"front size: {len(front)}")

    if setup.outputs.get("pareto_path"):
        rt.export_pareto(result.ledger, setup.outputs["pareto_path"])
        _say(args, f"pareto csv: {setup.outputs['pareto_path']}")
    reference = setup.outputs.get("hv_reference")
    if reference is not None:
        signs = moo_core.direction_signs(setup.objectives)
        ref = tuple(s * v for s, v in zip(signs, reference))
        prog = moo_core.hypervolume_progression(
            result.ledger, setup.objectives, ref, setup.outputs.get("stride", setup.budget)
        )
        _say(args, f"final hypervolume: {prog.hypervolumes[-1]!r}")
    _say(args, f"ledger: {ledger_path}")
    return 0


def cmd_compare(args) -> int:
    setup = RunSetup(_load_json(args.config), None, args.budget)
    if len(setup.kinds) < 2 and len(setup.seeds) < 2:
        raise ConfigError("compare needs at least two algorithms or two seeds")
    hv_path = setup.outputs.get("hv_path")
    ledger_dir = setup.outputs.get("ledger_dir")
    if not hv_path or not ledger_dir:
        raise ConfigError("outputs.hv_path and outputs.ledger_dir are required for compare")
    stride = int(setup.outputs.get("stride", setup.budget))

    comparison = se.compare_algorithms(
        setup.spec,
        setup.evaluator,
        setup.objectives,
        setup.budget,
        setup.seeds,
        {k: setup.configs[k] for k in setup.kinds},
        stride=stride,
        jobs=args.jobs,
    )
    Path(ledger_dir).mkdir(parents=True, exist_ok=True)
    for (algo, seed), ledger in comparison.ledgers.items():
        rt.write_ledger(ledger, Path(ledger_dir) / f"{algo}_seed{seed}.jsonl")
    Path(hv_path).parent.mkdir(parents=True, exist_ok=True)
    rt.export_hv_series(comparison, hv_path)

    for algo, (mean, std) in comparison.final_hypervolumes().items():
        _say(args, f"{algo}: final hypervolume {mean:.6g} +/- {std:.6g}")
    _say(args, f"hv series: {hv_path}")
    if comparison.failures:
        for algo, seed, message in comparison.failures:
            print(f"FAILED {algo} seed {seed}: {message}", file=sys.stderr)
        return 1
    return 0


def cmd_pareto(args) -> int:
    ledger = rt.read_ledger(args.ledger)
    front = rt.export_pareto(ledger, args.out)
    specs = rt.ledger_objectives(ledger)
    _say(args, f"front size: {len(front)}")
    if not front:
        _say(args, "warning: empty ledger, wrote header only")
    for obj in specs:
        values = [r.objectives[obj.name] for r in front]
        if values:
            _say(args, f"{obj.name}: min {min(values)!r} max {max(values)!r}")
    _say(args, f"pareto csv: {args.out}")
    return 0


def cmd_baseline(args) -> int:
    spec = load_space_spec(args.space)
    if args.evaluator:
        doc = _load_json(args.evaluator)
    else:
        doc = {"kind": "builtin"}
    objectives = _parse_objectives(
        doc.get(
            "objectives",
            [
                {"name": "accuracy", "direction": "maximize"},
                {"name": "model_size", "direction": "minimize"},
            ],
        )
    )
    try:
        genotype = baseline_genotype(spec, args.precision)
    except ValueError as exc:
        raise ConfigError(str(exc))
    binding = _build_evaluator(spec, doc, objectives)
    values = rt.evaluate(binding, genotype)
    for obj in objectives:
        print(f"{obj.name}: {values[obj.name]!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jaqs",
        description="Joint architecture and quantization-policy search engine",
    )
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    parser.add_argument("--jobs", type=int, default=1, help="parallel runs for compare")
    # accept the global flags after the subcommand too
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS)
    common.add_argument("--jobs", type=int, default=argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=lambda **kw: argparse.ArgumentParser(parents=[common], **kw))

    p = sub.add_parser("space-size", help="report search-space cardinality")
    p.add_argument("space", help="path to a space-spec JSON document")
    p.add_argument("--subset", choices=("arch", "quant", "joint"), default="joint")
    p.set_defaults(func=cmd_space_size)

    p = sub.add_parser("search", help="run one configured search")
    p.add_argument("config", help="path to a run-config JSON document")
    p.add_argument("--seed", type=int, default=None, help="override the configured seed")
    p.add_argument("--budget", type=int, default=None, help="override the configured budget")
    p.set_defaults(func=cmd_search)

    p = sub.add_parser("compare", help="run an algorithm x seed cross product")
    p.add_argument("config")
    p.add_argument("--budget", type=int, default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("pareto", help="export the Pareto front of a ledger")
    p.add_argument("ledger")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_pareto)

    p = sub.add_parser("baseline", help="evaluate the uniform-precision baseline")
    p.add_argument("space")
    p.add_argument("--precision", required=True)
    p.add_argument("--evaluator", default=None, help="JSON evaluator description")
    p.set_defaults(func=cmd_baseline)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, SpecValidationError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except rt.LedgerError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (se.SearchError, rt.EvaluationError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
