#!/usr/bin/env python3
"""Programmatic version of the BERT algorithm comparison (no CLI).

Runs the three algorithms over several seeds with the built-in surrogate
objectives and writes the hypervolume progression CSV plus all run ledgers.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from jaqs import load_space_spec  # noqa: E402
from jaqs import evaluation_runtime as rt  # noqa: E402
from jaqs.model_analytics import (  # noqa: E402
    CostModelConfig,
    SurrogateConfig,
    make_builtin_evaluator,
)
from jaqs.moo_core import ObjectiveSpec  # noqa: E402
from jaqs.search_engines import LinasConfig, Nsga2Config, compare_algorithms  # noqa: E402


def main():
    root = Path(__file__).resolve().parents[1]
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--budget", type=int, default=250)
    parser.add_argument("--seeds", type=int, nargs="+", default=[101, 102, 103, 104, 105])
    parser.add_argument("--stride", type=int, default=25)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--out", default="out/hv_bert")
    args = parser.parse_args()

    spec = load_space_spec(root / "configs" / "bert.json")
    objectives = [
        ObjectiveSpec("accuracy", "maximize"),
        ObjectiveSpec("model_size", "minimize"),
    ]
    evaluator = make_builtin_evaluator(
        spec, CostModelConfig(), SurrogateConfig(seed=7), objectives
    )
    comparison = compare_algorithms(
        spec,
        evaluator,
        objectives,
        budget=args.budget,
        seeds=args.seeds,
        algorithms={"linas": LinasConfig(), "nsga2": Nsga2Config(), "random": None},
        stride=args.stride,
        jobs=args.jobs,
    )

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for (algo, seed), ledger in comparison.ledgers.items():
        rt.write_ledger(ledger, out / f"{algo}_seed{seed}.jsonl")
    rt.export_hv_series(comparison, out / "hv_series.csv")

    for algo, (mean, std) in comparison.final_hypervolumes().items():
        print(f"{algo:7s} final hypervolume {mean:.6g} +/- {std:.6g}")
    print(f"series written to {out / 'hv_series.csv'}")


if __name__ == "__main__":
    main()
