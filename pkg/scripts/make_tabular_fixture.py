#!/usr/bin/env python3
"""Generate a synthetic "measured" CSV covering a whole small space.

Every effective configuration gets one row (genes column format), with a
deterministic hash-derived perturbation standing in for measurement noise, so
the file can drive a full search through the tabular evaluator.
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from jaqs import canonical_hash, load_space_spec  # noqa: E402
from jaqs.model_analytics import (  # noqa: E402
    CostModelConfig,
    SurrogateConfig,
    make_builtin_evaluator,
)
from jaqs.moo_core import ObjectiveSpec  # noqa: E402
from jaqs.search_space import encode, iter_genotypes, space_cardinality  # noqa: E402


def write_fixture(spec_path, out_path, noise_scale=0.2, max_points=100_000):
    spec = load_space_spec(spec_path)
    n = space_cardinality(spec, "joint")
    if n > max_points:
        raise SystemExit(f"space has {n} points; refusing to enumerate more than {max_points}")
    objectives = [
        ObjectiveSpec("accuracy", "maximize"),
        ObjectiveSpec("model_size", "minimize"),
    ]
    evaluator = make_builtin_evaluator(
        spec, CostModelConfig(), SurrogateConfig(seed=7), objectives
    )
    lines = [
        f"# synthetic measurements for space '{spec.name}' ({n} genotypes)",
        "genes,accuracy,model_size",
    ]
    for genotype in iter_genotypes(spec):
        values = evaluator.evaluate(genotype)
        digest = canonical_hash(spec, genotype)
        # duplicate hashes must stay consistent, so noise is a hash function
        noise = (int(digest[:8], 16) / 16**8 - 0.5) * noise_scale
        genes = "/".join(str(v) for v in encode(spec, genotype))
        lines.append(f"{genes},{values['accuracy'] + noise:.4f},{values['model_size']:.1f}")
    Path(out_path).write_text("\n".join(lines) + "\n")
    return len(lines) - 2


def main():
    root = Path(__file__).resolve().parents[1]
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--space", default=root / "tests" / "data" / "tiny.json")
    parser.add_argument("--out", default="measured.csv")
    parser.add_argument("--noise", type=float, default=0.2)
    args = parser.parse_args()
    rows = write_fixture(args.space, args.out, args.noise)
    print(f"wrote {rows} rows to {args.out}")


if __name__ == "__main__":
    main()
