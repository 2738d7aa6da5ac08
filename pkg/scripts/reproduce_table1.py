#!/usr/bin/env python3
"""Print the search-space cardinality table for the four shipped configs."""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from jaqs import compute_space_size, load_space_spec  # noqa: E402

CONFIGS = ("beit3", "vit", "bert", "ofa_resnet50")


def main():
    root = Path(__file__).resolve().parents[1]
    print(f"{'model':14s} {'arch':>6s} {'quant':>6s} {'joint':>6s}   exact joint log10")
    for name in CONFIGS:
        spec = load_space_spec(root / "configs" / f"{name}.json")
        arch = compute_space_size(spec, "arch")
        quant = compute_space_size(spec, "quant")
        joint = compute_space_size(spec, "joint")
        print(
            f"{name:14s} 10^{arch.floor_exponent:<3d} 10^{quant.floor_exponent:<3d} "
            f"10^{joint.joint_floor_exponent_composed:<3d}  {joint.exact_log10:.4f}"
        )


if __name__ == "__main__":
    main()
