"""Joint architecture and quantization-policy search over declarative spaces."""

__version__ = "0.1.0"

from .moo_core import ObjectiveSpec
from .search_space import (
    JointGenotype,
    SearchSpaceSpec,
    baseline_genotype,
    canonical_hash,
    compute_space_size,
    load_space_spec,
    random_genotype,
)

__all__ = [
    "__version__",
    "ObjectiveSpec",
    "JointGenotype",
    "SearchSpaceSpec",
    "baseline_genotype",
    "canonical_hash",
    "compute_space_size",
    "load_space_spec",
    "random_genotype",
]
