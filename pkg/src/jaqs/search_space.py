"""Declarative search spaces over elastic architectures and precision policies.

A space is a list of categorical architecture dimensions (each expanding to
``multiplicity`` independent genes) plus a set of quantizable units, each
carrying one precision gene (or two when granularity is "split").  Genotypes
are fixed-length index vectors; units bound to a layer index are inactive
whenever that layer is pruned by the selected depth, and inactive genes are
neutralized in hashing so that behaviourally identical candidates collide.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterator

import numpy as np

KNOWN_PRECISIONS = ("INT4", "INT8", "BF16", "FP16", "FP32")
GRANULARITIES = ("joint", "split")
MODEL_FAMILIES = ("transformer", "resnet")


class SpecValidationError(ValueError):
    """A space-spec document violates the schema; `path` names the bad field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class GenotypeError(ValueError):
    """A genotype or flat gene vector is inconsistent with its space spec."""


def _is_number(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


@dataclass(frozen=True)
class Dimension:
    """One architecture dimension template; expands to `multiplicity` genes."""

    name: str
    choices: tuple[Any, ...]
    multiplicity: int = 1

    def __post_init__(self):
        if not self.name:
            raise SpecValidationError("name", "dimension name must be non-empty")
        if len(self.choices) < 1:
            raise SpecValidationError("choices", "at least one choice required")
        if len(set(self.choices)) != len(self.choices):
            raise SpecValidationError("choices", "choices must be distinct")
        if self.multiplicity < 1:
            raise SpecValidationError("multiplicity", "multiplicity must be >= 1")
        if all(_is_number(c) for c in self.choices):
            if list(self.choices) != sorted(self.choices):
                raise SpecValidationError(
                    "choices", "numeric choices must be in ascending order"
                )


@dataclass(frozen=True)
class QuantUnitSet:
    """Quantizable units of the maximal architecture and their precision genes.

    ``layer_of_unit`` maps each unit to the transformer layer it lives in
    (``None`` for always-active units such as embeddings or heads).  A unit is
    active iff its layer index is below the selected depth value.
    """

    unit_count: int
    precisions: tuple[str, ...] = ("INT8", "FP32")
    granularity: str = "joint"
    layer_of_unit: tuple[int | None, ...] = ()
    unit_names: tuple[str, ...] | None = None
    depth_dim: str | None = None

    def __post_init__(self):
        if self.unit_count < 0:
            raise SpecValidationError("unit_count", "unit_count must be >= 0")
        if len(self.precisions) < 2:
            raise SpecValidationError("precisions", "need at least two precisions")
        if len(set(self.precisions)) != len(self.precisions):
            raise SpecValidationError("precisions", "duplicate precision symbol")
        for p in self.precisions:
            if p not in KNOWN_PRECISIONS:
                raise SpecValidationError(
                    "precisions", f"unknown precision symbol {p!r}"
                )
        if self.granularity not in GRANULARITIES:
            raise SpecValidationError(
                "granularity", f"granularity must be one of {GRANULARITIES}"
            )
        if self.layer_of_unit and len(self.layer_of_unit) != self.unit_count:
            raise SpecValidationError(
                "layer_binding", "layer binding must cover exactly unit_count units"
            )
        if self.unit_names is not None and len(self.unit_names) != self.unit_count:
            raise SpecValidationError(
                "unit_names", f"expected {self.unit_count} names"
            )

    @property
    def genes_per_unit(self) -> int:
        return 2 if self.granularity == "split" else 1

    def layer_of(self, unit: int) -> int | None:
        if not self.layer_of_unit:
            return None
        return self.layer_of_unit[unit]


@dataclass(frozen=True)
class JointGenotype:
    """One candidate: architecture gene indices plus precision gene indices."""

    arch_genes: tuple[int, ...]
    quant_genes: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.arch_genes) + len(self.quant_genes)


@dataclass(frozen=True)
class SearchSpaceSpec:
    name: str
    model_family: str
    arch_dims: tuple[Dimension, ...]
    quant_units: QuantUnitSet
    shape_params: dict

    def __post_init__(self):
        if self.model_family not in MODEL_FAMILIES:
            raise SpecValidationError(
                "model_family", f"must be one of {MODEL_FAMILIES}"
            )
        names = [d.name for d in self.arch_dims]
        if len(set(names)) != len(names):
            raise SpecValidationError("arch_dims", "dimension names must be unique")
        if self.quant_units.depth_dim is not None:
            if self.quant_units.depth_dim not in names:
                raise SpecValidationError(
                    "quant_units.depth_dim",
                    f"no architecture dimension named {self.quant_units.depth_dim!r}",
                )
        max_layer = self.max_bound_layer
        if max_layer >= 0:
            dim = self.depth_dimension
            if dim is None:
                raise SpecValidationError(
                    "quant_units.layer_binding",
                    "layer-bound units require a depth dimension "
                    "(multiplicity 1, integer choices)",
                )
            if max_layer >= max(dim.choices):
                raise SpecValidationError(
                    "quant_units.layer_binding",
                    f"layer index {max_layer} can never be active "
                    f"(maximum depth is {max(dim.choices)})",
                )

    # -- derived gene tables ------------------------------------------------

    @cached_property
    def arch_gene_dims(self) -> tuple[int, ...]:
        """Dimension index owning each architecture gene, in gene order."""
        out = []
        for i, dim in enumerate(self.arch_dims):
            out.extend([i] * dim.multiplicity)
        return tuple(out)

    @cached_property
    def arch_gene_sizes(self) -> np.ndarray:
        return np.array(
            [len(self.arch_dims[i].choices) for i in self.arch_gene_dims], dtype=np.int64
        )

    @property
    def arch_gene_count(self) -> int:
        return len(self.arch_gene_dims)

    @property
    def quant_gene_count(self) -> int:
        return self.quant_units.unit_count * self.quant_units.genes_per_unit

    @property
    def genotype_length(self) -> int:
        return self.arch_gene_count + self.quant_gene_count

    @cached_property
    def gene_sizes(self) -> np.ndarray:
        """Choice count per gene over the full genotype (arch then quant)."""
        quant = np.full(self.quant_gene_count, len(self.quant_units.precisions), dtype=np.int64)
        return np.concatenate([self.arch_gene_sizes, quant])

    @cached_property
    def arch_gene_names(self) -> tuple[str, ...]:
        out = []
        for dim in self.arch_dims:
            if dim.multiplicity == 1:
                out.append(dim.name)
            else:
                out.extend(f"{dim.name}_{j}" for j in range(dim.multiplicity))
        return tuple(out)

    def dim_by_name(self, name: str) -> Dimension | None:
        for dim in self.arch_dims:
            if dim.name == name:
                return dim
        return None

    def gene_offset(self, name: str) -> int:
        """Index of the first gene belonging to the named dimension."""
        off = 0
        for dim in self.arch_dims:
            if dim.name == name:
                return off
            off += dim.multiplicity
        raise KeyError(name)

    @cached_property
    def max_bound_layer(self) -> int:
        layers = [l for l in self.quant_units.layer_of_unit if l is not None]
        return max(layers) if layers else -1

    @cached_property
    def depth_dimension(self) -> Dimension | None:
        """Dimension whose value is the selected depth for unit activation.

        Explicit ``depth_dim`` wins; otherwise the first multiplicity-1
        dimension whose choices are all integers.  ``None`` when no unit is
        layer-bound.
        """
        if self.max_bound_layer < 0:
            return None
        if self.quant_units.depth_dim is not None:
            return self.dim_by_name(self.quant_units.depth_dim)
        for dim in self.arch_dims:
            if dim.multiplicity == 1 and all(
                isinstance(c, int) and not isinstance(c, bool) for c in dim.choices
            ):
                return dim
        return None

    @cached_property
    def depth_gene_index(self) -> int | None:
        dim = self.depth_dimension
        if dim is None:
            return None
        return self.gene_offset(dim.name)

    @cached_property
    def unit_layers(self) -> np.ndarray:
        """Per-unit layer index, -1 when the unit is always active."""
        if not self.quant_units.layer_of_unit:
            return np.full(self.quant_units.unit_count, -1, dtype=np.int64)
        return np.array(
            [-1 if l is None else l for l in self.quant_units.layer_of_unit],
            dtype=np.int64,
        )

    @cached_property
    def quant_gene_layers(self) -> np.ndarray:
        return np.repeat(self.unit_layers, self.quant_units.genes_per_unit)


# -- loading ------------------------------------------------------------------


def _require(doc: dict, key: str, path: str):
    if key not in doc:
        raise SpecValidationError(f"{path}.{key}" if path else key, "missing field")
    return doc[key]


def load_space_spec(source: dict | str | Path) -> SearchSpaceSpec:
    """Load and validate a space-spec document (dict, or path to JSON)."""
    if isinstance(source, (str, Path)):
        with open(source) as fh:
            doc = json.load(fh)
    else:
        doc = source
    if not isinstance(doc, dict):
        raise SpecValidationError("", "space spec must be a JSON object")

    name = _require(doc, "name", "")
    family = _require(doc, "model_family", "")
    raw_dims = _require(doc, "arch_dims", "")
    if not isinstance(raw_dims, list) or not raw_dims:
        raise SpecValidationError("arch_dims", "must be a non-empty array")

    dims = []
    for i, rd in enumerate(raw_dims):
        path = f"arch_dims[{i}]"
        if not isinstance(rd, dict):
            raise SpecValidationError(path, "must be an object")
        try:
            dims.append(
                Dimension(
                    name=_require(rd, "name", path),
                    choices=tuple(_require(rd, "choices", path)),
                    multiplicity=int(rd.get("multiplicity", 1)),
                )
            )
        except SpecValidationError as e:
            raise SpecValidationError(f"{path}.{e.path}", str(e).split(": ", 1)[1]) from None

    rq = _require(doc, "quant_units", "")
    if not isinstance(rq, dict):
        raise SpecValidationError("quant_units", "must be an object")
    unit_count = int(_require(rq, "unit_count", "quant_units"))
    layer_of = [None] * unit_count
    for j, binding in enumerate(rq.get("layer_binding", []) or []):
        path = f"quant_units.layer_binding[{j}]"
        rng = _require(binding, "unit_range", path)
        layer = int(_require(binding, "layer_index", path))
        if not (isinstance(rng, list) and len(rng) == 2):
            raise SpecValidationError(path + ".unit_range", "expected [start, stop)")
        start, stop = int(rng[0]), int(rng[1])
        if not (0 <= start < stop <= unit_count):
            raise SpecValidationError(
                path + ".unit_range", f"range [{start}, {stop}) outside 0..{unit_count}"
            )
        if layer < 0:
            raise SpecValidationError(path + ".layer_index", "must be >= 0")
        for u in range(start, stop):
            if layer_of[u] is not None:
                raise SpecValidationError(
                    path, f"unit {u} already bound to layer {layer_of[u]}"
                )
            layer_of[u] = layer

    try:
        quant = QuantUnitSet(
            unit_count=unit_count,
            precisions=tuple(rq.get("precisions", ("INT8", "FP32"))),
            granularity=rq.get("granularity", "joint"),
            layer_of_unit=tuple(layer_of),
            unit_names=tuple(rq["unit_names"]) if rq.get("unit_names") else None,
            depth_dim=rq.get("depth_dim"),
        )
    except SpecValidationError as e:
        raise SpecValidationError(f"quant_units.{e.path}", str(e).split(": ", 1)[1]) from None

    shape = doc.get("shape_params", {})
    if not isinstance(shape, dict):
        raise SpecValidationError("shape_params", "must be an object")

    return SearchSpaceSpec(
        name=str(name),
        model_family=str(family),
        arch_dims=tuple(dims),
        quant_units=quant,
        shape_params=dict(shape),
    )


def space_spec_document(spec: SearchSpaceSpec) -> dict:
    """Serialize a spec back to its JSON document form (inverse of loading)."""
    bindings = []
    start = None
    prev = None
    for u, layer in enumerate(list(spec.quant_units.layer_of_unit) or []):
        if layer != prev:
            if prev is not None and start is not None:
                bindings.append({"unit_range": [start, u], "layer_index": prev})
            start, prev = (u, layer) if layer is not None else (None, None)
    if prev is not None and start is not None:
        bindings.append(
            {"unit_range": [start, spec.quant_units.unit_count], "layer_index": prev}
        )
    qu: dict[str, Any] = {
        "unit_count": spec.quant_units.unit_count,
        "precisions": list(spec.quant_units.precisions),
        "granularity": spec.quant_units.granularity,
        "layer_binding": bindings,
    }
    if spec.quant_units.unit_names is not None:
        qu["unit_names"] = list(spec.quant_units.unit_names)
    if spec.quant_units.depth_dim is not None:
        qu["depth_dim"] = spec.quant_units.depth_dim
    return {
        "name": spec.name,
        "model_family": spec.model_family,
        "arch_dims": [
            {"name": d.name, "choices": list(d.choices), "multiplicity": d.multiplicity}
            for d in spec.arch_dims
        ],
        "quant_units": qu,
        "shape_params": dict(spec.shape_params),
    }


# -- cardinality ----------------------------------------------------------------


@dataclass(frozen=True)
class SpaceSizeReport:
    subset: str
    exact_log10: float
    floor_exponent: int
    joint_floor_exponent_composed: int | None = None


def space_cardinality(spec: SearchSpaceSpec, subset: str = "joint") -> int:
    """Exact number of points in the chosen subset of the space."""
    if subset not in ("arch", "quant", "joint"):
        raise ValueError(f"unknown subset {subset!r}")
    n = 1
    if subset in ("arch", "joint"):
        for size in spec.arch_gene_sizes:
            n *= int(size)
    if subset in ("quant", "joint"):
        n *= len(spec.quant_units.precisions) ** spec.quant_gene_count
    return n


def _log10_exact(n: int) -> float:
    # big ints overflow float conversion; split into exponent and mantissa
    digits = len(str(n)) - 1
    if digits < 300:
        return math.log10(n)
    mantissa = n / 10**digits
    return digits + math.log10(mantissa)


def compute_space_size(spec: SearchSpaceSpec, subset: str = "joint") -> SpaceSizeReport:
    n = space_cardinality(spec, subset)
    composed = None
    if subset == "joint":
        composed = (
            compute_space_size(spec, "arch").floor_exponent
            + compute_space_size(spec, "quant").floor_exponent
        )
    return SpaceSizeReport(
        subset=subset,
        exact_log10=_log10_exact(n),
        floor_exponent=len(str(n)) - 1,
        joint_floor_exponent_composed=composed,
    )


# -- encoding -------------------------------------------------------------------


def validate_genotype(spec: SearchSpaceSpec, genotype: JointGenotype) -> None:
    if len(genotype.arch_genes) != spec.arch_gene_count:
        raise GenotypeError(
            f"expected {spec.arch_gene_count} architecture genes, "
            f"got {len(genotype.arch_genes)}"
        )
    if len(genotype.quant_genes) != spec.quant_gene_count:
        raise GenotypeError(
            f"expected {spec.quant_gene_count} quantization genes, "
            f"got {len(genotype.quant_genes)}"
        )
    for pos, (idx, size) in enumerate(zip(genotype.arch_genes, spec.arch_gene_sizes)):
        if not 0 <= idx < size:
            raise GenotypeError(
                f"architecture gene {pos} index {idx} out of range 0..{size - 1}"
            )
    n_prec = len(spec.quant_units.precisions)
    for pos, idx in enumerate(genotype.quant_genes):
        if not 0 <= idx < n_prec:
            raise GenotypeError(
                f"quantization gene {pos} index {idx} out of range 0..{n_prec - 1}"
            )


def encode(spec: SearchSpaceSpec, genotype: JointGenotype) -> np.ndarray:
    """Flat integer vector, architecture genes first then precision genes."""
    validate_genotype(spec, genotype)
    return np.array(genotype.arch_genes + genotype.quant_genes, dtype=np.int64)


def decode(spec: SearchSpaceSpec, flat) -> JointGenotype:
    flat = np.asarray(flat, dtype=np.int64)
    if flat.ndim != 1 or len(flat) != spec.genotype_length:
        raise GenotypeError(
            f"expected a flat vector of length {spec.genotype_length}, got {flat.shape}"
        )
    g = JointGenotype(
        arch_genes=tuple(int(v) for v in flat[: spec.arch_gene_count]),
        quant_genes=tuple(int(v) for v in flat[spec.arch_gene_count :]),
    )
    validate_genotype(spec, g)
    return g


def random_genotype(spec: SearchSpaceSpec, rng: np.random.Generator) -> JointGenotype:
    """Sample every gene uniformly and independently from its choices."""
    flat = [int(rng.integers(size)) for size in spec.gene_sizes]
    return JointGenotype(
        arch_genes=tuple(flat[: spec.arch_gene_count]),
        quant_genes=tuple(flat[spec.arch_gene_count :]),
    )


def random_genotype_matrix(
    spec: SearchSpaceSpec, count: int, rng: np.random.Generator
) -> np.ndarray:
    """Sample `count` encoded genotypes as an integer matrix (column by column)."""
    mat = np.empty((count, spec.genotype_length), dtype=np.int64)
    for j, size in enumerate(spec.gene_sizes):
        mat[:, j] = rng.integers(size, size=count)
    return mat


def iter_genotypes(spec: SearchSpaceSpec) -> Iterator[JointGenotype]:
    """Enumerate the whole space in encoding order (use on small spaces only)."""
    for flat in itertools.product(*(range(int(s)) for s in spec.gene_sizes)):
        yield JointGenotype(
            arch_genes=tuple(flat[: spec.arch_gene_count]),
            quant_genes=tuple(flat[spec.arch_gene_count :]),
        )


# -- activation masking ----------------------------------------------------------


def selected_depth(spec: SearchSpaceSpec, arch_genes: tuple[int, ...]) -> int | None:
    """Depth value chosen by the genotype, or None when nothing is layer-bound."""
    pos = spec.depth_gene_index
    if pos is None:
        return None
    dim = spec.depth_dimension
    return int(dim.choices[arch_genes[pos]])


def active_quant_mask(spec: SearchSpaceSpec, genotype: JointGenotype) -> np.ndarray:
    """Boolean vector over quantization genes; inactive genes belong to pruned layers."""
    validate_genotype(spec, genotype)
    layers = spec.quant_gene_layers
    depth = selected_depth(spec, genotype.arch_genes)
    if depth is None:
        return np.ones(spec.quant_gene_count, dtype=bool)
    return (layers < 0) | (layers < depth)


def active_quant_mask_batch(spec: SearchSpaceSpec, flat: np.ndarray) -> np.ndarray:
    """Vectorized activation mask for a matrix of encoded genotypes."""
    flat = np.asarray(flat)
    n = flat.shape[0]
    if spec.quant_gene_count == 0:
        return np.ones((n, 0), dtype=bool)
    layers = spec.quant_gene_layers
    pos = spec.depth_gene_index
    if pos is None:
        return np.ones((n, spec.quant_gene_count), dtype=bool)
    choices = np.asarray(spec.depth_dimension.choices, dtype=np.int64)
    depths = choices[flat[:, pos]]
    return (layers[None, :] < 0) | (layers[None, :] < depths[:, None])


def canonical_hash(spec: SearchSpaceSpec, genotype: JointGenotype) -> str:
    """Digest identifying the effective configuration.

    Inactive quantization genes are replaced by a sentinel before hashing so
    genotypes that differ only in pruned-layer genes collide on purpose.
    """
    flat = encode(spec, genotype)
    mask = active_quant_mask(spec, genotype)
    quant = flat[spec.arch_gene_count :].copy()
    quant[~mask] = -1
    payload = "%s|%s|%s" % (
        spec.name,
        ",".join(str(v) for v in flat[: spec.arch_gene_count]),
        ",".join(str(v) for v in quant),
    )
    return hashlib.sha256(payload.encode()).hexdigest()


def baseline_genotype(spec: SearchSpaceSpec, precision: str) -> JointGenotype:
    """Maximal architecture with a uniform precision policy."""
    if precision not in spec.quant_units.precisions:
        raise ValueError(
            f"precision {precision!r} not in this space "
            f"(available: {list(spec.quant_units.precisions)})"
        )
    idx = spec.quant_units.precisions.index(precision)
    return JointGenotype(
        arch_genes=tuple(int(s) - 1 for s in spec.arch_gene_sizes),
        quant_genes=tuple([idx] * spec.quant_gene_count),
    )
