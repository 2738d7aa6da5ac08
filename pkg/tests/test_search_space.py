import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jaqs.search_space import (
    Dimension,
    GenotypeError,
    JointGenotype,
    QuantUnitSet,
    SearchSpaceSpec,
    SpecValidationError,
    active_quant_mask,
    baseline_genotype,
    canonical_hash,
    compute_space_size,
    decode,
    encode,
    iter_genotypes,
    load_space_spec,
    random_genotype,
    space_cardinality,
    space_spec_document,
)

TABLE = {
    # arch floor, quant floor, joint floor sum
    "beit3": (13, 21, 34),
    "vit": (13, 22, 35),
    "bert": (13, 23, 36),
    "ofa_resnet50": (13, 37, 50),
}


def degenerate_spec():
    return load_space_spec(
        {
            "name": "point",
            "model_family": "transformer",
            "arch_dims": [{"name": "only", "choices": [1], "multiplicity": 1}],
            "quant_units": {"unit_count": 0},
            "shape_params": {},
        }
    )


# -- loading ------------------------------------------------------------------


def test_shipped_specs_load(shipped_specs):
    bert = shipped_specs["bert"]
    assert [d.name for d in bert.arch_dims] == ["num_layers", "num_heads", "ffn_dims"]
    assert bert.arch_dims[0].choices == (6, 7, 8, 9, 10, 11, 12)
    assert bert.arch_dims[1].multiplicity == 12
    assert bert.arch_dims[2].choices == (1024, 2048, 3072)
    assert bert.quant_units.unit_count == 77
    assert bert.genotype_length == 25 + 77

    ofa = shipped_specs["ofa_resnet50"]
    assert ofa.arch_dims[0].choices == (0, 1, 2) and ofa.arch_dims[0].multiplicity == 5
    assert ofa.arch_dims[1].choices == (0.2, 0.25, 0.35) and ofa.arch_dims[1].multiplicity == 18
    assert ofa.arch_dims[2].choices == (0.65, 0.8, 1.0) and ofa.arch_dims[2].multiplicity == 6


def test_degenerate_space_loads():
    spec = degenerate_spec()
    assert spec.genotype_length == 1
    assert space_cardinality(spec, "joint") == 1


def test_document_round_trip(shipped_specs, configs_dir):
    for name, spec in shipped_specs.items():
        doc = space_spec_document(spec)
        assert load_space_spec(doc) == spec
        on_disk = json.loads((configs_dir / f"{name}.json").read_text())
        assert doc == on_disk


@pytest.mark.parametrize(
    "mutate, path_fragment",
    [
        (lambda d: d.pop("name"), "name"),
        (lambda d: d["arch_dims"][0].update(choices=[]), "choices"),
        (lambda d: d["arch_dims"][1].update(choices=[6, 6, 8]), "choices"),
        (lambda d: d["quant_units"].update(precisions=["INT8", "FP7"]), "precisions"),
        (lambda d: d["quant_units"].update(precisions=["INT8"]), "precisions"),
        (lambda d: d["quant_units"].update(granularity="per-channel"), "granularity"),
    ],
)
def test_schema_violations(configs_dir, mutate, path_fragment):
    doc = json.loads((configs_dir / "bert.json").read_text())
    mutate(doc)
    with pytest.raises((SpecValidationError, KeyError)) as err:
        load_space_spec(doc)
    if isinstance(err.value, SpecValidationError):
        assert path_fragment in err.value.path


def test_overlapping_layer_binding_rejected(configs_dir):
    doc = json.loads((configs_dir / "bert.json").read_text())
    doc["quant_units"]["layer_binding"].append({"unit_range": [0, 2], "layer_index": 3})
    with pytest.raises(SpecValidationError, match="already bound"):
        load_space_spec(doc)


def test_unreachable_layer_rejected(configs_dir):
    doc = json.loads((configs_dir / "bert.json").read_text())
    doc["quant_units"]["layer_binding"][0]["layer_index"] = 12
    with pytest.raises(SpecValidationError, match="never be active"):
        load_space_spec(doc)


# -- cardinality -----------------------------------------------------------------


def test_bert_arch_cardinality_exact(bert_spec):
    # direct product of the choice counts
    assert space_cardinality(bert_spec, "arch") == 7 * 4**12 * 3**12 == 62412703137792
    report = compute_space_size(bert_spec, "arch")
    assert report.floor_exponent == 13
    assert report.exact_log10 == pytest.approx(math.log10(62412703137792), abs=1e-9)


def test_table_floor_exponents(shipped_specs):
    for name, (arch_e, quant_e, joint_e) in TABLE.items():
        spec = shipped_specs[name]
        assert compute_space_size(spec, "arch").floor_exponent == arch_e, name
        assert compute_space_size(spec, "quant").floor_exponent == quant_e, name
        joint = compute_space_size(spec, "joint")
        assert joint.joint_floor_exponent_composed == joint_e, name


def test_log10_additivity(shipped_specs):
    for spec in shipped_specs.values():
        arch = compute_space_size(spec, "arch").exact_log10
        quant = compute_space_size(spec, "quant").exact_log10
        joint = compute_space_size(spec, "joint").exact_log10
        assert abs(joint - (arch + quant)) < 1e-9


def test_singleton_space_size():
    report = compute_space_size(degenerate_spec(), "arch")
    assert report.exact_log10 == 0.0
    assert report.floor_exponent == 0


# -- encode / decode ----------------------------------------------------------------


def test_all_minimum_encodes_to_zeros(bert_spec):
    g = JointGenotype((0,) * 25, (0,) * 77)
    assert not encode(bert_spec, g).any()
    assert decode(bert_spec, np.zeros(102, dtype=int)) == g


@given(seed=st.integers(0, 2**32 - 1))
def test_round_trip_random(bert_spec, seed):
    rng = np.random.default_rng(seed)
    g = random_genotype(bert_spec, rng)
    assert decode(bert_spec, encode(bert_spec, g)) == g


def test_encode_out_of_range_names_position(bert_spec):
    g = JointGenotype((0,) * 24 + (99,), (0,) * 77)
    with pytest.raises(GenotypeError, match="gene 24"):
        encode(bert_spec, g)


def test_decode_wrong_length(bert_spec):
    with pytest.raises(GenotypeError, match="length 102"):
        decode(bert_spec, [0, 1, 2])


def test_decode_out_of_range(bert_spec):
    flat = np.zeros(102, dtype=int)
    flat[30] = 7
    with pytest.raises(GenotypeError):
        decode(bert_spec, flat)


# -- sampling -------------------------------------------------------------------------


def test_sampling_determinism(bert_spec):
    a = np.random.default_rng(42)
    b = np.random.default_rng(42)
    g1, g2 = random_genotype(bert_spec, a), random_genotype(bert_spec, a)
    h1, h2 = random_genotype(bert_spec, b), random_genotype(bert_spec, b)
    assert g1 != g2
    assert (g1, g2) == (h1, h2)


def test_sampling_uniformity(bert_spec):
    rng = np.random.default_rng(7)
    pos = bert_spec.gene_offset("num_heads")  # a 4-choice gene
    counts = np.zeros(4)
    n = 10_000
    for _ in range(n):
        counts[random_genotype(bert_spec, rng).arch_genes[pos]] += 1
    assert np.all(counts / n >= 0.22) and np.all(counts / n <= 0.28)


def test_singleton_space_always_same():
    spec = degenerate_spec()
    rng = np.random.default_rng(0)
    assert random_genotype(spec, rng) == random_genotype(spec, rng)


# -- masking and hashing -----------------------------------------------------------------


def test_mask_maximal_depth_all_active(bert_spec):
    g = baseline_genotype(bert_spec, "INT8")
    assert active_quant_mask(bert_spec, g).all()


def test_mask_depth_six(bert_spec):
    g = decode(bert_spec, [0] * 25 + [0] * 77)  # depth choice 0 -> 6 layers
    mask = active_quant_mask(bert_spec, g)
    layers = bert_spec.quant_gene_layers
    assert mask[layers < 0].all()  # unbound units always active
    assert mask[(layers >= 0) & (layers < 6)].all()
    assert not mask[layers >= 6].any()


def test_unbound_units_active_at_every_depth(bert_spec):
    for depth_idx in range(7):
        g = decode(bert_spec, [depth_idx] + [0] * 24 + [0] * 77)
        mask = active_quant_mask(bert_spec, g)
        assert mask[bert_spec.quant_gene_layers < 0].all()


def test_hash_ignores_inactive_gene(bert_spec):
    base = [0] * 25 + [0] * 77
    g1 = decode(bert_spec, base)
    flipped = list(base)
    flipped[25 + 71] = 1  # layer 11 gene, inactive at depth 6
    g2 = decode(bert_spec, flipped)
    assert canonical_hash(bert_spec, g1) == canonical_hash(bert_spec, g2)


def test_hash_stable_and_sensitive(bert_spec):
    rng = np.random.default_rng(13)
    seen = {}
    for _ in range(10_000):
        g = random_genotype(bert_spec, rng)
        h = canonical_hash(bert_spec, g)
        assert canonical_hash(bert_spec, g) == h
        flat = tuple(encode(bert_spec, g))
        mask = active_quant_mask(bert_spec, g)
        key = flat[:25] + tuple(
            v if mask[i] else -1 for i, v in enumerate(flat[25:])
        )
        if h in seen:
            assert seen[h] == key  # equal hash implies equal effective config
        seen[h] = key


def test_hash_differs_on_active_gene(bert_spec):
    g1 = baseline_genotype(bert_spec, "INT8")
    g2 = baseline_genotype(bert_spec, "FP32")
    assert canonical_hash(bert_spec, g1) != canonical_hash(bert_spec, g2)


# -- baseline -----------------------------------------------------------------------------


def test_baseline_int8(bert_spec):
    g = baseline_genotype(bert_spec, "INT8")
    assert bert_spec.arch_dims[0].choices[g.arch_genes[0]] == 12
    heads = bert_spec.gene_offset("num_heads")
    assert all(
        bert_spec.arch_dims[1].choices[g.arch_genes[heads + i]] == 12 for i in range(12)
    )
    assert all(bert_spec.quant_units.precisions[q] == "INT8" for q in g.quant_genes)


def test_baseline_fp32_same_arch(bert_spec):
    g8 = baseline_genotype(bert_spec, "INT8")
    g32 = baseline_genotype(bert_spec, "FP32")
    assert g8.arch_genes == g32.arch_genes
    assert all(bert_spec.quant_units.precisions[q] == "FP32" for q in g32.quant_genes)


def test_baseline_unknown_precision(bert_spec):
    with pytest.raises(ValueError, match="INT4"):
        baseline_genotype(bert_spec, "INT4")


# -- enumeration ----------------------------------------------------------------------------


def test_iter_genotypes_exhaustive(tiny_spec):
    all_points = list(iter_genotypes(tiny_spec))
    assert len(all_points) == space_cardinality(tiny_spec, "joint") == 4096
    assert len(set(all_points)) == 4096
