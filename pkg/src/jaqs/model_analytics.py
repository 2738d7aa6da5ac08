"""Analytic per-unit parameter/FLOP profiles and built-in objective models.

Two model families are covered with closed-form counting: transformer blocks
(attention + feed-forward + layer norms) and bottleneck-style residual
convnets driven by depth/expand/width genes.  On top of the profiles sit three
deterministic objective functions: model size in bytes, a normalized latency
proxy (precision-weighted FLOPs), and a synthetic accuracy surrogate designed
for desk-scale search experiments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .moo_core import ObjectiveSpec
from .search_space import (
    GenotypeError,
    JointGenotype,
    SearchSpaceSpec,
    active_quant_mask,
    validate_genotype,
)

BUILTIN_OBJECTIVES = ("accuracy", "model_size", "latency")

_MASK64 = (1 << 64) - 1


def splitmix64_stream(seed: int, count: int) -> list[int]:
    """First `count` outputs of the splitmix64 generator seeded with `seed`."""
    state = seed & _MASK64
    out = []
    for _ in range(count):
        state = (state + 0x9E3779B97F4A7C15) & _MASK64
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        out.append(z ^ (z >> 31))
    return out


@dataclass(frozen=True)
class UnitProfile:
    unit_index: int
    param_count: int
    flops: int
    layer_index: int | None = None


@dataclass(frozen=True)
class CostModelConfig:
    """Per-precision byte widths and latency multipliers.

    ``normalization_constant`` is the latency of the maximal all-FP32
    architecture; leave it None to have it derived from the space spec.
    """

    bytes_per_param: Mapping[str, float] = field(
        default_factory=lambda: {"FP32": 4.0, "INT8": 1.0}
    )
    latency_factor: Mapping[str, float] = field(
        default_factory=lambda: {"FP32": 1.0, "INT8": 0.5}
    )
    normalization_constant: float | None = None

    def __post_init__(self):
        for name, table in (
            ("bytes_per_param", self.bytes_per_param),
            ("latency_factor", self.latency_factor),
        ):
            for prec, value in table.items():
                if not value > 0:
                    raise ValueError(f"{name}[{prec}] must be strictly positive")
        if self.normalization_constant is not None and not self.normalization_constant > 0:
            raise ValueError("normalization_constant must be strictly positive")


@dataclass(frozen=True)
class SurrogateConfig:
    """Synthetic accuracy model: capacity reward minus per-unit INT8 penalties.

    Unit sensitivities are drawn from a splitmix64 stream so an independent
    reimplementation can reproduce them exactly.
    """

    seed: int
    base_accuracy: float = 60.0
    capacity_gain: float = 25.0
    max_unit_sensitivity: float = 0.05


def unit_sensitivities(sur: SurrogateConfig, unit_count: int) -> np.ndarray:
    raw = splitmix64_stream(sur.seed, unit_count)
    return np.array([r / 2.0**64 for r in raw]) * sur.max_unit_sensitivity


# -- transformer counting ---------------------------------------------------------

# Per-layer role splits, keyed by how many units the config binds to a layer.
# Parameters follow the usual block structure: QKV projections 3*(d*kh + kh),
# attention output kh*d + d, feed-forward d*f + f + f*d + d, layer norms 4d.
# Layer norms fold into the output projections unless a dedicated unit exists.


def _layer_param_split(n_units: int, d: int, kh: int, f: int) -> list[int]:
    qkv = 3 * (d * kh + kh)
    attn_out = kh * d + d
    ffn_in = d * f + f
    ffn_out = f * d + d
    ln = 4 * d
    if n_units == 6:
        per_proj = d * kh + kh
        return [per_proj, per_proj, per_proj, attn_out + 2 * d, ffn_in, ffn_out + 2 * d]
    if n_units == 5:
        return [qkv, attn_out, ffn_in, ffn_out, ln]
    if n_units == 4:
        return [qkv, attn_out + 2 * d, ffn_in, ffn_out + 2 * d]
    return _even_split(qkv + attn_out + ffn_in + ffn_out + ln, n_units)


def _layer_flop_split(n_units: int, d: int, kh: int, f: int, s: int) -> list[int]:
    proj = 2 * s * d * kh          # one of Q/K/V
    scores = 2 * s * s * kh        # QK^T, and again for attn @ V
    attn_out = 2 * s * kh * d
    ffn = 2 * s * d * f
    ln = 5 * s * d
    if n_units == 6:
        return [proj + scores, proj, proj + scores, attn_out + ln, ffn, ffn + ln]
    if n_units == 5:
        return [3 * proj + 2 * scores, attn_out, ffn, ffn, 2 * ln]
    if n_units == 4:
        return [3 * proj + 2 * scores, attn_out + ln, ffn, ffn + ln]
    total = 3 * proj + 2 * scores + attn_out + 2 * ffn + 2 * ln
    return _even_split(total, n_units)


def _even_split(total: int, n: int) -> list[int]:
    base, rem = divmod(int(total), n)
    return [base + (1 if i < rem else 0) for i in range(n)]


def _transformer_seq_len(p: dict) -> int:
    if "seq_len" in p:
        return int(p["seq_len"])
    if "patch_size" in p:
        return (int(p["image_size"]) // int(p["patch_size"])) ** 2 + 1
    raise ValueError("shape_params needs seq_len or image_size/patch_size")


def _transformer_extra_totals(p: dict, d: int, seq: int) -> tuple[int, int]:
    """Total params/FLOPs of always-active units (embeddings, pooler, head)."""
    params = 0
    flops = 0
    if "vocab_size" in p:
        params += int(p["vocab_size"]) * d
        flops += 2 * seq * d
    if "max_position_embeddings" in p:
        params += int(p["max_position_embeddings"]) * d
        flops += 2 * seq * d
    if "type_vocab_size" in p:
        params += int(p["type_vocab_size"]) * d
        flops += 2 * seq * d
    if "patch_size" in p:
        patch = int(p["patch_size"])
        n_tokens = (int(p["image_size"]) // patch) ** 2 + 1
        params += patch * patch * 3 * d + d       # projection
        params += n_tokens * d + d                # position table + class token
        flops += 2 * (n_tokens - 1) * patch * patch * 3 * d + 2 * n_tokens * d
    params += 2 * d                               # embedding/final norm
    flops += 5 * seq * d
    if p.get("use_pooler"):
        params += d * d + d
        flops += 2 * d * d
    if "num_classes" in p:
        n_cls = int(p["num_classes"])
        params += d * n_cls + n_cls
        flops += 2 * d * n_cls
    return params, flops


def _transformer_profiles(spec: SearchSpaceSpec, arch: tuple[int, ...]) -> list[UnitProfile]:
    p = spec.shape_params
    d = int(p["hidden_size"])
    k = int(p["head_dim"])
    seq = _transformer_seq_len(p)

    depth_dim = spec.depth_dimension
    if depth_dim is not None:
        depth = int(depth_dim.choices[arch[spec.gene_offset(depth_dim.name)]])
    else:
        depth = spec.max_bound_layer + 1

    heads_dim = spec.dim_by_name("num_heads")
    ffn_dim = spec.dim_by_name("ffn_dims")
    heads_off = spec.gene_offset("num_heads") if heads_dim else None
    ffn_off = spec.gene_offset("ffn_dims") if ffn_dim else None

    def heads(layer: int) -> int:
        if heads_dim is None:
            return d // k
        return int(heads_dim.choices[arch[heads_off + layer]])

    def ffn(layer: int) -> int:
        if ffn_dim is None:
            return int(p.get("ffn_size", 4 * d))
        return int(ffn_dim.choices[arch[ffn_off + layer]])

    by_layer: dict[int, list[int]] = {}
    extras: list[int] = []
    for u in range(spec.quant_units.unit_count):
        layer = spec.quant_units.layer_of(u)
        if layer is None:
            extras.append(u)
        else:
            by_layer.setdefault(layer, []).append(u)

    profiles: dict[int, UnitProfile] = {}
    for layer, units in by_layer.items():
        if layer < depth:
            kh = k * heads(layer)
            params = _layer_param_split(len(units), d, kh, ffn(layer))
            flops = _layer_flop_split(len(units), d, kh, ffn(layer), seq)
        else:
            params = [0] * len(units)
            flops = [0] * len(units)
        for u, pc, fl in zip(units, params, flops):
            profiles[u] = UnitProfile(u, int(pc), int(fl), layer)

    if extras:
        tot_p, tot_f = _transformer_extra_totals(p, d, seq)
        for u, pc, fl in zip(extras, _even_split(tot_p, len(extras)), _even_split(tot_f, len(extras))):
            profiles[u] = UnitProfile(u, int(pc), int(fl), None)

    return [profiles[u] for u in range(spec.quant_units.unit_count)]


# -- residual convnet counting -----------------------------------------------------


def _make_divisible(v: float, divisor: int) -> int:
    return max(divisor, int(math.floor(v / divisor + 0.5)) * divisor)


def _resnet_ops(spec: SearchSpaceSpec, arch: tuple[int, ...]) -> list[tuple[int, int, bool]]:
    """(params, flops, is_conv) per op of the maximal network, in fixed order."""
    p = spec.shape_params
    div = int(p.get("channel_divisor", 8))
    image = int(p["image_size"])
    n_classes = int(p["num_classes"])
    n_stages = 4
    base_out = [int(p[f"stage{i + 1}_out_channels"]) for i in range(n_stages)]
    base_depth = [int(p[f"stage{i + 1}_base_depth"]) for i in range(n_stages)]
    strides = [int(p[f"stage{i + 1}_stride"]) for i in range(n_stages)]

    depth_dim = spec.dim_by_name("depth")
    expand_dim = spec.dim_by_name("expand_ratio")
    width_dim = spec.dim_by_name("width_mult")
    if depth_dim is None or expand_dim is None or width_dim is None:
        raise ValueError("resnet spec needs depth, expand_ratio and width_mult dims")
    max_extra = int(max(depth_dim.choices))
    d_off = spec.gene_offset("depth")
    e_off = spec.gene_offset("expand_ratio")
    w_off = spec.gene_offset("width_mult")

    def depth_val(i):
        return int(depth_dim.choices[arch[d_off + i]])

    def expand_val(i):
        return float(expand_dim.choices[arch[e_off + i]])

    def width_val(i):
        return float(width_dim.choices[arch[w_off + i]])

    def conv(cin, cout, ksize, spatial, active):
        if not active:
            return (0, 0, True)
        params = ksize * ksize * cin * cout + 2 * cout   # batch norm folded in
        flops = 2 * ksize * ksize * cin * cout * spatial * spatial
        return (params, flops, True)

    ops: list[tuple[int, int, bool]] = []
    c0 = _make_divisible(int(p["stem_mid_channels"]) * width_val(0), div)
    c1 = _make_divisible(int(p["stem_out_channels"]) * width_val(1), div)
    stem_depth = depth_val(0)
    half = image // 2
    ops.append(conv(3, c0, 3, half, True))
    ops.append(conv(c0, c0, 3, half, stem_depth >= 1))
    ops.append(conv(c0, c1, 3, half, stem_depth >= 2))
    in_ch = c1 if stem_depth >= 2 else c0

    spatial = half // 2   # stem pool
    block_index = 0
    for s in range(n_stages):
        out_ch = _make_divisible(base_out[s] * width_val(2 + s), div)
        out_spatial = spatial // strides[s]
        n_active = base_depth[s] + depth_val(s + 1)
        for b in range(base_depth[s] + max_extra):
            active = b < n_active
            bin_ch = in_ch if b == 0 else out_ch
            sp_in = spatial if b == 0 else out_spatial
            mid = _make_divisible(out_ch * expand_val(block_index), div)
            ops.append(conv(bin_ch, mid, 1, sp_in, active))
            ops.append(conv(mid, mid, 3, out_spatial, active))
            ops.append(conv(mid, out_ch, 1, out_spatial, active))
            if b == 0:
                ops.append(conv(bin_ch, out_ch, 1, out_spatial, active))
            block_index += 1
        in_ch = out_ch
        spatial = out_spatial

    fc_params = in_ch * n_classes + n_classes
    ops.append((fc_params, 2 * in_ch * n_classes, False))
    return ops


def _resnet_profiles(spec: SearchSpaceSpec, arch: tuple[int, ...]) -> list[UnitProfile]:
    ops = _resnet_ops(spec, arch)
    profiles = []
    u = 0
    for params, flops, is_conv in ops:
        if is_conv:
            # each conv contributes two units (output-channel halves)
            for part_p, part_f in zip(_even_split(params, 2), _even_split(flops, 2)):
                profiles.append(UnitProfile(u, part_p, part_f, None))
                u += 1
        else:
            profiles.append(UnitProfile(u, int(params), int(flops), None))
            u += 1
    if u != spec.quant_units.unit_count:
        raise ValueError(
            f"spec declares {spec.quant_units.unit_count} units but the channel "
            f"tables produce {u}"
        )
    return profiles


def unit_profiles(spec: SearchSpaceSpec, arch_genes: Sequence[int]) -> list[UnitProfile]:
    """Per-unit parameter and FLOP counts for one architecture choice."""
    arch = tuple(int(g) for g in arch_genes)
    if len(arch) != spec.arch_gene_count:
        raise GenotypeError(
            f"expected {spec.arch_gene_count} architecture genes, got {len(arch)}"
        )
    for pos, (idx, size) in enumerate(zip(arch, spec.arch_gene_sizes)):
        if not 0 <= idx < size:
            raise GenotypeError(f"architecture gene {pos} index {idx} out of range")
    if spec.model_family == "transformer":
        return _transformer_profiles(spec, arch)
    return _resnet_profiles(spec, arch)


# -- objective functions ------------------------------------------------------------


def _unit_activity(spec: SearchSpaceSpec, genotype: JointGenotype) -> np.ndarray:
    mask = active_quant_mask(spec, genotype)
    return mask[:: spec.quant_units.genes_per_unit] if mask.size else mask


def _unit_precision(spec: SearchSpaceSpec, genotype: JointGenotype, unit: int) -> str:
    gpu = spec.quant_units.genes_per_unit
    return spec.quant_units.precisions[genotype.quant_genes[unit * gpu]]


def model_size_bytes(
    spec: SearchSpaceSpec, genotype: JointGenotype, cost: CostModelConfig
) -> int:
    """Total bytes of active units' parameters under the per-precision byte map.

    With split granularity the weights gene decides the byte width; activation
    genes never contribute to stored size.
    """
    validate_genotype(spec, genotype)
    profiles = unit_profiles(spec, genotype.arch_genes)
    active = _unit_activity(spec, genotype)
    total = 0.0
    for u, prof in enumerate(profiles):
        if not active[u]:
            continue
        prec = _unit_precision(spec, genotype, u)
        if prec not in cost.bytes_per_param:
            raise ValueError(f"precision {prec!r} missing from bytes_per_param")
        total += prof.param_count * cost.bytes_per_param[prec]
    return int(round(total))


def max_fp32_latency_units(spec: SearchSpaceSpec) -> float:
    """Latency of the maximal architecture at factor 1 (the normalizer)."""
    maximal = tuple(int(s) - 1 for s in spec.arch_gene_sizes)
    return float(sum(prof.flops for prof in unit_profiles(spec, maximal)))


def resolve_cost_model(spec: SearchSpaceSpec, cost: CostModelConfig) -> CostModelConfig:
    """Fill in the derived normalization constant when it was left unset."""
    if cost.normalization_constant is not None:
        return cost
    return CostModelConfig(
        bytes_per_param=cost.bytes_per_param,
        latency_factor=cost.latency_factor,
        normalization_constant=max_fp32_latency_units(spec),
    )


def normalized_latency(
    spec: SearchSpaceSpec, genotype: JointGenotype, cost: CostModelConfig
) -> float:
    """Precision-weighted FLOPs, scaled so the maximal all-FP32 network is 1.0."""
    validate_genotype(spec, genotype)
    norm = cost.normalization_constant
    if norm is None:
        norm = max_fp32_latency_units(spec)
    if not norm > 0:
        raise ValueError("normalization constant must be strictly positive")
    profiles = unit_profiles(spec, genotype.arch_genes)
    active = _unit_activity(spec, genotype)
    gpu = spec.quant_units.genes_per_unit
    total = 0.0
    for u, prof in enumerate(profiles):
        if not active[u]:
            continue
        genes = genotype.quant_genes[u * gpu : (u + 1) * gpu]
        factors = []
        for g in genes:
            prec = spec.quant_units.precisions[g]
            if prec not in cost.latency_factor:
                raise ValueError(f"precision {prec!r} missing from latency_factor")
            factors.append(cost.latency_factor[prec])
        total += prof.flops * (sum(factors) / len(factors))
    return total / norm


def surrogate_accuracy(
    spec: SearchSpaceSpec, genotype: JointGenotype, sur: SurrogateConfig
) -> float:
    """base + gain*C - P*(1 + C), with capacity C in [0, 1] and INT8 penalty P.

    C averages each architecture gene's index fraction idx/(n-1) over genes
    with at least two choices.  P sums seeded per-unit sensitivities over
    active units whose precision gene selects INT8 (half weight per gene under
    split granularity).
    """
    validate_genotype(spec, genotype)
    fractions = []
    for idx, size in zip(genotype.arch_genes, spec.arch_gene_sizes):
        if size >= 2:
            fractions.append(idx / (size - 1))
    capacity = sum(fractions) / len(fractions) if fractions else 0.0

    sens = unit_sensitivities(sur, spec.quant_units.unit_count)
    active = _unit_activity(spec, genotype)
    gpu = spec.quant_units.genes_per_unit
    penalty = 0.0
    for u in range(spec.quant_units.unit_count):
        if not active[u]:
            continue
        genes = genotype.quant_genes[u * gpu : (u + 1) * gpu]
        frac_int8 = sum(
            1 for g in genes if spec.quant_units.precisions[g] == "INT8"
        ) / len(genes)
        penalty += sens[u] * frac_int8

    return float(
        sur.base_accuracy + sur.capacity_gain * capacity - penalty * (1.0 + capacity)
    )


class BuiltinEvaluator:
    """Evaluator binding over the three analytic objectives; pure and deterministic."""

    def __init__(
        self,
        spec: SearchSpaceSpec,
        cost: CostModelConfig,
        sur: SurrogateConfig,
        objective_names: tuple[str, ...],
    ):
        self.spec = spec
        self.cost = resolve_cost_model(spec, cost)
        self.surrogate = sur
        self.objective_names = objective_names

    def evaluate(self, genotype: JointGenotype) -> dict[str, float]:
        out = {}
        for name in self.objective_names:
            if name == "accuracy":
                out[name] = surrogate_accuracy(self.spec, genotype, self.surrogate)
            elif name == "model_size":
                out[name] = float(model_size_bytes(self.spec, genotype, self.cost))
            elif name == "latency":
                out[name] = normalized_latency(self.spec, genotype, self.cost)
        return out


def make_builtin_evaluator(
    spec: SearchSpaceSpec,
    cost: CostModelConfig,
    sur: SurrogateConfig,
    objectives: Sequence[ObjectiveSpec],
) -> BuiltinEvaluator:
    names = tuple(o.name for o in objectives)
    for name in names:
        if name not in BUILTIN_OBJECTIVES:
            raise ValueError(
                f"unknown objective {name!r}; built-in objectives are "
                f"{list(BUILTIN_OBJECTIVES)}"
            )
    return BuiltinEvaluator(spec, cost, sur, names)
