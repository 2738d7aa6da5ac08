"""Evaluator contract, caching, tabular (file-backed) evaluation, run ledgers.

A ledger file is JSON Lines: the first line holds run metadata, every further
line one evaluation record.  Files are written append-style so an interrupted
run leaves a valid prefix behind.
"""

from __future__ import annotations

import json
import math
import threading
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .moo_core import ObjectiveSpec, pareto_front
from .search_space import (
    JointGenotype,
    SearchSpaceSpec,
    active_quant_mask,
    canonical_hash,
    decode,
    encode,
    load_space_spec,
)

SCHEMA_VERSION = 1


class EvaluationError(Exception):
    """Evaluator failure; carries the canonical hash of the offending genotype."""

    def __init__(self, message: str, canonical_hash: str | None = None):
        super().__init__(message)
        self.canonical_hash = canonical_hash


class LedgerError(ValueError):
    """Ledger file violates the expected schema."""


@dataclass(frozen=True)
class EvaluationRecord:
    eval_index: int
    genotype: JointGenotype
    canonical_hash: str
    objectives: dict
    algorithm: str
    seed: int
    wall_time_ms: float = 0.0


@dataclass
class RunLedger:
    metadata: dict
    records: list = field(default_factory=list)


def evaluate(binding, genotype: JointGenotype) -> dict[str, float]:
    """Call a binding and enforce the contract: all declared objectives, finite."""
    result = binding.evaluate(genotype)
    out = {}
    for name in binding.objective_names:
        if name not in result:
            raise EvaluationError(
                f"evaluator returned no value for objective {name!r}",
                canonical_hash(binding.spec, genotype),
            )
        value = float(result[name])
        if not math.isfinite(value):
            raise EvaluationError(
                f"evaluator returned non-finite {name}={value!r}",
                canonical_hash(binding.spec, genotype),
            )
        out[name] = value
    return out


class CachedEvaluator:
    """Memoizes a binding on canonical hashes; hits never reach the inner binding."""

    def __init__(self, inner):
        self.inner = inner
        self._memo: dict[str, dict] = {}
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    @property
    def spec(self):
        return self.inner.spec

    @property
    def objective_names(self):
        return self.inner.objective_names

    def evaluate(self, genotype: JointGenotype) -> dict[str, float]:
        key = canonical_hash(self.inner.spec, genotype)
        with self._lock:
            if key in self._memo:
                self.hits += 1
                return dict(self._memo[key])
        result = evaluate(self.inner, genotype)
        with self._lock:
            self._memo.setdefault(key, result)
            self.misses += 1
        return dict(result)


def cached(binding) -> CachedEvaluator:
    return CachedEvaluator(binding)


class TabularEvaluator:
    """Binding backed by externally measured rows keyed on canonical hashes."""

    def __init__(self, spec, objective_names, rows):
        self.spec = spec
        self.objective_names = tuple(objective_names)
        self.rows = rows

    def evaluate(self, genotype: JointGenotype) -> dict[str, float]:
        key = canonical_hash(self.spec, genotype)
        row = self.rows.get(key)
        if row is None:
            raise EvaluationError(f"no measured row for hash {key}", key)
        return dict(row)


def load_tabular_evaluator(path, spec: SearchSpaceSpec) -> TabularEvaluator:
    """Load a measurement CSV: header `hash,<obj>,...` or `genes,<obj>,...`.

    A `genes` key column holds '/'-joined gene indices which are encoded and
    hashed by the loader.  `#` lines are comments.  Duplicate keys with equal
    values are deduplicated; conflicting duplicates are rejected.
    """
    lines = []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text or text.startswith("#"):
                continue
            lines.append((lineno, text))
    if not lines:
        raise ValueError(f"{path}: no data rows")

    header = [c.strip() for c in lines[0][1].split(",")]
    key_col, objectives = header[0], tuple(header[1:])
    if key_col not in ("hash", "genes"):
        raise ValueError(f"{path}: first column must be 'hash' or 'genes', got {key_col!r}")
    if not objectives or any(not c for c in objectives):
        raise ValueError(f"{path}: header must declare at least one objective column")
    if len(set(objectives)) != len(objectives):
        raise ValueError(f"{path}: duplicate objective column")

    rows: dict[str, dict] = {}
    for lineno, text in lines[1:]:
        cols = [c.strip() for c in text.split(",")]
        if len(cols) != len(header):
            raise ValueError(
                f"{path}:{lineno}: expected {len(header)} columns, got {len(cols)}"
            )
        if key_col == "hash":
            key = cols[0]
        else:
            try:
                genes = [int(v) for v in cols[0].split("/")]
            except ValueError:
                raise ValueError(f"{path}:{lineno}: malformed genes column {cols[0]!r}")
            key = canonical_hash(spec, decode(spec, genes))
        try:
            values = {name: float(v) for name, v in zip(objectives, cols[1:])}
        except ValueError:
            raise ValueError(f"{path}:{lineno}: non-numeric objective value")
        if key in rows:
            if rows[key] != values:
                raise ValueError(
                    f"{path}:{lineno}: conflicting duplicate values for hash {key}"
                )
            continue
        rows[key] = values
    return TabularEvaluator(spec, objectives, rows)


# -- ledger files --------------------------------------------------------------------


def run_metadata(
    spec: SearchSpaceSpec,
    objectives: Sequence[ObjectiveSpec],
    algorithm: str,
    seed: int,
    config: Mapping,
) -> dict:
    from . import __version__
    from .search_space import space_spec_document

    snapshot = json.loads(json.dumps(dict(config)))
    snapshot.setdefault("space", space_spec_document(spec))
    snapshot.setdefault("engine_version", __version__)
    return {
        "schema_version": SCHEMA_VERSION,
        "spec_name": spec.name,
        "objectives": [{"name": o.name, "direction": o.direction} for o in objectives],
        "algorithm": algorithm,
        "seed": int(seed),
        "config": snapshot,
    }


def record_line(record: EvaluationRecord) -> str:
    genes = list(record.genotype.arch_genes + record.genotype.quant_genes)
    return json.dumps(
        {
            "i": record.eval_index,
            "genes": genes,
            "hash": record.canonical_hash,
            "obj": record.objectives,
            "t_ms": record.wall_time_ms,
        },
        separators=(",", ":"),
    )


def write_ledger(ledger: RunLedger, path) -> None:
    with open(path, "w") as fh:
        fh.write(json.dumps(ledger.metadata, separators=(",", ":")) + "\n")
        for record in ledger.records:
            fh.write(record_line(record) + "\n")


def read_ledger(path) -> RunLedger:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise LedgerError(f"{path}: empty file")
    try:
        metadata = json.loads(lines[0])
    except json.JSONDecodeError:
        raise LedgerError(f"{path}: metadata header line is not valid JSON")
    if not isinstance(metadata, dict) or "schema_version" not in metadata:
        raise LedgerError(f"{path}: missing metadata header line")
    version = int(metadata["schema_version"])
    if version > SCHEMA_VERSION:
        raise LedgerError(
            f"{path}: schema version {version} is newer than supported {SCHEMA_VERSION}"
        )
    spec = load_space_spec(metadata["config"]["space"])

    records = []
    for k, line in enumerate(lines[1:], start=1):
        if not line.strip():
            continue
        try:
            raw = json.loads(line)
        except json.JSONDecodeError:
            if k == len(lines) - 1:
                warnings.warn(f"{path}: dropping truncated final record line")
                break
            raise LedgerError(f"{path}: corrupt record on line {k + 1}")
        records.append(
            EvaluationRecord(
                eval_index=int(raw["i"]),
                genotype=decode(spec, raw["genes"]),
                canonical_hash=raw["hash"],
                objectives={k2: float(v) for k2, v in raw["obj"].items()},
                algorithm=metadata["algorithm"],
                seed=int(metadata["seed"]),
                wall_time_ms=float(raw.get("t_ms", 0.0)),
            )
        )
    return RunLedger(metadata=metadata, records=records)


def ledger_objectives(ledger: RunLedger) -> list[ObjectiveSpec]:
    return [
        ObjectiveSpec(name=o["name"], direction=o["direction"])
        for o in ledger.metadata["objectives"]
    ]


def ledger_spec(ledger: RunLedger) -> SearchSpaceSpec:
    return load_space_spec(ledger.metadata["config"]["space"])


# -- exports ---------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def export_pareto(ledger: RunLedger, path) -> list[EvaluationRecord]:
    """Write the rank-0 records as CSV, sorted by the first objective.

    Columns: eval_index, the objectives, the decoded (named) architecture
    genes, the INT8 fraction among active units, and the canonical hash.
    """
    spec = ledger_spec(ledger)
    specs = ledger_objectives(ledger)
    front = pareto_front(ledger.records, specs)
    front.sort(key=lambda r: (r.objectives[specs[0].name], r.eval_index))

    header = (
        ["eval_index"]
        + [o.name for o in specs]
        + list(spec.arch_gene_names)
        + ["int8_fraction", "canonical_hash"]
    )
    lines = [",".join(header)]
    for rec in front:
        arch_values = [
            spec.arch_dims[dim].choices[idx]
            for dim, idx in zip(spec.arch_gene_dims, rec.genotype.arch_genes)
        ]
        lines.append(
            ",".join(
                [_fmt(rec.eval_index)]
                + [_fmt(rec.objectives[o.name]) for o in specs]
                + [_fmt(v) for v in arch_values]
                + [_fmt(_int8_fraction(spec, rec.genotype)), rec.canonical_hash]
            )
        )
    Path(path).write_text("\n".join(lines) + "\n")
    return front


def _int8_fraction(spec: SearchSpaceSpec, genotype: JointGenotype) -> float:
    mask = active_quant_mask(spec, genotype)
    if not mask.any():
        return 0.0
    flat = encode(spec, genotype)[spec.arch_gene_count :]
    try:
        int8 = spec.quant_units.precisions.index("INT8")
    except ValueError:
        return 0.0
    return float((flat[mask] == int8).mean())


def export_hv_series(comparison, path) -> None:
    """Write the per-algorithm hypervolume progression table as CSV.

    The shared reference point is recorded on a leading comment line so the
    series stays reproducible.
    """
    lines = [
        "# reference: " + json.dumps(list(comparison.reference)),
        "algorithm,evaluation_count,hv_mean,hv_std,seeds",
    ]
    n_seeds = len(comparison.seeds)
    for algo, series in comparison.series.items():
        for count, mean, std in zip(series.eval_counts, series.mean, series.std):
            lines.append(
                ",".join([algo, _fmt(count), _fmt(float(mean)), _fmt(float(std)), _fmt(n_seeds)])
            )
    Path(path).write_text("\n".join(lines) + "\n")
