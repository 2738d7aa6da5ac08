"""Search algorithms over joint genotypes: random, NSGA-II, and the
predictor-guided iterative loop.

Every algorithm draws from named substreams of one per-run seed, never
evaluates the same canonical hash twice, and counts budget only for unique
true evaluations.  The returned ledger is fully determined by
(algorithm, spec, evaluator, objectives, budget, seed, config).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Mapping, Sequence

import numpy as np

from . import evaluation_runtime as rt
from . import moo_core, predictors
from .moo_core import ObjectiveSpec
from .search_space import (
    JointGenotype,
    SearchSpaceSpec,
    canonical_hash,
    decode,
    encode,
    random_genotype,
    random_genotype_matrix,
    space_cardinality,
)

# generations an evolutionary run may spend without any new unique evaluation
# before it is declared converged (guards degenerate operator settings)
STALL_LIMIT = 50

_STREAM_IDS = {"init": 1, "variation": 2, "inner": 3, "topup": 4}


class SearchError(Exception):
    def __init__(self, message, genotype=None, algorithm=None, seed=None):
        super().__init__(message)
        self.genotype = genotype
        self.algorithm = algorithm
        self.seed = seed


def _rng(seed: int, stream: str, *extra: int) -> np.random.Generator:
    entropy = [seed & 0xFFFFFFFFFFFFFFFF, _STREAM_IDS[stream], *extra]
    return np.random.default_rng(np.random.SeedSequence(entropy=entropy))


@dataclass(frozen=True)
class SearchBudget:
    max_evaluations: int

    def __post_init__(self):
        if self.max_evaluations < 1:
            raise ValueError("max_evaluations must be >= 1")


@dataclass(frozen=True)
class Nsga2Config:
    population_size: int = 50
    crossover_prob: float = 0.9
    mutation_prob: float | None = None  # None means 1/genotype_length
    tournament_size: int = 2

    def __post_init__(self):
        if self.population_size < 4 or self.population_size % 2:
            raise ValueError("population_size must be an even integer >= 4")
        if not 0.0 <= self.crossover_prob <= 1.0:
            raise ValueError("crossover_prob must be in [0, 1]")
        if self.mutation_prob is not None and not 0.0 <= self.mutation_prob <= 1.0:
            raise ValueError("mutation_prob must be in [0, 1]")
        if self.tournament_size < 1:
            raise ValueError("tournament_size must be >= 1")


@dataclass(frozen=True)
class LinasConfig:
    initial_samples: int = 50
    batch_per_iteration: int = 50
    inner_population: int = 50
    inner_generations: int = 100
    predictor_kind: str = "ridge"  # or "kernel_ridge"
    predictor_lambda: float = 1e-2
    predictor_gamma: float | None = None  # None means 1/feature_width
    nsga2: Nsga2Config = field(default_factory=Nsga2Config)

    def __post_init__(self):
        if self.initial_samples < 1 or self.batch_per_iteration < 1:
            raise ValueError("initial_samples and batch_per_iteration must be >= 1")
        if self.inner_population < 4 or self.inner_generations < 1:
            raise ValueError("inner_population must be >= 4 and inner_generations >= 1")
        if self.predictor_kind not in ("ridge", "kernel_ridge"):
            raise ValueError("predictor_kind must be 'ridge' or 'kernel_ridge'")


@dataclass
class SearchResult:
    ledger: rt.RunLedger
    algorithm: str
    seed: int
    config: dict


class _RunState:
    """Ledger bookkeeping shared by all engines: dedup, budget, streaming."""

    def __init__(self, spec, evaluator, objectives, budget, algorithm, seed, on_record):
        names = {o.name for o in objectives}
        if len(names) != len(objectives):
            raise ValueError("objective names must be unique")
        missing = names - set(evaluator.objective_names)
        if missing:
            raise ValueError(f"evaluator does not provide objectives {sorted(missing)}")
        self.spec = spec
        self.evaluator = evaluator
        self.objectives = list(objectives)
        self.algorithm = algorithm
        self.seed = seed
        self.on_record = on_record
        self.target = min(budget, space_cardinality(spec, "joint"))
        self.records: list[rt.EvaluationRecord] = []
        self.by_hash: dict[str, rt.EvaluationRecord] = {}
        self.true_calls = 0

    @property
    def remaining(self) -> int:
        return self.target - len(self.records)

    def seen(self, key: str) -> bool:
        return key in self.by_hash

    def get_or_evaluate(self, genotype: JointGenotype):
        """Returns (record, is_new); duplicates never consume budget."""
        key = canonical_hash(self.spec, genotype)
        existing = self.by_hash.get(key)
        if existing is not None:
            return existing, False
        if self.remaining <= 0:
            raise SearchError("budget exhausted", genotype, self.algorithm, self.seed)
        try:
            values = rt.evaluate(self.evaluator, genotype)
        except Exception as exc:
            raise SearchError(
                f"evaluation failed: {exc}", genotype, self.algorithm, self.seed
            ) from exc
        self.true_calls += 1
        record = rt.EvaluationRecord(
            eval_index=len(self.records),
            genotype=genotype,
            canonical_hash=key,
            objectives=values,
            algorithm=self.algorithm,
            seed=self.seed,
        )
        self.records.append(record)
        self.by_hash[key] = record
        if self.on_record is not None:
            self.on_record(record)
        return record, True

    def result(self, config: Mapping) -> SearchResult:
        metadata = rt.run_metadata(
            self.spec, self.objectives, self.algorithm, self.seed, config
        )
        return SearchResult(
            ledger=rt.RunLedger(metadata=metadata, records=self.records),
            algorithm=self.algorithm,
            seed=self.seed,
            config=metadata["config"],
        )


def _config_snapshot(budget: int, cfg=None) -> dict:
    out = {"budget": budget}
    if cfg is not None:
        out[type(cfg).__name__.lower().replace("config", "")] = asdict(cfg)
    return out


# -- random search ------------------------------------------------------------------


def run_random(
    spec: SearchSpaceSpec,
    evaluator,
    objectives: Sequence[ObjectiveSpec],
    budget: int,
    seed: int,
    on_record: Callable | None = None,
) -> SearchResult:
    """Uniform sampling; hash duplicates are skipped without consuming budget."""
    SearchBudget(budget)
    state = _RunState(spec, evaluator, objectives, budget, "random", seed, on_record)
    rng = _rng(seed, "init")
    while state.remaining > 0:
        state.get_or_evaluate(random_genotype(spec, rng))
    return state.result(_config_snapshot(budget))


# -- shared evolutionary machinery ------------------------------------------------------


def _rank_and_crowd(values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    decomp = moo_core.non_dominated_sort(values)
    crowd = np.zeros(values.shape[0])
    for front in decomp.fronts:
        crowd[front] = moo_core.crowding_distance(values[front])
    return decomp.ranks, crowd


def _tournament(rng, ranks, crowd, size: int) -> int:
    candidates = rng.integers(len(ranks), size=size)
    best = candidates[0]
    for c in candidates[1:]:
        if (ranks[c], -crowd[c]) < (ranks[best], -crowd[best]):
            best = c
    return int(best)


def _make_offspring(pop: np.ndarray, ranks, crowd, sizes, cfg: Nsga2Config, rng) -> np.ndarray:
    n, length = pop.shape
    mut_prob = cfg.mutation_prob if cfg.mutation_prob is not None else 1.0 / length
    children = np.empty_like(pop)
    for pair in range(n // 2):
        a = pop[_tournament(rng, ranks, crowd, cfg.tournament_size)]
        b = pop[_tournament(rng, ranks, crowd, cfg.tournament_size)]
        if rng.random() < cfg.crossover_prob:
            take_a = rng.random(length) < 0.5
            c1 = np.where(take_a, a, b)
            c2 = np.where(take_a, b, a)
        else:
            c1, c2 = a.copy(), b.copy()
        for child in (c1, c2):
            flips = rng.random(length) < mut_prob
            if flips.any():
                child[flips] = rng.integers(sizes[flips])
        children[2 * pair] = c1
        children[2 * pair + 1] = c2
    return children


def _environmental_selection(values: np.ndarray, k: int) -> list[int]:
    """Standard (mu+lambda) truncation: whole fronts, then crowding order."""
    decomp = moo_core.non_dominated_sort(values)
    chosen: list[int] = []
    for front in decomp.fronts:
        if len(chosen) + len(front) <= k:
            chosen.extend(front)
            continue
        crowd = moo_core.crowding_distance(values[front])
        order = sorted(range(len(front)), key=lambda i: (-crowd[i], front[i]))
        chosen.extend(front[i] for i in order[: k - len(chosen)])
        break
    return chosen


def _canonical_values(records, objectives) -> np.ndarray:
    signs = moo_core.direction_signs(objectives)
    mat = np.array(
        [[rec.objectives[o.name] for o in objectives] for rec in records], dtype=float
    )
    return mat * signs[None, :]


# -- NSGA-II over the true evaluator -----------------------------------------------------


def run_nsga2(
    spec: SearchSpaceSpec,
    evaluator,
    objectives: Sequence[ObjectiveSpec],
    budget: int,
    seed: int,
    cfg: Nsga2Config | None = None,
    on_record: Callable | None = None,
) -> SearchResult:
    cfg = cfg or Nsga2Config()
    SearchBudget(budget)
    if budget < cfg.population_size:
        raise ValueError(
            f"budget {budget} is smaller than the population size {cfg.population_size}"
        )
    state = _RunState(spec, evaluator, objectives, budget, "nsga2", seed, on_record)
    sizes = spec.gene_sizes
    rng_init = _rng(seed, "init")
    rng_var = _rng(seed, "variation")

    pop = random_genotype_matrix(spec, cfg.population_size, rng_init)
    pop_records = [state.get_or_evaluate(decode(spec, row))[0] for row in pop]

    stall = 0
    while state.remaining > 0 and stall < STALL_LIMIT:
        values = _canonical_values(pop_records, state.objectives)
        ranks, crowd = _rank_and_crowd(values)
        offspring = _make_offspring(pop, ranks, crowd, sizes, cfg, rng_var)
        new_count = 0
        child_records = []
        child_rows = []
        for row in offspring:
            if state.remaining <= 0:
                break  # partial final generation
            record, is_new = state.get_or_evaluate(decode(spec, row))
            child_records.append(record)
            child_rows.append(row)
            new_count += is_new
        combined_rows = np.vstack([pop] + [r.reshape(1, -1) for r in child_rows]) if child_rows else pop
        combined_records = pop_records + child_records
        values = _canonical_values(combined_records, state.objectives)
        keep = _environmental_selection(values, cfg.population_size)
        pop = combined_rows[keep]
        pop_records = [combined_records[i] for i in keep]
        stall = 0 if new_count else stall + 1

    return state.result(_config_snapshot(budget, cfg))


# -- predictor-guided iterative search ------------------------------------------------------


def _fit_predictor(kind: str, X, y, lambda_: float, gamma: float | None):
    if kind == "ridge":
        return predictors.fit_ridge(X, y, lambda_)
    g = gamma if gamma is not None else 1.0 / X.shape[1]
    return predictors.fit_kernel_ridge(X, y, lambda_, g)


def _inner_search(
    spec: SearchSpaceSpec,
    predict_canonical: Callable[[np.ndarray], np.ndarray],
    cfg: LinasConfig,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Evolve against predicted objectives only; no true evaluations happen here.

    Returns the final population's rank-0 rows ordered by descending crowding
    distance (ties by population order), deduplicated on canonical hash.
    """
    sizes = spec.gene_sizes
    pop = random_genotype_matrix(spec, cfg.inner_population, rng)
    values = predict_canonical(pop)
    for _ in range(cfg.inner_generations):
        ranks, crowd = _rank_and_crowd(values)
        offspring = _make_offspring(pop, ranks, crowd, sizes, cfg.nsga2, rng)
        combined = np.vstack([pop, offspring])
        combined_values = np.vstack([values, predict_canonical(offspring)])
        keep = _environmental_selection(combined_values, cfg.inner_population)
        pop = combined[keep]
        values = combined_values[keep]

    ranks, crowd = _rank_and_crowd(values)
    front = [i for i in range(len(pop)) if ranks[i] == 0]
    front.sort(key=lambda i: (-crowd[i], i))
    out = []
    seen = set()
    for i in front:
        key = canonical_hash(spec, decode(spec, pop[i]))
        if key in seen:
            continue
        seen.add(key)
        out.append(pop[i])
    return out


def run_linas(
    spec: SearchSpaceSpec,
    evaluator,
    objectives: Sequence[ObjectiveSpec],
    budget: int,
    seed: int,
    cfg: LinasConfig | None = None,
    on_record: Callable | None = None,
) -> SearchResult:
    """Alternate predictor fitting with predictor-only evolution.

    Each iteration fits one predictor per objective on everything evaluated so
    far, evolves candidates against the predictions, then spends one batch of
    true evaluations on the most promising unseen candidates (topped up with
    fresh random genotypes when the inner front runs dry).
    """
    cfg = cfg or LinasConfig()
    SearchBudget(budget)
    if budget < cfg.initial_samples + cfg.batch_per_iteration:
        raise ValueError(
            "budget must cover initial_samples + batch_per_iteration "
            f"({cfg.initial_samples} + {cfg.batch_per_iteration})"
        )
    state = _RunState(spec, evaluator, objectives, budget, "linas", seed, on_record)
    rng_init = _rng(seed, "init")
    rng_topup = _rng(seed, "topup")
    signs = moo_core.direction_signs(objectives)
    space_points = space_cardinality(spec, "joint")

    while state.remaining > 0 and len(state.records) < cfg.initial_samples:
        state.get_or_evaluate(random_genotype(spec, rng_init))

    iteration = 0
    while state.remaining > 0:
        iteration += 1
        flat = np.array([encode(spec, r.genotype) for r in state.records])
        X = predictors.featurize_batch(spec, flat)
        models = []
        for obj in state.objectives:
            y = np.array([r.objectives[obj.name] for r in state.records])
            try:
                models.append(
                    _fit_predictor(cfg.predictor_kind, X, y, cfg.predictor_lambda, cfg.predictor_gamma)
                )
            except Exception as exc:
                raise SearchError(
                    f"predictor fit failed at iteration {iteration}: {exc}",
                    algorithm="linas",
                    seed=seed,
                ) from exc

        def predict_canonical(rows: np.ndarray) -> np.ndarray:
            feats = predictors.featurize_batch(spec, rows)
            cols = [predictors.predict_batch(m, feats) for m in models]
            return np.column_stack(cols) * signs[None, :]

        candidates = _inner_search(spec, predict_canonical, cfg, _rng(seed, "inner", iteration))

        batch_size = min(cfg.batch_per_iteration, state.remaining)
        batch: list[JointGenotype] = []
        batch_keys: set[str] = set()
        for row in candidates:
            genotype = decode(spec, row)
            key = canonical_hash(spec, genotype)
            if state.seen(key) or key in batch_keys:
                continue
            batch.append(genotype)
            batch_keys.add(key)
            if len(batch) == batch_size:
                break
        while len(batch) < batch_size:
            if len(state.by_hash) + len(batch) >= space_points:
                break
            genotype = random_genotype(spec, rng_topup)
            key = canonical_hash(spec, genotype)
            if state.seen(key) or key in batch_keys:
                continue
            batch.append(genotype)
            batch_keys.add(key)
        if not batch:
            break
        for genotype in batch:
            state.get_or_evaluate(genotype)

    return state.result(_config_snapshot(budget, cfg))


# -- multi-seed comparison harness ------------------------------------------------------------


@dataclass
class AlgorithmSeries:
    eval_counts: tuple[int, ...]
    mean: np.ndarray
    std: np.ndarray
    per_seed: np.ndarray  # (n_seeds, n_counts)


@dataclass
class ComparisonResult:
    reference: tuple[float, ...]
    stride: int
    seeds: tuple[int, ...]
    series: dict[str, AlgorithmSeries]
    ledgers: dict[tuple[str, int], rt.RunLedger]
    failures: list[tuple[str, int, str]]

    def final_hypervolumes(self) -> dict[str, tuple[float, float]]:
        return {
            algo: (float(s.mean[-1]), float(s.std[-1])) for algo, s in self.series.items()
        }


_RUNNERS = {
    "random": lambda spec, ev, obj, budget, seed, cfg: run_random(spec, ev, obj, budget, seed),
    "nsga2": run_nsga2,
    "linas": run_linas,
}


def run_algorithm(
    algorithm: str, spec, evaluator, objectives, budget, seed, cfg=None, on_record=None
) -> SearchResult:
    if algorithm not in _RUNNERS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {sorted(_RUNNERS)}")
    if algorithm == "random":
        return run_random(spec, evaluator, objectives, budget, seed, on_record=on_record)
    return _RUNNERS[algorithm](
        spec, evaluator, objectives, budget, seed, cfg, on_record=on_record
    )


def compare_algorithms(
    spec: SearchSpaceSpec,
    evaluator,
    objectives: Sequence[ObjectiveSpec],
    budget: int,
    seeds: Sequence[int],
    algorithms: Mapping[str, object],
    stride: int | None = None,
    jobs: int = 1,
) -> ComparisonResult:
    """Run every (algorithm, seed) pair and align hypervolume progressions.

    The shared reference point is the componentwise worst value over all runs,
    inflated by 10% of each component's range.  Per-run failures are collected
    rather than aborting the cross product.
    """
    if not seeds:
        raise ValueError("need at least one seed")
    stride = stride or budget
    pairs = [(algo, int(seed)) for algo in algorithms for seed in seeds]

    def one(pair):
        algo, seed = pair
        try:
            return pair, run_algorithm(
                algo, spec, evaluator, objectives, budget, seed, algorithms[algo]
            ), None
        except Exception as exc:  # annotated and reported, run cross product continues
            return pair, None, f"{type(exc).__name__}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(one, pairs))
    else:
        outcomes = [one(p) for p in pairs]

    ledgers: dict[tuple[str, int], rt.RunLedger] = {}
    failures: list[tuple[str, int, str]] = []
    for pair, result, error in outcomes:
        if error is None:
            ledgers[pair] = result.ledger
        else:
            failures.append((*pair, error))
    if not ledgers:
        raise SearchError("every run of the comparison failed: " + "; ".join(
            f"{a}/seed {s}: {m}" for a, s, m in failures
        ))

    all_points = np.vstack(
        [_canonical_values(l.records, objectives) for l in ledgers.values()]
    )
    reference = moo_core.reference_from_points(all_points)

    counts = list(range(stride, budget + 1, stride))
    if not counts or counts[-1] != budget:
        counts.append(budget)
    series: dict[str, AlgorithmSeries] = {}
    for algo in algorithms:
        rows = []
        for seed in seeds:
            ledger = ledgers.get((algo, int(seed)))
            if ledger is None:
                continue
            prog = moo_core.hypervolume_progression(ledger, objectives, reference, stride)
            # align to the common grid, extending exhausted runs flat
            values = dict(zip(prog.eval_counts, prog.hypervolumes))
            last = prog.hypervolumes[-1]
            rows.append([values.get(k, last if k >= prog.eval_counts[-1] else 0.0) for k in counts])
        if not rows:
            continue
        per_seed = np.array(rows)
        series[algo] = AlgorithmSeries(
            eval_counts=tuple(counts),
            mean=per_seed.mean(axis=0),
            std=per_seed.std(axis=0),
            per_seed=per_seed,
        )

    return ComparisonResult(
        reference=reference,
        stride=stride,
        seeds=tuple(int(s) for s in seeds),
        series=series,
        ledgers=ledgers,
        failures=failures,
    )
