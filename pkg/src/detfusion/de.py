"""Differential evolution over per-model fusion weights.

Each individual is a weight vector in ``[0, 1]^N`` with its own mutation
scale factor.  One generation builds a DE/rand/1 mutant and an arithmetic
crossover trial for every individual, scores all trials by validation mAP
of the fused detections, and keeps a trial only if it is strictly better.

Randomness comes from one stream per ``(generation, individual)`` derived
from the master seed, so results do not depend on how many workers score
the trials.
"""
from __future__ import annotations

import hashlib
import io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .boxes import Dataset, Detection, ModelRun, validate_dataset, UNKNOWN_IMAGE
from .metrics import COCO_THRESHOLDS, GroundTruthIndex, evaluate
from .wbf import WbfConfig, weighted_boxes_fusion

log = logging.getLogger(__name__)

Metric = Literal["map50", "map50_95"]
METRICS = ("map50", "map50_95")


@dataclass(frozen=True)
class DeConfig:
    pop_size: int = 10
    generations: int = 40
    tau1: float = 0.1
    tau2: float = 0.03
    tau3: float = 0.07
    f_lo: float = 0.1
    f_hi: float = 1.0
    f_a: float = 0.1
    local_search_budget: int = 0
    fitness_metric: Metric = "map50_95"
    seed: int = 0
    # re-score the target every generation instead of trusting its cached fitness
    strict_reevaluation: bool = False
    one_hot_seeding: bool = False
    workers: int = 1

    def __post_init__(self) -> None:
        if self.pop_size < 4:
            raise ValueError(f"pop_size must be >= 4 for DE/rand/1, got {self.pop_size}")
        if self.generations < 0:
            raise ValueError("generations must be non-negative")
        for name in ("tau1", "tau2", "tau3"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if not self.tau2 < self.tau3:
            raise ValueError("tau2 must be smaller than tau3")
        if not 0.0 <= self.f_lo <= self.f_hi:
            raise ValueError("need 0 <= f_lo <= f_hi")
        if self.local_search_budget < 0:
            raise ValueError("local_search_budget must be non-negative")
        if self.fitness_metric not in METRICS:
            raise ValueError(f"fitness_metric must be one of {METRICS}")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def fingerprint(self) -> str:
        """Hash of everything that affects results (worker count excluded)."""
        d = asdict(self)
        d.pop("workers")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class Individual:
    weights: np.ndarray
    scale_factor: float
    fitness: float | None = None


@dataclass
class Population:
    individuals: list[Individual]
    generation: int = 0

    def __len__(self) -> int:
        return len(self.individuals)

    def matrix(self) -> np.ndarray:
        return np.stack([ind.weights for ind in self.individuals])


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float
    mean_fitness: float
    best_weights: tuple[float, ...]
    f_mean: float
    f_min: float
    f_max: float
    evaluations: int


@dataclass
class ConvergenceHistory:
    records: list[GenerationRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def best_fitness(self) -> list[float]:
        return [r.best_fitness for r in self.records]

    def to_csv(self) -> str:
        n = len(self.records[0].best_weights) if self.records else 0
        buf = io.StringIO()
        header = ["generation", "best_fitness", "mean_fitness"] + [f"w_{k + 1}" for k in range(n)]
        buf.write(",".join(header) + "\n")
        for r in self.records:
            row = [str(r.generation), repr(r.best_fitness), repr(r.mean_fitness)]
            row += [repr(w) for w in r.best_weights]
            buf.write(",".join(row) + "\n")
        return buf.getvalue()


def stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed & (2**64 - 1), spawn_key=key))


INIT_KEY = 0
GENERATION_KEY = 1


def initialize_population(cfg: DeConfig, n_models: int = 3) -> Population:
    rng = stream(cfg.seed, INIT_KEY)
    weights = rng.random((cfg.pop_size, n_models))
    if cfg.one_hot_seeding:
        for m in range(min(n_models, cfg.pop_size)):
            weights[m] = 0.0
            weights[m, m] = 1.0
    f0 = 0.5 * (cfg.f_lo + cfg.f_hi)
    return Population([Individual(w.copy(), f0) for w in weights], 0)


def pick_donors(target_index: int, pop_size: int, rng: np.random.Generator) -> tuple[int, int, int]:
    others = [k for k in range(pop_size) if k != target_index]
    r1, r2, r3 = rng.choice(others, size=3, replace=False)
    return int(r1), int(r2), int(r3)


def mutate(
    target_index: int,
    pop: Population,
    f_i: float,
    rng: np.random.Generator | None = None,
    donors: tuple[int, int, int] | None = None,
) -> np.ndarray:
    """DE/rand/1 mutant ``x_r1 + F * (x_r2 - x_r3)`` clipped to ``[0, 1]``."""
    if len(pop) < 4:
        raise ValueError("DE/rand/1 needs at least 4 individuals")
    if donors is None:
        donors = pick_donors(target_index, len(pop), rng)
    x1, x2, x3 = (pop.individuals[r].weights for r in donors)
    return np.clip(x1 + f_i * (x2 - x3), 0.0, 1.0)


def crossover(x: np.ndarray, v: np.ndarray, rng: np.random.Generator | None = None,
              k: float | None = None) -> np.ndarray:
    """Arithmetic crossover ``x + K (v - x)`` with one ``K ~ U[0, 1]`` per trial."""
    x = np.asarray(x, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if x.shape != v.shape:
        raise ValueError("target and mutant must have the same length")
    if k is None:
        k = float(rng.random())
    return x + k * (v - x)


class Budget:
    def __init__(self, evaluations: int):
        self.remaining = evaluations

    def take(self) -> bool:
        if self.remaining <= 0:
            return False
        self.remaining -= 1
        return True


@dataclass
class LocalSearch:
    """Trial fitness as a function of the scale factor, under a shared budget."""

    trial_fitness: Callable[[float], float]
    budget: Budget
    seen: dict[float, float] = field(default_factory=dict)

    def available(self) -> bool:
        return self.budget.remaining > 0

    def __call__(self, f: float) -> float | None:
        if f in self.seen:
            return self.seen[f]
        if not self.budget.take():
            return None
        self.seen[f] = val = self.trial_fitness(f)
        return val

    def best(self, default: float) -> float:
        if not self.seen:
            return default
        # highest fitness, earliest evaluated on ties
        return max(self.seen.items(), key=lambda kv: kv[1])[0]


_INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section_scale(ctx: LocalSearch, lo: float, hi: float, current: float) -> float:
    """Golden-section search for the scale factor maximizing trial fitness."""
    c = hi - _INV_PHI * (hi - lo)
    d = lo + _INV_PHI * (hi - lo)
    fc, fd = ctx(c), ctx(d)
    while fc is not None and fd is not None:
        if fc >= fd:
            hi, d, fd = d, c, fc
            c = hi - _INV_PHI * (hi - lo)
            fc = ctx(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + _INV_PHI * (hi - lo)
            fd = ctx(d)
    return ctx.best(current)


def hill_climb_scale(ctx: LocalSearch, lo: float, hi: float, current: float,
                     step: float = 0.1) -> float:
    """Hill climbing from the current scale factor; the step halves on failure."""
    best_f, best_val = current, ctx(current)
    if best_val is None:
        return current
    while step > 1e-6:
        moved = False
        for cand in (min(hi, best_f + step), max(lo, best_f - step)):
            val = ctx(cand)
            if val is None:
                return best_f
            if val > best_val:
                best_f, best_val, moved = cand, val, True
                break
        if not moved:
            step /= 2.0
    return best_f


def adapt_scale_factor(f_i: float, rng, cfg: DeConfig, trial_context: LocalSearch | None = None) -> float:
    """Scale-factor update with golden-section, hill-climb and perturbation branches.

    Branches are tested in order on ``rand3`` (then ``rand2``); the two local
    searches are skipped when no evaluation budget is left.
    """
    rand1, rand2, rand3 = (float(r) for r in rng.random(3))
    searching = trial_context is not None and trial_context.available()
    if searching and rand3 < cfg.tau2:
        f_new = golden_section_scale(trial_context, cfg.f_lo, cfg.f_hi, f_i)
    elif searching and cfg.tau2 <= rand3 < cfg.tau3:
        f_new = hill_climb_scale(trial_context, cfg.f_lo, cfg.f_hi, f_i)
    elif rand2 < cfg.tau1 and rand3 > cfg.tau3:
        f_new = f_i + cfg.f_a * rand1
    else:
        f_new = f_i
    return min(cfg.f_hi, max(cfg.f_lo, f_new))


def select(target: Individual, trial: Individual) -> Individual:
    if target.fitness is None or trial.fitness is None:
        raise ValueError("both individuals must be evaluated")
    return trial if trial.fitness > target.fitness else target


def metric_thresholds(metric: Metric) -> tuple[float, ...]:
    if metric == "map50":
        return (0.5,)
    if metric == "map50_95":
        return COCO_THRESHOLDS
    raise ValueError(f"unknown metric {metric!r}")


class FitnessFunction:
    """Validation mAP of the fused detections for a given weight vector."""

    def __init__(self, val: Dataset, runs: Sequence[ModelRun], wbf_cfg: WbfConfig | None = None,
                 metric: Metric = "map50_95"):
        self.val = val
        self.wbf_cfg = wbf_cfg or WbfConfig()
        self.metric = metric
        self.thresholds = metric_thresholds(metric)
        self.n_models = len(runs)
        self.images = sorted(val.images)
        self.per_image: dict[int, list[list[Detection]]] = {
            image: [run.for_image(image) for run in runs] for image in self.images
        }
        self.gt_index = GroundTruthIndex(val)

    def fuse(self, weights: Sequence[float]) -> dict[int, list]:
        return {image: weighted_boxes_fusion(self.per_image[image], weights, self.wbf_cfg)
                for image in self.images}

    def __call__(self, weights: Sequence[float]) -> float:
        w = [float(x) for x in weights]
        if len(w) != self.n_models:
            raise ValueError(f"expected {self.n_models} weights, got {len(w)}")
        if not any(x > 0 for x in w):
            return 0.0
        report = evaluate(self.fuse(w), self.val, self.thresholds, keep_curves=False,
                          gt_index=self.gt_index)
        return report.map50 if self.metric == "map50" else report.map50_95


def evaluate_fitness(weights: Sequence[float], val: Dataset, runs: Sequence[ModelRun],
                     wbf_cfg: WbfConfig | None = None, metric: Metric = "map50_95") -> float:
    return FitnessFunction(val, runs, wbf_cfg, metric)(weights)


_WORKER_FN: FitnessFunction | None = None


def _init_worker(fn: FitnessFunction) -> None:
    global _WORKER_FN
    _WORKER_FN = fn


def _worker_eval(weights: tuple[float, ...]) -> float:
    return _WORKER_FN(weights)


class Evaluator:
    """Caches fitness by weight vector and fans batches out to worker processes."""

    def __init__(self, fn: Callable[[Sequence[float]], float], workers: int = 1):
        self.fn = fn
        self.cache: dict[tuple[float, ...], float] = {}
        self.requests = 0
        self.computed = 0
        self._pool = None
        if workers > 1:
            self._pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                                             initargs=(fn,))

    def many(self, vectors: Sequence[np.ndarray], use_cache: bool = True) -> list[float]:
        keys = [tuple(float(x) for x in v) for v in vectors]
        self.requests += len(keys)
        todo = list(dict.fromkeys(k for k in keys if not (use_cache and k in self.cache)))
        if todo:
            if self._pool is not None and len(todo) > 1:
                values = list(self._pool.map(_worker_eval, todo))
            else:
                values = [self.fn(k) for k in todo]
            self.computed += len(todo)
            self.cache.update(zip(todo, values))
        return [self.cache[k] for k in keys]

    def one(self, vector: np.ndarray) -> float:
        return self.many([vector])[0]

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None


def _record(g: int, pop: Population, best: Individual, evaluations: int) -> GenerationRecord:
    fits = [ind.fitness for ind in pop.individuals]
    fs = [ind.scale_factor for ind in pop.individuals]
    return GenerationRecord(g, float(best.fitness), float(np.mean(fits)),
                            tuple(float(w) for w in best.weights),
                            float(np.mean(fs)), float(min(fs)), float(max(fs)), evaluations)


def check_inputs(val: Dataset, runs: Sequence[ModelRun]) -> None:
    if not runs:
        raise ValueError("need at least one model run")
    if not val.images:
        raise ValueError("validation split is empty")
    report = validate_dataset(val, runs)
    # runs usually span more images than the validation split
    bad = [f for f in report.findings if f.kind != UNKNOWN_IMAGE]
    if bad:
        raise ValueError("invalid inputs:\n" + "\n".join(str(f) for f in bad))


def evolve(cfg: DeConfig, fitness: Callable[[Sequence[float]], float], n_models: int,
           evaluator: Evaluator | None = None) -> tuple[Individual, ConvergenceHistory]:
    """The generation loop against any fitness callable on weight vectors."""
    own = evaluator is None
    ev = evaluator or Evaluator(fitness, cfg.workers)
    try:
        pop = initialize_population(cfg, n_models)
        for ind, fit in zip(pop.individuals, ev.many([i.weights for i in pop.individuals])):
            ind.fitness = fit
        best = max(pop.individuals, key=lambda ind: ind.fitness)  # first max wins
        best = Individual(best.weights.copy(), best.scale_factor, best.fitness)
        history = ConvergenceHistory([_record(0, pop, best, ev.requests)])

        for g in range(cfg.generations):
            before = ev.requests
            budget = Budget(cfg.local_search_budget)
            trials: list[Individual] = []
            for i, target in enumerate(pop.individuals):
                rng = stream(cfg.seed, GENERATION_KEY, g, i)
                donors = pick_donors(i, len(pop), rng)
                k = float(rng.random())

                def trial_at(f: float, i=i, donors=donors, k=k, x=target.weights) -> float:
                    return ev.one(crossover(x, mutate(i, pop, f, donors=donors), k=k))

                ctx = LocalSearch(trial_at, budget)
                f_new = adapt_scale_factor(target.scale_factor, rng, cfg, ctx)
                v = mutate(i, pop, f_new, donors=donors)
                trials.append(Individual(crossover(target.weights, v, k=k), f_new))

            if cfg.strict_reevaluation:
                targets = ev.many([t.weights for t in pop.individuals], use_cache=False)
                for t, fit in zip(pop.individuals, targets):
                    t.fitness = fit
            for t, fit in zip(trials, ev.many([t.weights for t in trials])):
                t.fitness = fit

            pop = Population([select(x, u) for x, u in zip(pop.individuals, trials)], g + 1)
            for ind in pop.individuals:
                if ind.fitness > best.fitness:
                    best = Individual(ind.weights.copy(), ind.scale_factor, ind.fitness)
            history.records.append(_record(g + 1, pop, best, ev.requests - before))
            log.debug("generation %d best %.6f", g + 1, best.fitness)
        return best, history
    finally:
        if own:
            ev.close()


def run_deihdl(cfg: DeConfig, val: Dataset, runs: Sequence[ModelRun],
               wbf_cfg: WbfConfig | None = None) -> tuple[Individual, ConvergenceHistory]:
    """Optimize fusion weights for ``runs`` on the validation split ``val``."""
    check_inputs(val, runs)
    fn = FitnessFunction(val, runs, wbf_cfg, cfg.fitness_metric)
    return evolve(cfg, fn, len(runs))
