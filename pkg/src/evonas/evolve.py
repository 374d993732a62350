"""Variable-length evolutionary search over block sequences.

The population holds whole architectures; crossover swaps block-list tails,
mutation edits one block, and each generation the non-elite members are
perturbed by elimination-and-refill before scoring.  Fitness lookups are
cached on the canonical key-sequence hash so repeated structures are never
re-scored by a deterministic evaluator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import arch as A
from .corpus import (BlockLibrary, DEFAULT_INPUT_SHAPE, DEFAULT_NUM_CLASSES,
                     DEFAULT_WIDTH_PALETTE, PRESERVE_KINDS, arch_from_dict,
                     arch_to_dict, instantiate_block)
from .errors import ConfigError, EvonasError
from .evaluation import FitnessRecord, Provenance
from .gpt import GptModel
from .reconstruct import EliminationSchedule, elimination_rate, reconstruct


@dataclass(frozen=True)
class GaConfig:
    population: int = 30
    generations: int = 20
    crossover_rate: float = 0.9
    mutation_rate: float = 0.3
    depth_bounds: tuple = (10, 20)
    elitism_count: int = 1
    tournament_size: int = 2
    rate_ori: float = 0.4
    seed: int = 0

    def __post_init__(self):
        if self.population < 2:
            raise ConfigError("population must be at least 2")
        if self.generations < 0:
            raise ConfigError("generations must be >= 0")
        for name in ("crossover_rate", "mutation_rate", "rate_ori"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {v}")
        lo, hi = self.depth_bounds
        if lo < 1 or hi < lo:
            raise ConfigError(f"bad depth bounds {self.depth_bounds}")
        if not 0 <= self.elitism_count < self.population:
            raise ConfigError("elitism_count must be < population")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size must be >= 1")
        object.__setattr__(self, "depth_bounds",
                           (int(lo), int(hi)))

    def to_dict(self) -> dict:
        return {"population": self.population, "generations": self.generations,
                "crossover_rate": self.crossover_rate,
                "mutation_rate": self.mutation_rate,
                "depth_bounds": list(self.depth_bounds),
                "elitism_count": self.elitism_count,
                "tournament_size": self.tournament_size,
                "rate_ori": self.rate_ori, "seed": self.seed}

    @classmethod
    def from_dict(cls, d: dict) -> "GaConfig":
        d = dict(d)
        if "depth_bounds" in d:
            d["depth_bounds"] = tuple(d["depth_bounds"])
        return cls(**d)


@dataclass
class Individual:
    arch: A.Architecture
    id: int
    parents: tuple = ()
    fitness: Optional[float] = None
    record: Optional[FitnessRecord] = None
    trace: Optional[object] = None


# --- sampling and operators -------------------------------------------------------


def _sample_arch(rng: np.random.Generator, lib: BlockLibrary, depth_bounds,
                 input_shape, num_classes, width_palette) -> A.Architecture:
    lo, hi = depth_bounds
    depth = int(rng.integers(lo, hi + 1))
    blocks, cur = [], input_shape
    for _ in range(depth):
        kind = lib.kinds[int(rng.integers(len(lib.kinds)))]
        block = instantiate_block(lib, kind, cur,
                                  _draw_width(rng, kind, cur, width_palette))
        blocks.append(block)
        cur = block.out_size
    return A.assemble(tuple(blocks), input_shape, num_classes)


def _draw_width(rng, kind, cur, palette) -> int:
    if kind in PRESERVE_KINDS:
        return cur[0]
    return int(palette[int(rng.integers(len(palette)))])


def init_population(cfg: GaConfig, lib: Optional[BlockLibrary] = None,
                    rng: Optional[np.random.Generator] = None,
                    input_shape=DEFAULT_INPUT_SHAPE,
                    num_classes=DEFAULT_NUM_CLASSES,
                    width_palette=DEFAULT_WIDTH_PALETTE) -> list:
    """Uniform random individuals: depth uniform in bounds, kinds uniform."""
    if lib is None:
        lib = BlockLibrary.default()
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    return [
        Individual(arch=_sample_arch(rng, lib, cfg.depth_bounds, input_shape,
                                     num_classes, width_palette), id=i)
        for i in range(cfg.population)
    ]


def _genome(arch: A.Architecture) -> list:
    return [(b.kind, b.width_param) for b in arch.blocks]


def _build(genome, lib, input_shape, num_classes) -> A.Architecture:
    blocks, cur = [], input_shape
    for kind, width in genome:
        block = instantiate_block(lib, kind, cur, max(int(width), 1))
        blocks.append(block)
        cur = block.out_size
    return A.assemble(tuple(blocks), input_shape, num_classes)


def _repair_depth(genome: list, depth_bounds) -> list:
    lo, hi = depth_bounds
    if len(genome) > hi:
        return genome[:hi]
    while len(genome) < lo:       # stretch by duplicating the tail block
        genome.append(genome[-1])
    return genome


def crossover(a: A.Architecture, b: A.Architecture, rng: np.random.Generator,
              lib: Optional[BlockLibrary] = None,
              depth_bounds=A.DEFAULT_DEPTH_BOUNDS, cuts=None):
    """Single-point tail swap; cut points drawn independently per parent.

    Children falling outside the depth bounds are trimmed or tail-duplicated
    to the nearest bound; an empty child degenerates to the co-parent.
    """
    if lib is None:
        lib = BlockLibrary.default()
    if a.input_shape != b.input_shape or a.num_classes != b.num_classes:
        raise ConfigError("parents disagree on input shape or class count")
    ga, gb = _genome(a), _genome(b)
    if cuts is None:
        cuts = (int(rng.integers(0, len(ga) + 1)),
                int(rng.integers(0, len(gb) + 1)))
    c1 = ga[:cuts[0]] + gb[cuts[1]:]
    c2 = gb[:cuts[1]] + ga[cuts[0]:]
    if not c1:
        c1 = list(gb)
    if not c2:
        c2 = list(ga)
    out = []
    for g in (c1, c2):
        child = _build(_repair_depth(g, depth_bounds), lib, a.input_shape,
                       a.num_classes)
        A.validate_architecture(child, depth_bounds)
        out.append(child)
    return out[0], out[1]


def mutate(arch: A.Architecture, rng: np.random.Generator,
           lib: Optional[BlockLibrary] = None,
           depth_bounds=A.DEFAULT_DEPTH_BOUNDS,
           width_palette=DEFAULT_WIDTH_PALETTE) -> A.Architecture:
    """One edit: insert, delete, or replace a block's kind; bounds respected."""
    if lib is None:
        lib = BlockLibrary.default()
    genome = _genome(arch)
    lo, hi = depth_bounds
    while True:
        action = int(rng.integers(3))
        if action == 0 and len(genome) >= hi:      # insert infeasible
            continue
        if action == 1 and len(genome) <= lo:      # delete infeasible
            continue
        break
    if action == 0:
        pos = int(rng.integers(len(genome) + 1))
        kind = lib.kinds[int(rng.integers(len(lib.kinds)))]
        width = int(width_palette[int(rng.integers(len(width_palette)))])
        genome.insert(pos, (kind, width))
    elif action == 1:
        del genome[int(rng.integers(len(genome)))]
    else:
        pos = int(rng.integers(len(genome)))
        old_kind, width = genome[pos]
        pick = int(rng.integers(len(lib.kinds) - 1))
        if pick >= lib.label_index(old_kind):
            pick += 1                              # never redraw the same kind
        if old_kind in PRESERVE_KINDS:
            # the pinned channel count is not a palette width; redraw
            width = int(width_palette[int(rng.integers(len(width_palette)))])
        genome[pos] = (lib.kinds[pick], width)
    child = _build(genome, lib, arch.input_shape, arch.num_classes)
    A.validate_architecture(child, depth_bounds)
    return child


# --- search loop ------------------------------------------------------------------


@dataclass(frozen=True)
class GenerationRecord:
    gen: int
    rate: float
    fitnesses: tuple
    best_id: int
    best_fitness: float
    best_hash: str
    best_so_far: float
    new_evals: int
    cache_hits: int

    def to_dict(self) -> dict:
        return {"gen": self.gen, "rate": self.rate,
                "fitnesses": list(self.fitnesses), "best_id": self.best_id,
                "best_fitness": self.best_fitness, "best_hash": self.best_hash,
                "best_so_far": self.best_so_far, "new_evals": self.new_evals,
                "cache_hits": self.cache_hits}

    @classmethod
    def from_dict(cls, d: dict) -> "GenerationRecord":
        d = dict(d)
        d["fitnesses"] = tuple(d["fitnesses"])
        return cls(**d)


@dataclass
class SearchResult:
    config: GaConfig
    generations: list
    best_arch: A.Architecture
    best_fitness: float
    best_id: int
    eval_calls: int
    cache_hits: int
    wall_time: float = 0.0

    def to_dict(self) -> dict:
        return {"config": self.config.to_dict(),
                "generations": [g.to_dict() for g in self.generations],
                "best_arch": arch_to_dict(self.best_arch),
                "best_fitness": self.best_fitness,
                "best_id": self.best_id,
                "eval_calls": self.eval_calls,
                "cache_hits": self.cache_hits,
                "wall_time": self.wall_time}

    @classmethod
    def from_dict(cls, d: dict) -> "SearchResult":
        return cls(config=GaConfig.from_dict(d["config"]),
                   generations=[GenerationRecord.from_dict(g)
                                for g in d["generations"]],
                   best_arch=arch_from_dict(d["best_arch"]),
                   best_fitness=d["best_fitness"], best_id=d["best_id"],
                   eval_calls=d["eval_calls"], cache_hits=d["cache_hits"],
                   wall_time=d.get("wall_time", 0.0))

    def comparable(self) -> dict:
        """Serializable view with wall-clock fields removed."""
        d = self.to_dict()
        d.pop("wall_time", None)
        return d


def _provenance_of(evaluator) -> Provenance:
    return getattr(evaluator, "provenance", None) or Provenance.EXTERNAL


class _Scorer:
    """Evaluation with canonical-hash caching and failure-to-zero handling."""

    def __init__(self, evaluator):
        self.evaluator = evaluator
        self.cache: dict[str, FitnessRecord] = {}
        self.calls = 0
        self.hits = 0

    def score(self, ind: Individual) -> None:
        if ind.fitness is not None:
            return
        key = A.arch_hash(ind.arch)
        rec = self.cache.get(key)
        if rec is not None:
            self.hits += 1
        else:
            self.calls += 1
            try:
                rec = self.evaluator.evaluate(ind.arch, trace=ind.trace)
            except EvonasError:
                rec = FitnessRecord(0.0, 0, _provenance_of(self.evaluator),
                                    "error", error=True)
            if not rec.error:
                self.cache[key] = rec
        ind.record = rec
        ind.fitness = rec.fitness


def _tournament(pop, rng, size) -> Individual:
    picks = [pop[int(rng.integers(len(pop)))] for _ in range(size)]
    return min(picks, key=lambda i: (-i.fitness, i.id))


def _best(pop) -> Individual:
    return min(pop, key=lambda i: (-i.fitness, i.id))


def run_search(cfg: GaConfig, gpt, fcn, evaluator, rng: np.random.Generator,
               lib: Optional[BlockLibrary] = None, guided: bool = True,
               input_shape=DEFAULT_INPUT_SHAPE,
               num_classes=DEFAULT_NUM_CLASSES,
               width_palette=DEFAULT_WIDTH_PALETTE) -> SearchResult:
    """GA search with per-generation elimination-and-refill on non-elites.

    `gpt` is a (model, vocabulary) pair; pass guided=False to run the plain
    GA without the predictor (equivalent to a schedule that is always zero).
    Reproducible given the rng seed and a deterministic evaluator.
    """
    if lib is None:
        lib = BlockLibrary.default()
    if guided:
        try:
            model, vocab = gpt
        except (TypeError, ValueError):
            raise ConfigError("gpt must be a (model, vocabulary) pair") from None
        if not isinstance(model, GptModel) or fcn is None:
            raise ConfigError("guided search needs trained gpt and fcn models")
    sched = EliminationSchedule(rate_ori=cfg.rate_ori,
                                iter_max=max(cfg.generations, 1))
    t0 = time.monotonic()
    scorer = _Scorer(evaluator)
    pop = init_population(cfg, lib, rng, input_shape, num_classes,
                          width_palette)
    next_id = cfg.population
    for ind in pop:
        scorer.score(ind)

    records = []
    best_so_far = _best(pop).fitness
    seen_calls = seen_hits = 0

    def snapshot(gen, rate):
        nonlocal best_so_far, seen_calls, seen_hits
        top = _best(pop)
        best_so_far = max(best_so_far, top.fitness)
        records.append(GenerationRecord(
            gen=gen, rate=rate, fitnesses=tuple(i.fitness for i in pop),
            best_id=top.id, best_fitness=top.fitness,
            best_hash=A.arch_hash(top.arch), best_so_far=best_so_far,
            new_evals=scorer.calls - seen_calls,
            cache_hits=scorer.hits - seen_hits))
        seen_calls, seen_hits = scorer.calls, scorer.hits

    snapshot(0, 0.0)
    overall_best = _best(pop)

    for gen in range(1, cfg.generations + 1):
        # the first generation runs at the full initial rate
        rate = elimination_rate(sched, gen - 1)
        elites = sorted(pop, key=lambda i: (-i.fitness, i.id))[:cfg.elitism_count]
        offspring = []
        need = cfg.population - cfg.elitism_count
        while len(offspring) < need:
            p1 = _tournament(pop, rng, cfg.tournament_size)
            p2 = _tournament(pop, rng, cfg.tournament_size)
            if rng.random() < cfg.crossover_rate:
                a1, a2 = crossover(p1.arch, p2.arch, rng, lib,
                                   cfg.depth_bounds)
            else:
                a1, a2 = p1.arch, p2.arch
            for child in (a1, a2):
                if len(offspring) == need:
                    break
                if rng.random() < cfg.mutation_rate:
                    child = mutate(child, rng, lib, cfg.depth_bounds,
                                   width_palette)
                offspring.append(Individual(arch=child, id=next_id,
                                            parents=(p1.id, p2.id)))
                next_id += 1
        pop = elites + offspring
        if guided and rate > 0.0:
            for ind in pop[cfg.elitism_count:]:
                ind.arch, ind.trace = reconstruct(
                    ind.arch, (model, vocab), fcn, rate, rng, lib=lib,
                    width_palette=width_palette)
                ind.fitness = None
                ind.record = None
        for ind in pop:
            scorer.score(ind)
        snapshot(gen, rate)
        top = _best(pop)
        if top.fitness > overall_best.fitness:
            overall_best = top

    return SearchResult(config=cfg, generations=records,
                        best_arch=overall_best.arch,
                        best_fitness=overall_best.fitness,
                        best_id=overall_best.id,
                        eval_calls=scorer.calls, cache_hits=scorer.hits,
                        wall_time=time.monotonic() - t0)


@dataclass
class RandomSearchResult:
    fitnesses: tuple
    best_fitness: float
    best_arch: A.Architecture
    eval_calls: int


def random_search(evaluator, budget: int, rng: np.random.Generator,
                  lib: Optional[BlockLibrary] = None,
                  depth_bounds=A.DEFAULT_DEPTH_BOUNDS,
                  input_shape=DEFAULT_INPUT_SHAPE,
                  num_classes=DEFAULT_NUM_CLASSES,
                  width_palette=DEFAULT_WIDTH_PALETTE) -> RandomSearchResult:
    """Equal-budget baseline: uniform samples, no operators, no guidance."""
    if budget < 1:
        raise ConfigError("budget must be positive")
    if lib is None:
        lib = BlockLibrary.default()
    fitnesses, best, best_fit = [], None, -1.0
    for _ in range(budget):
        arch = _sample_arch(rng, lib, depth_bounds, input_shape, num_classes,
                            width_palette)
        try:
            rec = evaluator.evaluate(arch)
            fit = rec.fitness
        except EvonasError:
            fit = 0.0
        fitnesses.append(fit)
        if fit > best_fit:
            best, best_fit = arch, fit
    return RandomSearchResult(fitnesses=tuple(fitnesses), best_fitness=best_fit,
                              best_arch=best, eval_calls=len(fitnesses))
