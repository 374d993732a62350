"""Tests for the variable-length GA: operators, search loop, baselines."""

import numpy as np
import pytest
from scipy import stats

from evonas import arch as A
from evonas import corpus as C
from evonas import evolve as E
from evonas import fcn as F
from evonas import gpt as G
from evonas.errors import ConfigError, EvalError
from evonas.evaluation import (FitnessRecord, MarkovTeacher, Provenance,
                               SurrogateEvaluator)


PALETTE = (8, 32)
BOUNDS = (10, 20)


@pytest.fixture(scope="module")
def setup(default_lib):
    vocab = A.Vocabulary()
    C.extend_vocab_closure(vocab, default_lib, width_palette=PALETTE)
    vocab.freeze()
    gcfg = G.GptConfig(vocab_size=vocab.size, n_layers=1, n_heads=2,
                       d_model=8, d_ff=16, dropout_rate=0.0, seed=3)
    gpt = G.init_model(gcfg)
    fcfg = F.FcnConfig(total_tokens=vocab.total_tokens, pad_id=vocab.pad_id,
                       hidden=(16,), epochs=0, seed=4)
    fcn = F.fcn_train([], fcfg, lib=default_lib)
    return vocab, gpt, fcn


class ConstantEvaluator:
    provenance = Provenance.SURROGATE

    def __init__(self, value=0.5):
        self.value = value
        self.calls = 0

    def evaluate(self, arch, trace=None):
        self.calls += 1
        return FitnessRecord(self.value, 0, Provenance.SURROGATE, "stub")


class FlakyEvaluator:
    """Raises on every third call; otherwise scores by depth."""

    provenance = Provenance.SURROGATE

    def __init__(self):
        self.calls = 0

    def evaluate(self, arch, trace=None):
        self.calls += 1
        if self.calls % 3 == 0:
            raise EvalError("synthetic failure")
        return FitnessRecord(min(arch.depth / 40.0, 1.0), 0,
                             Provenance.SURROGATE, "stub")


def small_cfg(**kw):
    base = dict(population=10, generations=5, crossover_rate=0.9,
                mutation_rate=0.3, depth_bounds=BOUNDS, elitism_count=1,
                tournament_size=2, rate_ori=0.4, seed=0)
    base.update(kw)
    return E.GaConfig(**base)


# --- config -----------------------------------------------------------------------


def test_config_defaults_and_validation():
    cfg = E.GaConfig()
    assert cfg.population == 30
    assert cfg.generations == 20
    assert cfg.crossover_rate == 0.9
    assert cfg.mutation_rate == 0.3
    assert cfg.depth_bounds == (10, 20)
    for bad in (dict(crossover_rate=1.5), dict(mutation_rate=-0.1),
                dict(population=1), dict(elitism_count=30),
                dict(tournament_size=0), dict(rate_ori=2.0),
                dict(generations=-1), dict(depth_bounds=(0, 20)),
                dict(depth_bounds=(20, 10))):
        with pytest.raises(ConfigError):
            E.GaConfig(**bad)


# --- init population --------------------------------------------------------------


def test_init_population_size_and_validity(default_lib):
    cfg = small_cfg(population=30)
    pop = E.init_population(cfg, default_lib, np.random.default_rng(1),
                            width_palette=PALETTE)
    assert len(pop) == 30
    for ind in pop:
        assert BOUNDS[0] <= ind.arch.depth <= BOUNDS[1]
        A.validate_architecture(ind.arch)
        assert ind.fitness is None
    kinds = [tuple(b.kind for b in ind.arch.blocks) for ind in pop]
    pop2 = E.init_population(cfg, default_lib, np.random.default_rng(1),
                             width_palette=PALETTE)
    kinds2 = [tuple(b.kind for b in ind.arch.blocks) for ind in pop2]
    assert kinds == kinds2


def test_init_population_depth_uniform(default_lib):
    cfg = small_cfg(population=1000)
    pop = E.init_population(cfg, default_lib, np.random.default_rng(7),
                            width_palette=PALETTE)
    depths = [ind.arch.depth for ind in pop]
    counts = [depths.count(d) for d in range(BOUNDS[0], BOUNDS[1] + 1)]
    _, p = stats.chisquare(counts)
    assert p > 0.01


# --- crossover --------------------------------------------------------------------


def arch_genome(arch):
    return tuple((b.kind, b.width_param) for b in arch.blocks)


def test_crossover_cut_zero_swaps_parents(default_lib, arch_sampler):
    a, b = arch_sampler(1), arch_sampler(2)
    c1, c2 = E.crossover(a, b, np.random.default_rng(0), cuts=(0, 0))
    assert arch_genome(c1) == arch_genome(b)
    assert arch_genome(c2) == arch_genome(a)


def test_crossover_depth_repair_at_both_bounds(default_lib):
    import random
    a = C.sample_architecture(random.Random(101), default_lib,
                              depth_bounds=(10, 10), width_palette=PALETTE)
    b = C.sample_architecture(random.Random(202), default_lib,
                              depth_bounds=(20, 20), width_palette=PALETTE)
    c1, c2 = E.crossover(a, b, np.random.default_rng(0), cuts=(10, 5))
    # raw child1 would be 10 + 15 = 25 blocks, child2 = 5 + 0 = 5
    assert c1.depth == 20
    assert c2.depth == 10
    A.validate_architecture(c1)
    A.validate_architecture(c2)


def test_crossover_seeded_children_validate(default_lib, arch_sampler):
    rng = np.random.default_rng(3)
    parents = [arch_sampler(i) for i in range(20)]
    for i in range(500):
        a = parents[int(rng.integers(len(parents)))]
        b = parents[int(rng.integers(len(parents)))]
        for child in E.crossover(a, b, rng):
            A.validate_architecture(child)
            assert BOUNDS[0] <= child.depth <= BOUNDS[1]


# --- mutation ---------------------------------------------------------------------


def test_mutate_respects_depth_bounds(default_lib):
    import random
    low = C.sample_architecture(random.Random(11), default_lib,
                                depth_bounds=(10, 10), width_palette=PALETTE)
    high = C.sample_architecture(random.Random(12), default_lib,
                                 depth_bounds=(20, 20), width_palette=PALETTE)
    for i in range(200):
        out = E.mutate(low, np.random.default_rng(i), width_palette=PALETTE)
        assert out.depth in (10, 11)
        out = E.mutate(high, np.random.default_rng(1000 + i),
                       width_palette=PALETTE)
        assert out.depth in (19, 20)


def kind_seq_diff_is_single_edit(parent, child):
    ps = [b.kind for b in parent.blocks]
    cs = [b.kind for b in child.blocks]
    if len(ps) == len(cs):
        return sum(p != c for p, c in zip(ps, cs)) == 1
    if abs(len(ps) - len(cs)) != 1:
        return False
    longer, shorter = (ps, cs) if len(ps) > len(cs) else (cs, ps)
    i = 0
    skipped = False
    for item in longer:
        if i < len(shorter) and item == shorter[i]:
            i += 1
        elif not skipped:
            skipped = True
        else:
            return False
    return True


def test_mutate_single_structural_edit(default_lib, arch_sampler):
    rng = np.random.default_rng(5)
    for i in range(500):
        parent = arch_sampler(i % 40)
        child = E.mutate(parent, rng, width_palette=PALETTE)
        A.validate_architecture(child)
        assert BOUNDS[0] <= child.depth <= BOUNDS[1]
        assert kind_seq_diff_is_single_edit(parent, child)


# --- run_search -------------------------------------------------------------------


def test_generations_zero_returns_evaluated_init(setup, default_lib):
    vocab, gpt, fcn = setup
    ev = ConstantEvaluator(0.25)
    cfg = small_cfg(generations=0)
    res = E.run_search(cfg, (gpt, vocab), fcn, ev, np.random.default_rng(0),
                       width_palette=PALETTE)
    assert res.eval_calls == cfg.population
    assert res.best_fitness == 0.25
    assert len(res.generations) == 1
    assert res.generations[0].gen == 0


def test_constant_landscape_flat_best(setup, default_lib):
    vocab, gpt, fcn = setup
    ev = ConstantEvaluator(0.5)
    cfg = small_cfg(generations=4, rate_ori=0.0)
    res = E.run_search(cfg, (gpt, vocab), fcn, ev, np.random.default_rng(1),
                       width_palette=PALETTE)
    assert all(g.best_so_far == 0.5 for g in res.generations)
    assert all(len(g.fitnesses) == cfg.population for g in res.generations)
    assert res.eval_calls <= cfg.population * (cfg.generations + 1)


def test_search_monotone_deterministic_budget(setup, default_lib):
    vocab, gpt, fcn = setup
    teacher = MarkovTeacher.default_ring()
    cfg = small_cfg(generations=5, seed=3)

    def run():
        return E.run_search(cfg, (gpt, vocab), fcn,
                            SurrogateEvaluator(teacher),
                            np.random.default_rng(cfg.seed),
                            width_palette=PALETTE)

    r1, r2 = run(), run()
    best = [g.best_so_far for g in r1.generations]
    assert best == sorted(best)
    assert r1.eval_calls <= cfg.population * (cfg.generations + 1)
    assert [g.fitnesses for g in r1.generations] == \
        [g.fitnesses for g in r2.generations]
    assert r1.best_fitness == r2.best_fitness
    assert A.arch_hash(r1.best_arch) == A.arch_hash(r2.best_arch)
    assert len(r1.generations) == cfg.generations + 1
    # lineage: bred individuals carry parent ids
    assert any(g.new_evals for g in r1.generations[1:])


def test_rate_zero_matches_unguided_ga(setup, default_lib):
    vocab, gpt, fcn = setup
    teacher = MarkovTeacher.default_ring()
    cfg = small_cfg(generations=4, rate_ori=0.0, seed=9)
    r1 = E.run_search(cfg, (gpt, vocab), fcn, SurrogateEvaluator(teacher),
                      np.random.default_rng(cfg.seed), width_palette=PALETTE)
    r2 = E.run_search(cfg, None, None, SurrogateEvaluator(teacher),
                      np.random.default_rng(cfg.seed), width_palette=PALETTE,
                      guided=False)
    assert [g.fitnesses for g in r1.generations] == \
        [g.fitnesses for g in r2.generations]
    assert A.arch_hash(r1.best_arch) == A.arch_hash(r2.best_arch)


def test_evaluator_failure_scores_zero_and_continues(setup, default_lib):
    vocab, gpt, fcn = setup
    ev = FlakyEvaluator()
    cfg = small_cfg(generations=3)
    res = E.run_search(cfg, (gpt, vocab), fcn, ev, np.random.default_rng(2),
                       width_palette=PALETTE)
    errors = [f for g in res.generations for f in g.fitnesses if f == 0.0]
    assert errors, "some individuals should carry the zero error fitness"
    assert res.best_fitness > 0.0
    assert len(res.generations) == cfg.generations + 1


def test_cache_hits_reduce_calls(setup, default_lib):
    vocab, gpt, fcn = setup
    ev = ConstantEvaluator(0.5)
    # zero rates and operators force duplicated individuals across generations
    cfg = small_cfg(generations=3, rate_ori=0.0, crossover_rate=0.0,
                    mutation_rate=0.0)
    res = E.run_search(cfg, (gpt, vocab), fcn, ev, np.random.default_rng(4),
                       width_palette=PALETTE)
    assert res.cache_hits > 0
    assert res.eval_calls == ev.calls
    assert res.eval_calls < cfg.population * (cfg.generations + 1)


def test_random_search_budget_and_determinism(default_lib):
    teacher = MarkovTeacher.default_ring()
    ev = SurrogateEvaluator(teacher)
    r1 = E.random_search(ev, 50, np.random.default_rng(6),
                         width_palette=PALETTE)
    r2 = E.random_search(ev, 50, np.random.default_rng(6),
                         width_palette=PALETTE)
    assert r1.eval_calls == 50
    assert r1.best_fitness == max(r1.fitnesses)
    assert r1.fitnesses == r2.fitnesses
    assert len(r1.fitnesses) == 50


def test_search_result_round_trip(setup, default_lib, tmp_path):
    vocab, gpt, fcn = setup
    ev = ConstantEvaluator(0.5)
    cfg = small_cfg(generations=2)
    res = E.run_search(cfg, (gpt, vocab), fcn, ev, np.random.default_rng(0),
                       width_palette=PALETTE)
    d = res.to_dict()
    back = E.SearchResult.from_dict(d)
    assert back.comparable() == res.comparable()
    assert A.arch_hash(back.best_arch) == A.arch_hash(res.best_arch)
