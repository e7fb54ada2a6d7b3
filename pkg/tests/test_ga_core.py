from dataclasses import replace

import numpy as np
import pytest

from errors import ConfigurationError, InternalError, RunError
from ga_core import (
    EvaluationBatch, Population, SequentialEvaluator, apply_elitism, breed, crossover, init_population,
    make_rng, mutate, rank_key, run_ga, single_point_crossover, tournament_select,
)
from genome import Genome, Individual


class CountingEvaluator(SequentialEvaluator):
    def __init__(self, fail_at=None):
        super().__init__()
        self.calls = []
        self.fail_at = fail_at

    def evaluate_all(self, individuals, config, generation):
        self.calls.append((generation, [ind.id for ind in individuals]))
        if generation == self.fail_at:
            raise RuntimeError("worker perdido")
        return super().evaluate_all(individuals, config, generation)


@pytest.mark.parametrize('field_name,value', [
    ('population_size', 1),
    ('genome_length', 0),
    ('max_generations', 0),
    ('crossover_rate', 1.5),
    ('mutation_rate', -0.1),
    ('tournament_size', 0),
    ('elite_count', 16),
    ('generation_timeout', 0),
])
def test_validate_names_the_offending_field(onemax_config, field_name, value):
    with pytest.raises(ConfigurationError) as info:
        replace(onemax_config, **{field_name: value}).validate()
    assert info.value.field == field_name


def test_validate_direction_and_kind_must_match_problem(onemax_config):
    with pytest.raises(ConfigurationError) as info:
        replace(onemax_config, maximize=False).validate()
    assert info.value.field == 'maximize'
    with pytest.raises(ConfigurationError) as info:
        replace(onemax_config, genome_kind='real_vector').validate()
    assert info.value.field == 'genome_kind'


def test_init_population_is_deterministic(onemax_config):
    a = init_population(onemax_config, make_rng(11))
    b = init_population(onemax_config, make_rng(11))
    assert a == b
    assert a.generation == 0
    assert [m.id for m in a.members] == list(range(onemax_config.population_size))
    assert not any(m.evaluated for m in a.members)


def test_real_population_respects_bounds(sphere_config):
    config = replace(sphere_config, problem_params={'low': -1.0, 'high': 0.5})
    pop = init_population(config, make_rng(1))
    assert all(-1.0 <= x <= 0.5 for m in pop.members for x in m.genome.reals)


def test_single_point_crossover():
    a = Genome.from_bits([0, 0, 0, 0])
    b = Genome.from_bits([1, 1, 1, 1])
    child_a, child_b = single_point_crossover(a, b, 1)
    assert child_a.bits == (0, 1, 1, 1)
    assert child_b.bits == (1, 0, 0, 0)
    with pytest.raises(InternalError):
        single_point_crossover(a, b, 4)


def test_crossover_rate_zero_copies_parents(onemax_config):
    config = replace(onemax_config, crossover_rate=0.0)
    a = Individual(Genome.from_bits([0] * 16), 0, 0.0)
    b = Individual(Genome.from_bits([1] * 16), 1, 16.0)
    assert crossover(a, b, config, make_rng(0)) == (a.genome, b.genome)


def test_crossover_preserves_gene_multiset(onemax_config):
    config = replace(onemax_config, crossover_rate=1.0)
    a = Individual(Genome.from_bits([0] * 16), 0, 0.0)
    b = Individual(Genome.from_bits([1] * 16), 1, 16.0)
    child_a, child_b = crossover(a, b, config, make_rng(5))
    assert sum(child_a.bits) + sum(child_b.bits) == 16
    assert child_a.bits != a.genome.bits


def test_mutation_extremes(onemax_config):
    g = Genome.from_bits([1, 0] * 8)
    assert mutate(g, replace(onemax_config, mutation_rate=0.0), make_rng(0)) == g
    flipped = mutate(g, replace(onemax_config, mutation_rate=1.0), make_rng(0))
    assert flipped.bits == tuple(1 - b for b in g.bits)


def test_real_mutation_is_clipped(sphere_config):
    config = replace(sphere_config, mutation_rate=1.0, problem_params={'mutation_sigma': 100.0})
    g = Genome.from_reals([5.0, -5.0, 0.0, 1.0])
    mutated = mutate(g, config, make_rng(2))
    assert all(-5.12 <= x <= 5.12 for x in mutated.reals)
    assert mutated != g


def test_rank_key_breaks_ties_by_lower_id():
    a = Individual(Genome.from_bits([1]), 3, 1.0)
    b = Individual(Genome.from_bits([1]), 1, 1.0)
    assert min([a, b], key=lambda m: rank_key(m, True)).id == 1
    assert min([a, b], key=lambda m: rank_key(m, False)).id == 1


def test_apply_elitism_keeps_best_first(onemax_config):
    config = replace(onemax_config, population_size=4, elite_count=2)
    members = [Individual(Genome.from_bits([0] * 16), i, float(f)) for i, f in enumerate([3, 9, 1, 9])]
    offspring = [Genome.from_bits([1] * 16), Genome.from_bits([0, 1] * 8)]
    nxt = apply_elitism(Population(2, members), offspring, config)
    assert nxt.generation == 3
    assert [m.id for m in nxt.members] == [0, 1, 2, 3]
    assert [m.fitness for m in nxt.members] == [9.0, 9.0, None, None]
    with pytest.raises(InternalError):
        apply_elitism(Population(2, members), offspring[:1], config)


def test_breed_fills_odd_offspring_count(onemax_config):
    config = replace(onemax_config, population_size=8, elite_count=1)
    rng = make_rng(4)
    pop = init_population(config, rng)
    evaluated = Population(0, [m.with_fitness(float(sum(m.genome.bits))) for m in pop.members])
    assert len(breed(evaluated, config, rng)) == 7


def test_one_evaluate_call_per_generation_and_elites_not_reevaluated(onemax_config):
    evaluator = CountingEvaluator()
    result = run_ga(onemax_config, evaluator)
    assert [g for g, _ in evaluator.calls] == list(range(onemax_config.max_generations))
    assert len(evaluator.calls[0][1]) == onemax_config.population_size
    for _, ids in evaluator.calls[1:]:
        assert ids == list(range(onemax_config.elite_count, onemax_config.population_size))
    assert [r.evaluations_performed for r in result.reports][1:] == \
        [onemax_config.population_size - onemax_config.elite_count] * (onemax_config.max_generations - 1)


def test_same_seed_same_reports(onemax_config):
    first = run_ga(onemax_config, SequentialEvaluator())
    second = run_ga(onemax_config, SequentialEvaluator())
    assert first.reports == second.reports
    assert first.best == second.best


def test_best_is_monotone_with_elitism(sphere_config):
    result = run_ga(replace(sphere_config, max_generations=10), SequentialEvaluator())
    bests = [r.best_fitness for r in result.reports]
    assert all(later <= earlier for earlier, later in zip(bests, bests[1:]))
    assert result.best.fitness == min(bests)


def test_onemax_improves(onemax_config):
    config = replace(onemax_config, population_size=40, genome_length=20, mutation_rate=0.05,
                     max_generations=30)
    result = run_ga(config, SequentialEvaluator())
    assert result.best.fitness >= 17
    assert result.reports[-1].best_fitness > result.reports[0].mean_fitness


def test_failure_keeps_completed_reports(onemax_config):
    evaluator = CountingEvaluator(fail_at=2)
    with pytest.raises(RunError) as info:
        run_ga(onemax_config, evaluator)
    assert [r.generation for r in info.value.reports] == [0, 1]


def test_evaluator_returning_wrong_length_is_an_error(onemax_config):
    class ShortEvaluator:
        def evaluate_all(self, individuals, config, generation):
            return EvaluationBatch([0.0] * (len(individuals) - 1))

    with pytest.raises(RunError):
        run_ga(onemax_config, ShortEvaluator())


def test_on_report_sees_every_generation(onemax_config):
    seen = []
    run_ga(onemax_config, SequentialEvaluator(), on_report=seen.append)
    assert [r.generation for r in seen] == list(range(onemax_config.max_generations))


class FixedDraws:
    """Generador que siempre sortea los mismos índices"""

    def __init__(self, indices):
        self.indices = np.asarray(indices)

    def integers(self, low, high, size=None):
        return self.indices


def _scored_population(fitnesses):
    return Population(0, [Individual(Genome.from_bits([0]), i, float(f)) for i, f in enumerate(fitnesses)])


def test_exhaustive_tournament_returns_global_best(onemax_config):
    fitnesses = [4, 11, 2, 7, 11, 9, 0, 5]
    pop = _scored_population(fitnesses)
    config = replace(onemax_config, population_size=8, tournament_size=8)
    assert tournament_select(pop, config, FixedDraws(range(8))).id == 1
    minimizing = replace(config, maximize=False)
    assert tournament_select(pop, minimizing, FixedDraws(range(8))).id == 6


def test_tournament_ties_go_to_lower_id(onemax_config):
    pop = _scored_population([3.0] * 6)
    config = replace(onemax_config, population_size=6, tournament_size=3)
    assert tournament_select(pop, config, FixedDraws([5, 2, 4])).id == 2


def test_full_size_tournament_picks_best_at_expected_rate(onemax_config):
    pop = _scored_population(range(8))
    config = replace(onemax_config, population_size=8, tournament_size=8)
    rng = make_rng(21)
    draws = 4000
    best = sum(tournament_select(pop, config, rng).id == 7 for _ in range(draws))
    # con reemplazo el mejor entra en el torneo con probabilidad 1 - (7/8)^8
    assert abs(best / draws - (1 - (7 / 8) ** 8)) < 0.03


def test_size_one_tournament_is_uniform(onemax_config):
    size = 16
    pop = _scored_population(range(size))
    config = replace(onemax_config, population_size=size, tournament_size=1)
    rng = make_rng(33)
    draws = 10_000
    counts = np.bincount([tournament_select(pop, config, rng).id for _ in range(draws)], minlength=size)
    expected = draws / size
    chi_square = float(((counts - expected) ** 2 / expected).sum())
    # cuantil 0.999 de chi-cuadrado con 15 grados de libertad
    assert chi_square < 37.7


def test_mutation_flip_count_matches_rate(onemax_config):
    length, rate, trials = 32, 1 / 32, 10_000
    config = replace(onemax_config, genome_length=length, mutation_rate=rate)
    g = Genome.from_bits([0] * length)
    rng = make_rng(8)
    mean_flips = np.mean([sum(mutate(g, config, rng).bits) for _ in range(trials)])
    assert abs(mean_flips - length * rate) <= 0.2 * length * rate


def test_crossover_conserves_genes_per_position(onemax_config):
    config = replace(onemax_config, crossover_rate=1.0)
    rng = make_rng(99)
    for _ in range(1000):
        length = int(rng.integers(2, 41))
        a = Genome.from_bits(rng.integers(0, 2, size=length).tolist())
        b = Genome.from_bits(rng.integers(0, 2, size=length).tolist())
        child_a, child_b = crossover(Individual(a, 0), Individual(b, 1), config, rng)
        assert len(child_a) == len(child_b) == length
        for i in range(length):
            assert sorted((child_a.bits[i], child_b.bits[i])) == sorted((a.bits[i], b.bits[i]))


def test_init_population_bits_are_balanced(onemax_config):
    config = replace(onemax_config, population_size=1000, genome_length=24)
    pop = init_population(config, make_rng(5))
    bits = np.array([m.genome.bits for m in pop.members])
    frequencies = bits.mean(axis=0)
    assert ((frequencies >= 0.4) & (frequencies <= 0.6)).all()


def test_onemax_32_reaches_optimum_on_most_seeds(onemax_config):
    config = replace(onemax_config, population_size=64, genome_length=32, mutation_rate=1 / 32,
                     max_generations=50)
    solved = 0
    for seed in range(10):
        result = run_ga(replace(config, seed=seed), SequentialEvaluator())
        solved += result.best.fitness == 32
    assert solved >= 9
