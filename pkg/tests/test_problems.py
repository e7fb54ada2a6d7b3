import time

import pytest

from config import GenomeKind
from errors import ConfigurationError
from genome import Genome
from problems import lookup_problem, onemax, rastrigin, sphere


def test_onemax_counts_ones():
    assert onemax(Genome.from_bits([1, 0, 1, 1, 0])) == 3.0
    assert onemax(Genome.from_bits([0] * 8)) == 0.0


def test_sphere_and_rastrigin_reach_zero_at_origin():
    origin = Genome.from_reals([0.0, 0.0, 0.0])
    assert sphere(origin) == 0.0
    assert rastrigin(origin) == pytest.approx(0.0, abs=1e-12)


def test_known_values():
    assert sphere(Genome.from_reals([1.0, -2.0])) == pytest.approx(5.0)
    # En enteros el término coseno vale A, así que queda la suma de cuadrados
    assert rastrigin(Genome.from_reals([1.0, 2.0])) == pytest.approx(5.0)
    assert rastrigin(Genome.from_reals([0.5])) == pytest.approx(10 + 0.25 + 10)


def test_wrong_genome_kind_is_rejected():
    with pytest.raises(TypeError):
        onemax(Genome.from_reals([1.0]))
    with pytest.raises(TypeError):
        sphere(Genome.from_bits([1]))


def test_registry_directions():
    assert lookup_problem('onemax').spec.maximize is True
    assert lookup_problem('sphere').spec.maximize is False
    assert lookup_problem('rastrigin').spec.bounds == (-5.12, 5.12)
    assert lookup_problem('delay', {'base': 'sphere'}).spec.genome_kind == GenomeKind.REAL_VECTOR


def test_unknown_problem_names_the_field():
    with pytest.raises(ConfigurationError) as info:
        lookup_problem('knapsack')
    assert info.value.field == 'problem_id'


def test_unknown_param_names_the_field():
    with pytest.raises(ConfigurationError) as info:
        lookup_problem('onemax', {'A': 3})
    assert info.value.field == 'problem_params.A'


def test_sphere_bounds_from_params():
    assert lookup_problem('sphere', {'low': -1, 'high': 2}).spec.bounds == (-1.0, 2.0)
    with pytest.raises(ConfigurationError):
        lookup_problem('sphere', {'low': 2, 'high': 2})


def test_delay_wraps_any_problem_without_changing_fitness():
    g = Genome.from_bits([1, 1, 0, 1])
    problem = lookup_problem('onemax', {'delay_ms': 30})
    start = time.perf_counter()
    assert problem.evaluate(g) == 3.0
    assert time.perf_counter() - start >= 0.025


def test_delay_problem_busy_spin():
    problem = lookup_problem('delay', {'delay_ms': 10, 'busy_spin': True})
    start = time.perf_counter()
    assert problem.evaluate(Genome.from_bits([1, 0])) == 1.0
    assert time.perf_counter() - start >= 0.009


def test_negative_delay_is_rejected():
    with pytest.raises(ConfigurationError):
        lookup_problem('onemax', {'delay_ms': -1})


@pytest.mark.parametrize('problem_id,params,field', [
    ('rastrigin', {'A': 'x'}, 'problem_params.A'),
    ('sphere', {'low': 'abajo'}, 'problem_params.low'),
    ('onemax', {'delay_ms': 'lento'}, 'problem_params.delay_ms'),
    ('delay', {'delay_ms': [5]}, 'problem_params.delay_ms'),
    ('sphere', {'high': float('inf')}, 'problem_params.high'),
    ('rastrigin', {'A': True}, 'problem_params.A'),
])
def test_non_numeric_params_name_the_field(problem_id, params, field):
    with pytest.raises(ConfigurationError) as info:
        lookup_problem(problem_id, params)
    assert info.value.field == field
