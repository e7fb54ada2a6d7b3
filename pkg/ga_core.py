#!/usr/bin/env python3
"""
Motor GA generacional: población y operadores genéticos

La evaluación de fitness queda detrás de la interfaz Evaluator, de modo que el
mismo bucle de generaciones corre en secuencial o distribuido. Los sorteos
aleatorios de los operadores siguen siempre el orden de ids, nunca el orden de
llegada de las respuestas.
"""
import time
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any, Callable, Dict, List, Optional, Protocol, Sequence, Tuple
import numpy as np
from config import GenomeKind, MIN_GENERATION_TIMEOUT
from errors import ConfigurationError, InternalError, RunError
from genome import Genome, Individual
from logger import logger
from problems import Problem, lookup_problem, param_float

Rng = np.random.Generator


@dataclass(frozen=True)
class GaConfig:
    """Descripción completa de una ejecución"""

    population_size: int
    genome_kind: str
    genome_length: int
    max_generations: int
    crossover_rate: float
    mutation_rate: float
    tournament_size: int
    elite_count: int
    problem_id: str
    problem_params: Dict[str, Any] = field(default_factory=dict)
    seed: int = 0
    generation_timeout: float = MIN_GENERATION_TIMEOUT
    maximize: bool = True

    def problem(self) -> Problem:
        return lookup_problem(self.problem_id, self.problem_params)

    def validate(self) -> 'GaConfig':
        """Comprobar todos los rangos; el error nombra el campo y el límite"""
        _check_range('population_size', self.population_size, low=2)
        _check_range('genome_length', self.genome_length, low=1)
        _check_range('max_generations', self.max_generations, low=1)
        _check_range('crossover_rate', self.crossover_rate, low=0.0, high=1.0)
        _check_range('mutation_rate', self.mutation_rate, low=0.0, high=1.0)
        _check_range('tournament_size', self.tournament_size, low=1, high=self.population_size)
        _check_range('elite_count', self.elite_count, low=0, high=self.population_size - 1)
        _check_range('seed', self.seed, low=0, high=2 ** 64 - 1)
        if not self.generation_timeout > 0:
            raise ConfigurationError('generation_timeout', f"debe ser > 0, recibido {self.generation_timeout}")
        if self.genome_kind not in (GenomeKind.BITSTRING, GenomeKind.REAL_VECTOR):
            raise ConfigurationError('genome_kind', f"valor desconocido '{self.genome_kind}'")

        spec = self.problem().spec
        if spec.genome_kind != self.genome_kind:
            raise ConfigurationError('genome_kind', f"'{self.problem_id}' requiere {spec.genome_kind}, "
                                                    f"recibido {self.genome_kind}")
        if spec.maximize != self.maximize:
            direction = 'maximiza' if spec.maximize else 'minimiza'
            raise ConfigurationError('maximize', f"'{self.problem_id}' {direction}; maximize={self.maximize} no coincide")
        sigma = self.problem_params.get('mutation_sigma')
        if sigma is not None and not param_float(self.problem_params, 'mutation_sigma', 0.0) > 0:
            raise ConfigurationError('problem_params.mutation_sigma', f"debe ser > 0, recibido {sigma}")
        return self


def _check_range(name, value, low=None, high=None):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(name, f"debe ser numérico, recibido {value!r}")
    if low is not None and value < low:
        raise ConfigurationError(name, f"{value} fuera de rango: debe ser >= {low}")
    if high is not None and value > high:
        raise ConfigurationError(name, f"{value} fuera de rango: debe ser <= {high}")


@dataclass
class Population:
    generation: int
    members: List[Individual]


@dataclass(frozen=True)
class EvaluationBatch:
    """Resultado de evaluate_all: fitness alineados con la entrada + contadores"""

    fitness: List[float]
    duplicates: int = 0
    republished: int = 0
    stale: int = 0


class Evaluator(Protocol):
    def evaluate_all(self, individuals: Sequence[Individual], config: GaConfig,
                     generation: int) -> EvaluationBatch:
        ...


class SequentialEvaluator:
    """Evaluación en el propio proceso, en orden de id (oráculo de referencia)"""

    def __init__(self):
        self._problems: Dict[Tuple, Problem] = {}

    def evaluate_all(self, individuals: Sequence[Individual], config: GaConfig,
                     generation: int) -> EvaluationBatch:
        key = (config.problem_id, tuple(sorted(config.problem_params.items())))
        if key not in self._problems:
            self._problems[key] = config.problem()
        evaluate = self._problems[key].evaluate
        return EvaluationBatch([evaluate(ind.genome) for ind in individuals])


@dataclass(frozen=True)
class GenerationReport:
    generation: int
    best_fitness: float
    mean_fitness: float
    evaluations_performed: int
    duplicate_responses: int
    republished_requests: int
    # Los tiempos no cuentan para la igualdad: dos ejecuciones con la misma semilla comparan iguales
    wall_time: float = field(default=0.0, compare=False)
    eval_time: float = field(default=0.0, compare=False)
    best_individual: Optional[Individual] = field(default=None, compare=False, repr=False)


@dataclass
class RunResult:
    best: Individual
    reports: List[GenerationReport]


def make_rng(seed: int) -> Rng:
    return np.random.default_rng(seed)


def rank_key(ind: Individual, maximize: bool) -> Tuple[float, int]:
    """Clave de orden: el menor es el mejor; empates por id más bajo"""
    if ind.fitness is None:
        raise InternalError(f"individuo {ind.id} sin evaluar")
    return (-ind.fitness if maximize else ind.fitness, ind.id)


def is_better(a: float, b: float, maximize: bool) -> bool:
    return a > b if maximize else a < b


@lru_cache(maxsize=64)
def _bounds_for(problem_id: str, params_key: Tuple) -> Optional[Tuple[float, float]]:
    return lookup_problem(problem_id, dict(params_key)).spec.bounds


def problem_bounds(config: GaConfig) -> Optional[Tuple[float, float]]:
    return _bounds_for(config.problem_id, tuple(sorted(config.problem_params.items())))


def init_population(config: GaConfig, rng: Rng) -> Population:
    """Población inicial uniforme, generación 0, sin fitness"""
    config.validate()
    length = config.genome_length
    members = []
    if config.genome_kind == GenomeKind.BITSTRING:
        for i in range(config.population_size):
            members.append(Individual(Genome.from_bits(rng.integers(0, 2, size=length).tolist()), i))
    else:
        low, high = problem_bounds(config)
        for i in range(config.population_size):
            members.append(Individual(Genome.from_reals(rng.uniform(low, high, size=length).tolist()), i))
    return Population(0, members)


def tournament_select(pop: Population, config: GaConfig, rng: Rng) -> Individual:
    """Mejor de tournament_size miembros sorteados con reemplazo"""
    draws = rng.integers(0, len(pop.members), size=config.tournament_size)
    candidates = [pop.members[int(i)] for i in draws]
    return min(candidates, key=lambda m: rank_key(m, config.maximize))


def single_point_crossover(a: Genome, b: Genome, cut: int) -> Tuple[Genome, Genome]:
    """Cruce en un punto: a[:cut]+b[cut:] y b[:cut]+a[cut:]"""
    if not 1 <= cut <= len(a) - 1:
        raise InternalError(f"punto de corte {cut} fuera de [1, {len(a) - 1}]")
    return (Genome.from_bits(a.bits[:cut] + b.bits[cut:]),
            Genome.from_bits(b.bits[:cut] + a.bits[cut:]))


def crossover(a: Individual, b: Individual, config: GaConfig, rng: Rng) -> Tuple[Genome, Genome]:
    ga, gb = a.genome, b.genome
    if ga.kind != gb.kind or len(ga) != len(gb):
        raise InternalError(f"genomas incompatibles: {ga.kind}/{len(ga)} vs {gb.kind}/{len(gb)}")
    if rng.random() >= config.crossover_rate:
        return ga, gb

    if ga.kind == GenomeKind.BITSTRING:
        if len(ga) < 2:
            return ga, gb
        cut = int(rng.integers(1, len(ga)))
        return single_point_crossover(ga, gb, cut)

    # Cruce uniforme: cada coordenada se intercambia con probabilidad 0.5
    swap = rng.random(len(ga)) < 0.5
    x = np.asarray(ga.reals)
    y = np.asarray(gb.reals)
    return (Genome.from_reals(np.where(swap, y, x).tolist()),
            Genome.from_reals(np.where(swap, x, y).tolist()))


def mutate(g: Genome, config: GaConfig, rng: Rng) -> Genome:
    rate = config.mutation_rate
    if g.kind == GenomeKind.BITSTRING:
        flips = rng.random(len(g)) < rate
        return Genome.from_bits([bit ^ 1 if flip else bit for bit, flip in zip(g.bits, flips)])

    low, high = problem_bounds(config)
    sigma = float(config.problem_params.get('mutation_sigma', 0.1 * (high - low)))
    mask = rng.random(len(g)) < rate
    noise = rng.normal(0.0, sigma, size=len(g))
    x = np.asarray(g.reals)
    return Genome.from_reals(np.clip(np.where(mask, x + noise, x), low, high).tolist())


def apply_elitism(evaluated_old: Population, offspring: Sequence[Genome], config: GaConfig) -> Population:
    """Élites primero (mejor primero, conservan fitness) y después la descendencia sin evaluar"""
    expected = config.population_size - config.elite_count
    if len(offspring) != expected:
        raise InternalError(f"descendencia de tamaño {len(offspring)}, se esperaba {expected}")
    ranked = sorted(evaluated_old.members, key=lambda m: rank_key(m, config.maximize))
    elites = ranked[:config.elite_count]

    members = [Individual(e.genome, i, e.fitness) for i, e in enumerate(elites)]
    members.extend(Individual(g, config.elite_count + j) for j, g in enumerate(offspring))
    return Population(evaluated_old.generation + 1, members)


def breed(evaluated: Population, config: GaConfig, rng: Rng) -> List[Genome]:
    """Selección -> cruce -> mutación hasta completar population_size - elite_count"""
    wanted = config.population_size - config.elite_count
    offspring: List[Genome] = []
    while len(offspring) < wanted:
        a = tournament_select(evaluated, config, rng)
        b = tournament_select(evaluated, config, rng)
        child_a, child_b = crossover(a, b, config, rng)
        offspring.append(mutate(child_a, config, rng))
        # Con descendencia impar el segundo hijo del último par se descarta
        if len(offspring) < wanted:
            offspring.append(mutate(child_b, config, rng))
    return offspring


def evolve_generation(pop: Population, config: GaConfig, evaluator: Evaluator,
                      rng: Rng) -> Tuple[Population, GenerationReport]:
    if pop.generation >= config.max_generations:
        raise InternalError(f"generación {pop.generation} >= max_generations {config.max_generations}")
    start = time.perf_counter()

    # Scatter/gather: una única llamada por generación
    pending = [m for m in pop.members if not m.evaluated]
    batch = EvaluationBatch([])
    if pending:
        batch = evaluator.evaluate_all(pending, config, pop.generation)
        if len(batch.fitness) != len(pending):
            raise InternalError(f"el evaluador devolvió {len(batch.fitness)} fitness para {len(pending)} individuos")
    members = list(pop.members)
    for ind, fitness in zip(pending, batch.fitness):
        members[ind.id] = ind.with_fitness(fitness)
    evaluated = Population(pop.generation, members)
    eval_time = time.perf_counter() - start

    best = min(members, key=lambda m: rank_key(m, config.maximize))
    mean = float(np.mean([m.fitness for m in members]))

    next_pop = apply_elitism(evaluated, breed(evaluated, config, rng), config)
    report = GenerationReport(
        generation=pop.generation,
        best_fitness=best.fitness,
        mean_fitness=mean,
        evaluations_performed=len(pending),
        duplicate_responses=batch.duplicates + batch.stale,
        republished_requests=batch.republished,
        wall_time=time.perf_counter() - start,
        eval_time=eval_time,
        best_individual=best,
    )
    return next_pop, report


def run_ga(config: GaConfig, evaluator: Evaluator,
           on_report: Optional[Callable[[GenerationReport], None]] = None) -> RunResult:
    """Ejecutar max_generations generaciones; devuelve el mejor histórico y todos los reportes"""
    config.validate()
    rng = make_rng(config.seed)
    pop = init_population(config, rng)
    reports: List[GenerationReport] = []
    best: Optional[Individual] = None

    logger.info(f"Iniciando GA: problema={config.problem_id}, población={config.population_size}, "
                f"L={config.genome_length}, generaciones={config.max_generations}, semilla={config.seed}")

    for _ in range(config.max_generations):
        try:
            pop, report = evolve_generation(pop, config, evaluator, rng)
        except Exception as e:
            logger.error(f"Ejecución abortada en la generación {pop.generation}: {str(e)}")
            raise RunError(f"generación {pop.generation}: {str(e)}", reports) from e

        reports.append(report)
        if best is None or is_better(report.best_individual.fitness, best.fitness, config.maximize):
            best = report.best_individual
        logger.info(
            f"Generación {report.generation}: mejor={report.best_fitness:.6g}, media={report.mean_fitness:.6g}, "
            f"evaluaciones={report.evaluations_performed}, duplicados={report.duplicate_responses}, "
            f"republicadas={report.republished_requests}, tiempo={report.wall_time:.3f}s"
        )
        if on_report:
            on_report(report)

    return RunResult(best, reports)
