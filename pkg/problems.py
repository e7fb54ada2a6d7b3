#!/usr/bin/env python3
"""
Registro de funciones de fitness puras (la carga de trabajo de los workers)

Los workers resuelven problem_id + problem_params de cada petición contra este
registro: viajan genomas, no código.
"""
import math
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple
import numpy as np
from config import GenomeKind
from errors import ConfigurationError
from genome import Genome

RASTRIGIN_BOUNDS = (-5.12, 5.12)
SPHERE_DEFAULT_BOUNDS = (-5.12, 5.12)

# Parámetros aceptados por cualquier problema
COMMON_PARAMS = {'mutation_sigma', 'delay_ms', 'busy_spin'}


@dataclass(frozen=True)
class ProblemSpec:
    problem_id: str
    genome_kind: str
    maximize: bool
    bounds: Optional[Tuple[float, float]] = None
    params: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.bounds is not None and not self.bounds[0] < self.bounds[1]:
            raise ConfigurationError('bounds', f"low debe ser < high, recibido {self.bounds}")
        if param_float(self.params, 'delay_ms', 0.0) < 0:
            raise ConfigurationError('problem_params.delay_ms', "debe ser >= 0")


@dataclass(frozen=True)
class Problem:
    """Especificación + función de evaluación"""

    spec: ProblemSpec
    evaluate: Callable[[Genome], float]


def param_float(params: Dict[str, Any], key: str, default: float) -> float:
    """Parámetro numérico finito; cualquier otro valor es un ConfigurationError que nombra la clave"""
    value = params.get(key, default)
    if isinstance(value, bool):
        raise ConfigurationError(f"problem_params.{key}", f"debe ser numérico, recibido {value!r}")
    try:
        number = float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"problem_params.{key}", f"debe ser numérico, recibido {value!r}")
    if not math.isfinite(number):
        raise ConfigurationError(f"problem_params.{key}", f"debe ser finito, recibido {value!r}")
    return number


def _require_kind(g: Genome, kind: str, name: str):
    if g.kind != kind:
        raise TypeError(f"{name} requiere un genoma {kind}, recibido {g.kind}")


def onemax(g: Genome) -> float:
    """Número de bits a 1 (maximizar)"""
    _require_kind(g, GenomeKind.BITSTRING, 'onemax')
    return float(sum(g.bits))


def sphere(g: Genome) -> float:
    """Suma de cuadrados (minimizar)"""
    _require_kind(g, GenomeKind.REAL_VECTOR, 'sphere')
    x = np.asarray(g.reals, dtype=np.float64)
    return float(np.sum(x ** 2))


def rastrigin(g: Genome, a: float = 10.0) -> float:
    """A·L + Σ (xᵢ² − A·cos(2π xᵢ)) (minimizar)"""
    _require_kind(g, GenomeKind.REAL_VECTOR, 'rastrigin')
    x = np.asarray(g.reals, dtype=np.float64)
    return float(a * len(x) + np.sum(x ** 2 - a * np.cos(2 * np.pi * x)))


def emulate_cost(delay_ms: float, busy_spin: bool = False):
    """Dormir (o girar en espera activa) delay_ms milisegundos"""
    if delay_ms <= 0:
        return
    if not busy_spin:
        time.sleep(delay_ms / 1000.0)
        return
    end = time.perf_counter() + delay_ms / 1000.0
    while time.perf_counter() < end:
        pass


def delay_fitness(g: Genome, params: Dict[str, Any]) -> float:
    """Coste emulado y después onemax/sphere según el tipo de genoma"""
    delay_ms = param_float(params, 'delay_ms', 0.0)
    if delay_ms < 0:
        raise ConfigurationError('problem_params.delay_ms', "debe ser >= 0")
    emulate_cost(delay_ms, _as_bool(params.get('busy_spin', False)))
    if g.kind == GenomeKind.BITSTRING:
        return onemax(g)
    return sphere(g)


def _as_bool(value: Any) -> bool:
    if isinstance(value, str):
        return value.strip().lower() in ('1', 'true', 'yes', 'si', 'sí')
    return bool(value)


def _bounds_from(params: Dict[str, Any], default: Tuple[float, float]) -> Tuple[float, float]:
    return param_float(params, 'low', default[0]), param_float(params, 'high', default[1])


def _build_onemax(params):
    return Problem(ProblemSpec('onemax', GenomeKind.BITSTRING, True, None, dict(params)), onemax)


def _build_sphere(params):
    bounds = _bounds_from(params, SPHERE_DEFAULT_BOUNDS)
    return Problem(ProblemSpec('sphere', GenomeKind.REAL_VECTOR, False, bounds, dict(params)), sphere)


def _build_rastrigin(params):
    a = param_float(params, 'A', 10.0)

    def evaluate(g: Genome) -> float:
        return rastrigin(g, a)

    return Problem(ProblemSpec('rastrigin', GenomeKind.REAL_VECTOR, False, RASTRIGIN_BOUNDS, dict(params)), evaluate)


def _build_delay(params):
    base = params.get('base', 'onemax')
    if base == 'onemax':
        spec = ProblemSpec('delay', GenomeKind.BITSTRING, True, None, dict(params))
    elif base == 'sphere':
        spec = ProblemSpec('delay', GenomeKind.REAL_VECTOR, False,
                           _bounds_from(params, SPHERE_DEFAULT_BOUNDS), dict(params))
    else:
        raise ConfigurationError('problem_params.base', f"base desconocida '{base}' (onemax|sphere)")
    frozen_params = dict(params)

    def evaluate(g: Genome) -> float:
        return delay_fitness(g, frozen_params)

    return Problem(spec, evaluate)


# problem_id -> (constructor, parámetros propios aceptados)
REGISTRY = {
    'onemax': (_build_onemax, set()),
    'sphere': (_build_sphere, {'low', 'high'}),
    'rastrigin': (_build_rastrigin, {'A'}),
    'delay': (_build_delay, {'base', 'low', 'high'}),
}


def lookup_problem(problem_id: str, params: Optional[Dict[str, Any]] = None) -> Problem:
    """
    Resolver un problema registrado
    Un delay_ms > 0 en cualquier problema envuelve su función con el coste emulado
    """
    params = dict(params or {})
    if problem_id not in REGISTRY:
        raise ConfigurationError('problem_id', f"problema desconocido '{problem_id}' "
                                               f"(disponibles: {', '.join(sorted(REGISTRY))})")
    builder, accepted = REGISTRY[problem_id]
    for key in params:
        if key not in accepted and key not in COMMON_PARAMS:
            raise ConfigurationError(f"problem_params.{key}", f"parámetro no soportado por '{problem_id}'")

    problem = builder(params)
    delay_ms = param_float(params, 'delay_ms', 0.0)
    if problem_id == 'delay' or delay_ms <= 0:
        return problem

    busy_spin = _as_bool(params.get('busy_spin', False))
    inner = problem.evaluate

    def delayed(g: Genome) -> float:
        emulate_cost(delay_ms, busy_spin)
        return inner(g)

    return Problem(problem.spec, delayed)
