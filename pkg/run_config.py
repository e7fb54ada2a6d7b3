#!/usr/bin/env python3
"""
Archivos de configuración de ejecución: formato plano clave=valor

Se leen con dotenv_values() y se validan en modo estricto: una clave desconocida
es un error (un parámetro mal escrito no debe caer silenciosamente a su valor por defecto).
Los parámetros del problema usan la forma param.<nombre>=<valor>.
"""
import math
import uuid
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, Optional
from dotenv import dotenv_values
from config import BROKER_ADDR, MAX_REPUBLISH, MIN_GENERATION_TIMEOUT, REPORTS_DIR, RunMode
from errors import ConfigurationError, CorrelationParseError
from ga_core import GaConfig
from problems import lookup_problem
from runtime import validate_run_id
from utils import parse_addr

PARAM_PREFIX = 'param.'

GA_KEYS = {
    'population_size': int,
    'genome_kind': str,
    'genome_length': int,
    'max_generations': int,
    'crossover_rate': float,
    'mutation_rate': float,
    'tournament_size': int,
    'elite_count': int,
    'problem_id': str,
    'seed': int,
    'generation_timeout': float,
    'maximize': bool,
}

RUN_KEYS = {
    'broker_addr': str,
    'worker_count': int,
    'delay_ms': float,
    'report_path': str,
    'mode': str,
    'run_id': str,
    'max_republish': int,
    'external_workers': bool,
}

TRUE_VALUES = ('1', 'true', 'yes', 'si', 'sí', 'on')
FALSE_VALUES = ('0', 'false', 'no', 'off')


@dataclass(frozen=True)
class RunConfigFile:
    ga: GaConfig
    broker_addr: str = BROKER_ADDR
    worker_count: int = 0
    delay_ms: float = 0.0
    report_path: str = f"{REPORTS_DIR}/run.csv"
    mode: str = RunMode.SEQUENTIAL
    run_id: str = 'run'
    max_republish: int = MAX_REPUBLISH
    # Pool de workers gestionado fuera de este proceso (p. ej. por el orquestador local)
    external_workers: bool = False

    def with_changes(self, **changes) -> 'RunConfigFile':
        return replace(self, **changes)


def _convert(key: str, raw: Optional[str], kind):
    if raw is None:
        raise ConfigurationError(key, "clave sin valor (falta '=')")
    text = raw.strip()
    if kind is str:
        return text
    if kind is bool:
        if text.lower() in TRUE_VALUES:
            return True
        if text.lower() in FALSE_VALUES:
            return False
        raise ConfigurationError(key, f"se esperaba un booleano, recibido '{raw}'")
    try:
        value = kind(text)
    except ValueError:
        expected = 'un entero' if kind is int else 'un número'
        raise ConfigurationError(key, f"se esperaba {expected}, recibido '{raw}'")
    if kind is float and not math.isfinite(value):
        raise ConfigurationError(key, f"debe ser finito, recibido '{raw}'")
    return value


def parse_scalar(raw: str) -> Any:
    """Valor de param.*: entero, real, booleano o texto"""
    text = raw.strip()
    for kind in (int, float):
        try:
            return kind(text)
        except ValueError:
            pass
    if text.lower() in ('true', 'false'):
        return text.lower() == 'true'
    return text


def _format_scalar(value: Any) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        return repr(value)
    return str(value)


def parse_config(path: str) -> RunConfigFile:
    """Leer y validar un archivo de configuración; rellena los valores por defecto"""
    if not Path(path).is_file():
        raise ConfigurationError('config', f"no existe el archivo '{path}'")

    values: Dict[str, Any] = {}
    problem_params: Dict[str, Any] = {}
    for key, raw in dotenv_values(path).items():
        if key.startswith(PARAM_PREFIX) and len(key) > len(PARAM_PREFIX):
            if raw is None:
                raise ConfigurationError(key, "clave sin valor (falta '=')")
            problem_params[key[len(PARAM_PREFIX):]] = parse_scalar(raw)
        elif key in GA_KEYS:
            values[key] = _convert(key, raw, GA_KEYS[key])
        elif key in RUN_KEYS:
            values[key] = _convert(key, raw, RUN_KEYS[key])
        else:
            raise ConfigurationError(key, "clave desconocida")

    if 'delay_ms' in problem_params:
        raise ConfigurationError('param.delay_ms', "usar la clave delay_ms")
    delay_ms = values.get('delay_ms', 0.0)
    if delay_ms < 0:
        raise ConfigurationError('delay_ms', f"{delay_ms} fuera de rango: debe ser >= 0")
    if delay_ms > 0:
        problem_params['delay_ms'] = delay_ms

    problem_id = values.get('problem_id', 'onemax')
    spec = lookup_problem(problem_id, problem_params).spec
    genome_length = values.get('genome_length', 32)
    if genome_length < 1:
        raise ConfigurationError('genome_length', f"{genome_length} fuera de rango: debe ser >= 1")

    ga = GaConfig(
        population_size=values.get('population_size', 64),
        genome_kind=values.get('genome_kind', spec.genome_kind),
        genome_length=genome_length,
        max_generations=values.get('max_generations', 50),
        crossover_rate=values.get('crossover_rate', 0.9),
        mutation_rate=values.get('mutation_rate', 1.0 / genome_length),
        tournament_size=values.get('tournament_size', 3),
        elite_count=values.get('elite_count', 1),
        problem_id=problem_id,
        problem_params=problem_params,
        seed=values.get('seed', 1),
        generation_timeout=values.get('generation_timeout', max(MIN_GENERATION_TIMEOUT, 10 * delay_ms / 1000.0)),
        maximize=values.get('maximize', spec.maximize),
    ).validate()

    run_cfg = RunConfigFile(
        ga=ga,
        broker_addr=values.get('broker_addr', BROKER_ADDR),
        worker_count=values.get('worker_count', 0),
        delay_ms=delay_ms,
        report_path=values.get('report_path', f"{REPORTS_DIR}/run.csv"),
        mode=values.get('mode', RunMode.SEQUENTIAL),
        run_id=values.get('run_id', f"run-{uuid.uuid4().hex[:8]}"),
        max_republish=values.get('max_republish', MAX_REPUBLISH),
        external_workers=values.get('external_workers', False),
    )
    return validate_run_config(run_cfg)


def validate_run_config(run_cfg: RunConfigFile) -> RunConfigFile:
    if run_cfg.mode not in (RunMode.SEQUENTIAL, RunMode.DISTRIBUTED):
        raise ConfigurationError('mode', f"valor desconocido '{run_cfg.mode}' "
                                         f"({RunMode.SEQUENTIAL}|{RunMode.DISTRIBUTED})")
    if run_cfg.worker_count < 0:
        raise ConfigurationError('worker_count', f"{run_cfg.worker_count} fuera de rango: debe ser >= 0")
    if run_cfg.max_republish < 0:
        raise ConfigurationError('max_republish', f"{run_cfg.max_republish} fuera de rango: debe ser >= 0")
    if run_cfg.mode == RunMode.DISTRIBUTED and run_cfg.worker_count < 1 and not run_cfg.external_workers:
        raise ConfigurationError('worker_count', "el modo distributed requiere worker_count >= 1 "
                                                 "o external_workers=true")
    if not run_cfg.report_path:
        raise ConfigurationError('report_path', "no puede estar vacío")
    parse_addr(run_cfg.broker_addr)
    try:
        validate_run_id(run_cfg.run_id)
    except CorrelationParseError as e:
        raise ConfigurationError('run_id', str(e))
    return run_cfg


def emit_config(run_cfg: RunConfigFile, path: str) -> str:
    """Escribir la configuración en formato clave=valor (parse_config(emit_config(c)) == c)"""
    ga = run_cfg.ga
    lines = [
        f"population_size={ga.population_size}",
        f"genome_kind={ga.genome_kind}",
        f"genome_length={ga.genome_length}",
        f"max_generations={ga.max_generations}",
        f"crossover_rate={ga.crossover_rate!r}",
        f"mutation_rate={ga.mutation_rate!r}",
        f"tournament_size={ga.tournament_size}",
        f"elite_count={ga.elite_count}",
        f"problem_id={ga.problem_id}",
        f"seed={ga.seed}",
        f"generation_timeout={ga.generation_timeout!r}",
        f"maximize={_format_scalar(ga.maximize)}",
        f"broker_addr={run_cfg.broker_addr}",
        f"worker_count={run_cfg.worker_count}",
        f"delay_ms={float(run_cfg.delay_ms)!r}",
        f"report_path={run_cfg.report_path}",
        f"mode={run_cfg.mode}",
        f"run_id={run_cfg.run_id}",
        f"max_republish={run_cfg.max_republish}",
        f"external_workers={_format_scalar(run_cfg.external_workers)}",
    ]
    for name in sorted(ga.problem_params):
        if name != 'delay_ms':
            lines.append(f"{PARAM_PREFIX}{name}={_format_scalar(ga.problem_params[name])}")

    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    return str(target)
