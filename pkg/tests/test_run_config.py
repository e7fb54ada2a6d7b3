from dataclasses import replace

import pytest

from config import GenomeKind, RunMode
from errors import ConfigurationError
from run_config import emit_config, parse_config


def _write(tmp_path, text, name='run.env'):
    path = tmp_path / name
    path.write_text(text, encoding='utf-8')
    return str(path)


def test_defaults_are_filled_from_the_problem(tmp_path):
    cfg = parse_config(_write(tmp_path, "problem_id=sphere\ngenome_length=8\n"))
    assert cfg.ga.genome_kind == GenomeKind.REAL_VECTOR
    assert cfg.ga.maximize is False
    assert cfg.ga.mutation_rate == pytest.approx(1 / 8)
    assert cfg.ga.generation_timeout == 10
    assert cfg.mode == RunMode.SEQUENTIAL
    assert cfg.run_id.startswith('run-')


def test_comments_and_problem_params(tmp_path):
    cfg = parse_config(_write(tmp_path, (
        "# Rastrigin con A reducida\n"
        "problem_id=rastrigin\n"
        "param.A=5\n"
        "param.mutation_sigma=0.25\n"
        "delay_ms=2000\n"
    )))
    assert cfg.ga.problem_params == {'A': 5, 'mutation_sigma': 0.25, 'delay_ms': 2000.0}
    assert cfg.ga.generation_timeout == pytest.approx(20.0)


@pytest.mark.parametrize('text,field_name', [
    ("poblacion=10\n", 'poblacion'),
    ("population_size=diez\n", 'population_size'),
    ("population_size=1\n", 'population_size'),
    ("crossover_rate=nan\n", 'crossover_rate'),
    ("maximize=quizas\n", 'maximize'),
    ("problem_id=onemax\nmaximize=false\n", 'maximize'),
    ("param.base=onemax\n", 'problem_params.base'),
    ("param.delay_ms=5\n", 'param.delay_ms'),
    ("mode=distributed\n", 'worker_count'),
    ("mode=turbo\n", 'mode'),
    ("run_id=a:b\n", 'run_id'),
    ("broker_addr=localhost\n", 'broker_addr'),
    ("delay_ms=-1\n", 'delay_ms'),
])
def test_invalid_entries_name_the_field(tmp_path, text, field_name):
    with pytest.raises(ConfigurationError) as info:
        parse_config(_write(tmp_path, text))
    assert info.value.field == field_name


def test_missing_file(tmp_path):
    with pytest.raises(ConfigurationError) as info:
        parse_config(str(tmp_path / 'no_existe.env'))
    assert info.value.field == 'config'


def test_external_workers_allow_zero_worker_count(tmp_path):
    cfg = parse_config(_write(tmp_path, "mode=distributed\nexternal_workers=true\n"))
    assert cfg.worker_count == 0 and cfg.external_workers


def test_emit_then_parse_is_identity(tmp_path):
    cfg = parse_config(_write(tmp_path, (
        "problem_id=sphere\n"
        "param.low=-2.5\n"
        "param.high=1\n"
        "param.busy_spin=true\n"
        "genome_length=5\n"
        "population_size=30\n"
        "crossover_rate=0.7\n"
        "seed=12345\n"
        "delay_ms=12.5\n"
        "mode=distributed\n"
        "worker_count=3\n"
        "run_id=ida-y-vuelta\n"
        "report_path=reports/ida.csv\n"
    )))
    again = parse_config(emit_config(cfg, str(tmp_path / 'emitido.env')))
    assert again == cfg


def test_emitted_changes_survive(tmp_path):
    cfg = parse_config(_write(tmp_path, "run_id=base\n"))
    changed = cfg.with_changes(worker_count=4, mode=RunMode.DISTRIBUTED,
                               ga=replace(cfg.ga, seed=99, max_generations=3))
    assert parse_config(emit_config(changed, str(tmp_path / 'otro.env'))) == changed
