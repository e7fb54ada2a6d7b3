#!/usr/bin/env python3
"""
Proceso maestro: ejecuta el GA y escribe el reporte CSV por generación
"""
import csv
import signal
from pathlib import Path
from typing import Dict, List, Optional
from colorama import Fore, Style
from config import REPORT_CSV_HEADER, RunMode
from broker_client import BrokerClient
from errors import ConfigurationError, GaDistribuidoError, RunError, TransportError
from ga_core import GenerationReport, SequentialEvaluator, run_ga
from logger import logger
from progress import GenerationProgress
from run_config import RunConfigFile, parse_config, validate_run_config
from runtime import DistributedEvaluator


class CsvReportWriter:
    """CSV incremental: una fila por generación, escrita en cuanto termina"""

    def __init__(self, path: str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._file = open(self.path, 'w', newline='', encoding='utf-8')
        self._writer = csv.writer(self._file)
        self._writer.writerow(REPORT_CSV_HEADER)
        self._file.flush()
        self.rows = 0

    def write(self, report: GenerationReport):
        self._writer.writerow([
            report.generation,
            repr(report.best_fitness),
            repr(report.mean_fitness),
            f"{report.wall_time * 1000:.3f}",
            report.duplicate_responses,
            report.republished_requests,
            f"{report.eval_time * 1000:.3f}",
        ])
        self._file.flush()
        self.rows += 1

    def close(self):
        if not self._file.closed:
            self._file.close()


def read_report(path: str) -> List[Dict[str, float]]:
    """Leer un CSV de generaciones (valores numéricos)"""
    rows = []
    with open(path, newline='', encoding='utf-8') as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != REPORT_CSV_HEADER:
            raise ConfigurationError('report_path', f"cabecera inesperada en '{path}': {reader.fieldnames}")
        for row in reader:
            rows.append({
                'generation': int(row['generation']),
                'best': float(row['best']),
                'mean': float(row['mean']),
                'wall_ms': float(row['wall_ms']),
                'dups': int(row['dups']),
                'republished': int(row['republished']),
                'eval_ms': float(row['eval_ms']),
            })
    return rows


def _terminate(sig, frame):
    """SIGTERM se trata como Ctrl+C"""
    raise KeyboardInterrupt()


def run_master(run_cfg: RunConfigFile) -> int:
    """Ejecutar el GA según la configuración; retorna el código de salida"""
    client: Optional[BrokerClient] = None
    evaluator = SequentialEvaluator()
    if run_cfg.mode == RunMode.DISTRIBUTED:
        try:
            client = BrokerClient(run_cfg.broker_addr, role='master')
        except GaDistribuidoError as e:
            print(f"❌ Error: {str(e)}", flush=True)
            logger.error(f"Maestro sin broker: {str(e)}")
            return 1
        evaluator = DistributedEvaluator(client, run_cfg.run_id, max_republish=run_cfg.max_republish)

    ga = run_cfg.ga
    print(f"🚀 GA {ga.problem_id} ({run_cfg.mode}) - población {ga.population_size}, "
          f"{ga.max_generations} generaciones, semilla {ga.seed}", flush=True)
    print(f"📄 Reporte: {run_cfg.report_path}", flush=True)

    writer = CsvReportWriter(run_cfg.report_path)
    progress = GenerationProgress(ga.max_generations)

    def on_report(report: GenerationReport):
        writer.write(report)
        progress.update(report)

    try:
        result = run_ga(ga, evaluator, on_report=on_report)
    except RunError as e:
        print(f"\n{Fore.RED}❌ Ejecución abortada: {str(e)}{Style.RESET_ALL}", flush=True)
        print(f"   {len(e.reports)} generación(es) completas en {run_cfg.report_path}", flush=True)
        return 1
    except KeyboardInterrupt:
        print(f"\n{Fore.YELLOW}⚠️  Interrupción detectada, {writer.rows} generación(es) en el reporte{Style.RESET_ALL}")
        logger.warning("Maestro interrumpido")
        return 1
    finally:
        writer.close()
        if client is not None:
            client.close()

    worker_evaluations = getattr(evaluator, 'worker_evaluations', None)
    progress.print_summary(result, worker_evaluations)
    logger.info(f"Ejecución {run_cfg.run_id} completada: mejor fitness {result.best.fitness}")
    return 0


def cmd_master(config_path: str, run_id: Optional[str] = None, broker_addr: Optional[str] = None) -> int:
    """Comando 'master'; run_id y broker_addr sobrescriben la configuración"""
    try:
        run_cfg = parse_config(config_path)
        overrides = {k: v for k, v in (('run_id', run_id), ('broker_addr', broker_addr)) if v}
        if overrides:
            run_cfg = validate_run_config(run_cfg.with_changes(**overrides))
    except ConfigurationError as e:
        print(f"❌ Error de configuración: {str(e)}", flush=True)
        return 2

    signal.signal(signal.SIGTERM, _terminate)
    logger.info("=" * 60)
    logger.info(f"Iniciando maestro: run {run_cfg.run_id}, modo {run_cfg.mode}")
    logger.info("=" * 60)
    try:
        return run_master(run_cfg)
    except TransportError as e:
        print(f"❌ Error: {str(e)}", flush=True)
        return 1
