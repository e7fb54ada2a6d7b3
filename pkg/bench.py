#!/usr/bin/env python3
"""
Benchmark de escalado: la misma configuración con distintos números de workers

T(n) es el tiempo medio de la fase de evaluación por generación con n workers
(eval_ms, sin la reproducción); speedup(n) = T(base) / T(n) y
eficiencia(n) = speedup(n) * base / n, donde base es el menor número de workers
medido (normalmente 1).
"""
import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import numpy as np
from colorama import Fore, Style
from config import RunMode
from errors import ConfigurationError
from logger import logger
from local_cluster import run_local
from master import read_report
from run_config import RunConfigFile, parse_config

BENCH_CSV_HEADER = ['workers', 'generation', 'wall_ms', 'best', 'mean', 'dups', 'republished', 'eval_ms']
SPEEDUP_CSV_HEADER = ['workers', 'mean_generation_ms', 'speedup', 'efficiency']


@dataclass(frozen=True)
class BenchmarkRow:
    worker_count: int
    generation: int
    wall_time: float  # segundos
    best_fitness: float
    mean_fitness: float
    duplicates: int = 0
    republished: int = 0
    eval_time: float = 0.0  # segundos, sin la reproducción


@dataclass(frozen=True)
class SpeedupRow:
    worker_count: int
    generation_time: float
    speedup: float
    efficiency: float


@dataclass
class BenchmarkReport:
    rows: List[BenchmarkRow] = field(default_factory=list)
    worker_counts: List[int] = field(default_factory=list)
    failed_counts: List[int] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.failed_counts)

    def measured_counts(self) -> List[int]:
        measured = {row.worker_count for row in self.rows}
        return [n for n in self.worker_counts if n in measured and n not in self.failed_counts]

    def generation_time(self, worker_count: int) -> float:
        times = [row.eval_time for row in self.rows if row.worker_count == worker_count]
        if not times:
            raise ConfigurationError('workers', f"sin mediciones para {worker_count} worker(s)")
        return float(np.mean(times))

    def speedup_rows(self) -> List[SpeedupRow]:
        counts = self.measured_counts()
        if not counts:
            return []
        base = min(counts)
        base_time = self.generation_time(base)
        result = []
        for n in sorted(counts):
            t = self.generation_time(n)
            speedup = base_time / t if t > 0 else float('inf')
            result.append(SpeedupRow(n, t, speedup, speedup * base / n))
        return result

    @property
    def fitness_consistent(self) -> bool:
        """Misma semilla => mismas curvas de best/mean con cualquier número de workers"""
        curves: Dict[int, List[Tuple[float, float]]] = {}
        for row in sorted(self.rows, key=lambda r: (r.worker_count, r.generation)):
            if row.worker_count in self.failed_counts:
                continue
            curves.setdefault(row.worker_count, []).append((row.best_fitness, row.mean_fitness))
        reference = next(iter(curves.values()), None)
        return all(curve == reference for curve in curves.values())


def parse_worker_counts(text: str) -> List[int]:
    """'1,2,4,8' -> [1, 2, 4, 8]"""
    try:
        counts = [int(part) for part in text.split(',') if part.strip()]
    except ValueError:
        raise ConfigurationError('workers', f"lista inválida '{text}', se esperaba p. ej. 1,2,4,8")
    if not counts or any(n < 1 for n in counts):
        raise ConfigurationError('workers', f"se requieren números de workers >= 1, recibido '{text}'")
    return sorted(set(counts))


def run_benchmark(run_cfg: RunConfigFile, worker_counts: Sequence[int],
                  runner: Callable[[RunConfigFile], int] = run_local) -> BenchmarkReport:
    """Una ejecución por número de workers; un fallo marca el reporte como parcial"""
    report = BenchmarkReport(worker_counts=list(worker_counts))
    base_path = Path(run_cfg.report_path)
    for n in worker_counts:
        cfg_n = run_cfg.with_changes(
            mode=RunMode.DISTRIBUTED,
            worker_count=n,
            run_id=f"{run_cfg.run_id}-w{n}",
            report_path=str(base_path.with_name(f"{base_path.stem}_w{n}.csv")),
        )
        print(f"\n{Fore.CYAN}📊 Benchmark con {n} worker(s){Style.RESET_ALL}", flush=True)
        code = runner(cfg_n)
        if code != 0:
            logger.error(f"Benchmark con {n} worker(s) falló con código {code}")
            report.failed_counts.append(n)
            continue
        for row in read_report(cfg_n.report_path):
            report.rows.append(BenchmarkRow(
                worker_count=n,
                generation=row['generation'],
                wall_time=row['wall_ms'] / 1000.0,
                best_fitness=row['best'],
                mean_fitness=row['mean'],
                duplicates=row['dups'],
                republished=row['republished'],
                eval_time=row['eval_ms'] / 1000.0,
            ))
    return report


def write_benchmark(report: BenchmarkReport, path: str) -> Tuple[str, str]:
    """CSV por generación y CSV resumen de speedup"""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    with open(target, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(BENCH_CSV_HEADER)
        for row in report.rows:
            writer.writerow([row.worker_count, row.generation, f"{row.wall_time * 1000:.3f}",
                             repr(row.best_fitness), repr(row.mean_fitness), row.duplicates, row.republished,
                             f"{row.eval_time * 1000:.3f}"])

    summary = target.with_name(f"{target.stem}_speedup.csv")
    with open(summary, 'w', newline='', encoding='utf-8') as f:
        writer = csv.writer(f)
        writer.writerow(SPEEDUP_CSV_HEADER)
        for row in report.speedup_rows():
            writer.writerow([row.worker_count, f"{row.generation_time * 1000:.3f}",
                             f"{row.speedup:.4f}", f"{row.efficiency:.4f}"])
    return str(target), str(summary)


def print_benchmark(report: BenchmarkReport):
    print("\n" + "=" * 70)
    print(f"{Fore.CYAN}RESUMEN DEL BENCHMARK{Style.RESET_ALL}")
    print("=" * 70)
    print(f"{'Workers':>8} {'T gen (ms)':>12} {'Speedup':>10} {'Eficiencia':>11}")
    for row in report.speedup_rows():
        print(f"{row.worker_count:>8} {row.generation_time * 1000:>12.1f} {row.speedup:>10.2f} {row.efficiency:>11.2f}")
    print("-" * 70)
    if report.fitness_consistent:
        print(f"{Fore.GREEN}✅ Curvas de fitness idénticas en todas las ejecuciones{Style.RESET_ALL}")
    else:
        print(f"{Fore.RED}❌ Las curvas de fitness difieren entre ejecuciones{Style.RESET_ALL}")
    if report.partial:
        print(f"{Fore.YELLOW}⚠  Reporte parcial: fallaron {report.failed_counts}{Style.RESET_ALL}")
    print("=" * 70 + "\n")


def cmd_bench(config_path: str, workers: str, output: Optional[str] = None) -> int:
    """Comando 'bench'"""
    try:
        run_cfg = parse_config(config_path)
        counts = parse_worker_counts(workers)
    except ConfigurationError as e:
        print(f"❌ Error de configuración: {str(e)}", flush=True)
        return 2

    logger.info(f"Benchmark {run_cfg.run_id} con workers {counts}")
    report = run_benchmark(run_cfg, counts)
    base_path = Path(run_cfg.report_path)
    paths = write_benchmark(report, output or str(base_path.with_name(f"{base_path.stem}_bench.csv")))
    print_benchmark(report)
    print(f"📄 Resultados: {paths[0]}, {paths[1]}", flush=True)
    return 1 if report.partial or not report.fitness_consistent else 0
