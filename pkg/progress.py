#!/usr/bin/env python3
"""
Reporte de progreso por generación en consola
"""
import time
from datetime import datetime
from typing import Mapping, Optional
from colorama import Fore, Style
from ga_core import GenerationReport, RunResult
from utils import format_ms, format_time


class GenerationProgress:
    """Seguimiento del GA con estadísticas en tiempo real"""

    def __init__(self, total_generations: int, operation_name: str = "Evolucionando"):
        self.total_generations = total_generations
        self.operation_name = operation_name
        self.start_time = time.time()
        self.current_index = 0

        # Contadores
        self.evaluations = 0
        self.duplicates = 0
        self.republished = 0

    def update(self, report: GenerationReport):
        """Actualizar progreso con la generación terminada"""
        self.current_index += 1
        self.evaluations += report.evaluations_performed
        self.duplicates += report.duplicate_responses
        self.republished += report.republished_requests

        progress_pct = (self.current_index / self.total_generations * 100) if self.total_generations > 0 else 0
        elapsed = time.time() - self.start_time
        remaining = self.total_generations - self.current_index
        eta_str = format_time(remaining * elapsed / self.current_index) if remaining > 0 else "-"

        status_msg = f"{Fore.GREEN}✅{Style.RESET_ALL}"
        if report.republished_requests:
            status_msg = f"{Fore.YELLOW}🔁 {report.republished_requests} republicadas{Style.RESET_ALL}"
        elif report.duplicate_responses:
            status_msg = f"{Fore.YELLOW}⚠ {report.duplicate_responses} duplicadas{Style.RESET_ALL}"

        timestamp = datetime.now().strftime("%H:%M:%S")
        print(
            f"[{timestamp}] [{self.current_index}/{self.total_generations}] ({progress_pct:.1f}%) "
            f"ETA: {eta_str} - gen {report.generation} - mejor={report.best_fitness:.6g} "
            f"media={report.mean_fitness:.6g} - {format_ms(report.wall_time)} - {status_msg}",
            flush=True
        )

    def print_summary(self, result: Optional[RunResult] = None,
                      worker_evaluations: Optional[Mapping[str, int]] = None):
        """Imprimir resumen final"""
        total_time = time.time() - self.start_time
        avg_speed = self.evaluations / total_time if total_time > 0 else 0

        end_timestamp = datetime.now().strftime("%Y-%m-%d %H:%M:%S")
        start_timestamp = datetime.fromtimestamp(self.start_time).strftime("%Y-%m-%d %H:%M:%S")

        print("\n" + "=" * 70)
        print(f"{Fore.CYAN}RESUMEN DE LA EJECUCIÓN ({self.operation_name}){Style.RESET_ALL}")
        print("=" * 70)
        print(f"Inicio:                   {start_timestamp}")
        print(f"Fin:                      {end_timestamp}")
        print(f"Duración:                 {format_time(total_time)}")
        print("-" * 70)
        print(f"Generaciones:             {self.current_index}/{self.total_generations}")
        print(f"Evaluaciones:             {self.evaluations}")
        print(f"{Fore.YELLOW}⚠  Respuestas duplicadas:  {self.duplicates}{Style.RESET_ALL}")
        print(f"{Fore.YELLOW}🔁 Peticiones republicadas: {self.republished}{Style.RESET_ALL}")
        print(f"Velocidad promedio:       {avg_speed:.2f} evaluaciones/s")

        if result is not None:
            print("-" * 70)
            print(f"{Fore.GREEN}🏆 Mejor fitness:          {result.best.fitness:.6g}{Style.RESET_ALL}")
            print(f"   Individuo:             {result.best.genome}")

        if worker_evaluations:
            print("-" * 70)
            print("Evaluaciones por worker:")
            for worker_id, count in sorted(worker_evaluations.items()):
                print(f"   {worker_id:<30} {count}")

        print("=" * 70 + "\n")
