#!/usr/bin/env python3
"""
Orquestación local: broker + N workers + maestro como procesos hijos

Orden de arranque: broker (hasta que acepta conexiones), workers (hasta que la
cola de peticiones tiene N consumidores) y por último el maestro. El desmontaje
ocurre siempre, también si el maestro falla o se interrumpe el orquestador.
"""
import os
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, List, Optional
from colorama import Fore, Style
from config import MAIN_SCRIPT, RunMode, STARTUP_TIMEOUT, TEARDOWN_TIMEOUT
from broker_client import BrokerClient
from errors import ConfigurationError, GaDistribuidoError, NotFoundError, TransportError
from logger import logger
from run_config import RunConfigFile, emit_config, parse_config
from runtime import request_queue_name

READINESS_POLL = 0.1  # segundos

ROLE_COLORS = {
    'broker': Fore.MAGENTA,
    'master': Fore.CYAN,
    'worker': Fore.GREEN,
}

# Eventos para manejo de señales (los handlers solo marcan; el bucle principal actúa)
interrupted = threading.Event()
add_worker_requested = threading.Event()


def signal_handler(sig, frame):
    """Manejar SIGINT/SIGTERM"""
    interrupted.set()


def add_worker_handler(sig, frame):
    """SIGUSR1: añadir un worker a la ejecución en curso"""
    add_worker_requested.set()


class StartupError(GaDistribuidoError):
    """Un proceso hijo no llegó a estar listo"""


@dataclass
class ChildProcess:
    name: str
    role: str
    process: subprocess.Popen
    pump: Optional[threading.Thread] = field(default=None, repr=False)

    @property
    def alive(self) -> bool:
        return self.process.poll() is None


def _pump_output(child: ChildProcess):
    """Reenviar la salida del hijo con su nombre como prefijo"""
    color = ROLE_COLORS.get(child.role, '')
    for line in child.process.stdout:
        print(f"{color}[{child.name}]{Style.RESET_ALL} {line.rstrip()}", flush=True)
    child.process.stdout.close()


class LocalCluster:
    """Procesos hijos de una ejecución local"""

    def __init__(self, run_cfg: RunConfigFile, config_path: str):
        self.run_cfg = run_cfg
        self.config_path = config_path
        self.children: List[ChildProcess] = []
        self.workers_started = 0
        self._env = dict(os.environ, PYTHONUNBUFFERED='1', RUN_ID=run_cfg.run_id,
                         BROKER_ADDR=run_cfg.broker_addr)

    def _spawn(self, name: str, role: str, args: List[str]) -> ChildProcess:
        command = [sys.executable, MAIN_SCRIPT] + args
        logger.debug(f"Lanzando {name}: {' '.join(command)}")
        process = subprocess.Popen(
            command, stdout=subprocess.PIPE, stderr=subprocess.STDOUT,
            text=True, bufsize=1, env=self._env,
        )
        child = ChildProcess(name, role, process)
        child.pump = threading.Thread(target=_pump_output, args=(child,), name=f"pump-{name}", daemon=True)
        child.pump.start()
        self.children.append(child)
        return child

    def _probe(self) -> Optional[BrokerClient]:
        try:
            return BrokerClient(self.run_cfg.broker_addr, role='orchestrator', connect_timeout=1.0)
        except GaDistribuidoError:
            return None

    def start_broker(self, timeout: float = STARTUP_TIMEOUT) -> ChildProcess:
        broker = self._spawn('broker', 'broker', ['broker', '--addr', self.run_cfg.broker_addr])
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            if not broker.alive:
                raise StartupError(f"el broker terminó al arrancar (código {broker.process.returncode})")
            client = self._probe()
            if client is not None:
                client.close()
                logger.info(f"Broker listo en {self.run_cfg.broker_addr}")
                return broker
            time.sleep(READINESS_POLL)
        raise StartupError(f"el broker no aceptó conexiones en {timeout}s")

    def add_worker(self) -> ChildProcess:
        self.workers_started += 1
        worker_id = f"{self.run_cfg.run_id}-w{self.workers_started}"
        return self._spawn(worker_id, 'worker', [
            'worker', '--addr', self.run_cfg.broker_addr, '--id', worker_id,
            '--config', self.config_path,
        ])

    def wait_for_workers(self, count: int, timeout: float = STARTUP_TIMEOUT):
        """Esperar hasta que la cola de peticiones tenga count consumidores"""
        if count == 0:
            return
        queue = request_queue_name(self.run_cfg.run_id)
        deadline = time.monotonic() + timeout
        client = self._probe()
        if client is None:
            raise StartupError("broker inaccesible mientras se esperaba a los workers")
        try:
            while time.monotonic() < deadline:
                dead = [c.name for c in self.children if c.role == 'worker' and not c.alive]
                if dead:
                    raise StartupError(f"worker(s) terminados al arrancar: {', '.join(dead)}")
                try:
                    if client.queue_stats(queue)['consumer_count'] >= count:
                        logger.info(f"{count} worker(s) suscritos a '{queue}'")
                        return
                except NotFoundError:
                    pass
                time.sleep(READINESS_POLL)
        finally:
            client.close()
        raise StartupError(f"solo se suscribieron a '{queue}' menos de {count} workers en {timeout}s")

    def start_master(self) -> ChildProcess:
        return self._spawn('master', 'master', ['master', '--config', self.config_path])

    def teardown(self, timeout: float = TEARDOWN_TIMEOUT):
        """Terminar maestro, workers y broker, en ese orden"""
        order = {'master': 0, 'worker': 1, 'broker': 2}
        for child in sorted(self.children, key=lambda c: order[c.role]):
            if child.alive:
                child.process.terminate()
            try:
                child.process.wait(timeout=timeout)
            except subprocess.TimeoutExpired:
                logger.warning(f"{child.name} no terminó en {timeout}s, forzando kill")
                child.process.kill()
                child.process.wait()
        for child in self.children:
            if child.pump is not None:
                child.pump.join(timeout=timeout)
        logger.info(f"Ejecución local {self.run_cfg.run_id}: {len(self.children)} proceso(s) terminados")


def _consume_flag_file(path: Optional[str]) -> bool:
    if not path or not os.path.exists(path):
        return False
    try:
        os.remove(path)
    except OSError:
        pass
    return True


def run_local(run_cfg: RunConfigFile, add_worker_file: Optional[str] = None,
              workdir: Optional[str] = None,
              cluster_factory: Callable[[RunConfigFile, str], LocalCluster] = LocalCluster) -> int:
    """Ejecutar un run completo en procesos locales; retorna el código de salida del maestro"""
    effective = run_cfg.with_changes(mode=RunMode.DISTRIBUTED, external_workers=True)
    workdir = workdir or tempfile.mkdtemp(prefix='ga_distribuido_')
    config_path = emit_config(effective, str(Path(workdir) / f"{effective.run_id}.env"))

    cluster = cluster_factory(effective, config_path)
    master: Optional[ChildProcess] = None
    try:
        cluster.start_broker()
        for _ in range(effective.worker_count):
            cluster.add_worker()
        cluster.wait_for_workers(effective.worker_count)
        print(f"{Fore.CYAN}🚀 Broker y {effective.worker_count} worker(s) listos, lanzando maestro{Style.RESET_ALL}",
              flush=True)

        master = cluster.start_master()
        while master.alive:
            if interrupted.is_set():
                print(f"\n{Fore.YELLOW}⚠️  Interrupción detectada, deteniendo la ejecución local...{Style.RESET_ALL}")
                return 1
            if add_worker_requested.is_set() or _consume_flag_file(add_worker_file):
                add_worker_requested.clear()
                worker = cluster.add_worker()
                print(f"➕ Añadido {worker.name} en caliente", flush=True)
            time.sleep(READINESS_POLL)
        return master.process.returncode
    except StartupError as e:
        print(f"❌ Error al arrancar: {str(e)}", flush=True)
        logger.error(f"Arranque local fallido: {str(e)}")
        return 1
    finally:
        cluster.teardown()


def cmd_local(config_path: str, add_worker_file: Optional[str] = None) -> int:
    """Comando 'local'"""
    try:
        run_cfg = parse_config(config_path)
    except ConfigurationError as e:
        print(f"❌ Error de configuración: {str(e)}", flush=True)
        return 2

    interrupted.clear()
    add_worker_requested.clear()
    previous = {sig: signal.getsignal(sig) for sig in (signal.SIGINT, signal.SIGTERM)}
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)
    if hasattr(signal, 'SIGUSR1'):
        previous[signal.SIGUSR1] = signal.getsignal(signal.SIGUSR1)
        signal.signal(signal.SIGUSR1, add_worker_handler)

    logger.info("=" * 60)
    logger.info(f"Ejecución local {run_cfg.run_id}: {run_cfg.worker_count} worker(s) en {run_cfg.broker_addr}")
    logger.info("=" * 60)
    print(f"🔧 Orquestador PID {os.getpid()} (kill -USR1 {os.getpid()} añade un worker)", flush=True)
    try:
        return run_local(run_cfg, add_worker_file)
    except TransportError as e:
        print(f"❌ Error: {str(e)}", flush=True)
        return 1
    finally:
        for sig, handler in previous.items():
            signal.signal(sig, handler)
