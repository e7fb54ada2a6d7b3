"""
Fixtures compartidas: broker en memoria, broker TCP en un hilo y workers en hilos
"""
import itertools
import threading
from typing import List

import pytest

from broker import Broker, BrokerServer
from config import GenomeKind
from ga_core import GaConfig
from runtime import worker_run_loop


class FakeConnection:
    """Conexión en memoria para probar el estado del broker sin sockets"""

    _ids = itertools.count(1)

    def __init__(self, name: str = None):
        self.connection_id = name or f"fake-{next(self._ids)}"
        self.open = True
        self._tags = itertools.count(1)
        self.delivered: List[tuple] = []

    def next_delivery_tag(self) -> int:
        return next(self._tags)

    def deliver(self, queue, registration, message):
        self.delivered.append((queue, registration.consumer_id, message.delivery_tag, message))


class WorkerPool:
    """Workers reales (worker_run_loop) en hilos, cada uno con su evento de parada"""

    def __init__(self, broker_addr: str, run_id: str):
        self.broker_addr = broker_addr
        self.run_id = run_id
        self.workers = []

    def add(self, worker_id: str = None, give_up_after: float = 5.0):
        worker_id = worker_id or f"w{len(self.workers) + 1}"
        stop = threading.Event()
        result = {}

        def target():
            result['stats'] = worker_run_loop(self.broker_addr, worker_id, self.run_id,
                                              stop_event=stop, give_up_after=give_up_after)

        thread = threading.Thread(target=target, name=f"test-{worker_id}", daemon=True)
        thread.start()
        self.workers.append((worker_id, stop, thread, result))
        return worker_id

    def stop_all(self):
        for _, stop, _, _ in self.workers:
            stop.set()
        for _, _, thread, _ in self.workers:
            thread.join(timeout=5)


@pytest.fixture
def broker():
    return Broker()


@pytest.fixture
def fake_connection_factory():
    return FakeConnection


@pytest.fixture
def broker_server():
    server = BrokerServer('127.0.0.1:0')
    server.start_in_thread()
    yield server
    server.stop()


@pytest.fixture
def worker_pool(broker_server):
    pools = []

    def make(run_id: str) -> WorkerPool:
        pool = WorkerPool(broker_server.address, run_id)
        pools.append(pool)
        return pool

    yield make
    for pool in pools:
        pool.stop_all()


@pytest.fixture
def onemax_config():
    return GaConfig(
        population_size=16,
        genome_kind=GenomeKind.BITSTRING,
        genome_length=16,
        max_generations=5,
        crossover_rate=0.9,
        mutation_rate=1 / 16,
        tournament_size=3,
        elite_count=1,
        problem_id='onemax',
        seed=7,
        generation_timeout=5.0,
        maximize=True,
    )


@pytest.fixture
def sphere_config():
    return GaConfig(
        population_size=12,
        genome_kind=GenomeKind.REAL_VECTOR,
        genome_length=4,
        max_generations=4,
        crossover_rate=0.8,
        mutation_rate=0.25,
        tournament_size=2,
        elite_count=2,
        problem_id='sphere',
        seed=3,
        generation_timeout=5.0,
        maximize=False,
    )
