#!/usr/bin/env python3
"""
Evaluador distribuido del maestro y proceso worker (patrón RPC sobre colas)

Flujo por generación:
  1. el maestro publica un EvalRequest por individuo en ga.request.<run_id>
  2. el broker los reparte en round-robin entre los workers suscritos
  3. cada worker calcula el fitness, publica un EvalResponse en reply_to y confirma
  4. el maestro, único consumidor de ga.response.<run_id>, recoge y deduplica
"""
import json
import math
import signal
import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Set, Tuple
from config import (
    DEFAULT_PREFETCH, DedupResult, ErrorCode, MASTER_PREFETCH, MAX_REPUBLISH, REQUEST_QUEUE_PREFIX,
    RESPONSE_QUEUE_PREFIX, WORKER_GIVE_UP_AFTER,
)
from broker_client import BrokerClient, Delivery
from errors import (
    ConfigurationError, CorrelationParseError, EvaluationStalledError, GaDistribuidoError, InternalError,
    ProtocolError, TransportError,
)
from ga_core import EvaluationBatch, GaConfig
from genome import Genome, Individual
from logger import logger
from problems import Problem, lookup_problem
from utils import backoff_delay, format_time
from wire import canonical_json

# Espera máxima de cada lectura de la cola de respuestas/peticiones
POLL_INTERVAL = 0.5  # segundos


def request_queue_name(run_id: str) -> str:
    return f"{REQUEST_QUEUE_PREFIX}.{run_id}"


def response_queue_name(run_id: str) -> str:
    return f"{RESPONSE_QUEUE_PREFIX}.{run_id}"


def validate_run_id(run_id: str) -> str:
    if not isinstance(run_id, str) or not run_id or ':' in run_id:
        raise CorrelationParseError(f"run_id inválido {run_id!r}: no vacío y sin ':'")
    return run_id


def make_correlation(run_id: str, generation: int, index: int) -> str:
    """'run_id:generation:index'"""
    validate_run_id(run_id)
    return f"{run_id}:{generation}:{index}"


def parse_correlation(text: str) -> Tuple[str, int, int]:
    parts = text.split(':') if isinstance(text, str) else []
    if len(parts) != 3 or not parts[0] or not parts[1].isdigit() or not parts[2].isdigit():
        raise CorrelationParseError(f"correlation id mal formado: {text!r}")
    return parts[0], int(parts[1]), int(parts[2])


def _load_object(body: bytes, kind: str) -> Dict[str, Any]:
    try:
        data = json.loads(body.decode('utf-8'))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise ProtocolError(ErrorCode.BAD_FIELD, f"{kind} ilegible: {str(e)}")
    if not isinstance(data, dict):
        raise ProtocolError(ErrorCode.BAD_FIELD, f"{kind} debe ser un objeto")
    return data


def _typed(data: Dict[str, Any], name: str, kind, label: str):
    value = data.get(name)
    if isinstance(value, bool) and kind is not bool:
        value = None
    if kind is float and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if not isinstance(value, kind):
        raise ProtocolError(ErrorCode.BAD_FIELD, f"{label}.{name} ausente o de tipo incorrecto")
    return value


@dataclass(frozen=True)
class EvalRequest:
    run_id: str
    generation: int
    index: int
    genome: Genome
    problem_id: str
    problem_params: Dict[str, Any] = field(default_factory=dict)
    attempt: int = 1

    @property
    def correlation_id(self) -> str:
        return make_correlation(self.run_id, self.generation, self.index)

    def to_body(self) -> bytes:
        return canonical_json({
            'run_id': self.run_id,
            'generation': self.generation,
            'index': self.index,
            'genome': self.genome.to_dict(),
            'problem_id': self.problem_id,
            'problem_params': self.problem_params,
            'attempt': self.attempt,
        }).encode('utf-8')

    @classmethod
    def from_body(cls, body: bytes) -> 'EvalRequest':
        data = _load_object(body, 'EvalRequest')
        try:
            genome = Genome.from_dict(_typed(data, 'genome', dict, 'EvalRequest'))
        except (GaDistribuidoError, KeyError, TypeError, ValueError) as e:
            raise ProtocolError(ErrorCode.BAD_FIELD, f"EvalRequest.genome inválido: {str(e)}")
        attempt = _typed(data, 'attempt', int, 'EvalRequest')
        if attempt < 1:
            raise ProtocolError(ErrorCode.BAD_FIELD, "EvalRequest.attempt debe ser >= 1")
        return cls(
            run_id=_typed(data, 'run_id', str, 'EvalRequest'),
            generation=_typed(data, 'generation', int, 'EvalRequest'),
            index=_typed(data, 'index', int, 'EvalRequest'),
            genome=genome,
            problem_id=_typed(data, 'problem_id', str, 'EvalRequest'),
            problem_params=_typed(data, 'problem_params', dict, 'EvalRequest'),
            attempt=attempt,
        )


@dataclass(frozen=True)
class EvalResponse:
    run_id: str
    generation: int
    index: int
    fitness: float
    worker_id: str
    eval_duration: float
    attempt: int = 1

    def to_body(self) -> bytes:
        return canonical_json({
            'run_id': self.run_id,
            'generation': self.generation,
            'index': self.index,
            'fitness': self.fitness,
            'worker_id': self.worker_id,
            'eval_duration': self.eval_duration,
            'attempt': self.attempt,
        }).encode('utf-8')

    @classmethod
    def from_body(cls, body: bytes) -> 'EvalResponse':
        data = _load_object(body, 'EvalResponse')
        fitness = _typed(data, 'fitness', float, 'EvalResponse')
        if not math.isfinite(fitness):
            raise ProtocolError(ErrorCode.BAD_FIELD, "EvalResponse.fitness no es finito")
        return cls(
            run_id=_typed(data, 'run_id', str, 'EvalResponse'),
            generation=_typed(data, 'generation', int, 'EvalResponse'),
            index=_typed(data, 'index', int, 'EvalResponse'),
            fitness=fitness,
            worker_id=_typed(data, 'worker_id', str, 'EvalResponse'),
            eval_duration=_typed(data, 'eval_duration', float, 'EvalResponse'),
            attempt=_typed(data, 'attempt', int, 'EvalResponse'),
        )


@dataclass
class ScatterState:
    """Estado del scatter/gather de una generación"""

    run_id: str
    generation: int
    outstanding: Set[int]
    received: Dict[int, float] = field(default_factory=dict)
    deadline: float = 0.0
    republish_count: int = 0
    attempts: Dict[int, int] = field(default_factory=dict)
    republished_requests: int = 0
    duplicates: int = 0
    stale: int = 0


def dedup_accept(state: ScatterState, response: EvalResponse) -> str:
    """Aplicar una respuesta al estado; solo la primera por índice cuenta"""
    if response.run_id != state.run_id or response.generation != state.generation:
        state.stale += 1
        return DedupResult.STALE
    if response.index in state.received:
        state.duplicates += 1
        return DedupResult.DUPLICATE
    if response.index not in state.outstanding:
        # Índice que nunca se publicó en esta generación
        state.stale += 1
        return DedupResult.STALE
    state.outstanding.discard(response.index)
    state.received[response.index] = response.fitness
    return DedupResult.ACCEPTED


class DistributedEvaluator:
    """Evaluador del maestro: scatter por la cola de peticiones, gather por la de respuestas"""

    def __init__(self, client: BrokerClient, run_id: str, max_republish: int = MAX_REPUBLISH,
                 prefetch: int = MASTER_PREFETCH):
        self.client = client
        self.run_id = validate_run_id(run_id)
        self.max_republish = max_republish
        self.prefetch = prefetch
        self.request_queue = request_queue_name(run_id)
        self.response_queue = response_queue_name(run_id)
        self.consumer_id = f"master-{run_id}"
        self.worker_evaluations: Counter = Counter()
        self.malformed_responses = 0
        self._subscribed = False

    def _ensure_subscribed(self):
        if self._subscribed:
            return
        self.client.declare_queue(self.request_queue)
        self.client.declare_queue(self.response_queue)
        self.client.subscribe(self.response_queue, self.consumer_id, prefetch=self.prefetch)
        self._subscribed = True
        logger.info(f"Maestro suscrito a '{self.response_queue}' (run {self.run_id})")

    def evaluate_all(self, individuals: Sequence[Individual], config: GaConfig,
                     generation: int) -> EvaluationBatch:
        return self.master_evaluate_all(individuals, config, generation)

    def master_evaluate_all(self, individuals: Sequence[Individual], config: GaConfig,
                            generation: int) -> EvaluationBatch:
        """Publicar, esperar todas las respuestas (barrera de generación) y devolver fitness en orden"""
        self._ensure_subscribed()
        consumers = self.client.queue_stats(self.response_queue)['consumer_count']
        if consumers != 1:
            raise InternalError(f"'{self.response_queue}' tiene {consumers} consumidores; el maestro debe ser el único")

        state = ScatterState(self.run_id, generation, outstanding={ind.id for ind in individuals},
                             deadline=time.monotonic() + config.generation_timeout)
        by_index = {ind.id: ind for ind in individuals}
        for ind in individuals:
            self._publish(ind, config, generation, attempt=1)
            state.attempts[ind.id] = 1
        logger.debug(f"Generación {generation}: {len(individuals)} peticiones publicadas en '{self.request_queue}'")

        while state.outstanding:
            remaining = state.deadline - time.monotonic()
            if remaining <= 0:
                self._republish_outstanding(state, by_index, config)
                continue
            delivery = self.client.get_delivery(timeout=min(remaining, POLL_INTERVAL))
            if delivery is not None:
                self._handle_response(state, delivery)

        fitness = [state.received[ind.id] for ind in individuals]
        logger.info(f"Generación {generation}: evaluaciones acumuladas por worker "
                    f"{dict(sorted(self.worker_evaluations.items()))}")
        return EvaluationBatch(fitness, duplicates=state.duplicates,
                               republished=state.republished_requests, stale=state.stale)

    def _publish(self, ind: Individual, config: GaConfig, generation: int, attempt: int):
        request = EvalRequest(self.run_id, generation, ind.id, ind.genome, config.problem_id,
                              dict(config.problem_params), attempt)
        self.client.publish(self.request_queue, request.to_body(),
                            correlation_id=request.correlation_id, reply_to=self.response_queue)

    def _republish_outstanding(self, state: ScatterState, by_index: Dict[int, Individual], config: GaConfig):
        if state.republish_count >= self.max_republish:
            logger.error(f"Generación {state.generation}: {len(state.outstanding)} evaluaciones sin respuesta "
                         f"tras {state.republish_count} republicaciones")
            raise EvaluationStalledError(
                f"evaluación estancada en la generación {state.generation}: "
                f"{len(state.outstanding)} individuo(s) sin fitness tras {state.republish_count} republicaciones"
            )
        state.republish_count += 1
        logger.warning(f"Generación {state.generation}: timeout de {format_time(config.generation_timeout)}, "
                       f"republicando {len(state.outstanding)} petición(es) (ronda {state.republish_count})")
        for index in sorted(state.outstanding):
            attempt = state.attempts[index] + 1
            self._publish(by_index[index], config, state.generation, attempt)
            state.attempts[index] = attempt
            state.republished_requests += 1
        state.deadline = time.monotonic() + config.generation_timeout

    def _handle_response(self, state: ScatterState, delivery: Delivery):
        try:
            response = EvalResponse.from_body(delivery.body)
        except ProtocolError as e:
            self.malformed_responses += 1
            logger.error(f"Respuesta descartada ({delivery.correlation_id}): {str(e)}")
            self.client.ack(delivery.delivery_tag)
            return

        self.worker_evaluations[response.worker_id] += 1
        if response.generation == state.generation and response.attempt > state.attempts.get(response.index, 0):
            logger.warning(f"Respuesta con attempt {response.attempt} mayor que el publicado para {response.index}")

        verdict = dedup_accept(state, response)
        if verdict == DedupResult.ACCEPTED:
            logger.debug(f"Fitness {response.fitness} para {delivery.correlation_id} de '{response.worker_id}'")
        elif verdict == DedupResult.DUPLICATE:
            logger.warning(f"Respuesta duplicada para {delivery.correlation_id} de '{response.worker_id}'")
        else:
            logger.info(f"Respuesta obsoleta descartada: {delivery.correlation_id}")
        self.client.ack(delivery.delivery_tag)

    def close(self):
        self.client.close()


@dataclass
class WorkerStats:
    worker_id: str
    evaluations: int = 0
    dead_letters: int = 0
    reconnects: int = 0


class _ProblemCache:
    def __init__(self):
        self._problems: Dict[Tuple[str, str], Problem] = {}

    def get(self, problem_id: str, params: Dict[str, Any]) -> Problem:
        key = (problem_id, canonical_json(params))
        if key not in self._problems:
            self._problems[key] = lookup_problem(problem_id, params)
        return self._problems[key]


def _dead_letter(client: BrokerClient, delivery: Delivery, stats: WorkerStats, reason: str):
    """Confirmar y descartar una petición envenenada; el maestro acabará detectando el estancamiento"""
    stats.dead_letters += 1
    logger.error(f"Petición {delivery.correlation_id} descartada ({stats.dead_letters} en total): {reason}")
    client.ack(delivery.delivery_tag)


def process_delivery(client: BrokerClient, delivery: Delivery, worker_id: str,
                     problems: _ProblemCache, stats: WorkerStats):
    """Petición -> fitness -> respuesta publicada -> ack (siempre después de publicar)"""
    try:
        request = EvalRequest.from_body(delivery.body)
    except ProtocolError as e:
        _dead_letter(client, delivery, stats, str(e))
        return
    if not delivery.reply_to:
        _dead_letter(client, delivery, stats, "sin reply_to")
        return
    try:
        problem = problems.get(request.problem_id, request.problem_params)
    except (ConfigurationError, TypeError, ValueError) as e:
        _dead_letter(client, delivery, stats, str(e))
        return

    start = time.perf_counter()
    try:
        fitness = float(problem.evaluate(request.genome))
    except (TypeError, ValueError, GaDistribuidoError) as e:
        _dead_letter(client, delivery, stats, f"error evaluando: {str(e)}")
        return
    if not math.isfinite(fitness):
        _dead_letter(client, delivery, stats, "fitness no finito")
        return
    duration = time.perf_counter() - start

    response = EvalResponse(request.run_id, request.generation, request.index, fitness,
                            worker_id, duration, request.attempt)
    client.publish(delivery.reply_to, response.to_body(), correlation_id=request.correlation_id)
    client.ack(delivery.delivery_tag)
    stats.evaluations += 1
    logger.debug(f"Worker '{worker_id}' evaluó {request.correlation_id} (attempt {request.attempt}): "
                 f"fitness={fitness} en {duration * 1000:.1f}ms")


def worker_run_loop(broker_addr: str, worker_id: str, run_id: str,
                    stop_event: Optional[threading.Event] = None,
                    give_up_after: float = WORKER_GIVE_UP_AFTER) -> WorkerStats:
    """
    Bucle del worker: suscribirse con prefetch 1 y evaluar hasta que se active stop_event
    Si se pierde el broker reintenta con backoff exponencial; tras give_up_after
    segundos seguidos sin conexión lanza TransportError
    """
    stop_event = stop_event or threading.Event()
    stats = WorkerStats(worker_id)
    problems = _ProblemCache()
    queue = request_queue_name(validate_run_id(run_id))
    failing_since: Optional[float] = None
    attempt = 0
    connected_before = False

    while not stop_event.is_set():
        client = None
        try:
            client = BrokerClient(broker_addr, role='worker')
            client.subscribe(queue, worker_id, prefetch=DEFAULT_PREFETCH)
        except (TransportError, ProtocolError) as e:
            if client is not None:
                client.abort()
            now = time.monotonic()
            failing_since = failing_since or now
            if now - failing_since >= give_up_after:
                logger.error(f"Worker '{worker_id}': broker inaccesible durante {format_time(now - failing_since)}")
                raise TransportError(f"broker {broker_addr} inaccesible durante {give_up_after}s: {str(e)}")
            delay = backoff_delay(attempt)
            attempt += 1
            logger.warning(f"Worker '{worker_id}': no se pudo conectar ({str(e)}), reintento en {delay:.1f}s")
            stop_event.wait(delay)
            continue

        if connected_before:
            stats.reconnects += 1
        connected_before = True
        failing_since = None
        attempt = 0
        logger.info(f"Worker '{worker_id}' esperando peticiones en '{queue}'")

        try:
            while not stop_event.is_set():
                delivery = client.get_delivery(timeout=POLL_INTERVAL)
                if delivery is not None:
                    process_delivery(client, delivery, worker_id, problems, stats)
        except (TransportError, ProtocolError) as e:
            logger.warning(f"Worker '{worker_id}': conexión con el broker perdida ({str(e)})")
        finally:
            client.close()

    logger.info(f"Worker '{worker_id}' detenido: {stats.evaluations} evaluaciones, "
                f"{stats.dead_letters} descartadas, {stats.reconnects} reconexiones")
    return stats


# Evento para manejo de interrupciones
interrupted = threading.Event()


def signal_handler(sig, frame):
    """Manejar SIGINT/SIGTERM"""
    interrupted.set()
    logger.info(f"Señal {sig} recibida, deteniendo worker")


def cmd_worker(broker_addr: str, worker_id: str, run_id: str) -> int:
    """Proceso worker; retorna el código de salida"""
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)

    logger.info("=" * 60)
    logger.info(f"Iniciando worker '{worker_id}' (broker {broker_addr}, run {run_id})")
    logger.info("=" * 60)
    print(f"🔧 Worker '{worker_id}' conectando a {broker_addr}", flush=True)

    try:
        stats = worker_run_loop(broker_addr, worker_id, run_id, stop_event=interrupted)
    except TransportError as e:
        print(f"❌ Error: {str(e)}", flush=True)
        return 1
    except GaDistribuidoError as e:
        print(f"❌ Error: {str(e)}", flush=True)
        logger.error(f"Worker '{worker_id}' terminado con error: {str(e)}", exc_info=True)
        return 1

    print(f"👋 Worker '{worker_id}' detenido: {stats.evaluations} evaluaciones, "
          f"{stats.dead_letters} descartadas", flush=True)
    return 0
