#!/usr/bin/env python3
"""
Broker de mensajes mínimo: colas con nombre, publish, subscribe con prefetch,
reparto round-robin, acks y reencolado de lo no confirmado al desconectar

No hay persistencia: el estado vive en memoria y una caída del broker aborta la ejecución.
"""
import itertools
import signal
import socket
import socketserver
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from queue import Queue
from typing import Any, Deque, Dict, List, Optional
from config import DEFAULT_PREFETCH, ErrorCode, MAX_QUEUE_NAME_BYTES, Op, RECV_CHUNK_SIZE, TEARDOWN_TIMEOUT
from errors import NotFoundError, ProtocolError, TransportError
from logger import logger
from utils import format_addr, parse_addr
from wire import (
    FrameDecoder, accept_handshake, decode_body, encode_body, encode_frame, err_command, make_command,
    set_nodelay,
)

# Tras el último frame se descarta lo que envíe el cliente hasta su EOF, como mucho este tiempo
LINGER_TIMEOUT = 1.0  # segundos


@dataclass(eq=False)
class Message:
    message_id: int
    body: bytes
    correlation_id: str = ''
    reply_to: Optional[str] = None
    delivery_tag: Optional[int] = None
    redelivered: bool = False


@dataclass(eq=False)
class ConsumerRegistration:
    consumer_id: str
    connection: Any
    queue: str
    prefetch: int
    in_flight: Dict[int, Message] = field(default_factory=dict)


@dataclass(eq=False)
class QueueState:
    name: str
    pending: Deque[Message] = field(default_factory=deque)
    consumers: List[ConsumerRegistration] = field(default_factory=list)
    next_consumer_cursor: int = 0


def validate_queue_name(name) -> str:
    if not isinstance(name, str) or not name:
        raise ProtocolError(ErrorCode.BAD_QUEUE, "el nombre de cola no puede estar vacío")
    if len(name.encode('utf-8')) > MAX_QUEUE_NAME_BYTES:
        raise ProtocolError(ErrorCode.BAD_QUEUE, f"el nombre de cola supera {MAX_QUEUE_NAME_BYTES} bytes")
    return name


class Broker:
    """
    Estado de colas en memoria
    Toda mutación ocurre bajo un único lock: las operaciones por cola son linealizables.
    Una conexión expone connection_id, open, next_delivery_tag() y deliver(queue, registration, message).
    """

    def __init__(self):
        self._lock = threading.RLock()
        self.queues: Dict[str, QueueState] = {}
        self._message_ids = itertools.count(1)
        self._registrations: Dict[str, List[ConsumerRegistration]] = defaultdict(list)
        self._tag_owners: Dict[tuple, ConsumerRegistration] = {}

    def declare_queue(self, name: str) -> QueueState:
        """Idempotente"""
        validate_queue_name(name)
        with self._lock:
            queue = self.queues.get(name)
            if queue is None:
                queue = QueueState(name)
                self.queues[name] = queue
                logger.debug(f"Cola declarada: {name}")
            return queue

    def publish(self, connection, queue: str, body: bytes, correlation_id: str = '',
                reply_to: Optional[str] = None) -> Message:
        with self._lock:
            if not connection.open:
                raise TransportError(f"conexión {connection.connection_id} cerrada")
            state = self.declare_queue(queue)
            message = Message(next(self._message_ids), bytes(body), correlation_id, reply_to)
            state.pending.append(message)
            self._dispatch(state)
            return message

    def subscribe(self, connection, queue: str, consumer_id: str,
                  prefetch: int = DEFAULT_PREFETCH) -> ConsumerRegistration:
        if not isinstance(consumer_id, str) or not consumer_id:
            raise ProtocolError(ErrorCode.BAD_FIELD, "consumer_id no puede estar vacío")
        if isinstance(prefetch, bool) or not isinstance(prefetch, int) or prefetch < 1:
            raise ProtocolError(ErrorCode.BAD_FIELD, f"prefetch debe ser un entero >= 1, recibido {prefetch!r}")
        with self._lock:
            if not connection.open:
                raise TransportError(f"conexión {connection.connection_id} cerrada")
            state = self.declare_queue(queue)
            if any(c.consumer_id == consumer_id for c in state.consumers):
                raise ProtocolError(ErrorCode.DUPLICATE_CONSUMER,
                                    f"consumer_id '{consumer_id}' ya suscrito a '{queue}'")
            registration = ConsumerRegistration(consumer_id, connection, queue, prefetch)
            state.consumers.append(registration)
            self._registrations[connection.connection_id].append(registration)
            logger.info(f"Consumidor '{consumer_id}' suscrito a '{queue}' (prefetch={prefetch})")
            self._dispatch(state)
            return registration

    def dispatch(self, queue: str):
        with self._lock:
            self._dispatch(self.declare_queue(queue))

    def _dispatch(self, state: QueueState):
        """Round-robin desde el cursor, saltando consumidores sin capacidad"""
        while state.pending and state.consumers:
            count = len(state.consumers)
            for step in range(count):
                index = (state.next_consumer_cursor + step) % count
                registration = state.consumers[index]
                if len(registration.in_flight) < registration.prefetch:
                    self._deliver(state, registration, state.pending.popleft())
                    state.next_consumer_cursor = (index + 1) % count
                    break
            else:
                return

    def _deliver(self, state: QueueState, registration: ConsumerRegistration, message: Message):
        connection = registration.connection
        tag = connection.next_delivery_tag()
        message.delivery_tag = tag
        registration.in_flight[tag] = message
        self._tag_owners[(connection.connection_id, tag)] = registration
        connection.deliver(state.name, registration, message)

    def ack(self, connection, delivery_tag: int) -> Message:
        with self._lock:
            registration = self._tag_owners.pop((connection.connection_id, delivery_tag), None)
            if registration is None:
                raise ProtocolError(ErrorCode.UNKNOWN_TAG, f"delivery_tag {delivery_tag} desconocido")
            message = registration.in_flight.pop(delivery_tag)
            self._dispatch(self.queues[registration.queue])
            return message

    def handle_disconnect(self, connection):
        """Quitar los consumidores de la conexión y reencolar sus mensajes al frente, en orden de tag"""
        with self._lock:
            connection.open = False
            registrations = self._registrations.pop(connection.connection_id, [])
            by_queue: Dict[str, List[ConsumerRegistration]] = defaultdict(list)
            for registration in registrations:
                by_queue[registration.queue].append(registration)

            for queue_name, queue_registrations in by_queue.items():
                state = self.queues[queue_name]
                returned: List[Message] = []
                for registration in queue_registrations:
                    self._remove_consumer(state, registration)
                    for tag, message in registration.in_flight.items():
                        self._tag_owners.pop((connection.connection_id, tag), None)
                        returned.append(message)
                    registration.in_flight.clear()

                for message in sorted(returned, key=lambda m: m.delivery_tag, reverse=True):
                    message.redelivered = True
                    state.pending.appendleft(message)
                if returned:
                    logger.warning(f"Conexión {connection.connection_id} cerrada: {len(returned)} "
                                   f"mensaje(s) reencolados en '{queue_name}'")
                self._dispatch(state)

    def _remove_consumer(self, state: QueueState, registration: ConsumerRegistration):
        index = next(i for i, c in enumerate(state.consumers) if c is registration)
        del state.consumers[index]
        if index < state.next_consumer_cursor:
            state.next_consumer_cursor -= 1
        if state.next_consumer_cursor >= len(state.consumers):
            state.next_consumer_cursor = 0
        logger.info(f"Consumidor '{registration.consumer_id}' retirado de '{state.name}'")

    def queue_stats(self, name: str) -> Dict[str, int]:
        with self._lock:
            state = self.queues.get(name)
            if state is None:
                raise NotFoundError(ErrorCode.NOT_FOUND, f"la cola '{name}' no existe")
            return {
                'depth': len(state.pending),
                'consumer_count': len(state.consumers),
                'in_flight_total': sum(len(c.in_flight) for c in state.consumers),
            }


class BrokerConnection:
    """Conexión de un cliente: las escrituras pasan por una cola y un hilo escritor"""

    _ids = itertools.count(1)

    def __init__(self, sock: socket.socket, peer):
        self.connection_id = f"conn-{next(self._ids)}"
        self.sock = sock
        self.peer = peer
        set_nodelay(sock)
        self.open = True
        self._tags = itertools.count(1)
        self._outbound: Queue = Queue()
        self._writer = threading.Thread(target=self._write_loop, name=f"writer-{self.connection_id}", daemon=True)
        self._writer.start()

    def next_delivery_tag(self) -> int:
        return next(self._tags)

    def send(self, command):
        self._outbound.put(command)

    def deliver(self, queue: str, registration: ConsumerRegistration, message: Message):
        self.send(make_command(
            Op.DELIVER,
            queue=queue,
            consumer_id=registration.consumer_id,
            delivery_tag=message.delivery_tag,
            body=encode_body(message.body),
            correlation_id=message.correlation_id,
            reply_to=message.reply_to,
            redelivered=message.redelivered,
        ))

    def close_after_flush(self, timeout: float = TEARDOWN_TIMEOUT) -> bool:
        """Enviar lo pendiente (p. ej. un ERR), cerrar la escritura y esperar al hilo escritor"""
        self._outbound.put(None)
        self._writer.join(timeout)
        if self._writer.is_alive():
            logger.warning(f"{self.connection_id}: escritor bloqueado tras {timeout}s, cortando conexión")
            self.abort()
            return False
        return True

    def abort(self):
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass

    def _write_loop(self):
        """El socket lo cierra socketserver cuando handle() retorna"""
        try:
            while True:
                command = self._outbound.get()
                if command is None:
                    self.sock.shutdown(socket.SHUT_WR)
                    return
                self.sock.sendall(encode_frame(command))
        except OSError as e:
            logger.debug(f"Escritura fallida en {self.connection_id}: {str(e)}")
            self.abort()


def _field(command, name, kind, required=True, default=None):
    value = command.get(name, default)
    if value is None and not required:
        return None
    if isinstance(value, bool) and kind is int:
        value = None
    if not isinstance(value, kind):
        raise ProtocolError(ErrorCode.BAD_FIELD, f"{command.get('op')} requiere '{name}' de tipo {kind.__name__}")
    return value


def _linger(sock: socket.socket, timeout: float = LINGER_TIMEOUT):
    """Descartar lo que el cliente siga enviando hasta su EOF o hasta timeout"""
    deadline = time.monotonic() + timeout
    try:
        while True:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                return
            sock.settimeout(remaining)
            if not sock.recv(RECV_CHUNK_SIZE):
                return
    except OSError:
        pass


class BrokerRequestHandler(socketserver.BaseRequestHandler):
    """Un hilo lector por conexión"""

    def handle(self):
        broker: Broker = self.server.broker
        connection = BrokerConnection(self.request, self.client_address)
        self.server.track(connection)
        logger.info(f"Conexión abierta {connection.connection_id} desde {self.client_address}")
        decoder = FrameDecoder()
        handshaken = False
        keep_open = True
        try:
            while keep_open:
                try:
                    data = self.request.recv(RECV_CHUNK_SIZE)
                except OSError:
                    break
                if not data:
                    break
                try:
                    commands = decoder.feed(data)
                except ProtocolError as e:
                    self._fail(connection, e.code, str(e))
                    break
                for command in commands:
                    if not handshaken:
                        reply = accept_handshake(command)
                        connection.send(reply)
                        if reply['op'] != Op.OK:
                            logger.warning(f"Handshake rechazado en {connection.connection_id}: {reply['message']}")
                            keep_open = False
                            break
                        handshaken = True
                        continue
                    keep_open = self._process(broker, connection, command)
                    if not keep_open:
                        break
        finally:
            broker.handle_disconnect(connection)
            if connection.close_after_flush():
                _linger(self.request)
            self.server.untrack(connection)
            logger.info(f"Conexión cerrada {connection.connection_id}")

    def _fail(self, connection, code: str, message: str):
        logger.warning(f"Error de protocolo en {connection.connection_id}: [{code}] {message}")
        connection.send(err_command(code, message))

    def _process(self, broker: Broker, connection: BrokerConnection, command) -> bool:
        """Atender un comando; False cierra la conexión"""
        op = command.get('op')
        try:
            if op == Op.CLOSE:
                return False
            if op == Op.DECLARE:
                broker.declare_queue(command.get('queue'))
                connection.send(make_command(Op.OK))
            elif op == Op.PUBLISH:
                broker.publish(
                    connection,
                    validate_queue_name(command.get('queue')),
                    decode_body(_field(command, 'body', str)),
                    _field(command, 'correlation_id', str, default=''),
                    _field(command, 'reply_to', str, required=False),
                )
                connection.send(make_command(Op.OK))
            elif op == Op.SUBSCRIBE:
                # Las entregas del backlog pueden salir antes que este OK
                broker.subscribe(
                    connection,
                    validate_queue_name(command.get('queue')),
                    _field(command, 'consumer_id', str),
                    _field(command, 'prefetch', int, default=DEFAULT_PREFETCH),
                )
                connection.send(make_command(Op.OK))
            elif op == Op.ACK:
                broker.ack(connection, _field(command, 'delivery_tag', int))
                connection.send(make_command(Op.OK))
            elif op == Op.STATS:
                name = validate_queue_name(command.get('queue'))
                try:
                    stats = broker.queue_stats(name)
                except NotFoundError as e:
                    connection.send(err_command(e.code, e.message))
                    return True
                connection.send(make_command(Op.STATS_REPLY, queue=name, **stats))
            else:
                self._fail(connection, ErrorCode.BAD_OP, f"operación no válida: {op!r}")
                return False
        except ProtocolError as e:
            self._fail(connection, e.code, e.message)
            return False
        except TransportError:
            return False
        except Exception as e:
            logger.error(f"Comando no procesable en {connection.connection_id}: {str(e)}", exc_info=True)
            self._fail(connection, ErrorCode.BAD_FRAME, f"comando no procesable: {type(e).__name__}")
            return False
        return True


class BrokerServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True

    def __init__(self, addr: str, broker: Optional[Broker] = None):
        self.broker = broker or Broker()
        self._connections = set()
        self._connections_lock = threading.Lock()
        self._thread: Optional[threading.Thread] = None
        super().__init__(parse_addr(addr), BrokerRequestHandler)

    @property
    def address(self) -> str:
        host, port = self.server_address[:2]
        return format_addr(host, port)

    def track(self, connection: BrokerConnection):
        with self._connections_lock:
            self._connections.add(connection)

    def untrack(self, connection: BrokerConnection):
        with self._connections_lock:
            self._connections.discard(connection)

    def start_in_thread(self) -> threading.Thread:
        self._thread = threading.Thread(target=self.serve_forever, name='broker-server', daemon=True)
        self._thread.start()
        return self._thread

    def stop(self):
        """Parar el bucle de aceptación y cortar todas las conexiones"""
        self.shutdown()
        with self._connections_lock:
            connections = list(self._connections)
        for connection in connections:
            connection.abort()
        self.server_close()
        logger.info(f"Broker detenido en {self.address}")


# Evento para manejo de señales
stop_requested = threading.Event()


def signal_handler(sig, frame):
    """Manejar SIGINT/SIGTERM"""
    stop_requested.set()
    logger.info(f"Señal {sig} recibida, deteniendo broker")


def cmd_broker(addr: str) -> int:
    """Ejecutar el broker hasta recibir una señal; retorna el código de salida"""
    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)

    logger.info("=" * 60)
    logger.info(f"Iniciando broker en {addr}")
    logger.info("=" * 60)

    try:
        server = BrokerServer(addr)
    except OSError as e:
        print(f"❌ Error: no se pudo abrir {addr}: {str(e)}", flush=True)
        logger.error(f"Fallo al iniciar el broker en {addr}: {str(e)}")
        return 1

    server.start_in_thread()
    print(f"🚀 Broker escuchando en {server.address}", flush=True)

    while not stop_requested.wait(0.5):
        pass

    server.stop()
    print("👋 Broker detenido", flush=True)
    return 0
