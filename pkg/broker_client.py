#!/usr/bin/env python3
"""
Cliente para interactuar con el broker (maestro, workers y orquestador)
"""
import socket
import threading
from dataclasses import dataclass
from queue import Empty, Queue
from typing import Dict, Optional
from config import CLIENT_REPLY_TIMEOUT, CONNECT_TIMEOUT, DEFAULT_PREFETCH, ErrorCode, Op
from errors import NotFoundError, ProtocolError, TransportError
from logger import logger
from utils import parse_addr
from wire import Session, decode_body, encode_body, handshake, make_command


@dataclass(frozen=True)
class Delivery:
    queue: str
    consumer_id: str
    delivery_tag: int
    body: bytes
    correlation_id: str
    reply_to: Optional[str]
    redelivered: bool = False


class BrokerClient:
    """
    Cliente bloqueante: una petición en vuelo a la vez (cada una recibe OK/ERR/STATS_REPLY);
    las entregas llegan de forma asíncrona a una cola interna
    """

    def __init__(self, addr: str, role: str, connect_timeout: float = CONNECT_TIMEOUT,
                 reply_timeout: float = CLIENT_REPLY_TIMEOUT):
        self.addr = addr
        self.role = role
        self.reply_timeout = reply_timeout
        host, port = parse_addr(addr)
        try:
            sock = socket.create_connection((host, port), timeout=connect_timeout)
            sock.settimeout(None)
        except OSError as e:
            raise TransportError(f"no se pudo conectar con el broker en {addr}: {str(e)}")

        self.session = Session(sock)
        try:
            handshake(self.session, role, timeout=reply_timeout)
        except TransportError:
            self.session.close()
            raise

        self._replies: Queue = Queue()
        self._deliveries: Queue = Queue()
        self._request_lock = threading.Lock()
        self._reader = threading.Thread(target=self._read_loop, name=f"reader-{role}", daemon=True)
        self._reader.start()
        logger.info(f"Cliente del broker conectado a {addr} (rol: {role})")

    @property
    def closed(self) -> bool:
        return self.session.closed

    def _read_loop(self):
        try:
            while True:
                command = self.session.recv()
                if command.get('op') == Op.DELIVER:
                    self._deliveries.put(Delivery(
                        queue=command['queue'],
                        consumer_id=command['consumer_id'],
                        delivery_tag=command['delivery_tag'],
                        body=decode_body(command['body']),
                        correlation_id=command.get('correlation_id', ''),
                        reply_to=command.get('reply_to'),
                        redelivered=bool(command.get('redelivered', False)),
                    ))
                else:
                    self._replies.put(command)
        except (TransportError, ProtocolError, KeyError) as e:
            logger.debug(f"Lector del cliente '{self.role}' terminado: {str(e)}")
        finally:
            self.session.closed = True
            self._replies.put(None)
            self._deliveries.put(None)

    def _request(self, command, expect: str = Op.OK) -> Dict:
        with self._request_lock:
            if self.closed:
                raise TransportError("conexión con el broker cerrada")
            self.session.send(command)
            try:
                reply = self._replies.get(timeout=self.reply_timeout)
            except Empty:
                # Una respuesta tardía se emparejaría con la siguiente petición
                self.session.close()
                raise TransportError(f"sin respuesta del broker a {command['op']} en {self.reply_timeout}s")
            if reply is None:
                raise TransportError("conexión con el broker perdida")
            if reply.get('op') == Op.ERR:
                code = reply.get('code', ErrorCode.BAD_OP)
                error_class = NotFoundError if code == ErrorCode.NOT_FOUND else ProtocolError
                raise error_class(code, reply.get('message', ''))
            if reply.get('op') != expect:
                raise ProtocolError(ErrorCode.BAD_OP, f"se esperaba {expect}, recibido {reply.get('op')}")
            return reply

    def declare_queue(self, name: str):
        self._request(make_command(Op.DECLARE, queue=name))

    def publish(self, queue: str, body: bytes, correlation_id: str = '', reply_to: Optional[str] = None):
        self._request(make_command(Op.PUBLISH, queue=queue, body=encode_body(body),
                                   correlation_id=correlation_id, reply_to=reply_to))

    def subscribe(self, queue: str, consumer_id: str, prefetch: int = DEFAULT_PREFETCH):
        self._request(make_command(Op.SUBSCRIBE, queue=queue, consumer_id=consumer_id, prefetch=prefetch))
        logger.info(f"Suscrito a '{queue}' como '{consumer_id}' (prefetch={prefetch})")

    def ack(self, delivery_tag: int):
        self._request(make_command(Op.ACK, delivery_tag=delivery_tag))

    def queue_stats(self, name: str) -> Dict[str, int]:
        reply = self._request(make_command(Op.STATS, queue=name), expect=Op.STATS_REPLY)
        return {
            'depth': reply['depth'],
            'consumer_count': reply['consumer_count'],
            'in_flight_total': reply['in_flight_total'],
        }

    def get_delivery(self, timeout: Optional[float] = None) -> Optional[Delivery]:
        """Siguiente entrega, o None si vence el timeout"""
        try:
            delivery = self._deliveries.get(timeout=timeout)
        except Empty:
            return None
        if delivery is None:
            # Centinela de cierre: se deja para los siguientes lectores
            self._deliveries.put(None)
            raise TransportError("conexión con el broker perdida")
        return delivery

    def abort(self):
        """Cierre abrupto sin CLOSE (equivale a la caída del proceso)"""
        self.session.close()

    def close(self):
        """Cerrar sesión"""
        if not self.closed:
            try:
                self.session.send(make_command(Op.CLOSE))
            except TransportError:
                pass
        self.session.close()
        logger.debug(f"Sesión '{self.role}' con el broker cerrada")

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
