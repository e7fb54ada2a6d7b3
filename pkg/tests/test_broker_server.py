import socket
import struct
import threading
import time

import pytest

from broker_client import BrokerClient
from config import ErrorCode, Op
from errors import NotFoundError, ProtocolError, TransportError
from utils import parse_addr
from wire import Session, encode_frame, handshake, make_command


def _raw_session(server) -> Session:
    return Session(socket.create_connection(parse_addr(server.address), timeout=2))


def _wait_for(predicate, timeout=3.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return True
        time.sleep(0.02)
    return False


def test_publish_subscribe_ack_roundtrip(broker_server):
    with BrokerClient(broker_server.address, 'master') as producer, \
            BrokerClient(broker_server.address, 'worker') as consumer:
        producer.declare_queue('tareas')
        producer.publish('tareas', b'\x00hola', correlation_id='r:0:1', reply_to='respuestas')
        consumer.subscribe('tareas', 'w1')
        delivery = consumer.get_delivery(timeout=2)
        assert delivery.body == b'\x00hola'
        assert delivery.correlation_id == 'r:0:1'
        assert delivery.reply_to == 'respuestas'
        assert delivery.redelivered is False
        consumer.ack(delivery.delivery_tag)
        assert producer.queue_stats('tareas') == {'depth': 0, 'consumer_count': 1, 'in_flight_total': 0}


def test_stats_not_found_keeps_connection_open(broker_server):
    with BrokerClient(broker_server.address, 'cli') as client:
        with pytest.raises(NotFoundError):
            client.queue_stats('inexistente')
        client.declare_queue('q')
        assert client.queue_stats('q')['depth'] == 0


def test_unacked_delivery_is_redelivered_after_abort(broker_server):
    with BrokerClient(broker_server.address, 'master') as producer:
        producer.publish('q', b'trabajo')
        crashing = BrokerClient(broker_server.address, 'worker')
        crashing.subscribe('q', 'crash')
        assert crashing.get_delivery(timeout=2).body == b'trabajo'
        crashing.abort()

        with BrokerClient(broker_server.address, 'worker') as survivor:
            survivor.subscribe('q', 'survivor')
            delivery = survivor.get_delivery(timeout=3)
            assert delivery.body == b'trabajo'
            assert delivery.redelivered is True
            survivor.ack(delivery.delivery_tag)
            assert _wait_for(lambda: producer.queue_stats('q')['consumer_count'] == 1)


def test_duplicate_consumer_is_rejected_and_closes(broker_server):
    with BrokerClient(broker_server.address, 'worker') as first:
        first.subscribe('q', 'w')
        second = BrokerClient(broker_server.address, 'worker')
        with pytest.raises(ProtocolError) as info:
            second.subscribe('q', 'w')
        assert info.value.code == ErrorCode.DUPLICATE_CONSUMER
        assert _wait_for(lambda: second.closed)
        with pytest.raises(TransportError):
            second.declare_queue('otra')


def test_command_before_hello_gets_err_then_close(broker_server):
    session = _raw_session(broker_server)
    session.send(make_command(Op.DECLARE, queue='q'))
    reply = session.recv(timeout=2)
    assert reply['op'] == Op.ERR and reply['code'] == ErrorCode.NO_HANDSHAKE
    with pytest.raises(TransportError):
        session.recv(timeout=2)
    session.close()


def test_version_mismatch_is_rejected(broker_server):
    session = _raw_session(broker_server)
    with pytest.raises(ProtocolError) as info:
        handshake(session, 'worker', timeout=2, protocol_version=2)
    assert info.value.code == ErrorCode.VERSION


def test_malformed_frame_gets_err_then_close(broker_server):
    session = _raw_session(broker_server)
    handshake(session, 'worker', timeout=2)
    session.sock.sendall(struct.pack('>I', 3) + b'{{{')
    reply = session.recv(timeout=2)
    assert reply['code'] == ErrorCode.BAD_FRAME
    with pytest.raises(TransportError):
        session.recv(timeout=2)
    session.close()


def test_unknown_op_gets_err_then_close(broker_server):
    session = _raw_session(broker_server)
    handshake(session, 'worker', timeout=2)
    session.send(make_command('PURGE', queue='q'))
    assert session.recv(timeout=2)['code'] == ErrorCode.BAD_OP
    with pytest.raises(TransportError):
        session.recv(timeout=2)
    session.close()


def test_bad_field_types(broker_server):
    session = _raw_session(broker_server)
    handshake(session, 'worker', timeout=2)
    session.send(make_command(Op.ACK, delivery_tag='uno'))
    assert session.recv(timeout=2)['code'] == ErrorCode.BAD_FIELD
    session.close()


def test_stop_disconnects_clients(broker_server):
    client = BrokerClient(broker_server.address, 'worker')
    client.subscribe('q', 'w')
    broker_server.stop()
    with pytest.raises(TransportError):
        client.get_delivery(timeout=3)


def test_rejected_handshake_always_delivers_err(broker_server):
    for _ in range(50):
        session = _raw_session(broker_server)
        with pytest.raises(ProtocolError) as info:
            handshake(session, 'worker', timeout=2, protocol_version=99)
        assert info.value.code == ErrorCode.VERSION


def test_duplicate_consumer_err_is_never_lost(broker_server):
    with BrokerClient(broker_server.address, 'worker') as first:
        first.subscribe('q', 'w')
        for _ in range(20):
            second = BrokerClient(broker_server.address, 'worker')
            with pytest.raises(ProtocolError) as info:
                second.subscribe('q', 'w')
            assert info.value.code == ErrorCode.DUPLICATE_CONSUMER
            second.close()


def test_stats_with_non_text_queue_gets_err_then_close(broker_server):
    session = _raw_session(broker_server)
    handshake(session, 'cli', timeout=2)
    session.send(make_command(Op.STATS, queue=[1]))
    assert session.recv(timeout=2)['code'] == ErrorCode.BAD_QUEUE
    with pytest.raises(TransportError):
        session.recv(timeout=2)
    session.close()


def test_deeply_nested_payload_gets_err_then_close(broker_server):
    session = _raw_session(broker_server)
    handshake(session, 'cli', timeout=2)
    depth = 200_000
    payload = b'{"op":"STATS","queue":' + b'[' * depth + b']' * depth + b'}'
    session.sock.sendall(struct.pack('>I', len(payload)) + payload)
    assert session.recv(timeout=5)['code'] == ErrorCode.BAD_FRAME
    with pytest.raises(TransportError):
        session.recv(timeout=2)
    session.close()

    with BrokerClient(broker_server.address, 'cli') as client:
        client.declare_queue('sigue-vivo')
        assert client.queue_stats('sigue-vivo')['depth'] == 0


def test_sockets_disable_nagle(broker_server):
    with BrokerClient(broker_server.address, 'worker') as client:
        assert client.session.sock.getsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY) != 0
        assert _wait_for(lambda: broker_server._connections)
        for connection in list(broker_server._connections):
            assert connection.sock.getsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY) != 0


def test_publish_deliver_ack_cycles_are_fast(broker_server):
    cycles = 200
    with BrokerClient(broker_server.address, 'master') as producer, \
            BrokerClient(broker_server.address, 'worker') as consumer:
        consumer.subscribe('rapida', 'w')
        start = time.monotonic()
        for i in range(cycles):
            producer.publish('rapida', str(i).encode())
            delivery = consumer.get_delivery(timeout=2)
            consumer.publish('respuestas', delivery.body)
            consumer.ack(delivery.delivery_tag)
        elapsed = time.monotonic() - start
    assert elapsed < 4.0, f"{cycles} ciclos en {elapsed:.2f}s"


def _silent_broker():
    """Acepta el HELLO y después no contesta nada"""
    listener = socket.socket()
    listener.bind(('127.0.0.1', 0))
    listener.listen(1)
    accepted = []

    def serve():
        conn, _ = listener.accept()
        accepted.append(conn)
        conn.recv(4096)
        conn.sendall(encode_frame(make_command(Op.OK)))

    threading.Thread(target=serve, daemon=True).start()
    host, port = listener.getsockname()
    return listener, accepted, f"{host}:{port}"


def test_reply_timeout_closes_the_client():
    listener, accepted, addr = _silent_broker()
    try:
        client = BrokerClient(addr, 'cli', reply_timeout=0.2)
        with pytest.raises(TransportError):
            client.declare_queue('q')
        assert client.closed
        with pytest.raises(TransportError):
            client.declare_queue('q')
    finally:
        for conn in accepted:
            conn.close()
        listener.close()
