#!/usr/bin/env python3
"""
Protocolo de red entre clientes (maestro, workers, CLI) y el broker

Frame: [u32 big-endian longitud][payload UTF-8 con un comando JSON canónico].
Los cuerpos de los mensajes viajan en base64 para que el sobre siga siendo texto.
"""
import base64
import binascii
import json
import socket
import struct
import threading
from collections import deque
from typing import Any, Dict, List, Optional, Tuple
from config import ErrorCode, MAX_FRAME_SIZE, Op, PROTOCOL_VERSION, RECV_CHUNK_SIZE
from errors import FrameTooLargeError, ProtocolError, TransportError

Command = Dict[str, Any]

LENGTH_PREFIX_SIZE = 4


def canonical_json(obj: Any) -> str:
    """JSON determinista: claves ordenadas, sin espacios, sin NaN/Inf"""
    return json.dumps(obj, sort_keys=True, separators=(',', ':'), ensure_ascii=False, allow_nan=False)


def encode_body(body: bytes) -> str:
    return base64.b64encode(body).decode('ascii')


def decode_body(text: str) -> bytes:
    try:
        return base64.b64decode(text.encode('ascii'), validate=True)
    except (binascii.Error, UnicodeEncodeError, AttributeError) as e:
        raise ProtocolError(ErrorCode.BAD_FIELD, f"body no es base64 válido: {str(e)}")


def set_nodelay(sock: socket.socket):
    """Desactivar Nagle: los frames son pequeños y cada uno espera respuesta"""
    if sock.family in (socket.AF_INET, socket.AF_INET6):
        sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


def make_command(op: str, **fields) -> Command:
    command = {'op': op}
    command.update(fields)
    return command


def err_command(code: str, message: str) -> Command:
    return make_command(Op.ERR, code=code, message=message)


def encode_frame(command: Command) -> bytes:
    """Prefijo de 4 bytes + payload canónico"""
    if not isinstance(command, dict) or not isinstance(command.get('op'), str):
        raise ProtocolError(ErrorCode.BAD_FIELD, "un comando es un objeto con 'op' de tipo texto")
    try:
        payload = canonical_json(command).encode('utf-8')
    except (TypeError, ValueError) as e:
        raise ProtocolError(ErrorCode.BAD_FIELD, f"comando no serializable: {str(e)}")
    if len(payload) > MAX_FRAME_SIZE:
        raise FrameTooLargeError(ErrorCode.FRAME_TOO_LARGE,
                                 f"payload de {len(payload)} bytes supera el límite de {MAX_FRAME_SIZE}")
    return struct.pack('>I', len(payload)) + payload


def _parse_payload(payload: bytes, base_offset: int) -> Command:
    try:
        text = payload.decode('utf-8')
    except UnicodeDecodeError as e:
        raise ProtocolError(ErrorCode.BAD_FRAME, "payload no es UTF-8", base_offset + e.start)
    try:
        command = json.loads(text)
    except json.JSONDecodeError as e:
        offset = base_offset + len(text[:e.pos].encode('utf-8'))
        raise ProtocolError(ErrorCode.BAD_FRAME, f"payload no es JSON: {e.msg}", offset)
    except RecursionError:
        raise ProtocolError(ErrorCode.BAD_FRAME, "payload JSON demasiado anidado", base_offset)
    if not isinstance(command, dict) or not isinstance(command.get('op'), str):
        raise ProtocolError(ErrorCode.BAD_FRAME, "el payload debe ser un objeto con 'op'", base_offset)
    return command


def _frame_length(data, offset: int) -> int:
    (length,) = struct.unpack('>I', bytes(data[:LENGTH_PREFIX_SIZE]))
    if length > MAX_FRAME_SIZE:
        raise FrameTooLargeError(ErrorCode.FRAME_TOO_LARGE,
                                 f"longitud declarada {length} supera el límite de {MAX_FRAME_SIZE}", offset)
    return length


def decode_frame(data: bytes, offset: int = 0) -> Tuple[Optional[Command], bytes]:
    """
    Decodificar un frame del inicio de data
    Retorna (comando, resto); comando es None si el frame aún está incompleto
    """
    if len(data) < LENGTH_PREFIX_SIZE:
        return None, data
    length = _frame_length(data, offset)
    total = LENGTH_PREFIX_SIZE + length
    if len(data) < total:
        return None, data
    command = _parse_payload(data[LENGTH_PREFIX_SIZE:total], offset + LENGTH_PREFIX_SIZE)
    return command, data[total:]


class FrameDecoder:
    """Decodificador incremental: conserva frames parciales entre lecturas"""

    def __init__(self):
        self.buffer = bytearray()
        self.consumed = 0  # bytes del stream ya decodificados, para los offsets de error

    def feed(self, chunk: bytes) -> List[Command]:
        self.buffer.extend(chunk)
        commands = []
        while len(self.buffer) >= LENGTH_PREFIX_SIZE:
            length = _frame_length(self.buffer, self.consumed)
            total = LENGTH_PREFIX_SIZE + length
            if len(self.buffer) < total:
                break
            payload = bytes(self.buffer[LENGTH_PREFIX_SIZE:total])
            commands.append(_parse_payload(payload, self.consumed + LENGTH_PREFIX_SIZE))
            del self.buffer[:total]
            self.consumed += total
        return commands


class Session:
    """Una conexión TCP con escrituras de frame atómicas"""

    def __init__(self, sock: socket.socket, role: Optional[str] = None):
        set_nodelay(sock)
        self.sock = sock
        self.role = role
        self.closed = False
        self._write_lock = threading.Lock()
        self._decoder = FrameDecoder()
        self._inbox = deque()

    def send(self, command: Command):
        frame = encode_frame(command)
        with self._write_lock:
            if self.closed:
                raise TransportError("sesión cerrada")
            try:
                self.sock.sendall(frame)
            except OSError as e:
                self.closed = True
                raise TransportError(f"error enviando frame: {str(e)}")

    def recv(self, timeout: Optional[float] = None) -> Command:
        """Siguiente comando recibido; bloquea hasta completar un frame"""
        while not self._inbox:
            if self.closed:
                raise TransportError("sesión cerrada")
            try:
                self.sock.settimeout(timeout)
                data = self.sock.recv(RECV_CHUNK_SIZE)
            except socket.timeout:
                raise TransportError(f"sin respuesta en {timeout}s")
            except OSError as e:
                self.closed = True
                raise TransportError(f"error leyendo del socket: {str(e)}")
            finally:
                if timeout is not None and not self.closed:
                    try:
                        self.sock.settimeout(None)
                    except OSError:
                        pass
            if not data:
                self.closed = True
                raise TransportError("conexión cerrada por el otro extremo")
            self._inbox.extend(self._decoder.feed(data))
        return self._inbox.popleft()

    def close(self):
        with self._write_lock:
            self.closed = True
        try:
            self.sock.shutdown(socket.SHUT_RDWR)
        except OSError:
            pass
        try:
            self.sock.close()
        except OSError:
            pass


def handshake(session: Session, role: str, timeout: Optional[float] = None,
              protocol_version: int = PROTOCOL_VERSION) -> Session:
    """Lado cliente: HELLO{role, protocol_version} y esperar OK"""
    session.send(make_command(Op.HELLO, role=role, protocol_version=protocol_version))
    reply = session.recv(timeout)
    if reply.get('op') == Op.OK:
        session.role = role
        return session
    session.close()
    if reply.get('op') == Op.ERR:
        raise ProtocolError(reply.get('code', ErrorCode.BAD_OP), reply.get('message', 'handshake rechazado'))
    raise ProtocolError(ErrorCode.BAD_OP, f"respuesta inesperada al HELLO: {reply.get('op')}")


def accept_handshake(command: Command) -> Command:
    """Lado broker: respuesta al primer comando de una conexión (OK o ERR)"""
    if command.get('op') != Op.HELLO:
        return err_command(ErrorCode.NO_HANDSHAKE, f"se esperaba HELLO, recibido {command.get('op')}")
    if command.get('protocol_version') != PROTOCOL_VERSION:
        return err_command(ErrorCode.VERSION, f"versión de protocolo {command.get('protocol_version')!r} "
                                              f"no soportada (se requiere {PROTOCOL_VERSION})")
    if not isinstance(command.get('role'), str):
        return err_command(ErrorCode.BAD_FIELD, "HELLO requiere 'role' de tipo texto")
    return make_command(Op.OK)
