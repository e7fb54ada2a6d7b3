#!/usr/bin/env python3
"""
Utilidades compartidas: formato, direcciones de red y backoff
"""
import os
import socket
from typing import Tuple
from config import RECONNECT_BASE_DELAY, RECONNECT_MAX_DELAY
from errors import ConfigurationError


def parse_addr(addr: str) -> Tuple[str, int]:
    """Convertir 'host:puerto' en tupla (host, puerto)"""
    host, sep, port = addr.rpartition(':')
    if not sep or not host:
        raise ConfigurationError('broker_addr', f"dirección inválida '{addr}', se esperaba host:puerto")
    try:
        port_number = int(port)
    except ValueError:
        raise ConfigurationError('broker_addr', f"puerto inválido en '{addr}'")
    if not 0 <= port_number <= 65535:
        raise ConfigurationError('broker_addr', f"puerto fuera de rango en '{addr}'")
    return host, port_number


def format_addr(host: str, port: int) -> str:
    return f"{host}:{port}"


def backoff_delay(attempt: int, base: float = RECONNECT_BASE_DELAY, cap: float = RECONNECT_MAX_DELAY) -> float:
    """Espera del intento N (desde 0): base * 2^N, acotada por cap"""
    return min(cap, base * (2 ** min(attempt, 32)))


def default_worker_id() -> str:
    """Identificador por defecto de un worker: <hostname>-<pid>"""
    return f"{socket.gethostname()}-{os.getpid()}"


def format_ms(seconds: float) -> str:
    """Formatear una duración en milisegundos"""
    return f"{seconds * 1000:.1f}ms"


def format_time(seconds: float) -> str:
    """Formatear tiempo de forma legible"""
    if seconds < 60:
        return f"{seconds:.1f}s"
    elif seconds < 3600:
        minutes = int(seconds // 60)
        secs = int(seconds % 60)
        return f"{minutes}m {secs}s"
    else:
        hours = int(seconds // 3600)
        minutes = int((seconds % 3600) // 60)
        return f"{hours}h {minutes}m"
