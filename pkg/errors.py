#!/usr/bin/env python3
"""
Jerarquía de excepciones compartida por todos los módulos
"""
from typing import List, Optional


class GaDistribuidoError(Exception):
    """Error base del proyecto"""


class ConfigurationError(GaDistribuidoError):
    """Configuración inválida; el mensaje nombra el campo afectado"""

    def __init__(self, field: str, message: str):
        self.field = field
        self.message = message
        super().__init__(f"{field}: {message}")


class InternalError(GaDistribuidoError):
    """Precondición interna violada (bug, no error de usuario)"""


class ProtocolError(GaDistribuidoError):
    """Violación del protocolo de red o de la semántica del broker"""

    def __init__(self, code: str, message: str, offset: Optional[int] = None):
        self.code = code
        self.message = message
        self.offset = offset
        detail = f" (offset {offset})" if offset is not None else ""
        super().__init__(f"[{code}] {message}{detail}")


class FrameTooLargeError(ProtocolError):
    """Frame por encima del límite"""


class NotFoundError(ProtocolError):
    """Cola inexistente"""


class TransportError(GaDistribuidoError):
    """Conexión cerrada, broker inaccesible o respuesta no recibida a tiempo"""


class CorrelationParseError(GaDistribuidoError, ValueError):
    """Correlation id mal formado"""


class EvaluationStalledError(GaDistribuidoError):
    """El maestro agotó los reintentos de publicación sin recibir todas las respuestas"""


class RunError(GaDistribuidoError):
    """Ejecución abortada; conserva los reportes de las generaciones completadas"""

    def __init__(self, message: str, reports: Optional[List] = None):
        self.reports = list(reports or [])
        super().__init__(message)
