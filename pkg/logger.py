#!/usr/bin/env python3
"""
Logging compartido por broker, workers, maestro y orquestador

Todos los procesos escriben en el mismo LOG_FILE; cada línea lleva el PID y el
rol del proceso (set_process_role) para poder separarlos con grep.
"""
import logging
from pathlib import Path
from config import LOG_LEVEL, LOG_FILE, LOG_FORMAT, LOG_DATE_FORMAT

DEFAULT_ROLE = 'cli'


class RoleFilter(logging.Filter):
    """Añade el atributo 'role' a cada registro"""

    def __init__(self, role: str = DEFAULT_ROLE):
        super().__init__()
        self.role = role

    def filter(self, record: logging.LogRecord) -> bool:
        record.role = self.role
        return True


role_filter = RoleFilter()


def setup_logger(name='ga_distribuido'):
    """Archivo a DEBUG, consola a WARNING; idempotente"""
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, LOG_LEVEL.upper(), logging.INFO))
    if logger.handlers:
        return logger

    Path(LOG_FILE).parent.mkdir(parents=True, exist_ok=True)
    formatter = logging.Formatter(LOG_FORMAT, LOG_DATE_FORMAT)

    file_handler = logging.FileHandler(LOG_FILE, encoding='utf-8')
    file_handler.setLevel(logging.DEBUG)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(logging.WARNING)

    for handler in (file_handler, console_handler):
        handler.setFormatter(formatter)
        handler.addFilter(role_filter)
        logger.addHandler(handler)
    return logger


def set_process_role(role: str):
    """Rol mostrado en el log: broker, worker, master, local, bench"""
    role_filter.role = role


# Logger global
logger = setup_logger()
