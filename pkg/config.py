#!/usr/bin/env python3
"""
Configuración centralizada para el GA distribuido (maestro, workers y broker)
"""
import os
from dotenv import load_dotenv

# Cargar variables de entorno
load_dotenv()

# Dirección del broker e identidad de los procesos
BROKER_ADDR = os.getenv('BROKER_ADDR', '127.0.0.1:5680')
WORKER_ID = os.getenv('WORKER_ID')  # None => <hostname>-<pid>
RUN_ID = os.getenv('RUN_ID')

# Protocolo de red
PROTOCOL_VERSION = 1
MAX_FRAME_SIZE = 16 * 1024 * 1024  # bytes
MAX_QUEUE_NAME_BYTES = 255
RECV_CHUNK_SIZE = int(os.getenv('RECV_CHUNK_SIZE', '65536'))  # bytes

# Colas por ejecución
REQUEST_QUEUE_PREFIX = 'ga.request'
RESPONSE_QUEUE_PREFIX = 'ga.response'

# Prefetch y tiempos
DEFAULT_PREFETCH = 1
MASTER_PREFETCH = int(os.getenv('MASTER_PREFETCH', '1024'))
MAX_REPUBLISH = int(os.getenv('MAX_REPUBLISH', '5'))
MIN_GENERATION_TIMEOUT = float(os.getenv('MIN_GENERATION_TIMEOUT', '10'))  # segundos
CLIENT_REPLY_TIMEOUT = float(os.getenv('CLIENT_REPLY_TIMEOUT', '10'))  # segundos
CONNECT_TIMEOUT = float(os.getenv('CONNECT_TIMEOUT', '5'))  # segundos

# Reconexión de workers (backoff exponencial)
RECONNECT_BASE_DELAY = float(os.getenv('RECONNECT_BASE_DELAY', '0.1'))  # segundos
RECONNECT_MAX_DELAY = float(os.getenv('RECONNECT_MAX_DELAY', '5'))  # segundos
WORKER_GIVE_UP_AFTER = float(os.getenv('WORKER_GIVE_UP_AFTER', '60'))  # segundos

# Orquestación local
STARTUP_TIMEOUT = float(os.getenv('STARTUP_TIMEOUT', '30'))  # segundos
TEARDOWN_TIMEOUT = float(os.getenv('TEARDOWN_TIMEOUT', '5'))  # segundos
REPORTS_DIR = os.getenv('REPORTS_DIR', 'reports')

# Configuración de logging
LOG_LEVEL = os.getenv('LOG_LEVEL', 'INFO')
LOG_FILE = os.getenv('LOG_FILE', 'logs/ga_distribuido.log')
LOG_FORMAT = '%(asctime)s - %(role)s[%(process)d] - %(levelname)s - %(message)s'
LOG_DATE_FORMAT = '%Y-%m-%d %H:%M:%S'

# Rutas de archivos
SCRIPT_DIR = os.path.dirname(os.path.abspath(__file__))
MAIN_SCRIPT = os.path.join(SCRIPT_DIR, 'main.py')

# Cabecera del CSV por generación; eval_ms es solo la fase de evaluación
REPORT_CSV_HEADER = ['generation', 'best', 'mean', 'wall_ms', 'dups', 'republished', 'eval_ms']


# Tipos de genoma
class GenomeKind:
    BITSTRING = 'bitstring'
    REAL_VECTOR = 'real_vector'


# Modos de ejecución
class RunMode:
    SEQUENTIAL = 'sequential'
    DISTRIBUTED = 'distributed'


# Resultado de la deduplicación de respuestas
class DedupResult:
    ACCEPTED = 'accepted'
    DUPLICATE = 'duplicate'
    STALE = 'stale'


# Operaciones del protocolo
class Op:
    HELLO = 'HELLO'
    DECLARE = 'DECLARE'
    PUBLISH = 'PUBLISH'
    SUBSCRIBE = 'SUBSCRIBE'
    ACK = 'ACK'
    DELIVER = 'DELIVER'
    OK = 'OK'
    ERR = 'ERR'
    STATS = 'STATS'
    STATS_REPLY = 'STATS_REPLY'
    CLOSE = 'CLOSE'

    ALL = (HELLO, DECLARE, PUBLISH, SUBSCRIBE, ACK, DELIVER, OK, ERR, STATS, STATS_REPLY, CLOSE)
    # Las que un cliente puede enviar al broker
    CLIENT = (HELLO, DECLARE, PUBLISH, SUBSCRIBE, ACK, STATS, CLOSE)


# Códigos de error del protocolo
class ErrorCode:
    BAD_OP = 'bad_op'
    VERSION = 'version'
    NO_HANDSHAKE = 'no_handshake'
    BAD_FRAME = 'bad_frame'
    FRAME_TOO_LARGE = 'frame_too_large'
    BAD_FIELD = 'bad_field'
    BAD_QUEUE = 'bad_queue'
    DUPLICATE_CONSUMER = 'duplicate_consumer'
    UNKNOWN_TAG = 'unknown_tag'
    NOT_FOUND = 'not_found'
