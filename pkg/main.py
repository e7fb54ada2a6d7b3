#!/usr/bin/env python3
"""
Punto de entrada: broker, worker, maestro, ejecución local y benchmark
"""
import argparse
import os
import sys
from config import BROKER_ADDR, RUN_ID, WORKER_ID
from errors import ConfigurationError, CorrelationParseError
from logger import logger, set_process_role
from utils import default_worker_id, parse_addr

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        description='Algoritmo genético maestro-esclavo sobre un broker de mensajes propio',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog='''
Ejemplos:
  python main.py broker --addr 127.0.0.1:5680
  python main.py worker --addr 127.0.0.1:5680 --config run.env
  python main.py master --config run.env
  python main.py local --config run.env                 # broker + workers + maestro
  python main.py local --config run.env --add-worker-file /tmp/mas_workers
  python main.py bench --config run.env --workers 1,2,4,8
        '''
    )
    sub = parser.add_subparsers(dest='command', metavar='COMANDO')
    sub.required = True

    p = sub.add_parser('broker', help='Arrancar el broker de mensajes')
    p.add_argument('--addr', default=BROKER_ADDR, metavar='HOST:PUERTO',
                   help=f'Dirección de escucha (default: {BROKER_ADDR})')

    p = sub.add_parser('worker', help='Arrancar un worker de evaluación')
    p.add_argument('--addr', default=None, metavar='HOST:PUERTO', help='Dirección del broker')
    p.add_argument('--id', default=None, metavar='ID', help='Identificador del worker (default: <host>-<pid>)')
    p.add_argument('--config', default=None, metavar='ARCHIVO', help='Configuración de la ejecución')
    p.add_argument('--run-id', default=None, metavar='RUN', help='Ejecución a servir')

    p = sub.add_parser('master', help='Ejecutar el GA (secuencial o distribuido)')
    p.add_argument('--addr', default=None, metavar='HOST:PUERTO', help='Sobrescribe broker_addr de la configuración')
    p.add_argument('--config', required=True, metavar='ARCHIVO', help='Configuración de la ejecución')
    p.add_argument('--run-id', default=None, metavar='RUN', help='Sobrescribe run_id de la configuración')

    p = sub.add_parser('local', help='Broker + workers + maestro en procesos locales')
    p.add_argument('--config', required=True, metavar='ARCHIVO', help='Configuración de la ejecución')
    p.add_argument('--add-worker-file', default=None, metavar='RUTA',
                   help='Si aparece este archivo se añade un worker (alternativa a SIGUSR1)')

    p = sub.add_parser('bench', help='Medir speedup con distintos números de workers')
    p.add_argument('--config', required=True, metavar='ARCHIVO', help='Configuración de la ejecución')
    p.add_argument('--workers', default='1,2,4,8', metavar='N,N,...', help='Números de workers (default: 1,2,4,8)')
    p.add_argument('--output', default=None, metavar='ARCHIVO', help='CSV de resultados')
    return parser


def run_worker_command(args) -> int:
    """Identidad del worker: CLI > entorno > archivo de configuración"""
    from run_config import parse_config
    from runtime import cmd_worker, validate_run_id

    run_cfg = None
    if args.config:
        try:
            run_cfg = parse_config(args.config)
        except ConfigurationError as e:
            print(f"❌ Error de configuración: {str(e)}")
            return EXIT_USAGE

    addr = args.addr or os.getenv('BROKER_ADDR') or (run_cfg.broker_addr if run_cfg else BROKER_ADDR)
    worker_id = args.id or WORKER_ID or default_worker_id()
    run_id = args.run_id or RUN_ID or (run_cfg.run_id if run_cfg else None)
    if not run_id:
        print("❌ Error: falta run_id (--run-id, RUN_ID o --config)")
        return EXIT_USAGE
    try:
        parse_addr(addr)
        validate_run_id(run_id)
    except (ConfigurationError, CorrelationParseError) as e:
        print(f"❌ Error de configuración: {str(e)}")
        return EXIT_USAGE
    return cmd_worker(addr, worker_id, run_id)


def run_command(args) -> int:
    if args.command == 'broker':
        from broker import cmd_broker
        try:
            parse_addr(args.addr)
        except ConfigurationError as e:
            print(f"❌ Error de configuración: {str(e)}")
            return EXIT_USAGE
        return cmd_broker(args.addr)
    if args.command == 'worker':
        return run_worker_command(args)
    if args.command == 'master':
        from master import cmd_master
        return cmd_master(args.config, run_id=args.run_id or RUN_ID,
                          broker_addr=args.addr or os.getenv('BROKER_ADDR'))
    if args.command == 'local':
        from local_cluster import cmd_local
        return cmd_local(args.config, args.add_worker_file)
    if args.command == 'bench':
        from bench import cmd_bench
        return cmd_bench(args.config, args.workers, args.output)
    return EXIT_USAGE


def main(argv=None) -> int:
    """Función principal"""
    args = build_parser().parse_args(argv)
    set_process_role(args.command)
    logger.info(f"Comando '{args.command}' iniciado (PID {os.getpid()})")
    try:
        code = run_command(args)
    except KeyboardInterrupt:
        print("\n\n⚠️  Interrupción detectada. Saliendo...")
        logger.info("Proceso interrumpido por el usuario")
        code = EXIT_FAILURE
    except Exception as e:
        print(f"\n❌ Error inesperado: {str(e)}")
        logger.error(f"Error en main: {str(e)}", exc_info=True)
        code = EXIT_FAILURE
    logger.info(f"Comando '{args.command}' terminado con código {code}")
    return code


if __name__ == "__main__":
    sys.exit(main())
