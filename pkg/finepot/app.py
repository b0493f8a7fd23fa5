import argparse
import json
import logging
import sys

import finepot
from finepot.classes.environment import FinepotEnvironment
from finepot.classes.errors import FinepotError
from finepot.commands.capacity import init_command as init_capacity
from finepot.commands.fine_check import init_command as init_fine_check
from finepot.commands.history import init_command as init_history
from finepot.commands.listing import init_command as init_listing
from finepot.commands.paste import init_command as init_paste
from finepot.commands.probe import init_command as init_probe
from finepot.commands.run import init_command as init_run
from finepot.commands.solve import init_command as init_solve
from finepot.commands.verify import init_command as init_verify
from finepot.commands.wiener import init_command as init_wiener

COMMANDS = (init_run, init_listing, init_capacity, init_wiener, init_fine_check, init_solve,
            init_verify, init_paste, init_probe, init_history)


def build_parser(env: FinepotEnvironment) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog='finepot',
                                     description="Nonlinear fine potential theory on weighted grids.")
    parser.add_argument('--version', action='version', version=f"finepot {finepot.__version__}")
    parser.add_argument('-v', '--verbose', action='store_true', help="debug logging")
    subparsers = parser.add_subparsers(dest='command', required=True)

    # Register subcommands
    for init_command in COMMANDS:
        init_command(subparsers, env)
    return parser


def configure_logging(level: str) -> None:
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s", force=True)


def _report_error(error: FinepotError) -> int:
    print(json.dumps(error.to_dict(), indent=2, sort_keys=True), file=sys.stderr)
    return error.exit_code


def main(argv: list[str] | None = None) -> int:
    try:
        env = FinepotEnvironment()
    except FinepotError as e:
        return _report_error(e)

    parser = build_parser(env)
    args = parser.parse_args(argv)
    configure_logging('DEBUG' if args.verbose else env.get_log_level())

    try:
        return args.handler(args)
    except FinepotError as e:
        return _report_error(e)


if __name__ == '__main__':
    sys.exit(main())
