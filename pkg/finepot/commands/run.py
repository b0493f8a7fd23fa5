from finepot.commands.common import add_run_arguments, execute
from finepot.classes.errors import ConfigError


def init_command(subparsers, env):
    """Register `finepot run`"""
    parser = subparsers.add_parser('run', help="run a scenario file or gallery scenario")
    parser.add_argument('scenario', nargs='?', help="path or gallery name")
    parser.add_argument('--config', help="path or gallery name (alternative to the positional argument)")
    add_run_arguments(parser, env)

    def handle(args) -> int:
        config = args.config or args.scenario
        if not config:
            raise ConfigError("no scenario given; use `finepot list` to see the gallery")
        print(f"Loading scenario {config}...")
        return execute(args, config)

    parser.set_defaults(handler=handle)
    return parser
