import json

from finepot.commands.common import open_archive
from finepot.classes.errors import ConfigError


def init_command(subparsers, env):
    """Register `finepot history`"""
    parser = subparsers.add_parser('history', help="list runs stored in the archive")
    parser.add_argument('--archive', default=env.get_archive_uri(), metavar='URI')
    parser.add_argument('--limit', type=int, default=20)
    parser.add_argument('--run', type=int, default=None, help="show one run with its tasks")

    def handle(args) -> int:
        archive = open_archive(args.archive)
        if archive is None:
            raise ConfigError("no archive configured; pass --archive or set FINEPOT_ARCHIVE_URI")
        if args.run is not None:
            run = archive.get_run(args.run)
            if run is None:
                raise ConfigError(f"run {args.run} not found in {args.archive}")
            print(json.dumps(run, indent=2, sort_keys=True))
            return 0
        runs = archive.list_runs(args.limit)
        if not runs:
            print("No archived runs.")
        for run in runs:
            print(f"{run['id']:>5}  {run['started']}  {run['scenario']:<24} exit={run['exit_code']} "
                  f"tasks={run['tasks']} {run['wall_time']:.1f} s")
        return 0

    parser.set_defaults(handler=handle)
    return parser
