"""Arguments and helpers shared by the subcommands."""

import argparse
import json
import sys

import yaml

from finepot.classes.archive import RunArchive
from finepot.classes.environment import FinepotEnvironment
from finepot.classes.errors import ConfigError
from finepot.core.dumps import to_jsonable
from finepot.scenarios.runner import run


def yaml_value(text: str):
    """argparse type: a YAML flow value such as ``{ball: {center: [0, 0], radius: 1}}``."""
    try:
        return yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise argparse.ArgumentTypeError(f"cannot parse {text!r}: {e}") from e


def add_run_arguments(parser: argparse.ArgumentParser, env: FinepotEnvironment) -> None:
    parser.add_argument('--out', default=env.get_out_dir(),
                        help="output directory (default: FINEPOT_OUT, %(default)s)")
    parser.add_argument('--seed', type=int, default=None, help="override the scenario seed")
    parser.add_argument('--jobs', type=int, default=env.get_jobs(),
                        help="parallel workers for independent tasks (default: %(default)s)")
    parser.add_argument('--set', dest='overrides', action='append', default=[], metavar='KEY=VALUE',
                        help="override a scenario entry by dotted path, value parsed as YAML")
    parser.add_argument('--archive', default=env.get_archive_uri(), metavar='URI',
                        help="SQLAlchemy URL of a run archive (default: FINEPOT_ARCHIVE_URI)")


def add_domain_arguments(parser: argparse.ArgumentParser) -> None:
    """Grid flags of the single-task shortcuts."""
    parser.add_argument('--dim', type=int, default=2)
    parser.add_argument('--bounds', type=float, nargs=2, default=[-1.0, 1.0], metavar=('LO', 'HI'))
    parser.add_argument('--resolution', type=int, default=65, help="nodes per axis")
    parser.add_argument('--p', type=float, default=2.0)
    parser.add_argument('--weight', type=yaml_value, default=None,
                        help="weight spec, e.g. '{kind: power, alpha: 0.5}'")


def shortcut_scenario(args, name: str, task: dict, env: FinepotEnvironment) -> dict:
    """A one-task scenario from the shortcut flags; ``args.seed`` wins over FINEPOT_SEED."""
    domain = {'dim': args.dim, 'bounds': list(args.bounds), 'resolution': args.resolution, 'p': args.p}
    if args.weight is not None:
        domain['weight'] = args.weight
    return {
        'name': name,
        'seed': args.seed if args.seed is not None else env.get_seed(),
        'domain': domain,
        'tasks': [{'name': name, **{k: v for k, v in task.items() if v is not None}}],
    }


def open_archive(uri: str | None) -> RunArchive | None:
    if not uri:
        return None
    archive = RunArchive(uri)
    archive.connect()
    return archive


def execute(args, config) -> int:
    """Run a scenario with the common flags, print the task summary and return the exit code."""
    if args.jobs < 1:
        raise ConfigError("--jobs must be at least 1")
    archive = open_archive(args.archive)
    report = run(config, args.out, overrides=args.overrides, seed=args.seed, jobs=args.jobs, archive=archive)
    if report.error is not None:
        print(json.dumps(to_jsonable(report.error), indent=2, sort_keys=True), file=sys.stderr)
    for task in report.tasks:
        summary = {key: task.result[key] for key in SUMMARY_KEYS if key in task.result}
        print(f"  {task.name:<24} {task.status:<8} {json.dumps(to_jsonable(summary), sort_keys=True)}")
        for failure in task.failures:
            print(f"    expectation failed: {failure}")
    return report.exit_code


SUMMARY_KEYS = ('value', 'verdict', 'aggregate', 'energy', 'passed', 'holds', 'oracle_error',
                'contact_count', 'limit_estimate', 'boundary_count', 'count', 'total', 'modulus')
