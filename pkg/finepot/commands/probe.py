from finepot.commands.common import (add_domain_arguments, add_run_arguments, execute, shortcut_scenario,
                                     yaml_value)


def init_command(subparsers, env):
    """Register `finepot probe`"""
    parser = subparsers.add_parser('probe', help="raw and trimmed annulus oscillation of a field at z")
    add_domain_arguments(parser)
    parser.add_argument('--field', type=yaml_value, required=True)
    parser.add_argument('--z', type=float, nargs='+', required=True)
    parser.add_argument('--R0', type=float, required=True)
    parser.add_argument('--trim', type=float, default=0.05)
    parser.add_argument('--U', type=yaml_value, default=None, help="restrict the annuli to this set")
    parser.add_argument('--continuity', action='store_true', help="also judge fine continuity at z")
    add_run_arguments(parser, env)

    def handle(args) -> int:
        task = {'kind': 'continuity' if args.continuity else 'probe', 'field': args.field, 'z': args.z,
                'R0': args.R0, 'trim': args.trim, 'U': args.U}
        return execute(args, shortcut_scenario(args, 'probe', task, env))

    parser.set_defaults(handler=handle)
    return parser
