from finepot.commands.common import (add_domain_arguments, add_run_arguments, execute, shortcut_scenario,
                                     yaml_value)


def init_command(subparsers, env):
    """Register `finepot wiener`"""
    parser = subparsers.add_parser('wiener', help="dyadic Wiener profile and thinness verdict of E at x")
    add_domain_arguments(parser)
    parser.add_argument('--E', type=yaml_value, required=True)
    parser.add_argument('--x', type=float, nargs='+', required=True)
    parser.add_argument('--R0', type=float, required=True)
    parser.add_argument('--K', type=int, default=None)
    parser.add_argument('--delta', type=float, default=None)
    parser.add_argument('--tau', type=float, default=None)
    add_run_arguments(parser, env)

    def handle(args) -> int:
        task = {'kind': 'wiener', 'E': args.E, 'x': args.x, 'R0': args.R0, 'K': args.K,
                'delta': args.delta, 'tau': args.tau}
        return execute(args, shortcut_scenario(args, 'wiener', task, env))

    parser.set_defaults(handler=handle)
    return parser
