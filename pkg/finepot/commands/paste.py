from finepot.commands.common import (add_domain_arguments, add_run_arguments, execute, shortcut_scenario,
                                     yaml_value)


def init_command(subparsers, env):
    """Register `finepot paste`"""
    parser = subparsers.add_parser('paste', help="paste u1 on U1 into u2 on U2 and verify the result")
    add_domain_arguments(parser)
    parser.add_argument('--U1', type=yaml_value, required=True)
    parser.add_argument('--U2', type=yaml_value, required=True)
    parser.add_argument('--u1', type=yaml_value, required=True)
    parser.add_argument('--u2', type=yaml_value, required=True)
    parser.add_argument('--mode', default='superminimizer', choices=['superminimizer', 'subminimizer', 'minimizer'])
    parser.add_argument('--n-tests', type=int, default=100)
    parser.add_argument('--dump', nargs='*', default=['csv'], choices=['csv', 'pgm', 'binary'])
    add_run_arguments(parser, env)

    def handle(args) -> int:
        task = {'kind': 'paste', 'U1': args.U1, 'U2': args.U2, 'u1': args.u1, 'u2': args.u2,
                'verify': args.mode, 'n_tests': args.n_tests, 'dump': args.dump}
        return execute(args, shortcut_scenario(args, 'paste', task, env))

    parser.set_defaults(handler=handle)
    return parser
