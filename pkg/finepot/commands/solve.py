from finepot.commands.common import (add_domain_arguments, add_run_arguments, execute, shortcut_scenario,
                                     yaml_value)


def init_command(subparsers, env):
    """Register `finepot solve`"""
    parser = subparsers.add_parser('solve', help="obstacle problem, or Dirichlet problem without --psi")
    add_domain_arguments(parser)
    parser.add_argument('--U', type=yaml_value, required=True)
    parser.add_argument('--f', type=yaml_value, default=0.0, help="boundary data field expression")
    parser.add_argument('--psi', type=yaml_value, default=None, help="obstacle field expression")
    parser.add_argument('--tol', type=float, default=None)
    parser.add_argument('--oracle', type=yaml_value, default=None,
                        help="field expression to compare the solution with")
    parser.add_argument('--rtol', type=float, default=0.02)
    parser.add_argument('--dump', nargs='*', default=['csv', 'pgm'], choices=['csv', 'pgm', 'binary'])
    add_run_arguments(parser, env)

    def handle(args) -> int:
        task = {'kind': 'solve', 'U': args.U, 'f': args.f, 'psi': args.psi, 'tol': args.tol, 'dump': args.dump}
        if args.oracle is not None:
            task['expect'] = {'oracle': {'field': args.oracle, 'region': args.U, 'rtol': args.rtol}}
        return execute(args, shortcut_scenario(args, 'solve', task, env))

    parser.set_defaults(handler=handle)
    return parser
