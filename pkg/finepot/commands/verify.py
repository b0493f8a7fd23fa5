from finepot.commands.common import (add_domain_arguments, add_run_arguments, execute, shortcut_scenario,
                                     yaml_value)


def init_command(subparsers, env):
    """Register `finepot verify`"""
    parser = subparsers.add_parser('verify', help="check that a field is a (super/sub)minimizer in U")
    add_domain_arguments(parser)
    parser.add_argument('--field', type=yaml_value, required=True,
                        help="field expression, e.g. '{file: u.csv}'")
    parser.add_argument('--U', type=yaml_value, required=True)
    parser.add_argument('--mode', default='superminimizer', choices=['superminimizer', 'subminimizer', 'minimizer'])
    parser.add_argument('--n-tests', type=int, default=100)
    parser.add_argument('--weak', action='store_true', help="check the weak-form sign instead")
    add_run_arguments(parser, env)

    def handle(args) -> int:
        task = {'kind': 'weak_form' if args.weak else 'verify', 'field': args.field, 'U': args.U,
                'mode': args.mode}
        if not args.weak:
            task['n_tests'] = args.n_tests
        return execute(args, shortcut_scenario(args, 'verify', task, env))

    parser.set_defaults(handler=handle)
    return parser
