from finepot.commands.common import (add_domain_arguments, add_run_arguments, execute, shortcut_scenario,
                                     yaml_value)


def init_command(subparsers, env):
    """Register `finepot fine-check`"""
    parser = subparsers.add_parser('fine-check', help="sampled fine openness of V, or the fine boundary of E")
    add_domain_arguments(parser)
    target = parser.add_mutually_exclusive_group(required=True)
    target.add_argument('--V', type=yaml_value, help="set to test for fine openness")
    target.add_argument('--boundary-of', dest='E', type=yaml_value, help="set whose fine boundary is sampled")
    parser.add_argument('--R0', type=float, default=None)
    parser.add_argument('--count', type=int, default=16, help="stratified sample size")
    parser.add_argument('--all', action='store_true', help="evaluate every node")
    parser.add_argument('--points', type=yaml_value, default=None, help="explicit points, e.g. '[[0, 0.1]]'")
    add_run_arguments(parser, env)

    def handle(args) -> int:
        sample = {'count': args.count, 'seed': args.seed or 0, 'points': args.points}
        if args.all:
            sample['mode'] = 'all'
        if args.V is not None:
            task = {'kind': 'fine_check', 'V': args.V}
        else:
            task = {'kind': 'fine_boundary', 'E': args.E, 'dump': ['pgm']}
        task.update({'R0': args.R0, 'sample': sample})
        return execute(args, shortcut_scenario(args, 'fine_check', task, env))

    parser.set_defaults(handler=handle)
    return parser
