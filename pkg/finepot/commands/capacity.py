from finepot.commands.common import (add_domain_arguments, add_run_arguments, execute, shortcut_scenario,
                                     yaml_value)


def init_command(subparsers, env):
    """Register `finepot capacity`"""
    parser = subparsers.add_parser('capacity', help="variational capacity cp(E, A) or Sobolev capacity Cp(E)")
    add_domain_arguments(parser)
    parser.add_argument('--E', type=yaml_value, required=True, help="geometry expression of the condenser plate")
    parser.add_argument('--A', type=yaml_value, default=None, help="ambient set; omit for the Sobolev capacity")
    parser.add_argument('--radial', type=float, nargs=2, default=None, metavar=('r', 'R'),
                        help="compare with the radial closed form for B(0,r) in B(0,R)")
    parser.add_argument('--rtol', type=float, default=0.05)
    parser.add_argument('--dump', nargs='*', default=[], choices=['csv', 'pgm', 'binary'])
    add_run_arguments(parser, env)

    def handle(args) -> int:
        task = {'kind': 'capacity' if args.A is not None else 'sobolev_capacity',
                'E': args.E, 'A': args.A, 'dump': args.dump}
        if args.radial is not None:
            task['expect'] = {'radial': {'r': args.radial[0], 'R': args.radial[1], 'rtol': args.rtol}}
        return execute(args, shortcut_scenario(args, 'capacity', task, env))

    parser.set_defaults(handler=handle)
    return parser
