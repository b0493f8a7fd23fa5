import textwrap

from finepot.scenarios.scenario import gallery


def list_scenarios() -> str:
    """Gallery listing: one name per paragraph with its wrapped description."""
    lines = []
    for name, description, path in gallery():
        lines.append(f"{name}  ({path.name})")
        lines.extend(textwrap.wrap(description, width=76, initial_indent="    ", subsequent_indent="    "))
    return "\n".join(lines)


def init_command(subparsers, env):
    """Register `finepot list`"""
    parser = subparsers.add_parser('list', help="list the bundled scenario gallery")

    def handle(args) -> int:
        print(list_scenarios())
        return 0

    parser.set_defaults(handler=handle)
    return parser
