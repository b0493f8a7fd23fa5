import sys


def main():
    from finepot.app import main as run_cli
    return run_cli(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
