import sys

from app.cli.commands import run


def main():
    """Main entry point for the idfabric command line."""
    return run(sys.argv[1:])


if __name__ == "__main__":
    sys.exit(main())
