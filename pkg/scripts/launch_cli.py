import sys

from comink.app.cli import main


def cli_manager():

    # Arguments, configuration and logging are handled by main
    sys.exit(main(sys.argv[1:]))


if __name__ == "__main__":
    cli_manager()
