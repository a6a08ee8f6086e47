# main.py
import logging

from config.settings import EVAL_SETTINGS
from opeval.cli.commands import cli

if __name__ == "__main__":
    logging.basicConfig(
        level=getattr(logging, EVAL_SETTINGS["log_level"]),
        format="%(asctime)s - %(levelname)s - %(message)s",
    )

    cli(prog_name="opeval")
