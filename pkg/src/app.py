"""
flipscope - Core Application Class
"""

import argparse
import importlib
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from pydantic import ValidationError

from services.config import load_run_config
from services.errors import ConfigError, FlipscopeError

logger = logging.getLogger(__name__)

COMMAND_CATEGORIES = ["winding", "orbits", "bifurcations", "geometry"]

# Parser attributes that are not RunConfig keys
_META_KEYS = {"command", "handler", "config", "verbose", "quiet"}


class FlipscopeApp:
    def __init__(self):
        self.parser = argparse.ArgumentParser(
            prog="flipscope",
            description="Numerical exploration of the inclination-flip unfolding.",
        )
        self.parser.add_argument("--config", type=Path, help="flat key = value settings file")
        verbosity = self.parser.add_mutually_exclusive_group()
        verbosity.add_argument("--verbose", action="store_true", help="log at DEBUG level")
        verbosity.add_argument("--quiet", action="store_true", help="log warnings and errors only")
        self.subparsers = self.parser.add_subparsers(dest="command", required=True)
        self._load_commands()

    def _load_commands(self):
        """Auto-load command packages from the commands directory"""
        commands_dir = Path(__file__).parent / "commands"

        for category in COMMAND_CATEGORIES:
            init_file = commands_dir / category / "__init__.py"
            if not init_file.exists() or "def setup" not in init_file.read_text():
                continue

            module_path = f"commands.{category}"
            try:
                module = importlib.import_module(module_path)
                module.setup(self.subparsers)
                logger.debug(f"Loaded command package: {module_path}")
            except Exception as e:
                logger.error(f"Failed to load {module_path}: {e}")

    def run(self, argv: Optional[Sequence[str]] = None) -> int:
        """
        Parse argv, build the run configuration and dispatch to the command.

        Returns:
            0 on success, 1 on a domain error, 2 on a configuration or usage error
        """
        try:
            args = self.parser.parse_args(argv)
        except SystemExit as e:
            return e.code if isinstance(e.code, int) else 2

        if args.verbose:
            logging.getLogger().setLevel(logging.DEBUG)
        elif args.quiet:
            logging.getLogger().setLevel(logging.WARNING)

        cli = {key: value for key, value in vars(args).items() if key not in _META_KEYS}
        try:
            config = load_run_config(cli, args.config)
            return args.handler(config) or 0
        except (ConfigError, ValidationError) as e:
            message = e.describe() if isinstance(e, ConfigError) else str(e)
            print(message, file=sys.stderr)
            return 2
        except FlipscopeError as e:
            logger.debug(f"{args.command} failed", exc_info=True)
            print(e.describe(), file=sys.stderr)
            return 1

    @staticmethod
    def setup_logging():
        """Setup structured logging"""
        logging.basicConfig(
            level=logging.INFO,
            format="%(asctime)s | %(levelname)s | %(name)s | %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S",
        )


# Setup logging on import
FlipscopeApp.setup_logging()
