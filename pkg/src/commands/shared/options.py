"""
Shared Options
Flag groups and helpers used by every command package.
"""

from enum import Enum
from pathlib import Path
from typing import Callable, TypeVar

from services.errors import ConfigError

E = TypeVar("E", bound=Enum)

MODEL_FLAGS = ["a", "b", "c", "beta", "gamma", "mu_tilde", "delta"]


def _flag(key: str) -> str:
    return "--" + key.replace("_", "-")


def add_model_options(parser) -> None:
    group = parser.add_argument_group("model")
    group.add_argument("--alpha", type=float)
    group.add_argument("--mu", type=float)
    for key in MODEL_FLAGS:
        group.add_argument(_flag(key), dest=key, type=float)


def add_integrator_options(parser) -> None:
    group = parser.add_argument_group("integrator")
    for key in ("rel_tol", "abs_tol", "max_step", "t_max"):
        group.add_argument(_flag(key), dest=key, type=float)


def add_range_options(parser, *keys: str) -> None:
    for key in keys:
        parser.add_argument(_flag(key), dest=key, type=float)


def register(subparsers, name: str, help_text: str, handler: Callable, workers: bool = False):
    """Add a subcommand carrying the model, integrator and output flags."""
    parser = subparsers.add_parser(name, help=help_text, description=help_text)
    parser.set_defaults(handler=handler)
    add_model_options(parser)
    add_integrator_options(parser)
    parser.add_argument("--out", type=Path, help="output CSV path")
    if workers:
        parser.add_argument("--workers", type=int, help="worker processes")
    return parser


def choice(enum: type[E], value: str, key: str) -> E:
    """Enum member for a config value; ConfigError lists the accepted values."""
    try:
        return enum(value)
    except ValueError:
        accepted = ", ".join(member.value for member in enum)
        raise ConfigError(f"{key}={value!r} is not one of: {accepted}") from None
