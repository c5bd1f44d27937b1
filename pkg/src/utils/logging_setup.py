"""Logging configuration with Rich console support"""
import logging

from rich.console import Console
from rich.logging import RichHandler
from rich.traceback import install

console = Console(stderr=True)
install(show_locals=False)


def setup_logging(level=logging.INFO, verbose: bool = False):
    """Setup logging with rich formatting; `verbose` forces DEBUG"""
    if isinstance(level, str):
        level = logging.getLevelName(level.upper())
    logging.basicConfig(
        level=logging.DEBUG if verbose else level,
        format="%(name)s | %(message)s",
        handlers=[RichHandler(console=console, show_path=False, rich_tracebacks=True)],
        force=True,
    )
    return logging.getLogger("graphvae")
