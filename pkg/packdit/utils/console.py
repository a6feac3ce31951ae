"""Single rich console shared by the CLI, trainers and reports."""

from rich.console import Console

console = Console()


def set_quiet(quiet: bool) -> None:
    """Silence (or re-enable) all console output."""
    console.quiet = quiet
