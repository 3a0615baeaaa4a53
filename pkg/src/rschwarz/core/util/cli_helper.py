"""Version string, consoles and the startup banner."""

from importlib.metadata import PackageNotFoundError, version

from rich.console import Console
from rich.text import Text

try:
    __version__ = version("reduced-schwarz")
except PackageNotFoundError:
    __version__ = "0.1.0"

console = Console()
err_console = Console(stderr=True)


def display_banner():
    """Display the solver banner."""
    banner_text = Text(
        f"""
╭━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━╮
│  reduced schwarz  ·  v{__version__: <8} │
│  offline RSVD  ▸  online sweep │
╰━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━━╯
""",
        justify="center",
        style="bold orange3",
    )
    console.print(banner_text)
