"""Rich renderings of run records, benchmark rows and spectra."""

from collections.abc import Sequence
from typing import Any

from rich.console import Group
from rich.panel import Panel
from rich.table import Table


def create_rich_renderable(value: Any, max_length: int = -1) -> Any:
    """Render a scalar, list or dict as a string or a nested key/value table."""
    if isinstance(value, dict):
        table = Table(
            show_header=False,
            border_style="bright_blue",
            show_lines=False,
        )
        table.add_column("Key", style="cyan")
        table.add_column("Value", style="green")
        for k, v in value.items():
            table.add_row(str(k), create_rich_renderable(v, max_length))
        return table
    if isinstance(value, float):
        return f"{value:.6g}"
    if isinstance(value, list | tuple):
        rendered = [create_rich_renderable(item, max_length) for item in value]
        if all(isinstance(item, str) for item in rendered):
            s = ", ".join(rendered)
        else:
            return Group(*rendered)
    else:
        s = str(value).strip()
    if max_length > 0 and len(s) > max_length:
        omitted = len(s) - max_length
        s = s[:max_length] + f"[bold bright_yellow]...(+{omitted}chars)[/bold bright_yellow]"
    return s


def format_summary(summary: dict[str, Any], title: str, max_length: int = 120) -> Panel:
    """A two-column table of a run summary, wrapped in a panel."""
    table = Table(
        show_lines=True,
        show_header=True,
        header_style="bold green",
        title=title,
        title_style="bold blue",
        border_style="bright_blue",
    )
    table.add_column("Quantity", style="cyan")
    table.add_column("Value", style="green")
    for key, value in summary.items():
        table.add_row(key, create_rich_renderable(value, max_length))
    return Panel(table, title="rschwarz", title_align="left", border_style="blue", padding=(1, 2))


def format_bench(rows: Sequence[dict[str, Any]], vanilla_total: float) -> Panel:
    """Benchmark rows with the online speedup over the vanilla total."""
    table = Table(
        show_header=True,
        header_style="bold green",
        title="Offline / online timings",
        title_style="bold blue",
        border_style="bright_blue",
    )
    for column in ("method", "k", "offline_s", "online_s", "total_s", "rel_error", "speedup"):
        table.add_column(column, justify="right" if column != "method" else "left")
    for row in rows:
        speedup = vanilla_total / row["online_s"] if row["online_s"] > 0 else float("inf")
        table.add_row(
            row["method"],
            "" if row["k"] is None else str(row["k"]),
            f"{row['offline_s']:.4f}",
            f"{row['online_s']:.4f}",
            f"{row['total_s']:.4f}",
            f"{row['final_rel_error']:.3e}",
            "" if row["method"] == "vanilla" else f"{speedup:.1f}x",
        )
    return Panel(table, title="rschwarz bench", title_align="left", border_style="blue")
