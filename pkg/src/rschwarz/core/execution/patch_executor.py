"""Per-patch work distribution."""

from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from typing import TypeVar

from rschwarz.config import MAX_WORKERS
from rschwarz.core.logging.logging import get_logger

logger = get_logger("executor")

T = TypeVar("T")
R = TypeVar("R")


def map_patches(
    fn: Callable[[T], R],
    items: Sequence[T],
    max_workers: int | None = None,
) -> list[R]:
    """Apply `fn` to every item and return the results in item order.

    Runs inline for a single worker. Otherwise a thread pool is used; the
    dense and banded kernels release the GIL, so patches overlap in time.

    Args:
        fn: Per-patch work function.
        items: One entry per patch.
        max_workers: Pool width. Defaults to the MAX_WORKERS setting.

    Returns:
        The list of results, aligned with `items`.
    """
    workers = MAX_WORKERS if max_workers is None else max_workers
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug("Dispatching patch work", patches=len(items), workers=workers)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
