import asyncio
import logging
from typing import Callable, Iterable, TypeVar

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


async def gather_in_threads(
    fn: Callable[[T], R], items: Iterable[T], workers: int
) -> list[R]:
    """Run ``fn`` over ``items`` in worker threads, results in input order."""
    semaphore = asyncio.Semaphore(max(1, workers))

    async def run_one(item: T) -> R:
        async with semaphore:
            return await asyncio.to_thread(fn, item)

    return await asyncio.gather(*(run_one(item) for item in items))


def map_ordered(fn: Callable[[T], R], items: Iterable[T], workers: int = 1) -> list[R]:
    """Blocking wrapper around :func:`gather_in_threads`.

    ``fn`` must not raise; callers turn failures into values first.
    """
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    logger.debug(f"Dispatching {len(items)} tasks across {workers} workers")
    return asyncio.run(gather_in_threads(fn, items, workers))
