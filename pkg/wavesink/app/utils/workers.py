import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, TypeVar

from app.core.config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def ordered_map(func: Callable[[T], R], jobs: Iterable[T], workers: int | None = None) -> list[R]:
    """Run independent jobs, results in input order regardless of worker count.

    `func` must be a module-level function so worker processes can import it.
    """
    jobs = list(jobs)
    workers = settings.WORKERS if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    logger.info(f"Dispatching {len(jobs)} jobs to {workers} workers")
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(func, jobs))
