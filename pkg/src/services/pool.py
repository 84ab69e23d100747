"""
Worker Pool Service
Fans independent jobs out to worker processes and assembles results in submission order.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence, TypeVar

from tqdm import tqdm

logger = logging.getLogger(__name__)

J = TypeVar("J")
R = TypeVar("R")

# Upper bound on processes regardless of the requested worker count
MAX_WORKERS = 64


def resolve_workers(requested: int) -> int:
    """Clamp a worker request to [1, MAX_WORKERS]."""
    return max(1, min(int(requested), MAX_WORKERS))


def run_ordered(
    fn: Callable[[J], R],
    jobs: Sequence[J],
    workers: int = 1,
    desc: str = "jobs",
    progress: bool = True,
) -> list[R]:
    """
    Run fn over jobs and return results in the order of jobs.

    Args:
        fn: picklable top-level callable
        jobs: job arguments
        workers: process count; 1 runs inline
        desc: progress bar label
        progress: show a tqdm bar

    Returns:
        list of results, results[i] = fn(jobs[i])
    """
    workers = resolve_workers(workers)
    logger.info(f"Running {len(jobs)} {desc} job(s) on {workers} worker(s)")

    if workers == 1 or len(jobs) <= 1:
        return [fn(job) for job in tqdm(jobs, desc=desc, disable=not progress)]

    with ProcessPoolExecutor(max_workers=workers) as executor:
        results = list(tqdm(executor.map(fn, jobs), total=len(jobs), desc=desc, disable=not progress))
    logger.info(f"Finished {len(jobs)} {desc} job(s)")
    return results
