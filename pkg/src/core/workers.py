"""
Worker fan-out for embarrassingly parallel rollouts.
"""

from typing import Callable, List, Sequence, TypeVar

from tqdm.contrib.concurrent import process_map

T = TypeVar("T")
R = TypeVar("R")


def fan_out(worker: Callable[[T], R], tasks: Sequence[T], jobs: int = 1, desc: str = "") -> List[R]:
    """
    Run worker over tasks, in a process pool when jobs > 1.

    Results come back in task order either way, so output never depends
    on the worker count.

    Args:
        worker: Picklable top-level function
        tasks: Task arguments
        jobs: Maximum worker processes
        desc: Progress-bar label

    Returns:
        Worker results in task order
    """
    if jobs <= 1 or len(tasks) <= 1:
        return [worker(task) for task in tasks]
    chunksize = max(1, len(tasks) // (4 * jobs))
    return process_map(worker, tasks, max_workers=jobs, chunksize=chunksize, desc=desc, leave=False)
