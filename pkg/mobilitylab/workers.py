import hashlib
import logging
import os
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import numpy as np

from .errors import ParameterError

__all__ = ("GENERATOR_ID", "JOBS_ENV", "derive_seed", "make_rng", "map_ordered", "resolve_jobs")

logger = logging.getLogger(__name__)

#: Recorded in every output so runs can be replayed on another platform.
GENERATOR_ID = "numpy.random.Philox-4x64-10"
JOBS_ENV = "MOBILITYLAB_JOBS"

T = TypeVar("T")
R = TypeVar("R")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def derive_seed(master: int, name: str, index: int = 0) -> int:
    """Derive a child seed from ``(master, name, index)``.

    The digest is SHA-256 over ``"{master}:{name}:{index}"``; the first eight bytes are read
    big-endian and masked to 63 bits.
    """
    digest = hashlib.sha256(f"{master}:{name}:{index}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


def resolve_jobs(jobs: Optional[int] = None) -> int:
    if jobs is None:
        env_value = os.environ.get(JOBS_ENV)
        if env_value:
            try:
                jobs = int(env_value)
            except ValueError:
                raise ParameterError(f"{JOBS_ENV} must be an integer, got '{env_value}'")
        else:
            jobs = os.cpu_count() or 1
    if jobs < 1:
        raise ParameterError(f"jobs must be >= 1, got {jobs}")
    return jobs


def map_ordered(
    fn: Callable[[T], R],
    items: Iterable[T],
    jobs: Optional[int] = 1,
    kind: str = "thread",
) -> List[R]:
    """Apply ``fn`` to every item, returning results in input order for any job count."""
    items = list(items)
    jobs = resolve_jobs(jobs)
    if jobs == 1 or len(items) <= 1:
        return [fn(item) for item in items]

    if kind == "thread":
        pool_cls = ThreadPoolExecutor
    elif kind == "process":
        pool_cls = ProcessPoolExecutor
    else:
        raise ParameterError(f"Unknown pool kind '{kind}'")

    workers = min(jobs, len(items))
    logger.debug("mapping %d items over %d %s workers", len(items), workers, kind)
    with pool_cls(max_workers=workers) as pool:
        return list(pool.map(fn, items))
