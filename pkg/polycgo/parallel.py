"""Thread-pool helpers shared by the sweeps"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from polycgo.settings import RuntimeSettings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


def parallel_map(
  fn: Callable[[T], R], items: Iterable[T], max_workers: Optional[int] = None
) -> List[R]:
  """
  Apply `fn` to every item on a thread pool.

  Results come back in input order, so any reduction over them is
  deterministic regardless of scheduling.
  """
  work = list(items)
  workers = max_workers or RuntimeSettings.THREADS
  if workers <= 1 or len(work) <= 1:
    return [fn(item) for item in work]
  logger.debug(f"Dispatching {len(work)} items on {workers} threads")
  with ThreadPoolExecutor(max_workers=min(workers, len(work))) as executor:
    return list(executor.map(fn, work))
