import os
import time
import logging
from contextlib import contextmanager

import numpy as np

log = logging.getLogger("rsrs")


@contextmanager
def log_level(level, name="stream"):
    stream_handler = next(h for h in log.handlers if h.name == name)
    current = stream_handler.level
    stream_handler.setLevel(level)
    try:
        yield
    finally:
        stream_handler.setLevel(current)


class Stopwatch(object):
    """Accumulating wall-clock timer

    >>> watch = Stopwatch()
    >>> with watch:
    ...     pass
    >>> watch.seconds >= 0
    True

    """

    def __init__(self):
        self.seconds = 0.0
        self._start = None

    def __enter__(self):
        self._start = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.seconds += time.perf_counter() - self._start
        self._start = None


def as_index(indices):
    """Return `indices` as a flat int64 array, empty input allowed"""
    return np.asarray(indices, dtype=np.int64).reshape(-1)


def thread_count():
    """Worker count for the parallel factorization mode

    Reads RSRS_THREADS, falling back to the cpu count.

    :rtype: int
    """
    value = os.getenv("RSRS_THREADS")
    if value:
        try:
            count = int(value)
        except ValueError:
            raise ValueError("RSRS_THREADS must be an integer")
        return max(1, count)
    return os.cpu_count() or 1


def counter_generator(seed, stream=0):
    """Philox bit generator keyed by (seed, stream)

    Philox is counter based, so every (seed, stream) pair addresses an
    independent, reproducible sequence.

    :param int seed: non-negative, below 2**64
    :param int stream: non-negative, below 2**64
    :rtype: numpy.random.Philox
    """
    if not (0 <= int(seed) < 1 << 64 and 0 <= int(stream) < 1 << 64):
        raise ValueError(f"seed and stream must fit in 64 bits, "
                         f"got {seed}, {stream}")
    key = np.array([int(seed), int(stream)], dtype=np.uint64)
    return np.random.Philox(key=key)
