import sys
from threading import Thread


class CustomThread(Thread):
    def __init__(self, group=None, target=None, name=None, args=(), kwargs=None):
        Thread.__init__(self, group, target, name, args, kwargs or {})
        self._return = None
        self._exc_info = None  # captures exception if thread crashes

    def run(self):
        if self._target is not None:
            try:
                self._return = self._target(*self._args, **self._kwargs)
            except Exception:
                self._exc_info = sys.exc_info()

    def join(self):
        Thread.join(self)
        if self._exc_info is not None:
            raise self._exc_info[1].with_traceback(self._exc_info[2])
        return self._return


def chunk_ranges(count, workers):
    """Split ``range(count)`` into at most ``workers`` contiguous (start, stop) blocks."""
    workers = max(1, min(int(workers), count)) if count else 1
    bounds = [round(i * count / workers) for i in range(workers + 1)]
    return [(bounds[i], bounds[i + 1]) for i in range(workers) if bounds[i] < bounds[i + 1]]


def run_chunked(func, count, workers):
    """Run ``func(start, stop)`` over contiguous blocks and return the results in block order.

    Each block runs on its own CustomThread; a failure in any block is
    re-raised on join, so the caller sees the first block's exception.
    """
    ranges = chunk_ranges(count, workers)
    if len(ranges) <= 1:
        return [func(start, stop) for start, stop in ranges]
    threads = [CustomThread(target=func, args=(start, stop)) for start, stop in ranges]
    for thread in threads:
        thread.start()
    return [thread.join() for thread in threads]
