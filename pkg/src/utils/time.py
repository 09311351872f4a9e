import time
from contextlib import contextmanager
from typing import Iterator, List

from ..singleton.singleton import SingletonMeta


class TimeUtils(metaclass=SingletonMeta):
    def __init__(self):
        pass

    def format_time_m_s(self, input_time: float) -> str:
        """Formats a duration in seconds as `H h M m S s`, dropping leading zero units."""
        hours, rest = divmod(int(input_time), 3600)
        minutes, seconds = divmod(rest, 60)

        if hours > 0:
            return f"{hours} h {minutes} m {seconds} s"
        if minutes > 0:
            return f"{minutes} m {seconds} s"
        return f"{seconds} s"

    def format_time_h_m_s(self, input_time: float) -> str:
        return time.strftime("%H:%M:%S", time.localtime(input_time))

    @contextmanager
    def stopwatch(self) -> Iterator[List[float]]:
        """
        Measures the wall time of a `with` block. The yielded list receives the
        elapsed seconds as its single element once the block exits.
        """
        elapsed: List[float] = []
        start = time.perf_counter()
        try:
            yield elapsed
        finally:
            elapsed.append(time.perf_counter() - start)
