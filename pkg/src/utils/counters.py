import threading
from enum import Enum, auto
from typing import Dict

from ..singleton.singleton import SingletonMeta


class CounterTypes(Enum):
    SKIPPED_IMAGES = auto()
    SALIENCY_CACHE_HITS = auto()
    SALIENCY_BACKEND_CALLS = auto()
    RESIZED_CACHE_MAPS = auto()
    EMPTY_MASKS = auto()
    SKIPPED_MINER_CLASSES = auto()
    GENERATED_SAMPLES = auto()
    K_OVER_BUDGET = auto()


class Counters(metaclass=SingletonMeta):
    """Process-wide tallies of recoverable data problems and cache activity."""

    types = CounterTypes

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self.counters: Dict[CounterTypes, int] = {}
        self.reinit()

    def reinit(self):
        with self._lock:
            for counter_type in CounterTypes:
                self.counters[counter_type] = 0

    def increase(self, counter_type: CounterTypes, amount: int = 1):
        if counter_type not in self.counters:
            raise ValueError(f"Unhandled counter type: {counter_type.name}")
        with self._lock:
            self.counters[counter_type] += amount

    def get(self, counter_type: CounterTypes) -> int:
        if counter_type not in self.counters:
            raise ValueError(f"Unhandled counter type: {counter_type.name}")
        return self.counters[counter_type]

    def snapshot(self) -> Dict[str, int]:
        """Non-zero counters keyed by lower-case name, for summaries."""
        with self._lock:
            return {
                counter_type.name.lower(): value
                for counter_type, value in self.counters.items()
                if value
            }
