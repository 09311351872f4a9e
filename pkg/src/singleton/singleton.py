import threading


class SingletonMeta(type):
    """
    Metaclass that keeps a single shared instance per class. The logger
    registry, the file manager and the counters are created through it so every
    pipeline stage talks to the same object.
    """

    _instances = {}
    # Re-entrant: a singleton's __init__ may itself create another singleton.
    _lock = threading.RLock()

    def __call__(cls, *args, **kwargs):
        """
        Arguments are honoured only by the first call; later calls return the
        instance that already exists.
        """
        with cls._lock:
            if cls not in cls._instances:
                cls._instances[cls] = super().__call__(*args, **kwargs)
        return cls._instances[cls]
