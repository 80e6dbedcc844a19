class ModlockError(Exception):
    """Base class for every error raised by the library."""


class UnknownLock(ModlockError):
    def __init__(self, lock: int, num_locks: int):
        super().__init__(f"lock {lock} outside configured range [0, {num_locks})")
        self.lock = lock


class DuplicateHolder(ModlockError):
    pass


class NotHolder(ModlockError):
    pass


class NoReleaseInProgress(ModlockError):
    pass


class DuplicateWaiter(ModlockError):
    pass


class WaiterCapacityExceeded(ModlockError):
    pass


class UnknownComponent(ModlockError):
    pass


class UnknownLink(ModlockError):
    pass


class UnknownRequest(ModlockError):
    pass


class CapacityExceeded(ModlockError):
    def __init__(self, component: str, needed: float, capacity: float):
        super().__init__(
            f"component '{component}' needs {needed:.0f} B but holds only {capacity:.0f} B"
        )
        self.component = component
        self.needed = needed
        self.capacity = capacity


class DuplicateRequest(ModlockError):
    pass


class InfeasibleAssignment(ModlockError):
    pass


class NonQuiescent(ModlockError):
    pass


class MalformedHistory(ModlockError):
    pass


class TooLarge(ModlockError):
    pass


class ConfigError(ModlockError):
    def __init__(self, message: str, field: str | None = None):
        text = f"{field}: {message}" if field else message
        super().__init__(text)
        self.field = field
