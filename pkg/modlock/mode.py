import enum
import math
from collections import Counter
from dataclasses import dataclass

from .constants import DEFAULT_COUNTER_BYTES, DEFAULT_MODE_BITS
from .core import AcquireMode, GrantCount, LockId, LockMode, compatible
from .errors import UnknownLock
from .util import Stripes


@dataclass(frozen=True)
class ModeEntry:
    lock: LockId
    mode: LockMode
    grant_count: GrantCount


@dataclass(frozen=True)
class AcquireDecision:
    granted: bool
    new_count: GrantCount | None = None

    @classmethod
    def grant(cls, count: int) -> "AcquireDecision":
        return cls(True, GrantCount(count))

    @classmethod
    def enqueue(cls) -> "AcquireDecision":
        return cls(False)


class ValidationResult(enum.Enum):
    UPDATED = "updated"
    ABORTED = "aborted"


class ModeManager:
    """Per-lock mode and grant counter.

    State is held in arrays indexed by the dense lock id so its size is known
    up front. Each lock is guarded by one of a fixed set of striped mutexes.

    ``validate=False`` turns validate_and_update into an unconditional commit.
    It exists to show what breaks without grant counting and must never be
    used outside experiments.
    """

    def __init__(self, num_locks: int, *, validate: bool = True):
        self.num_locks = num_locks
        self.validate = validate
        self._modes = [LockMode.FREE] * num_locks
        self._counts = [0] * num_locks
        self._deferred = [0] * num_locks
        self._stripes = Stripes()
        self.granted_decisions: Counter[int] = Counter()
        self.promoted: Counter[int] = Counter()
        self.aborts = 0

    def _guard(self, lock: LockId):
        if not 0 <= lock < self.num_locks:
            raise UnknownLock(lock, self.num_locks)
        return self._stripes[lock]

    def decide_acquire(self, lock: LockId, requested: AcquireMode) -> AcquireDecision:
        with self._guard(lock):
            if compatible(self._modes[lock], requested):
                self._modes[lock] = LockMode.from_acquire(requested)
                self._counts[lock] += 1
                self.granted_decisions[lock] += 1
                return AcquireDecision.grant(self._counts[lock])
            self._deferred[lock] += 1
            return AcquireDecision.enqueue()

    def validate_and_update(
        self,
        lock: LockId,
        new_mode: LockMode,
        expected_count: int,
        increment_by: int,
    ) -> ValidationResult:
        with self._guard(lock):
            if self.validate and expected_count != self._counts[lock]:
                self.aborts += 1
                return ValidationResult.ABORTED
            self._modes[lock] = new_mode
            self._counts[lock] += increment_by
            self.promoted[lock] += increment_by
            return ValidationResult.UPDATED

    def pending_deferrals(self, lock: LockId, received: int) -> int:
        """Enqueue decisions the waiter manager has not seen yet."""
        with self._guard(lock):
            return self._deferred[lock] - received

    def read_entry(self, lock: LockId) -> ModeEntry:
        with self._guard(lock):
            return ModeEntry(lock, self._modes[lock], GrantCount(self._counts[lock]))

    def touched_locks(self) -> list[int]:
        # a deferral needs a prior grant, so granted locks cover every touched lock
        return sorted(self.granted_decisions)


def mode_footprint(
    num_locks: int,
    mode_bits: int = DEFAULT_MODE_BITS,
    counter_bytes: int = DEFAULT_COUNTER_BYTES,
    *,
    packed: bool = False,
) -> int:
    if packed:
        return num_locks * counter_bytes + math.ceil(num_locks * mode_bits / 8)
    return num_locks * (math.ceil(mode_bits / 8) + counter_bytes)
