import enum
from collections import Counter
from dataclasses import dataclass
from typing import Collection, Iterable, Literal

from .constants import DEFAULT_BACKOFF_CAP, DEFAULT_BACKOFF_MULTIPLIER, DEFAULT_POLL_INTERVAL
from .core import ClientId, ComponentId, LockId, RequestId
from .errors import ConfigError, UnknownComponent, UnknownRequest
from .util import Stripes


@dataclass(frozen=True)
class NotificationMode:
    kind: Literal["push", "poll"] = "push"
    poll_interval: float = DEFAULT_POLL_INTERVAL
    backoff_multiplier: float = DEFAULT_BACKOFF_MULTIPLIER
    backoff_cap: float = DEFAULT_BACKOFF_CAP

    def __post_init__(self) -> None:
        if self.kind not in ("push", "poll"):
            raise ConfigError(f"unknown notification mode '{self.kind}'", field="notification.kind")
        if self.poll_interval <= 0:
            raise ConfigError("must be > 0", field="notification.poll_interval")
        if self.backoff_multiplier < 1:
            raise ConfigError("must be >= 1", field="notification.backoff_multiplier")
        if self.backoff_cap < self.poll_interval:
            raise ConfigError("must be >= poll_interval", field="notification.backoff_cap")

    @classmethod
    def push(cls) -> "NotificationMode":
        return cls("push")

    @classmethod
    def poll(
        cls,
        poll_interval: float = DEFAULT_POLL_INTERVAL,
        backoff_multiplier: float = DEFAULT_BACKOFF_MULTIPLIER,
        backoff_cap: float = DEFAULT_BACKOFF_CAP,
    ) -> "NotificationMode":
        return cls("poll", poll_interval, backoff_multiplier, backoff_cap)

    @property
    def is_push(self) -> bool:
        return self.kind == "push"

    def poll_delay(self, attempt: int) -> float:
        """Wait before poll number ``attempt`` (0-based) after a pending answer."""
        delay = self.poll_interval
        if self.backoff_multiplier == 1:
            return delay
        for _ in range(attempt):
            if delay >= self.backoff_cap:
                break
            delay *= self.backoff_multiplier
        return min(delay, self.backoff_cap)


class NoticeOutcome(enum.Enum):
    GRANTED = "granted"
    QUEUED = "queued"


class PollResult(enum.Enum):
    GRANTED = "granted"
    PENDING = "pending"


@dataclass(frozen=True)
class GrantNotice:
    request: RequestId
    client: ClientId
    lock: LockId
    outcome: NoticeOutcome


class GrantManager:
    """Delivers acquisition outcomes by push messages or answers polls.

    ``comm_ops`` counts communication operations charged to each component
    the manager runs on: one per pushed target, one per poll.
    """

    def __init__(
        self,
        host: ComponentId,
        mode: NotificationMode,
        components: Collection[ComponentId] | None = None,
    ):
        self.host = host
        self.mode = mode
        self.components = set(components) if components is not None else None
        self.comm_ops: Counter[ComponentId] = Counter()
        self.poll_calls = 0
        self.notices_sent = 0
        self._outcomes: dict[RequestId, NoticeOutcome] = {}
        self._stripes = Stripes()

    def _check(self, component: ComponentId) -> None:
        if self.components is not None and component not in self.components:
            raise UnknownComponent(f"unknown component '{component}'")

    def notify(
        self,
        notice: GrantNotice,
        targets: Iterable[ComponentId],
        host: ComponentId | None = None,
    ) -> int:
        host = host or self.host
        distinct = sorted(set(targets))
        for target in distinct:
            self._check(target)
        self.comm_ops[host] += len(distinct)
        self.notices_sent += len(distinct)
        return len(distinct)

    def record_grant(self, notice: GrantNotice) -> None:
        with self._stripes[notice.request]:
            if self._outcomes.get(notice.request) is NoticeOutcome.GRANTED:
                return
            self._outcomes[notice.request] = notice.outcome

    def poll(self, client: ClientId, request: RequestId) -> PollResult:
        with self._stripes[request]:
            self.poll_calls += 1
            self.comm_ops[self.host] += 1
            outcome = self._outcomes.get(request)
            if outcome is None:
                raise UnknownRequest(f"request {request} from {client} was never submitted")
            if outcome is NoticeOutcome.GRANTED:
                return PollResult.GRANTED
            return PollResult.PENDING
