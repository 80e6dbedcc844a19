"""Shared lock vocabulary: identifiers, modes and the compatibility rule."""

import enum
from dataclasses import dataclass
from typing import NewType

LockId = NewType("LockId", int)
RequestId = NewType("RequestId", int)
GrantCount = NewType("GrantCount", int)
ComponentId = str


@dataclass(frozen=True, order=True)
class ClientId:
    id: int
    location: ComponentId

    def __str__(self) -> str:
        return f"C{self.id}@{self.location}"


class AcquireMode(enum.Enum):
    SHARED = "S"
    EXCLUSIVE = "X"


class LockMode(enum.Enum):
    FREE = "F"
    SHARED = "S"
    EXCLUSIVE = "X"

    @classmethod
    def from_acquire(cls, mode: AcquireMode) -> "LockMode":
        return cls.SHARED if mode is AcquireMode.SHARED else cls.EXCLUSIVE


def compatible(current: LockMode, requested: AcquireMode) -> bool:
    if current is LockMode.FREE:
        return True
    return current is LockMode.SHARED and requested is AcquireMode.SHARED


class Module(enum.Enum):
    MODE = "mode"
    HOLDER = "holder"
    WAITER = "waiter"
    GRANT = "grant"

    @classmethod
    def parse(cls, name: str) -> "Module":
        try:
            return cls(name.lower())
        except ValueError:
            raise ValueError(f"unknown module '{name}'") from None


MODULES = (Module.MODE, Module.HOLDER, Module.WAITER, Module.GRANT)
