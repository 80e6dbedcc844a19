import pytest

from modlock.core import AcquireMode, ClientId, LockMode, Module, compatible


@pytest.mark.parametrize(
    "current, requested, expected",
    [
        (LockMode.FREE, AcquireMode.SHARED, True),
        (LockMode.FREE, AcquireMode.EXCLUSIVE, True),
        (LockMode.SHARED, AcquireMode.SHARED, True),
        (LockMode.SHARED, AcquireMode.EXCLUSIVE, False),
        (LockMode.EXCLUSIVE, AcquireMode.SHARED, False),
        (LockMode.EXCLUSIVE, AcquireMode.EXCLUSIVE, False),
    ],
)
def test_compatibility(current, requested, expected):
    assert compatible(current, requested) is expected


def test_module_parse():
    assert Module.parse("Grant") is Module.GRANT
    with pytest.raises(ValueError, match="unknown module"):
        Module.parse("cache")


def test_client_ids_order_and_print():
    assert ClientId(1, "b") < ClientId(2, "a")
    assert str(ClientId(3, "cn")) == "C3@cn"
