from modlock.core import ClientId
from modlock.hardware import ComponentKind, HardwareProfile


def profile(name: str, **overrides) -> HardwareProfile:
    fields = dict(
        component=name,
        kind=ComponentKind.SERVER_CPU,
        proc_cost_per_op=0.01,
        parallelism=4,
        memory_capacity=1 << 30,
        fast_memory_capacity=1 << 30,
        comm_ops_budget=1e9,
    )
    fields.update(overrides)
    return HardwareProfile(**fields)


def client(index: int, location: str = "c") -> ClientId:
    return ClientId(index, location)
