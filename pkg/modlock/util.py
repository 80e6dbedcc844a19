import math
import sys
import threading
from typing import Any

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    try:
        import tomli as tomllib  # type: ignore
    except ModuleNotFoundError:
        tomllib = None

from .errors import ConfigError


class Stripes:
    def __init__(self, count: int = 64):
        self._locks = [threading.Lock() for _ in range(count)]

    def __getitem__(self, key: int) -> threading.Lock:
        return self._locks[key % len(self._locks)]


def die(message: str, code: int = 1) -> None:
    print(f"error: {message}", file=sys.stderr)
    raise SystemExit(code)


def parse_key_value(text: str) -> tuple[str, Any]:
    if "=" not in text:
        raise ConfigError(f"expected KEY=VALUE, got: {text}", field="--set")
    key, value = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"invalid KEY in: {text}", field="--set")
    return key, parse_scalar(value.strip())


def parse_scalar(text: str) -> Any:
    # TOML scalar syntax, bare words fall back to strings
    if tomllib is None:
        return text
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def set_path(data: dict, dotted: str, value: Any) -> None:
    parts = dotted.split(".")
    node = data
    for part in parts[:-1]:
        child = node.get(part)
        if not isinstance(child, dict):
            child = {}
            node[part] = child
        node = child
    node[parts[-1]] = value


def merge_tables(base: dict | None, override: dict | None) -> dict:
    result = dict(base or {})
    for key, value in (override or {}).items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = merge_tables(result[key], value)
        else:
            result[key] = value
    return result


def format_number(value: float | int) -> str:
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, int):
        return str(value)
    if math.isnan(value) or math.isinf(value):
        return repr(float(value))
    return f"{value:.6f}"
