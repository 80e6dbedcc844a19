import pytest

from modlock import util
from modlock.errors import ConfigError
from modlock.util import format_number, merge_tables, parse_key_value


def test_parse_key_value_reads_toml_scalars():
    assert parse_key_value("workload.total_ops=1000") == ("workload.total_ops", 1000)
    assert parse_key_value("assignment.fuse = false") == ("assignment.fuse", False)
    assert parse_key_value("workload.distribution=zipf") == ("workload.distribution", "zipf")
    with pytest.raises(ConfigError):
        parse_key_value("no-equals")


def test_scalars_stay_strings_without_a_toml_parser(monkeypatch):
    monkeypatch.setattr(util, "tomllib", None)
    assert parse_key_value("workload.total_ops=1000") == ("workload.total_ops", "1000")


def test_merge_tables_is_deep():
    base = {"workload": {"num_locks": 8, "total_ops": 10}, "name": "a"}
    merged = merge_tables(base, {"workload": {"total_ops": 20}})
    assert merged == {"workload": {"num_locks": 8, "total_ops": 20}, "name": "a"}
    assert base["workload"]["total_ops"] == 10


def test_format_number():
    assert format_number(True) == "1"
    assert format_number(3) == "3"
    assert format_number(0.5) == "0.500000"
