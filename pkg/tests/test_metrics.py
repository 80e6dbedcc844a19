import math

import numpy as np

from modlock.metrics import (
    Comparison,
    MetricsReport,
    compare_metrics,
    format_comparison,
    percentile,
)


def test_percentile_of_nothing_is_zero():
    assert percentile(np.array([]), 50) == 0.0
    assert percentile(np.array([1.0, 2.0, 3.0]), 50) == 2.0


def test_comparison_ratio_and_reduction():
    c = Comparison("comm_ops_lock.mn", 200.0, 10.0)
    assert c.ratio == 0.05
    assert math.isclose(c.reduction, 95.0)
    assert Comparison("aborts", 0, 0).ratio == 1.0
    assert Comparison("aborts", 0, 3).ratio == math.inf


def test_compare_keeps_shared_metrics_in_order():
    first = {"acquires": 10, "comm_ops_lock.mn": 100, "served_fraction.nic": 1.0}
    second = {"acquires": 10, "comm_ops_lock.mn": 4}
    names = [c.metric for c in compare_metrics(first, second)]
    assert names == ["acquires", "comm_ops_lock.mn"]
    text = format_comparison(compare_metrics(first, second), "polling", "modular")
    lines = text.splitlines()
    assert lines[0].split() == ["metric", "polling", "modular", "ratio"]
    assert lines[-1] == "mn lock communication reduced by 96.0%"


def test_csv_rows():
    report = MetricsReport.from_metrics("dm_modular", 3, {"acquires": 5, "makespan_us": 1.5})
    report = report + MetricsReport.from_metrics("dm_base", 3, {"aborts": 0})
    assert report.to_csv().splitlines() == [
        "scenario,seed,metric,value",
        "dm_modular,3,acquires,5",
        "dm_modular,3,makespan_us,1.500000",
        "dm_base,3,aborts,0",
    ]
