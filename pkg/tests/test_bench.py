"""Backend benchmark: subprocess isolation keeps the interpreted run honest."""

from markosparse.bench import benchmark, format_report
from markosparse import kernels


def test_benchmark_compares_backends():
    report = benchmark(kind=kernels.KIND_BANLAST, activation=kernels.ACT_NORMALIZE,
                       d=20, m=2, K=2, steps=150, repeats=1, seed=0)
    assert report["identical_output"]
    assert report["config"]["steps"] == 150
    assert report["compiled"]["seconds"] > 0.0
    assert report["interpreted"]["seconds"] > 0.0
    assert report["speedup"] > 0.0
    assert report["interpreted"]["backend"] == "numpy"
    text = format_report(report)
    assert "steps=150" in text
    assert "numpy" in text
    assert "speedup" in text
    assert "identical: True" in text
