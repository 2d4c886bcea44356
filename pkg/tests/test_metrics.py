import numpy as np
import pytest

from liplab.metrics import MetricReport, corr2d, log_spectral_distance, stmi


def test_corr2d_examples(rng):
    m = rng.random((30, 128))
    assert corr2d(m, m) == pytest.approx(1.0, abs=1e-12)
    assert corr2d(m, -m + 3.0) == pytest.approx(-1.0, abs=1e-12)


def test_corr2d_flatten_oracle(rng):
    a, b = rng.random((300, 128)), rng.random((300, 128))
    assert abs(corr2d(a, b) - np.corrcoef(a.ravel(), b.ravel())[0, 1]) < 1e-12


def test_corr2d_errors(rng):
    with pytest.raises(ValueError):
        corr2d(rng.random((3, 4)), rng.random((4, 3)))
    with pytest.raises(ValueError):
        corr2d(np.ones((3, 4)), rng.random((3, 4)))


def test_stmi_identity_and_zero(rng):
    x = rng.random((100, 128))
    assert stmi(x, x) == 1.0
    assert stmi(x, np.zeros_like(x)) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(ValueError):
        stmi(np.zeros((10, 128)), x[:10])


def test_stmi_noise_sweep_mostly_monotone():
    ok = 0
    for seed in range(20):
        r = np.random.default_rng(seed)
        x = np.abs(np.sin(np.arange(100)[:, None] / 7.0) + 0.3 * r.random((100, 128)))
        scores = [stmi(x, x + s * r.standard_normal(x.shape)) for s in (0.01, 0.05, 0.1, 0.5)]
        ok += all(a >= b for a, b in zip(scores, scores[1:]))
    assert ok >= 18


def test_lsd_examples(rng):
    x = rng.random((20, 128)) + 1.0
    assert log_spectral_distance(x, x) == 0.0
    assert log_spectral_distance(x, 10 * x) == pytest.approx(20.0, rel=1e-4)


def test_lsd_double_loop_oracle(rng):
    a, b = rng.random((12, 128)), rng.random((12, 128))
    total = 0.0
    for t in range(12):
        row = 0.0
        for f in range(128):
            row += (20 * np.log10((a[t, f] + 1e-5) / (b[t, f] + 1e-5))) ** 2
        total += row / 128
    assert abs(log_spectral_distance(a, b) - np.sqrt(total / 12)) < 1e-9
    with pytest.raises(ValueError):
        log_spectral_distance(a, b[:5])


def test_metric_report(rng):
    rep = MetricReport()
    x = rng.random((40, 128))
    rep.add("a", x, x)
    rep.add("b", x, np.abs(x + 0.1 * rng.standard_normal(x.shape)))
    d = rep.to_dict()
    assert set(d) >= {"per_sample", "mean", "config"}
    assert [r["id"] for r in d["per_sample"]] == ["a", "b"]
    assert d["per_sample"][0]["corr2d"] == pytest.approx(1.0)
    assert d["mean"]["corr2d"] == pytest.approx((1 + d["per_sample"][1]["corr2d"]) / 2)
    assert MetricReport().mean["stmi"] is None
