import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import chisquare

from pemm.noise import (CIFAR10_ASYMMETRIC_MAP, NoiseSpec, inject, inject_asymmetric,
                        inject_symmetric, noise_audit, write_audit_csv, write_noise_csv)


def test_rate_zero_is_identity():
    y = np.arange(100) % 5
    noisy, mask = inject_symmetric(y, 5, 0.0, seed=1)
    np.testing.assert_array_equal(noisy, y)
    assert not mask.any()
    noisy, mask = inject_asymmetric(y, {0: 1}, 0.0, seed=1)
    np.testing.assert_array_equal(noisy, y)


def test_rate_one_never_keeps_label():
    y = np.arange(1000) % 4
    noisy, mask = inject_symmetric(y, 4, 1.0, seed=2)
    assert mask.all() and np.all(noisy != y)


def test_symmetric_rate_within_binomial_band():
    y = np.arange(10_000) % 10
    noisy, mask = inject_symmetric(y, 10, 0.4, seed=0)
    frac = np.mean(noisy != y)
    assert 0.385 <= frac <= 0.415
    np.testing.assert_array_equal(noisy != y, mask)


def test_exact_mode_hits_count():
    y = np.arange(1000) % 4
    noisy, mask = inject_symmetric(y, 4, 0.4, seed=0, exact=True)
    assert mask.sum() == 400 and np.sum(noisy != y) == 400


def test_symmetric_targets_uniform():
    K = 5
    y = np.arange(100_000) % K
    noisy, mask = inject_symmetric(y, K, 0.4, seed=3)
    for k in range(K):
        sel = mask & (y == k)
        counts = np.bincount(noisy[sel], minlength=K)
        assert counts[k] == 0
        assert chisquare(np.delete(counts, k)).pvalue > 0.01


def test_symmetric_errors():
    with pytest.raises(ValueError):
        inject_symmetric([0, 0], 1, 0.5, seed=0)
    with pytest.raises(ValueError):
        inject_symmetric([0, 5], 3, 0.5, seed=0)
    with pytest.raises(ValueError):
        NoiseSpec(rate=1.5)


def test_asymmetric_forced_map():
    y = np.arange(300) % 3
    noisy, _ = inject_asymmetric(y, {0: 1}, 1.0, seed=0)
    assert np.all(noisy[y == 0] == 1)
    np.testing.assert_array_equal(noisy[y != 0], y[y != 0])


def test_asymmetric_self_map_rejected():
    with pytest.raises(ValueError):
        inject_asymmetric([0, 1], {1: 1}, 0.5, seed=0)


def test_asymmetric_per_source_fraction():
    y = np.repeat(np.arange(10), 2000)
    noisy, _ = inject_asymmetric(y, CIFAR10_ASYMMETRIC_MAP, 0.4, seed=0)
    for src, dst in CIFAR10_ASYMMETRIC_MAP.items():
        rows = noisy[y == src]
        assert set(np.unique(rows)) <= {src, dst}
        assert abs(np.mean(rows == dst) - 0.4) <= 0.03
    untouched = ~np.isin(y, list(CIFAR10_ASYMMETRIC_MAP))
    np.testing.assert_array_equal(noisy[untouched], y[untouched])


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0, 1), st.sampled_from(["symmetric", "asymmetric"]))
def test_injection_bit_reproducible(seed, rate, kind):
    y = np.random.default_rng(seed).integers(0, 10, 500)
    spec = NoiseSpec(kind, rate, dict(CIFAR10_ASYMMETRIC_MAP), seed)
    a, ma = inject(y, 10, spec)
    b, mb = inject(y, 10, spec)
    assert a.tobytes() == b.tobytes() and ma.tobytes() == mb.tobytes()
    if kind == "asymmetric":
        keep = ~np.isin(y, list(CIFAR10_ASYMMETRIC_MAP))
        np.testing.assert_array_equal(a[keep], y[keep])


def test_audit_counts():
    y = np.arange(10) % 3
    aud = noise_audit(y, y, 3)
    assert aud.rate == 0.0 and np.count_nonzero(aud.confusion - np.diag(np.diag(aud.confusion))) == 0
    z = y.copy()
    z[4] = (z[4] + 1) % 3
    assert noise_audit(y, z, 3).rate == pytest.approx(0.1)
    with pytest.raises(ValueError):
        noise_audit([0, 1], [0])


def test_audit_off_diagonal_mass():
    K = 4
    y = np.arange(40_000) % K
    noisy, _ = inject_symmetric(y, K, 0.4, seed=5)
    conf = noise_audit(y, noisy, K).confusion / 10_000
    for k in range(K):
        off = np.delete(conf[k], k)
        assert abs(off.sum() - 0.4) < 0.015
        np.testing.assert_allclose(off, 0.4 / 3, atol=0.015)


def test_csv_outputs(tmp_path):
    y = np.array([0, 1, 2, 1])
    noisy, mask = inject_symmetric(y, 3, 1.0, seed=0)
    write_noise_csv(tmp_path / "n.csv", y, noisy, mask)
    lines = (tmp_path / "n.csv").read_text().splitlines()
    assert lines[0] == "index,clean_label,noisy_label,flipped"
    assert len(lines) == 5 and lines[1].endswith(",1")
    write_audit_csv(tmp_path / "a.csv", noise_audit(y, noisy, 3))
    assert (tmp_path / "a.csv").read_text().startswith("realized_rate,1.0\n")
