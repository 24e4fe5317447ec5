import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degenlab.parallel import resolve_workers
from degenlab.seeding import derive_seed, label_hash, mix64, rng_for, splitmix64
from degenlab.stats import KahanSum, jackknife_mean


def test_splitmix_reference_value():
    # first output of the SplitMix64 generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF


@given(st.integers(0, 2 ** 64 - 1), st.integers(0, 2 ** 64 - 1))
def test_mix64_deterministic_and_64bit(a, b):
    assert mix64(a, b) == mix64(a, b)
    assert 0 <= mix64(a, b) < 2 ** 64


def test_seeds_are_distinct():
    seeds = {mix64(7, i) for i in range(10000)}
    assert len(seeds) == 10000
    assert derive_seed(1, "sweep/0") != derive_seed(1, "sweep/1")
    assert derive_seed(1, "a") != derive_seed(2, "a")
    assert label_hash("probe/center") == label_hash("probe/center")
    assert rng_for(3, 4).random() == rng_for(3, 4).random()


def test_jackknife_iid_matches_classical(rng):
    x = rng.normal(2.0, 1.0, 32 * 500)
    m, e = jackknife_mean(x)
    assert m == pytest.approx(x.mean())
    assert e == pytest.approx(x.std(ddof=1) / np.sqrt(x.size), rel=0.3)


def test_jackknife_sees_block_correlation(rng):
    # strongly correlated runs inflate the error above the naive value
    x = np.repeat(rng.normal(size=320), 50)
    _, e = jackknife_mean(x)
    assert e > 3 * x.std(ddof=1) / np.sqrt(x.size)


def test_jackknife_edge_cases():
    with pytest.raises(ValueError):
        jackknife_mean([])
    m, e = jackknife_mean([1.5])
    assert m == 1.5 and np.isnan(e)
    assert jackknife_mean([1.0, 1.0, 1.0])[1] == 0


def test_kahan_sum():
    k = KahanSum(2)
    for _ in range(10 ** 4):
        k.add(np.array([0.1, 1e-16]))
    k.add(np.array([0.0, 1.0]))
    assert k.total[0] == pytest.approx(1000.0, abs=1e-12)
    assert k.total[1] == 1.0 + 1e-12


def test_resolve_workers(monkeypatch):
    monkeypatch.delenv("DEGENLAB_THREADS", raising=False)
    assert resolve_workers() == 1
    assert resolve_workers(3) == 3
    assert resolve_workers(0) >= 1
    monkeypatch.setenv("DEGENLAB_THREADS", "4")
    assert resolve_workers() == 4
