"""Toeplitz hashing, discretization and oracle reconciliation."""

import numpy as np
import pytest

from droneqkd import privacy
from droneqkd.keyrate import CovarianceEstimate, KeyRateInputs, SessionConfig


def dense_toeplitz(seed: bytes, n: int, m: int) -> np.ndarray:
    """Independent dense-matrix construction from the same seed bits."""
    diag = privacy.toeplitz_seed_bits(seed, m + n - 1)
    t = np.empty((m, n), dtype=np.int64)
    for i in range(m):
        for j in range(n):
            t[i, j] = diag[i - j + n - 1]
    return t


def inputs_for(bracket_terms):
    i_ab, chi, dn = bracket_terms
    cfg = SessionConfig(block_size=100_000)
    est = CovarianceEstimate(0.7, 0.01, 50_000, 0.7, 0.01)
    return KeyRateInputs(est, cfg, i_ab, chi, dn)


def test_toeplitz_matches_dense_oracle():
    rng = np.random.default_rng(0)
    for n, m in [(64, 32), (200, 64), (1000, 333)]:
        bits = rng.integers(0, 2, n).astype(np.uint8)
        seed = rng.bytes(privacy.PA_SEED_BYTES)
        fast = privacy.toeplitz_hash(bits, seed, m)
        dense = (dense_toeplitz(seed, n, m) @ bits.astype(np.int64)) % 2
        assert np.array_equal(fast, dense.astype(np.uint8))


def test_toeplitz_fixed_64bit_input():
    rng = np.random.default_rng(99)
    bits = rng.integers(0, 2, 64).astype(np.uint8)
    seed = bytes(range(32))
    out = privacy.toeplitz_hash(bits, seed, 16)
    dense = (dense_toeplitz(seed, 64, 16) @ bits.astype(np.int64)) % 2
    assert np.array_equal(out, dense.astype(np.uint8))
    assert out.size == 16


def test_toeplitz_determinism_and_seed_sensitivity():
    rng = np.random.default_rng(1)
    bits = rng.integers(0, 2, 512).astype(np.uint8)
    seed_a = rng.bytes(32)
    seed_b = rng.bytes(32)
    assert np.array_equal(privacy.toeplitz_hash(bits, seed_a, 100),
                          privacy.toeplitz_hash(bits, seed_a, 100))
    assert not np.array_equal(privacy.toeplitz_hash(bits, seed_a, 100),
                              privacy.toeplitz_hash(bits, seed_b, 100))


def test_toeplitz_edge_cases():
    bits = np.array([1, 0, 1], dtype=np.uint8)
    assert privacy.toeplitz_hash(bits, bytes(32), 0).size == 0
    with pytest.raises(ValueError):
        privacy.toeplitz_hash(np.zeros(0, dtype=np.uint8), bytes(32), 4)
    with pytest.raises(ValueError):
        privacy.toeplitz_seed_bits(b"short", 10)


def test_discretize_shape_and_edges():
    rng = np.random.default_rng(2)
    vals = rng.normal(0, 2.0, 1000)
    bits = privacy.discretize(vals)
    assert bits.size == 5000
    assert set(np.unique(bits)) <= {0, 1}
    # constant input has zero spread; everything lands in one bin
    flat = privacy.discretize(np.full(100, 3.3))
    assert flat.size == 500
    assert not flat.any()
    # extreme outliers clip into the edge bins
    spiky = privacy.discretize(np.array([0.0] * 99 + [1e9]))
    assert spiky.size == 500


def test_discretize_bin_meaning():
    # symmetric values mirror around the bin midpoint
    vals = np.array([-1.0, 1.0] * 200)
    bits = privacy.discretize(vals, n_bits=5)
    lo = bits[:5]
    hi = bits[5:10]
    assert not np.array_equal(lo, hi)


def test_key_target_length():
    assert privacy.key_target_length(1000, inputs_for((1.0, 0.2, 0.05))) == 700
    assert privacy.key_target_length(1000, inputs_for((0.1, 0.2, 0.05))) == 0


def test_reconcile_and_amplify_round_trip():
    rng = np.random.default_rng(3)
    bob_vals = rng.normal(0.0, 1.5, 2000)
    alice_vals = bob_vals + rng.normal(0, 0.3, 2000)
    inputs = inputs_for((1.0, 0.2, 0.05))
    seed = rng.bytes(32)
    k_a, k_b = privacy.reconcile_and_amplify(alice_vals, bob_vals, inputs, seed)
    assert np.array_equal(k_a, k_b)
    assert k_a.size == privacy.key_target_length(2000, inputs)
    # determinism
    k_a2, _ = privacy.reconcile_and_amplify(alice_vals, bob_vals, inputs, seed)
    assert np.array_equal(k_a, k_a2)


def test_reconcile_clamps_to_empty():
    rng = np.random.default_rng(4)
    vals = rng.normal(0, 1, 500)
    k_a, k_b = privacy.reconcile_and_amplify(vals, vals, inputs_for((0.1, 0.5, 0.1)),
                                             bytes(32))
    assert k_a.size == 0 and k_b.size == 0
    with pytest.raises(ValueError):
        privacy.reconcile_and_amplify(vals[:10], vals, inputs_for((1.0, 0.2, 0.0)),
                                      bytes(32))
