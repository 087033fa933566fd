"""Oracle reconciliation and Toeplitz privacy amplification.

Error correction is not decoded here: the simulation knows the ground
truth, so the reconciled strings are made equal outright and the
leakage is charged entirely through the efficiency beta inside the key
rate bracket. The Toeplitz hash is evaluated as one linear convolution
over the integers (FFT-based) followed by a mod-2 reduction; counts are
far below 2^53, so rounding the convolution to the nearest integer is
exact.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import fft as _fft

from droneqkd.keyrate import KeyRateInputs

PA_SEED_BYTES = 32


def toeplitz_seed_bits(seed: bytes, total_len: int) -> np.ndarray:
    """Expand a 32-byte seed into the Toeplitz diagonal bits.

    Deterministic PCG64 stream keyed on the seed bytes; exposed so an
    independent dense-matrix check can build the very same matrix.
    """
    if len(seed) != PA_SEED_BYTES:
        raise ValueError(f"seed must be {PA_SEED_BYTES} bytes, got {len(seed)}")
    rng = np.random.Generator(np.random.PCG64(
        np.random.SeedSequence(int.from_bytes(seed, "big"))))
    return rng.integers(0, 2, size=total_len, dtype=np.uint8)


def toeplitz_hash(bits: np.ndarray, seed: bytes, out_len: int) -> np.ndarray:
    """Compress a bit string to out_len bits with a seeded Toeplitz matrix.

    The matrix is T[i, j] = t[i - j + n - 1] for diagonal bits t of
    length out_len + n - 1, so (T @ x)[i] = sum_u t[i + u] * x[n-1-u],
    a cross-correlation of t with the reversed input. That slice is
    evaluated through one circular FFT correlation of length
    next_fast_len(n + out_len - 1), which is alias-free for the needed
    lags; the integer counts are bounded by n << 2**53, so rounding is
    exact.
    """
    bits = np.ascontiguousarray(bits, dtype=np.uint8)
    n = bits.size
    if out_len <= 0:
        return np.zeros(0, dtype=np.uint8)
    if n == 0:
        raise ValueError("cannot hash an empty bit string to a nonzero length")
    diag = toeplitz_seed_bits(seed, out_len + n - 1)
    length = _fft.next_fast_len(n + out_len - 1, real=True)
    spec = _fft.rfft(diag.astype(np.float64), length) \
        * np.conj(_fft.rfft(bits[::-1].astype(np.float64), length))
    corr = _fft.irfft(spec, length)
    counts = np.rint(corr[:out_len]).astype(np.int64)
    return (counts & 1).astype(np.uint8)


def discretize(values: np.ndarray, n_bits: int = 5, span_sigmas: float = 8.0) -> np.ndarray:
    """Uniformly bin samples over +-span_sigmas standard deviations.

    Each sample becomes an n_bits bin index, emitted MSB first; samples
    beyond the span land in the edge bins. Returns a flat uint8 bit
    array of length n_bits * len(values).
    """
    values = np.asarray(values, dtype=np.float64)
    n_bins = 1 << n_bits
    sigma = float(values.std())
    if sigma == 0.0:
        idx = np.zeros(values.size, dtype=np.int64)
    else:
        half = span_sigmas * sigma
        idx = np.floor((values + half) / (2.0 * half) * n_bins).astype(np.int64)
        np.clip(idx, 0, n_bins - 1, out=idx)
    shifts = np.arange(n_bits - 1, -1, -1)
    return ((idx[:, None] >> shifts[None, :]) & 1).astype(np.uint8).ravel()


def key_target_length(n_kept: int, inputs: KeyRateInputs) -> int:
    """Final key length floor(n * [beta*I_AB - chi_BE - Delta_n]), >= 0."""
    bracket = inputs.cfg.beta * inputs.i_ab - inputs.chi_be - inputs.delta_n
    return max(0, math.floor(n_kept * bracket))


def reconcile_and_amplify(alice_values: np.ndarray, bob_values: np.ndarray,
                          inputs: KeyRateInputs, pa_seed: bytes):
    """Produce the final key bits on both sides.

    Bob's kept s2 measurements are discretized and, reconciliation being
    oracle-based, Alice adopts the identical string (reverse
    reconciliation; the leakage lives in beta). Both strings are then
    compressed to the target length with the same seeded Toeplitz hash.
    Returns (alice_key, bob_key); empty arrays when the bracket is
    nonpositive.
    """
    alice_values = np.asarray(alice_values, dtype=np.float64)
    bob_values = np.asarray(bob_values, dtype=np.float64)
    if alice_values.size != bob_values.size:
        raise ValueError("Alice and Bob raw blocks must have equal length")
    target = key_target_length(bob_values.size, inputs)
    if target <= 0:
        empty = np.zeros(0, dtype=np.uint8)
        return empty, empty.copy()
    bob_bits = discretize(bob_values)
    alice_bits = bob_bits.copy()
    return (toeplitz_hash(alice_bits, pa_seed, target),
            toeplitz_hash(bob_bits, pa_seed, target))
