"""Encoder chain, Stokes conversion, Gaussian modulation, inverse map."""

import math

import numpy as np
import pytest

from droneqkd import stokes
from droneqkd.stokes import (DrivePhases, JonesVector, ModulationConfig,
                             QuadraturePair, UniformDraw)

CFG = ModulationConfig(v1=4.0, a_lo=1.0)


def stage_oracle(phi1, phi2, a_lo):
    """Independent chain construction from elementary optical elements.

    Each stage is a 2x2 matrix acting on the previous state: a phase
    shift on H, the loop/PBS component swap with a sign, the 45-degree
    rotator, the second phase shift, and the final combining swap.
    """
    psi_in = a_lo / math.sqrt(2.0) * np.array([1.0, 1.0], dtype=complex)
    pm1 = np.diag([np.exp(1j * phi1), 1.0])
    loop_pbs = np.array([[0, 1], [-1, 0]], dtype=complex)
    pmfr = np.array([[1, 1], [-1, 1]], dtype=complex) / math.sqrt(2.0)
    pm2 = np.diag([np.exp(1j * phi2), 1.0])
    combine = np.array([[0, 1], [-1, 0]], dtype=complex)
    psi1 = pm1 @ psi_in
    psi2 = loop_pbs @ psi1
    psi3 = pmfr @ psi2
    psi4 = pm2 @ psi3
    psi5 = combine @ psi4
    return psi_in, psi1, psi2, psi3, psi4, psi5


def as_array(j: JonesVector) -> np.ndarray:
    return np.array([j.e_h, j.e_v])


def test_jones_to_stokes_cardinal_states():
    s = stokes.jones_to_stokes(JonesVector(1.0, 0.0))
    assert (s.s0, s.s1, s.s2, s.s3) == pytest.approx((1.0, 1.0, 0.0, 0.0))
    r = 1.0 / math.sqrt(2.0)
    s = stokes.jones_to_stokes(JonesVector(r, r))
    assert (s.s0, s.s1, s.s2, s.s3) == pytest.approx((1.0, 0.0, 1.0, 0.0))
    # Circular states: the handedness convention here puts (1, -i)/sqrt(2)
    # at s3 = +1 so that the chain's readout carries +cos(phi2).
    s = stokes.jones_to_stokes(JonesVector(r, -1j * r))
    assert (s.s0, s.s1, s.s2, s.s3) == pytest.approx((1.0, 0.0, 0.0, 1.0))
    s = stokes.jones_to_stokes(JonesVector(r, 1j * r))
    assert (s.s0, s.s1, s.s2, s.s3) == pytest.approx((1.0, 0.0, 0.0, -1.0))


def test_degree_of_polarization_bound():
    rng = np.random.default_rng(5)
    for _ in range(200):
        h, v = rng.standard_normal(4).view(np.complex128)
        s = stokes.jones_to_stokes(JonesVector(h, v))
        assert s.s1**2 + s.s2**2 + s.s3**2 <= s.s0**2 * (1.0 + 1e-9)


def test_encode_chain_examples():
    out = stokes.encode_chain(DrivePhases(math.pi, 0.0), CFG)
    assert out.e_h == pytest.approx(0.0, abs=1e-12)
    assert out.e_v == pytest.approx(-CFG.a_lo, abs=1e-12)
    s = stokes.jones_to_stokes(out)
    assert (s.s0, s.s1) == pytest.approx((CFG.a_lo**2, -CFG.a_lo**2))

    out = stokes.encode_chain(DrivePhases(0.0, 1.234), CFG)
    assert out.e_h == pytest.approx(-CFG.a_lo, abs=1e-12)
    assert out.e_v == pytest.approx(0.0, abs=1e-12)


def test_encode_chain_is_lossless():
    rng = np.random.default_rng(0)
    for _ in range(300):
        ph = DrivePhases(rng.uniform(0, 2 * math.pi), rng.uniform(0, 2 * math.pi))
        out = stokes.encode_chain(ph, CFG)
        assert out.intensity == pytest.approx(CFG.a_lo**2, rel=1e-12)


def test_stage_states_match_elementary_construction():
    rng = np.random.default_rng(1)
    for _ in range(200):
        phi1 = rng.uniform(0, 2 * math.pi)
        phi2 = rng.uniform(0, 2 * math.pi)
        stages = stokes.encode_chain_stages(DrivePhases(phi1, phi2), CFG)
        oracle = stage_oracle(phi1, phi2, CFG.a_lo)
        got = [stages.psi_in, stages.psi1, stages.psi2, stages.psi3,
               stages.psi4, stages.psi5]
        for g, o in zip(got, oracle):
            np.testing.assert_allclose(as_array(g), o, atol=1e-12)


def test_readout_matches_jones_route_up_to_single_constant():
    # (s2, s3) of the Jones-computed output must be proportional to
    # sin(phi1)*(sin(phi2), cos(phi2)) with one positive constant.
    phi1, phi2 = np.meshgrid(np.linspace(0, 2 * np.pi, 300),
                             np.linspace(0, 2 * np.pi, 300), indexing="ij")
    e_h, e_v = stokes.encode_chain_batch(phi1.ravel(), phi2.ravel(), CFG)
    _, _, s2, s3 = stokes.jones_to_stokes_batch(e_h, e_v)
    f2 = (np.sin(phi1) * np.sin(phi2)).ravel()
    f3 = (np.sin(phi1) * np.cos(phi2)).ravel()
    const = np.sum(s2 * f2 + s3 * f3) / np.sum(f2 * f2 + f3 * f3)
    assert const > 0
    dev = np.maximum(np.abs(s2 - const * f2), np.abs(s3 - const * f3))
    assert dev.max() / const <= 1e-9


def test_ideal_readout_examples():
    s = stokes.ideal_stokes_readout(DrivePhases(math.pi / 2, math.pi / 2), CFG)
    assert s.s2 == pytest.approx(CFG.readout_gain)
    assert s.s3 == pytest.approx(0.0, abs=1e-12)
    s = stokes.ideal_stokes_readout(DrivePhases(math.pi, 0.83), CFG)
    assert s.s2 == pytest.approx(0.0, abs=1e-12)
    assert s.s3 == pytest.approx(0.0, abs=1e-12)


def test_readout_carries_jones_s0_s1():
    ph = DrivePhases(0.4, 5.0)
    s = stokes.ideal_stokes_readout(ph, CFG)
    j = stokes.jones_to_stokes(stokes.encode_chain(ph, CFG))
    assert s.s0 == pytest.approx(j.s0)
    assert s.s1 == pytest.approx(j.s1)


def test_uniform_draw_validation():
    UniformDraw(0.0, 1.0)
    UniformDraw(1.0, 1e-300)
    with pytest.raises(ValueError):
        UniformDraw(0.5, 0.0)
    with pytest.raises(ValueError):
        UniformDraw(-0.1, 0.5)
    with pytest.raises(ValueError):
        UniformDraw(0.5, 1.5)


def test_sample_gaussian_point_examples():
    # radius sqrt(-2 v1 ln u2) = 1 when u2 = exp(-1/(2 v1))
    u = UniformDraw(0.0, math.exp(-1.0 / (2.0 * CFG.v1)))
    q = stokes.sample_gaussian_point(u, CFG)
    assert (q.x1, q.p1) == pytest.approx((1.0, 0.0), abs=1e-12)
    q = stokes.sample_gaussian_point(UniformDraw(0.25, 1.0), CFG)
    assert (q.x1, q.p1) == pytest.approx((0.0, 0.0), abs=1e-12)


def test_sample_gaussian_statistics():
    from scipy import stats
    rng = np.random.default_rng(1234)
    x, p = stokes.sample_gaussian_block(rng, 200_000, CFG)
    assert x.var() == pytest.approx(CFG.v1, rel=0.02)
    assert p.var() == pytest.approx(CFG.v1, rel=0.02)
    assert abs(x.mean()) < 0.02 and abs(p.mean()) < 0.02
    assert stats.normaltest(x).pvalue > 0.01
    assert stats.normaltest(p).pvalue > 0.01


def test_phases_for_target_examples():
    ph = stokes.phases_for_target(QuadraturePair(0.0, 0.0), CFG)
    assert (ph.phi1, ph.phi2) == (0.0, 0.0)
    ph = stokes.phases_for_target(QuadraturePair(CFG.readout_gain, 0.0), CFG)
    assert (ph.phi1, ph.phi2) == pytest.approx((math.pi / 2, math.pi / 2))


def test_round_trip_on_gaussian_targets():
    rng = np.random.default_rng(77)
    x, p = stokes.sample_gaussian_block(rng, 10_000, CFG)
    saturated = 0
    for xi, pi in zip(x, p):
        q = QuadraturePair(xi, pi)
        saturated += stokes.target_saturates(q, CFG)
        s = stokes.ideal_stokes_readout(stokes.phases_for_target(q, CFG), CFG)
        assert abs(s.s2 - xi) < 1e-9 * max(1.0, abs(xi))
        assert abs(s.s3 - pi) < 1e-9 * max(1.0, abs(pi))
    assert saturated == 0  # P(r > 8 sigma) ~ 1e-14


def test_clip_radius_counts_and_clips():
    x = np.array([0.1, 10.0, -3.3])
    p = np.array([0.0, 0.0, 4.4])
    cx, cp, n = stokes.clip_radius(x, p, 5.0)
    assert n == 2
    assert np.hypot(cx, cp).max() <= 5.0 + 1e-12
    assert (cx[0], cp[0]) == (0.1, 0.0)
    assert cx[2] / cp[2] == pytest.approx(-3.3 / 4.4)


def test_batch_matches_scalar_chain():
    rng = np.random.default_rng(9)
    phi1 = rng.uniform(0, 2 * math.pi, 50)
    phi2 = rng.uniform(0, 2 * math.pi, 50)
    e_h, e_v = stokes.encode_chain_batch(phi1, phi2, CFG)
    for i in range(50):
        out = stokes.encode_chain(DrivePhases(phi1[i], phi2[i]), CFG)
        assert out.e_h == pytest.approx(e_h[i], abs=1e-12)
        assert out.e_v == pytest.approx(e_v[i], abs=1e-12)


def test_modulation_config_defaults_and_validation():
    cfg = ModulationConfig(v1=9.0)
    assert cfg.readout_gain == pytest.approx(24.0)
    with pytest.raises(ValueError):
        ModulationConfig(v1=-1.0)
    with pytest.raises(ValueError):
        ModulationConfig(v1=1.0, a_lo=0.0)


def test_drive_phase_wrapping():
    ph = DrivePhases(-0.5, 7.0)
    assert 0.0 <= ph.phi1 < 2 * math.pi
    assert 0.0 <= ph.phi2 < 2 * math.pi
    assert ph.phi1 == pytest.approx(2 * math.pi - 0.5)
