import numpy as np
import pytest

from rislocate.beamform import (PositionPrior, beam_pattern, build_equivalent_channel,
                                design_ris, gram_factors, optimize_ris, sample_prior, _draw)
from rislocate.channel import (RisConfiguration, Scenario, analytic_max_snr, build_ap_ris_link,
                               build_ue_channel, snr)
from rislocate.errors import InvalidInputError
from rislocate.geometry import PolarPosition, cartesian_to_polar, polar_to_cartesian
from rislocate.sdp import MaxMinSdpProblem, solve_maxmin_sdp

PRIOR = PositionPrior((260.0, 320.0), (20.0, 80.0))


@pytest.fixture(scope="module")
def sc():
    return Scenario()


def test_samples_stay_in_support(sc):
    pts = sample_prior(PRIOR, 1000, seed=1, ris_center=sc.ris_center)
    pol = [cartesian_to_polar(p, sc.ris_center) for p in pts]
    az = np.array([p.azimuth for p in pol])
    d = np.array([p.range for p in pol])
    assert np.all((az >= 260 - 1e-9) & (az <= 320 + 1e-9))
    assert np.all((d >= 20 - 1e-9) & (d <= 80 + 1e-9))


def test_degenerate_prior_is_a_point(sc):
    pts = sample_prior(PositionPrior((300.0, 300.0), (70.0, 70.0)), 5, seed=0,
                       ris_center=sc.ris_center)
    target = polar_to_cartesian(PolarPosition(300.0, 0.0, 70.0), sc.ris_center)
    assert all(p.distance_to(target) < 1e-9 for p in pts)


def test_sampling_reproducible():
    a = sample_prior(PRIOR, 20, seed=4)
    b = sample_prior(PRIOR, 20, seed=4)
    assert a == b


def test_wrapping_sector():
    s = _draw(PositionPrior((350.0, 370.0), (10.0, 20.0)), 500, np.random.default_rng(0))
    assert np.all((s.azimuth >= 350) | (s.azimuth <= 10))


def test_bad_prior():
    with pytest.raises(InvalidInputError):
        PositionPrior((300.0, 260.0), (20.0, 80.0))
    with pytest.raises(InvalidInputError):
        sample_prior(PRIOR, 0)


def test_equivalent_channel_with_unit_h(sc):
    # h = 1 needs a UE whose response is flat: broadside at 1 m
    p = polar_to_cartesian(PolarPosition(180.0, 0.0, 1.0), sc.ris_center)
    G = build_ap_ris_link(sc)
    assert np.allclose(build_equivalent_channel(p, G, sc), G.matrix)


def test_equivalent_channel_brute_force(sc):
    p = polar_to_cartesian(PolarPosition(300.0, 0.0, 70.0), sc.ris_center)
    G = build_ap_ris_link(sc)
    H = build_equivalent_channel(p, G, sc)
    h = build_ue_channel(p, sc).vector
    dense = np.diag(h.conj()) @ G.matrix @ G.matrix.conj().T @ np.diag(h)
    assert np.allclose(H @ H.conj().T, dense, rtol=1e-12, atol=0)
    assert np.linalg.matrix_rank(H) == 1


def test_gram_factors_match_dense(sc):
    G = build_ap_ris_link(sc)
    s = _draw(PRIOR, 30, np.random.default_rng(2))
    F = gram_factors(s, G, sc)
    for k, p in enumerate(s.positions(sc.ris_center)):
        H = build_equivalent_channel(p, G, sc)
        assert np.allclose(F[k] @ F[k].conj().T, H @ H.conj().T, rtol=1e-10, atol=1e-22)


@pytest.mark.parametrize("az,d", [(300.0, 70.0), (265.0, 25.0), (318.0, 79.0)])
def test_point_prior_near_phase_matched(sc, az, d):
    v = optimize_ris(PositionPrior((az, az), (d, d)), sc, T=4, seed=0)
    p = polar_to_cartesian(PolarPosition(az, 0.0, d), sc.ris_center)
    h, G = build_ue_channel(p, sc), build_ap_ris_link(sc)
    assert snr(h, G, v, sc) >= 0.95 * analytic_max_snr(h, G, sc)


def test_wide_prior_beats_random_configurations(sc):
    design = design_ris(PRIOR, sc, T=1000, seed=3)
    assert np.allclose(np.abs(design.config.v), 1.0)
    rng = np.random.default_rng(4)
    rand = np.exp(2j * np.pi * rng.random((sc.N, 1000)))
    base = np.min(design.problem.quad_values(rand), axis=0)
    assert np.mean(design.rounded_objective >= base) >= 0.95
    # sandwich against the relaxation on the solved constraints
    sub = design.problem.subset(design.sdp.active)
    assert sub.min_quad(design.config.v) <= design.sdp.objective * (1 + 1e-9)


def test_symmetric_prior_gives_symmetric_relaxed_pattern(sc):
    # broadside (180 deg in the RIS frame) prior, sample set mirrored about it
    s = _draw(PositionPrior((160.0, 200.0), (20.0, 80.0)), 200, np.random.default_rng(5))
    az = np.concatenate([s.azimuth, 360.0 - s.azimuth])
    from rislocate.beamform import PriorSamples
    sym = PriorSamples(az, np.zeros_like(az), np.concatenate([s.range, s.range]))
    G = build_ap_ris_link(sc)
    prob = MaxMinSdpProblem.from_factors(gram_factors(sym, G, sc))
    sol = solve_maxmin_sdp(prob, max_constraints=None)
    off = np.linspace(0.5, 60.0, 120)
    unit = lambda a: gram_factors(type(sym)(a, np.zeros_like(a), np.ones_like(a)), G, sc)
    pat = lambda a: MaxMinSdpProblem.from_factors(unit(a)).traces(sol.V)
    left, right = pat(180.0 - off), pat(180.0 + off)
    assert np.max(np.abs(left - right)) <= 0.01 * np.max(pat(np.linspace(120, 240, 241)))


def test_pattern_peaks_at_matched_angle(sc):
    G = build_ap_ris_link(sc)
    for az in (275.0, 300.0):
        p = polar_to_cartesian(PolarPosition(az, 0.0, 50.0), sc.ris_center)
        h = build_ue_channel(p, sc)
        b_d = G.matrix[:, 0] / np.abs(G.matrix[:, 0])
        v = RisConfiguration(np.exp(1j * (np.angle(b_d) - np.angle(h.vector))))
        grid = np.arange(270.0, 330.0, 0.1)
        gains = np.array([g for _, g in beam_pattern(v, G, sc, grid)])
        assert abs(grid[np.argmax(gains)] - az) <= 0.1 + 1e-9


def test_pattern_zero_and_phase_invariance(sc):
    G = build_ap_ris_link(sc)
    grid = np.arange(0.0, 360.0, 5.0)
    zero = beam_pattern(RisConfiguration(np.zeros(sc.N)), G, sc, grid)
    assert all(g == 0 for _, g in zero)
    v = np.exp(1j * np.arange(sc.N) * 0.3)
    a = np.array(beam_pattern(RisConfiguration(v), G, sc, grid))
    b = np.array(beam_pattern(RisConfiguration(v * np.exp(0.7j)), G, sc, grid))
    assert np.allclose(a, b, rtol=1e-12)
    with pytest.raises(InvalidInputError):
        beam_pattern(RisConfiguration(v), G, sc, [])
