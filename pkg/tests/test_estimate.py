import numpy as np
import pytest

from rislocate.channel import (RisConfiguration, Scenario, build_ap_ris_link, build_ue_channel,
                               synthesize_rx)
from rislocate.errors import EstimationError, InvalidInputError
from rislocate.estimate import (equalize, mmse_filter, mmse_filter_stacked, music_doa,
                                periodic_autocorrelation, stack_blocks, stacked_doa,
                                toa_estimate, upsample, zc_sequence)
from rislocate.geometry import PolarPosition, pla_matrix, polar_to_cartesian

C = 299_792_458.0


def ue(sc, az=300.0, d=70.0):
    return build_ue_channel(polar_to_cartesian(PolarPosition(az, 0.0, d), sc.ris_center), sc)


def random_configs(sc, k, seed):
    rng = np.random.default_rng(seed)
    return [RisConfiguration(np.exp(2j * np.pi * rng.random(sc.N))) for _ in range(k)]


# -- MMSE ------------------------------------------------------------------

def test_filter_shape():
    sc = Scenario()
    W = mmse_filter(build_ap_ris_link(sc), RisConfiguration.identity(sc.N), sc)
    assert W.shape == (16, 4)


def test_filter_vanishes_under_heavy_noise():
    norms = []
    for s2 in (1e-3, 1e3, 1e9):
        sc = Scenario(sigma2=s2)
        norms.append(np.linalg.norm(mmse_filter(build_ap_ris_link(sc),
                                                RisConfiguration.identity(sc.N), sc)))
    assert norms[0] > norms[1] > norms[2] and norms[2] < 1e-9


def test_noiseless_filter_is_identity_on_signal():
    # small enough for the limit, large enough to keep the solve well posed
    sc = Scenario(sigma2=1e-10)
    G = build_ap_ris_link(sc)
    v = random_configs(sc, 1, 0)[0]
    W = mmse_filter(G, v, sc)
    PhiG = np.diag(v.v.conj()) @ G.matrix
    g = PhiG[:, 0]
    assert np.allclose(W @ PhiG.conj().T @ g, g, rtol=1e-6)


def test_stacked_filter_reduces_to_single():
    sc = Scenario(sigma2=1e-3)
    G = build_ap_ris_link(sc)
    v = random_configs(sc, 1, 1)[0]
    assert np.allclose(mmse_filter_stacked(G, [v], sc), mmse_filter(G, v, sc), rtol=1e-12)


def test_equalize_noiseless_columns_identical():
    sc = Scenario(sigma2=1e-300)
    G = build_ap_ris_link(sc)
    v = random_configs(sc, 1, 2)[0]
    h = ue(sc)
    blk = synthesize_rx(h, G, v, zc_sequence(15).samples, sc, seed=0)
    x = equalize(blk, mmse_filter(G, v, sc), sc)
    assert np.allclose(x, x[:, [0]], rtol=1e-10)
    assert np.linalg.matrix_rank(x, tol=1e-8 * np.abs(x).max()) == 1


def test_stack_requires_same_sequence():
    sc = Scenario()
    G = build_ap_ris_link(sc)
    v = RisConfiguration.identity(sc.N)
    a = synthesize_rx(ue(sc), G, v, zc_sequence(7).samples, sc, seed=0)
    b = synthesize_rx(ue(sc), G, v, zc_sequence(9).samples, sc, seed=0)
    with pytest.raises(InvalidInputError):
        stack_blocks([a, b])


# -- MUSIC ------------------------------------------------------------------

def snapshots(sc, az, L=64, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    b = pla_matrix(0.0, az, sc.Nx, sc.Ny, sc.delta)
    amp = rng.standard_normal(L) + 1j * rng.standard_normal(L)
    n = noise * (rng.standard_normal((sc.N, L)) + 1j * rng.standard_normal((sc.N, L)))
    return b @ amp[None, :] + n


def test_music_noiseless_source():
    sc = Scenario()
    grid = np.arange(280.0, 320.0001, 0.5)
    _, th = music_doa(snapshots(sc, 300.3, noise=1e-9), grid, sc)
    assert abs(th - 300.3) < 0.5


def test_music_white_noise_is_flat():
    sc = Scenario()
    rng = np.random.default_rng(4)
    x = rng.standard_normal((sc.N, 2000)) + 1j * rng.standard_normal((sc.N, 2000))
    spec, _ = music_doa(x, np.arange(0.0, 360.0, 1.0), sc)
    assert spec.values.max() / spec.values.min() < 10


def test_music_grid_consistency():
    sc = Scenario()
    x = snapshots(sc, 301.37, noise=0.05, seed=5)
    for step in (1.0, 0.5, 0.25, 0.125):
        _, coarse = music_doa(x, np.arange(285.0, 315.0 + 1e-9, step), sc)
        _, fine = music_doa(x, np.arange(285.0, 315.0 + 1e-9, step / 2), sc)
        assert abs(coarse - fine) <= step


def test_music_zero_snapshots():
    sc = Scenario()
    with pytest.raises(EstimationError):
        music_doa(np.zeros((sc.N, 4)), np.arange(0.0, 10.0), sc)
    with pytest.raises(InvalidInputError):
        music_doa(np.ones((sc.N, 1)), np.arange(0.0, 10.0), sc)


def test_alias_resolves_to_ap_side():
    sc = Scenario()  # AP seen from the RIS at 45 deg, so cos(azimuth) > 0 is the front
    grid = np.arange(260.0, 282.0 + 1e-9, 0.05)
    for true in (265.0, 275.0):
        _, th = music_doa(snapshots(sc, true, noise=1e-6), grid, sc)
        assert th == pytest.approx(275.0, abs=0.01)
    # no mirror inside the window: reported as is
    _, th = music_doa(snapshots(sc, 265.0, noise=1e-6), np.arange(250.0, 268.0, 0.05), sc)
    assert th == pytest.approx(265.0, abs=0.01)


def test_alias_endfire_ap_falls_back_to_smaller():
    sc = Scenario(psi_D_x=270.0)  # AP straight along the array axis
    _, th = music_doa(snapshots(sc, 275.0, noise=1e-6), np.arange(260.0, 282.0, 0.05), sc)
    assert th == pytest.approx(265.0, abs=0.01)


def test_single_probe_cannot_resolve_direction():
    sc = Scenario()
    G = build_ap_ris_link(sc)
    blk = synthesize_rx(ue(sc), G, random_configs(sc, 1, 6)[0], zc_sequence(63).samples, sc, seed=1)
    with pytest.raises(EstimationError):
        stacked_doa([blk], G, sc, np.arange(260.0, 320.0, 0.1))


def test_stacked_doa_recovers_direction():
    sc = Scenario()
    G = build_ap_ris_link(sc)
    s = zc_sequence(63).samples
    blocks = [synthesize_rx(ue(sc), G, v, s, sc, seed=i)
              for i, v in enumerate(random_configs(sc, 3, 7))]
    _, th = stacked_doa(blocks, G, sc, np.arange(285.0, 315.0, 0.05), refine="polish")
    assert abs(th - 300.0) < 0.1


def test_doa_error_shrinks_with_snr():
    G_sc = Scenario()
    configs = random_configs(G_sc, 3, 8)
    s = zc_sequence(63).samples
    grid = np.arange(290.0, 310.0, 0.1)
    med = []
    for sigma2 in (1e-3, 1e-4):  # the second is 10 dB better
        sc = Scenario(sigma2=sigma2)
        G = build_ap_ris_link(sc)
        h = ue(sc)
        errs = []
        for t in range(200):
            blocks = [synthesize_rx(h, G, v, s, sc, seed=1000 * t + i) for i, v in enumerate(configs)]
            errs.append(abs(stacked_doa(blocks, G, sc, grid)[1] - 300.0))
        med.append(np.median(errs))
    assert med[1] <= med[0]


# -- ZC and ranging ---------------------------------------------------------

def test_zc_l3_values():
    s = zc_sequence(3).samples
    assert np.allclose(s, [np.exp(-2j * np.pi / 3), 1.0, 1.0])


@pytest.mark.parametrize("L", [63, 127, 839])
def test_zc_cazac(L):
    s = zc_sequence(L).samples
    assert np.allclose(np.abs(s), 1.0)
    r = periodic_autocorrelation(s)
    assert r[0].real == pytest.approx(L)
    assert np.max(np.abs(r[1:])) / abs(r[0]) < 1e-9


def test_zc_rejects_even_length():
    with pytest.raises(InvalidInputError):
        zc_sequence(64)


def test_upsample_keeps_original_samples():
    x = np.exp(1j * np.arange(9) ** 2 / 3)
    assert np.allclose(upsample(x, 4)[::4], x)


def _noiseless_block(d, sc):
    G = build_ap_ris_link(sc)
    s = zc_sequence(63)
    blk = synthesize_rx(ue(sc, d=d), G, RisConfiguration.identity(sc.N), s.samples, sc,
                        seed=0, delay=(d + sc.d_G) / sc.c)
    return blk, s


def test_toa_integer_lag_example():
    sc = Scenario(sigma2=1e-300)
    blk, s = _noiseless_block(70.0, sc)
    est = toa_estimate(blk, s, sc, U=1)
    assert est.lag == 12
    assert est.distance == pytest.approx(12 / 30.72e6 * C - 50.0)
    assert est.distance == pytest.approx(67.1, abs=0.05)


def test_toa_upsampled_bound():
    sc = Scenario(sigma2=1e-300)
    for d in (20.0, 47.3, 70.0, 80.0):
        blk, s = _noiseless_block(d, sc)
        assert abs(toa_estimate(blk, s, sc, U=32).distance - d) <= C / (2 * 32 * 30.72e6) + 1e-3


def test_toa_zero_delay_loopback():
    sc = Scenario(sigma2=1e-300)
    G = build_ap_ris_link(sc)
    s = zc_sequence(63)
    blk = synthesize_rx(ue(sc), G, RisConfiguration.identity(sc.N), s.samples, sc,
                        delay=sc.d_G / sc.c)
    assert abs(toa_estimate(blk, s, sc, U=32).distance) <= C / (32 * 30.72e6)


def test_toa_weak_peak_fails():
    sc = Scenario()
    G = build_ap_ris_link(sc)
    s = zc_sequence(63)
    blk = synthesize_rx(ue(sc), G, RisConfiguration(np.zeros(sc.N)), s.samples, sc, seed=2)
    with pytest.raises(EstimationError):
        toa_estimate(blk, s, sc, U=8, threshold=50.0)


def test_music_2d_finds_elevated_source():
    from rislocate.estimate import music_doa_2d
    sc = Scenario()
    rng = np.random.default_rng(9)
    b = pla_matrix(20.0, 300.0, sc.Nx, sc.Ny, sc.delta)
    x = b * (rng.standard_normal(32) + 1j * rng.standard_normal(32))[None, :]
    x = x + 1e-6 * (rng.standard_normal(x.shape) + 1j * rng.standard_normal(x.shape))
    S, (az, el) = music_doa_2d(x, np.arange(250.0, 350.0, 1.0), np.arange(0.0, 41.0, 1.0), sc)
    assert S.shape == (41, 100)
    assert (az, el) == (pytest.approx(300.0), pytest.approx(20.0))
