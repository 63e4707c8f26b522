"""Quick invariant suite behind ``rislocate selftest``."""
from __future__ import annotations

import numpy as np

from ..beamform import PositionPrior, optimize_ris
from ..channel import (RisConfiguration, Scenario, analytic_max_snr, build_ap_ris_link, build_ue_channel, snr,
                       synthesize_rx)
from ..estimate import (mmse_filter, mmse_filter_stacked, periodic_autocorrelation,
                        toa_estimate, zc_sequence)
from ..geometry import PolarPosition, polar_to_cartesian
from ..localize import SearchArea, subdivide
from ..sdp import MaxMinSdpProblem, solve_maxmin_sdp
from .campaign import compute_rmse


def _zc():
    worst = 0.0
    for L in (63, 127, 839):
        r = np.abs(periodic_autocorrelation(zc_sequence(L)))
        worst = max(worst, r[1:].max() / r[0])
    return worst < 1e-9, f"max sidelobe ratio {worst:.2e}"


def _sdp(seed):
    rng = np.random.default_rng(seed)
    N = 6
    f = np.exp(2j * np.pi * rng.random(N))
    sol = solve_maxmin_sdp(MaxMinSdpProblem.from_factors(f[None, :, None]))
    rel = abs(sol.objective - N ** 2) / N ** 2
    return rel < 1e-4 and sol.objective <= sol.dual_bound * (1 + 1e-9), f"rel err {rel:.2e}"


def _point_prior(seed):
    sc = Scenario()
    ue = polar_to_cartesian(PolarPosition(300.0, 0.0, 70.0), sc.ris_center)
    h, G = build_ue_channel(ue, sc), build_ap_ris_link(sc)
    v = optimize_ris(PositionPrior((300.0, 300.0), (70.0, 70.0)), sc, T=8, seed=seed)
    ratio = snr(h, G, v, sc) / analytic_max_snr(h, G, sc)
    return ratio >= 0.95, f"SNR ratio {ratio:.4f}"


def _toa(seed):
    sc = Scenario(sigma2=1e-30)
    ue = polar_to_cartesian(PolarPosition(300.0, 0.0, 70.0), sc.ris_center)
    h, G = build_ue_channel(ue, sc), build_ap_ris_link(sc)
    s = zc_sequence(63)
    blk = synthesize_rx(h, G, RisConfiguration.identity(sc.N), s.samples, sc, seed=seed,
                        delay=(70.0 + sc.d_G) / sc.c)
    err = abs(toa_estimate(blk, s, sc, U=32).distance - 70.0)
    bound = sc.c / (2 * 32 * sc.delta_f) + 1e-3
    return err <= bound, f"error {err:.4f} m, bound {bound:.4f} m"


def _mmse(seed):
    # moderate sigma2/P keeps the comparison well conditioned
    sc = Scenario(sigma2=1e-3)
    rng = np.random.default_rng(seed)
    v = RisConfiguration(np.exp(2j * np.pi * rng.random(sc.N)))
    G = build_ap_ris_link(sc)
    d = np.max(np.abs(mmse_filter(G, v, sc) - mmse_filter_stacked(G, [v], sc)))
    return d < 1e-12 * np.max(np.abs(mmse_filter(G, v, sc))), f"max diff {d:.2e}"


def _subdivide():
    got = [s.azimuth for s in subdivide(SearchArea((260.0, 320.0), (20.0, 80.0)), 3, 0.2)]
    want = [(260.0, 282.0), (278.0, 302.0), (298.0, 320.0)]
    return bool(np.allclose(got, want)), f"{got}"


def _rmse():
    c = compute_rmse([[0.0], [10.0]])
    return abs(c.rmse[0] - np.sqrt(50.0)) < 1e-12, f"rmse {c.rmse[0]:.6f}"


def run_selftest(seed: int = 0) -> dict:
    checks = [("zc_autocorrelation", _zc), ("sdp_rank_one_optimum", lambda: _sdp(seed)),
              ("point_prior_snr", lambda: _point_prior(seed)), ("toa_noiseless", lambda: _toa(seed)),
              ("mmse_single_probe", lambda: _mmse(seed)), ("subdivide", _subdivide),
              ("rmse_arithmetic", _rmse)]
    out = []
    for name, fn in checks:
        try:
            ok, detail = fn()
        except Exception as e:  # report, do not abort the suite
            ok, detail = False, f"{type(e).__name__}: {e}"
        out.append({"name": name, "passed": bool(ok), "detail": detail})
    return {"passed": all(c["passed"] for c in out), "checks": out}
