"""Iterative search-area refinement: probe, estimate, keep the likeliest subareas."""
from __future__ import annotations

import functools
from dataclasses import dataclass, field, replace

import numpy as np

from .beamform import PositionPrior, optimize_ris
from .channel import (ApRisLink, ReceivedBlock, RisConfiguration, Scenario, build_ap_ris_link,
                      build_ue_channel, snr, synthesize_rx)
from .errors import AlgorithmError, EstimationError, InvalidInputError, SolverError
from .estimate import (Pseudospectrum, ToaEstimate, angle_difference, stacked_doa,
                       toa_estimate, zc_sequence)
from .geometry import (CartesianPosition, PolarPosition, cartesian_to_polar,
                       polar_to_cartesian, wrap_azimuth)

__all__ = ["SearchArea", "LocalizationConfig", "ProbeOutcome", "IterationRecord",
           "LocalizationEstimate", "subdivide", "probe_subarea", "likelihood_of_estimate",
           "rank_subareas", "run_localization", "derive_seed"]


@dataclass(frozen=True)
class SearchArea:
    """Azimuth sector (degrees, may run past 360) and range interval in the RIS frame."""

    azimuth: tuple[float, float]
    range: tuple[float, float]
    elevation: float = 0.0

    def __post_init__(self):
        a0, a1 = map(float, self.azimuth)
        r0, r1 = map(float, self.range)
        if not a1 > a0 or a1 - a0 > 360.0:
            raise InvalidInputError(f"azimuth interval must have 0 < width <= 360, got {self.azimuth}")
        if not (0 < r0 <= r1):
            raise InvalidInputError(f"bad range interval {self.range}")
        object.__setattr__(self, "azimuth", (a0, a1))
        object.__setattr__(self, "range", (r0, r1))

    @property
    def width(self) -> float:
        return self.azimuth[1] - self.azimuth[0]

    def prior(self) -> PositionPrior:
        return PositionPrior(self.azimuth, self.range, self.elevation)

    @classmethod
    def from_prior(cls, prior: PositionPrior) -> "SearchArea":
        el = prior.elevation_interval
        return cls(prior.azimuth, prior.range, 0.5 * (el[0] + el[1]))

    def grid(self, step: float) -> np.ndarray:
        n = max(int(round(self.width / step)), 2)
        return np.linspace(self.azimuth[0], self.azimuth[1], n + 1)


@dataclass(frozen=True)
class LocalizationConfig:
    epsilon: float = 0.5
    N_A: int = 3
    overlap: float = 0.2
    T: int = 1000
    K: int = 500
    U: int = 32
    L: int = 63
    max_iter: int = 15
    grid_step: float = 0.05
    sdp_tol: float = 1e-6
    max_constraints: int | None = 200
    toa_threshold: float = 3.0
    refine: str = "polish"
    tie_rtol: float = 1e-3

    def __post_init__(self):
        if self.N_A < 3:
            raise InvalidInputError("N_A must be >= 3")
        if not 0 <= self.overlap < 1:
            raise InvalidInputError("overlap must lie in [0, 1)")
        if self.epsilon < 0 or self.max_iter < 1 or self.grid_step <= 0:
            raise InvalidInputError("need epsilon >= 0, max_iter >= 1, grid_step > 0")


@dataclass
class ProbeOutcome:
    """One subarea probe. ``theta_hat`` is None when the probe failed."""

    area: SearchArea
    config: RisConfiguration | None = None
    block: ReceivedBlock | None = None
    snr: float = float("nan")
    theta_hat: float | None = None
    spectrum: Pseudospectrum | None = None
    sharpness: float = float("nan")
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.theta_hat is None


@dataclass
class IterationRecord:
    iteration: int
    area: SearchArea
    outcomes: list
    best_index: int
    best_theta: float
    next_area: SearchArea
    spectrum: Pseudospectrum
    toa: ToaEstimate | None
    d_hat: float
    p_hat: CartesianPosition

    @property
    def estimates(self) -> list:
        return [o.theta_hat for o in self.outcomes]

    @property
    def configs(self) -> list:
        return [o.config for o in self.outcomes]

    @property
    def snrs(self) -> list:
        return [o.snr for o in self.outcomes]


@dataclass
class LocalizationEstimate:
    theta_hat: float
    d_hat: float
    p_hat: CartesianPosition
    history: list = field(default_factory=list)
    converged: bool = False
    iterations: int = 0


def derive_seed(seed, *key) -> np.random.SeedSequence:
    """Child seed addressed by ``key``; the same key always yields the same stream."""
    base = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return np.random.SeedSequence(base.entropy, spawn_key=tuple(base.spawn_key) + tuple(key))


def subdivide(area: SearchArea, N_A: int, overlap: float) -> list[SearchArea]:
    """Split the azimuth interval into ``N_A`` equal slices widened by
    ``overlap * width / 2`` on every interior side."""
    if N_A < 3:
        raise InvalidInputError("N_A must be >= 3")
    if not 0 <= overlap < 1:
        raise InvalidInputError("overlap must lie in [0, 1)")
    a0, a1 = area.azimuth
    w = (a1 - a0) / N_A
    pad = overlap * w / 2
    out = []
    for i in range(N_A):
        lo = a0 + i * w - (pad if i > 0 else 0.0)
        hi = a0 + (i + 1) * w + (pad if i < N_A - 1 else 0.0)
        out.append(replace(area, azimuth=(lo, min(hi, a1) if i == N_A - 1 else hi)))
    return out


def likelihood_of_estimate(theta_hat: float, prior: PositionPrior) -> float:
    """Marginal prior density of the azimuth at ``theta_hat``."""
    return float(prior.azimuth_density(theta_hat))


def _collect(sub, sc, G, h, s, cfg, seed) -> ProbeOutcome:
    out = ProbeOutcome(sub)
    try:
        v = optimize_ris(sub.prior(), sc, T=cfg.T, K=cfg.K, tol=cfg.sdp_tol,
                         seed=derive_seed(seed, 0), max_constraints=cfg.max_constraints)
    except SolverError as e:
        out.error = f"solver: {e}"
        return out
    out.config = v
    out.snr = snr(h, G, v, sc)
    out.block = synthesize_rx(h, G, v, s, sc, seed=derive_seed(seed, 1),
                              delay=(h.distance + sc.d_G) / sc.c)
    return out


def probe_subarea(sub: SearchArea, sc: Scenario, true_ue: CartesianPosition,
                  cfg: LocalizationConfig | None = None, seed=None, bank=(),
                  G: ApRisLink | None = None) -> ProbeOutcome:
    """Design a beam for ``sub``, probe the UE and estimate its azimuth.

    The estimate uses this probe jointly with the earlier blocks in
    ``bank``; a lone probe carries no angular information, so an empty
    bank yields a failed outcome. Failures are recorded, not raised.
    """
    cfg = cfg or LocalizationConfig()
    G = G if G is not None else build_ap_ris_link(sc)
    h = build_ue_channel(true_ue, sc)
    out = _collect(sub, sc, G, h, zc_sequence(cfg.L).samples, cfg, seed)
    if out.block is None:
        return out
    try:
        spec, th = stacked_doa(list(bank) + [out.block], G, sc, sub.grid(cfg.grid_step),
                               sub.elevation, cfg.refine)
    except EstimationError as e:
        out.error = f"doa: {e}"
        return out
    out.theta_hat, out.spectrum, out.sharpness = th, spec, spec.peak_to_median()
    return out


def rank_subareas(outcomes, prior: PositionPrior, rtol: float = 1e-3) -> list[int]:
    """Indices of usable outcomes, likeliest first.

    Likelihood ties (always the case for a uniform prior) fall back to
    sharpness; sharpness values within ``rtol`` of each other count as
    equal and the lower index wins.
    """
    idx = [i for i, o in enumerate(outcomes) if not o.failed]
    lik = {i: likelihood_of_estimate(outcomes[i].theta_hat, prior) for i in idx}

    def close(a, b, tol):
        return abs(a - b) <= tol * max(abs(a), abs(b)) or a == b

    def cmp(i, j):
        if not close(lik[i], lik[j], 1e-12):
            return -1 if lik[i] > lik[j] else 1
        si, sj = outcomes[i].sharpness, outcomes[j].sharpness
        if not close(si, sj, rtol):
            return -1 if si > sj else 1
        return -1 if i < j else 1

    return sorted(idx, key=functools.cmp_to_key(cmp))


def _slice_estimate(spec: Pseudospectrum, sub: SearchArea, blocks, G, sc, cfg):
    win = spec.window(*sub.azimuth)
    if len(win) < 3:
        raise EstimationError("subarea narrower than the grid step")
    # re-run the refinement on the slice grid; the spectrum itself is pooled
    _, th = stacked_doa(blocks, G, sc, win.grid, sub.elevation, cfg.refine)
    return th, float(np.max(win.values))


def _toa(block, s, sc, cfg):
    try:
        return toa_estimate(block, s, sc, U=cfg.U, threshold=cfg.toa_threshold)
    except EstimationError:
        return None


def run_localization(sc: Scenario, prior: PositionPrior, true_ue: CartesianPosition,
                     cfg: LocalizationConfig | None = None, seed=None) -> LocalizationEstimate:
    """Locate one UE by iterative subarea probing followed by ranging.

    Every iteration probes all subareas of the current area, runs MUSIC
    once over the area on all probes collected so far, scores each
    subarea by the prior likelihood of its estimate (sharpness breaks
    ties), and keeps the bounding sector of the ``N_A - 1`` best. The
    loop stops once consecutive best azimuths agree within ``epsilon``.
    """
    cfg = cfg or LocalizationConfig()
    G = build_ap_ris_link(sc)
    h = build_ue_channel(true_ue, sc)
    s = zc_sequence(cfg.L)
    area = SearchArea.from_prior(prior)
    bank: list[ReceivedBlock] = []
    history: list[IterationRecord] = []
    prev = None
    converged = False
    d_last = 0.5 * sum(prior.range)

    for n in range(1, cfg.max_iter + 1):
        subs = subdivide(area, cfg.N_A, cfg.overlap)
        outcomes = [_collect(sub, sc, G, h, s.samples, cfg, derive_seed(seed, n, l))
                    for l, sub in enumerate(subs)]
        bank.extend(o.block for o in outcomes if o.block is not None)
        if not bank:
            raise AlgorithmError(f"iteration {n}: every probe failed", history)
        grid = area.grid(cfg.grid_step)
        try:
            spec, _ = stacked_doa(bank, G, sc, grid, area.elevation, "none")
        except EstimationError as e:
            raise AlgorithmError(f"iteration {n}: {e}", history) from e
        med = float(np.median(spec.values))
        for o in outcomes:
            if o.block is None:
                continue
            try:
                o.theta_hat, peak = _slice_estimate(spec, o.area, bank, G, sc, cfg)
            except EstimationError as e:
                o.error = f"doa: {e}"
                continue
            o.spectrum = spec.window(*o.area.azimuth)
            o.sharpness = peak / med
        order = rank_subareas(outcomes, prior, cfg.tie_rtol)
        if not order:
            raise AlgorithmError(f"iteration {n}: every subarea failed", history)
        best = order[0]
        keep = order[:cfg.N_A - 1]
        nxt = replace(area, azimuth=(min(subs[i].azimuth[0] for i in keep),
                                     max(subs[i].azimuth[1] for i in keep)))
        theta = outcomes[best].theta_hat
        toa = _toa(outcomes[best].block, s, sc, cfg)
        if toa is not None and toa.distance > 0:
            d_last = toa.distance
        p_hat = polar_to_cartesian(PolarPosition(theta, area.elevation, d_last), sc.ris_center)
        history.append(IterationRecord(n, area, outcomes, best, theta, nxt, spec, toa,
                                       d_last, p_hat))
        if prev is not None and abs(angle_difference(theta, prev)) <= cfg.epsilon:
            converged = True
            break
        prev = theta
        area = nxt

    last = history[-1]
    if last.toa is None or last.toa.distance <= 0:
        raise AlgorithmError("ranging failed on the final probe", history)
    return LocalizationEstimate(wrap_azimuth(last.best_theta), last.toa.distance, last.p_hat,
                                history, converged, len(history))
