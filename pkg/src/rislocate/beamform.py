"""Statistical RIS beamforming from a position prior."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import (ApRisLink, RisConfiguration, Scenario, build_ap_ris_link,
                      ue_channel_matrix)
from .errors import InvalidInputError
from .geometry import CartesianPosition, pla_matrix, unit_direction, wrap_azimuth
from .sdp import (DEFAULT_MAX_CONSTRAINTS, DEFAULT_SAMPLES, DEFAULT_TOL, MaxMinSdpProblem,
                  SdpSolution, gaussian_randomization, solve_maxmin_sdp)

__all__ = ["RisConfiguration", "PositionPrior", "PriorSamples", "BeamDesign", "sample_prior",
           "build_equivalent_channel", "gram_factors", "optimize_ris", "design_ris",
           "beam_pattern"]


@dataclass(frozen=True)
class PositionPrior:
    """Uniform sector in the RIS-centered frame.

    ``azimuth`` may run past 360 (e.g. ``(340, 380)``) to describe a sector
    straddling the +x axis. ``elevation`` is either a fixed angle or an
    interval sampled uniformly.
    """

    azimuth: tuple[float, float]
    range: tuple[float, float]
    elevation: float | tuple[float, float] = 0.0
    kind: str = "uniform-sector"

    def __post_init__(self):
        a0, a1 = map(float, self.azimuth)
        r0, r1 = map(float, self.range)
        if self.kind != "uniform-sector":
            raise InvalidInputError(f"unsupported prior kind {self.kind!r}")
        if not (a1 >= a0 and a1 - a0 <= 360.0):
            raise InvalidInputError(f"bad azimuth interval {self.azimuth}")
        if not (r1 >= r0 and r0 > 0):
            raise InvalidInputError(f"bad range interval {self.range}")
        object.__setattr__(self, "azimuth", (a0, a1))
        object.__setattr__(self, "range", (r0, r1))

    @property
    def azimuth_width(self) -> float:
        return self.azimuth[1] - self.azimuth[0]

    @property
    def elevation_interval(self) -> tuple[float, float]:
        el = self.elevation
        return (float(el), float(el)) if np.isscalar(el) else (float(el[0]), float(el[1]))

    def contains_azimuth(self, az: float) -> bool:
        a0, _ = self.azimuth
        return float(np.mod(az - a0, 360.0)) <= self.azimuth_width + 1e-9

    def azimuth_density(self, az: float) -> float:
        """Marginal azimuth density in 1/deg (point mass for zero width)."""
        if not self.contains_azimuth(az):
            return 0.0
        return np.inf if self.azimuth_width == 0 else 1.0 / self.azimuth_width


@dataclass(frozen=True)
class PriorSamples:
    """Sample points in RIS-frame polar coordinates, sorted by azimuth."""

    azimuth: np.ndarray
    elevation: np.ndarray
    range: np.ndarray

    def __len__(self):
        return len(self.azimuth)

    def positions(self, ris_center: CartesianPosition) -> list[CartesianPosition]:
        xyz = ris_center.as_array() + self.range[:, None] * unit_direction(self.azimuth,
                                                                           self.elevation)
        return [CartesianPosition.from_array(p) for p in xyz]


def _draw(prior: PositionPrior, T: int, rng) -> PriorSamples:
    if T < 1:
        raise InvalidInputError("T must be >= 1")
    a0, a1 = prior.azimuth
    r0, r1 = prior.range
    e0, e1 = prior.elevation_interval
    az = wrap_azimuth(a0 + (a1 - a0) * rng.random(T))
    rg = r0 + (r1 - r0) * rng.random(T)
    el = e0 + (e1 - e0) * rng.random(T) if e1 > e0 else np.full(T, e0)
    # order by offset into the sector so evenly spaced thinning covers it
    order = np.lexsort((rg, np.mod(az - a0, 360.0)))
    return PriorSamples(np.asarray(az)[order], el[order], rg[order])


def sample_prior(prior: PositionPrior, T: int, seed=None,
                 ris_center: CartesianPosition | None = None) -> list[CartesianPosition]:
    """Draw ``T`` i.i.d. positions; Cartesian in the global frame when
    ``ris_center`` is given, otherwise relative to the RIS center."""
    s = _draw(prior, T, np.random.default_rng(seed))
    center = ris_center if ris_center is not None else CartesianPosition(0.0, 0.0, 0.0)
    return s.positions(center)


def build_equivalent_channel(p: CartesianPosition, G: ApRisLink, sc: Scenario,
                             ris_center: CartesianPosition | None = None) -> np.ndarray:
    """``H(p) = diag(h(p)^H) G``, an N x M matrix."""
    from .channel import build_ue_channel

    h = build_ue_channel(p, sc, ris_center).vector
    if len(h) != G.matrix.shape[0]:
        raise InvalidInputError("RIS size mismatch")
    return h.conj()[:, None] * G.matrix


def gram_factors(samples: PriorSamples, G: ApRisLink, sc: Scenario) -> np.ndarray:
    """Rank-one factors ``f_t`` with ``H(p_t) H(p_t)^H = f_t f_t^H``; shape (T, N, 1).

    ``G = sqrt(gamma_G) b a^H`` gives ``H H^H = ||G e||^2``-scaled outer
    products of ``conj(h) * b``; the factor is read off the first left
    singular direction of G to stay valid for any rank-one link.
    """
    h = ue_channel_matrix(samples.azimuth, samples.elevation, samples.range, sc)
    U, s, _ = np.linalg.svd(G.matrix, full_matrices=False)
    if len(s) > 1 and s[1] > 1e-9 * s[0]:
        # general link: exact factor H itself
        return (h.conj().T[:, :, None] * G.matrix[None])
    g = U[:, 0] * s[0]
    return (h.conj() * g[:, None]).T[:, :, None]


@dataclass
class BeamDesign:
    """Result of :func:`design_ris` with its intermediate products."""

    config: RisConfiguration
    sdp: SdpSolution
    problem: MaxMinSdpProblem
    samples: PriorSamples
    rounded_objective: float

    @property
    def min_snr(self) -> float:
        """Smallest sampled SNR under the rounded configuration, times sigma2/P."""
        return self.rounded_objective


def design_ris(prior: PositionPrior, sc: Scenario, T: int = 1000, K: int = DEFAULT_SAMPLES,
               tol: float = DEFAULT_TOL, seed=None,
               max_constraints: int | None = DEFAULT_MAX_CONSTRAINTS,
               G: ApRisLink | None = None) -> BeamDesign:
    """Sample the prior, solve the relaxed max-min SNR problem and round it."""
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    s_draw, s_round = ss.spawn(2)
    G = build_ap_ris_link(sc) if G is None else G
    samples = _draw(prior, T, np.random.default_rng(s_draw))
    prob = MaxMinSdpProblem.from_factors(gram_factors(samples, G, sc))
    sol = solve_maxmin_sdp(prob, tol=tol, max_constraints=max_constraints)
    v = gaussian_randomization(sol, prob, K, seed=s_round)
    return BeamDesign(RisConfiguration(v), sol, prob, samples, prob.min_quad(v))


def optimize_ris(prior: PositionPrior, sc: Scenario, T: int = 1000, K: int = DEFAULT_SAMPLES,
                 tol: float = DEFAULT_TOL, seed=None,
                 max_constraints: int | None = DEFAULT_MAX_CONSTRAINTS) -> RisConfiguration:
    """Unit-modulus RIS configuration maximizing the minimum sampled SNR."""
    return design_ris(prior, sc, T, K, tol, seed, max_constraints).config


def beam_pattern(v: RisConfiguration, G: ApRisLink, sc: Scenario, grid,
                 elevation: float = 0.0) -> list[tuple[float, float]]:
    """Gain ``||G^H Phi^H b(theta)||^2`` toward the AP for unit-power test sources."""
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if grid.size == 0:
        raise InvalidInputError("empty angle grid")
    B = pla_matrix(elevation, grid, sc.Nx, sc.Ny, sc.delta)
    out = G.matrix.conj().T @ (v.v[:, None] * B)
    gain = np.sum(np.abs(out) ** 2, axis=0)
    return list(zip(grid.tolist(), gain.tolist()))
