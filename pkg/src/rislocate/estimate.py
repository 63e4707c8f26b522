"""MMSE equalization, MUSIC direction finding and Zadoff-Chu ranging."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .channel import ApRisLink, ReceivedBlock, RisConfiguration, Scenario
from .errors import EstimationError, InvalidInputError
from .geometry import ORIGIN, azimuth_alias, cartesian_to_polar, pla_matrix, wrap_azimuth

__all__ = ["Pseudospectrum", "ZcSequence", "ToaEstimate", "StackedBlock", "mmse_filter",
           "mmse_filter_stacked", "probe_matrix", "stack_blocks", "equalize", "whitener",
           "music_doa", "music_doa_2d", "stacked_doa", "zc_sequence", "periodic_autocorrelation",
           "upsample", "toa_estimate", "angle_difference"]

REFINE_MODES = ("none", "parabolic", "polish")


@dataclass
class Pseudospectrum:
    """MUSIC metric ``S(theta)`` sampled on an azimuth grid (degrees)."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.grid = np.asarray(self.grid, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if self.grid.shape != self.values.shape:
            raise InvalidInputError("grid and values differ in length")

    def __len__(self):
        return len(self.grid)

    def peak_to_median(self) -> float:
        return float(np.max(self.values) / np.median(self.values))

    def window(self, lo: float, hi: float) -> "Pseudospectrum":
        sel = (self.grid >= lo - 1e-9) & (self.grid <= hi + 1e-9)
        return Pseudospectrum(self.grid[sel], self.values[sel])


@dataclass(frozen=True)
class ZcSequence:
    samples: np.ndarray

    @property
    def L(self) -> int:
        return len(self.samples)


@dataclass(frozen=True)
class ToaEstimate:
    """Ranging result. ``lag`` is in (fractional) samples at rate delta_f."""

    tau: float
    lag: float
    distance: float
    peak_ratio: float = np.inf

    @property
    def flagged(self) -> bool:
        return self.distance < 0


@dataclass(frozen=True)
class StackedBlock:
    """Several probes of the same sequence, rows stacked probe by probe."""

    samples: np.ndarray
    sequence: np.ndarray
    configs: tuple


def angle_difference(a, b):
    """Signed smallest difference ``a - b`` in degrees, in [-180, 180)."""
    return np.mod(np.asarray(a) - np.asarray(b) + 180.0, 360.0) - 180.0


# -- MMSE -----------------------------------------------------------------

def mmse_filter(G: ApRisLink, phi: RisConfiguration, sc: Scenario) -> np.ndarray:
    """``W = (Phi G G^H Phi^H + sigma2/P I)^-1 Phi G`` for one configuration (N x M)."""
    Gm = np.asarray(G.matrix)
    if len(phi.v) != Gm.shape[0]:
        raise InvalidInputError("configuration and AP-RIS link disagree on N")
    PhiG = phi.v.conj()[:, None] * Gm
    A = PhiG @ PhiG.conj().T + (sc.sigma2 / sc.P) * np.eye(Gm.shape[0])
    return np.linalg.solve(A, PhiG)


def probe_matrix(G: ApRisLink, configs: Sequence[RisConfiguration]) -> np.ndarray:
    """Noiseless map from ``h`` to stacked AP samples: rows ``G^H Phi_k^H`` (KM x N)."""
    if not configs:
        raise InvalidInputError("need at least one configuration")
    Gh = np.asarray(G.matrix).conj().T
    return np.vstack([Gh * c.v[None, :] for c in configs])


def mmse_filter_stacked(G: ApRisLink, configs: Sequence[RisConfiguration],
                        sc: Scenario) -> np.ndarray:
    """Joint MMSE filter over several probes (N x KM).

    With ``B = probe_matrix(G, configs)`` this is
    ``(B^H B + sigma2/P I)^-1 B^H``, which reduces to :func:`mmse_filter`
    for a single configuration.
    """
    B = probe_matrix(G, configs)
    N = B.shape[1]
    return np.linalg.solve(B.conj().T @ B + (sc.sigma2 / sc.P) * np.eye(N), B.conj().T)


def stack_blocks(blocks: Sequence[ReceivedBlock]) -> StackedBlock:
    if not blocks:
        raise InvalidInputError("no blocks to stack")
    s = blocks[0].sequence
    for b in blocks[1:]:
        if b.samples.shape[1] != len(s) or not np.array_equal(b.sequence, s):
            raise InvalidInputError("stacked blocks must share the transmit sequence")
    return StackedBlock(np.vstack([b.samples for b in blocks]), s,
                        tuple(b.config for b in blocks))


def equalize(y, W: np.ndarray, sc: Scenario) -> np.ndarray:
    """Columns ``x(n) = W y(n) s(n)^* / sqrt(P)`` (N x L)."""
    Y = np.asarray(y.samples)
    if W.shape[1] != Y.shape[0]:
        raise InvalidInputError(f"filter has {W.shape[1]} inputs, block has {Y.shape[0]} rows")
    return (W @ Y) * (np.conj(y.sequence)[None, :] / np.sqrt(sc.P))


def whitener(W: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Map ``x = W z`` to coordinates where white noise in ``z`` stays white.

    Returns ``S^-1 U^H`` from the thin SVD ``W = U S V^H``, truncated to the
    numerical rank, so ``whitener(W) @ W`` has orthonormal rows.
    """
    U, s, _ = np.linalg.svd(W, full_matrices=False)
    r = int(np.sum(s > rtol * s[0])) if s.size and s[0] > 0 else 0
    if r == 0:
        raise EstimationError("equalizer is identically zero")
    return (U[:, :r] / s[:r]).conj().T


# -- MUSIC ----------------------------------------------------------------

def _null_metric(En: np.ndarray, Q: np.ndarray) -> np.ndarray:
    num = np.sum(np.abs(En.conj().T @ Q) ** 2, axis=0)
    den = np.sum(np.abs(Q) ** 2, axis=0)
    return num / np.maximum(den, 1e-300)


def music_doa(x, grid, sc: Scenario, elevation: float = 0.0, transform=None,
              refine: str = "parabolic"):
    """Single-source MUSIC over an azimuth grid.

    Parameters
    ----------
    x : ndarray, shape (R, L)
        Snapshots, ``L >= 2``.
    grid : array_like
        Increasing azimuths in degrees; may run past 360.
    transform : ndarray, shape (R, N), optional
        Effective manifold is ``transform @ b(theta)``; identity by default.
    refine : {"none", "parabolic", "polish"}
        Sub-grid refinement of the peak. ``parabolic`` fits the null
        metric ``||E_n^H q||^2`` at the three samples around the minimum;
        ``polish`` additionally minimizes it continuously between the
        neighboring grid points.

    Returns
    -------
    (Pseudospectrum, float)
        Spectrum ``1 / ||E_n^H q(theta)||^2`` (manifold normalized) and the
        estimate, wrapped to [0, 360). When the sine-mirrored azimuth
        ``180 - theta`` gives the same response and also lies inside the
        grid range, the one on the AP side of the RIS is reported (a
        reflecting surface only serves that half-space); the smaller
        azimuth wins if the AP sits exactly at endfire.
    """
    x = np.asarray(x, dtype=complex)
    grid = np.asarray(grid, dtype=float).ravel()
    if x.ndim != 2 or x.shape[1] < 2:
        raise InvalidInputError("need a 2-D snapshot matrix with at least 2 columns")
    if grid.size == 0:
        raise InvalidInputError("empty grid")
    if grid.size > 1 and np.any(np.diff(grid) <= 0):
        raise InvalidInputError("grid must be strictly increasing")
    if refine not in REFINE_MODES:
        raise InvalidInputError(f"refine must be one of {REFINE_MODES}")
    T = np.eye(sc.N, dtype=complex) if transform is None else np.asarray(transform)
    if T.shape != (x.shape[0], sc.N):
        raise InvalidInputError(f"transform must be {x.shape[0]}x{sc.N}, got {T.shape}")

    R = x @ x.conj().T / x.shape[1]
    if not np.all(np.isfinite(R)) or np.real(np.trace(R)) <= 0:
        raise EstimationError("degenerate covariance (zero or non-finite snapshots)")
    if x.shape[0] < 2:
        raise EstimationError("need at least two snapshot dimensions for a noise subspace")
    _, U = np.linalg.eigh(R)
    En = U[:, :-1]

    def manifold(az):
        return T @ pla_matrix(elevation, az, sc.Nx, sc.Ny, sc.delta)

    Q = manifold(grid)
    if grid.size > 1:
        sv = np.linalg.svd(Q / np.maximum(np.linalg.norm(Q, axis=0), 1e-300),
                           compute_uv=False)
        if sv.size < 2 or sv[1] < 1e-10 * sv[0]:
            raise EstimationError("manifold does not vary with azimuth; "
                                  "more than one probe configuration is needed")
    D = _null_metric(En, Q)
    spec = Pseudospectrum(grid, 1.0 / np.maximum(D, 1e-300))

    i = int(np.argmin(D))
    theta = grid[i]
    if refine != "none" and 0 < i < grid.size - 1:
        d0, d1, d2 = D[i - 1], D[i], D[i + 1]
        curv = d0 - 2 * d1 + d2
        if curv > 0:
            off = float(np.clip(0.5 * (d0 - d2) / curv, -1.0, 1.0))
            step = grid[i + 1] - grid[i] if off > 0 else grid[i] - grid[i - 1]
            theta = grid[i] + off * step
        if refine == "polish":
            res = minimize_scalar(lambda a: _null_metric(En, manifold(np.array([a])))[0],
                                  bounds=(grid[i - 1], grid[i + 1]), method="bounded",
                                  options={"xatol": 1e-7})
            if res.success and res.fun <= _null_metric(En, manifold(np.array([theta])))[0]:
                theta = float(res.x)
    theta = _resolve_alias(theta, grid, manifold, _ap_azimuth(sc))
    return spec, wrap_azimuth(theta)


def music_doa_2d(x, azimuths, elevations, sc: Scenario, transform=None):
    """Joint azimuth/elevation scan; returns (spectrum[el, az], (az_hat, el_hat)).

    Grid-resolution only. The planar array only sees
    ``(sin el cos az, sin az cos el)``, so distinct grid points can alias;
    restrict the grid to the half-space of interest.
    """
    x = np.asarray(x, dtype=complex)
    az = np.asarray(azimuths, dtype=float).ravel()
    el = np.asarray(elevations, dtype=float).ravel()
    if az.size == 0 or el.size == 0:
        raise InvalidInputError("empty grid")
    T = np.eye(sc.N, dtype=complex) if transform is None else np.asarray(transform)
    R = x @ x.conj().T / x.shape[1]
    if not np.all(np.isfinite(R)) or np.real(np.trace(R)) <= 0:
        raise EstimationError("degenerate covariance (zero or non-finite snapshots)")
    En = np.linalg.eigh(R)[1][:, :-1]
    E, A = np.meshgrid(el, az, indexing="ij")
    D = _null_metric(En, T @ pla_matrix(E.ravel(), A.ravel(), sc.Nx, sc.Ny, sc.delta))
    S = (1.0 / np.maximum(D, 1e-300)).reshape(E.shape)
    i, j = np.unravel_index(int(np.argmax(S)), S.shape)
    return S, (wrap_azimuth(az[j]), float(el[i]))


def _ap_azimuth(sc: Scenario) -> float:
    return cartesian_to_polar(ORIGIN, sc.ris_center).azimuth


def _resolve_alias(theta: float, grid: np.ndarray, manifold, ap_az: float) -> float:
    lo, hi = grid[0], grid[-1]
    mirror = azimuth_alias(theta)
    # representative of the mirror inside [lo, lo + 360)
    mirror = lo + np.mod(mirror - lo, 360.0)
    if mirror > hi + 1e-9 or abs(mirror - theta) < 1e-12:
        return theta
    q = manifold(np.array([theta, mirror]))
    c = abs(np.vdot(q[:, 0], q[:, 1]))
    if c < (1 - 1e-9) * np.linalg.norm(q[:, 0]) * np.linalg.norm(q[:, 1]):
        return theta
    # the mirror pair straddles the array axis; keep the AP-facing one
    side = np.cos(np.deg2rad(ap_az))
    if abs(side) > 1e-12:
        return theta if np.cos(np.deg2rad(theta)) * side > 0 else mirror
    return min(theta, mirror)


def stacked_doa(blocks: Sequence[ReceivedBlock], G: ApRisLink, sc: Scenario, grid,
                elevation: float = 0.0, refine: str = "parabolic"):
    """MUSIC on the joint MMSE output of several probes of one UE.

    Snapshots ``W y s^*/sqrt(P)`` from :func:`mmse_filter_stacked` are
    whitened before the subspace split, and the manifold becomes
    ``whitener(W) W B b(theta)``.
    """
    st = stack_blocks(blocks)
    W = mmse_filter_stacked(G, st.configs, sc)
    x = equalize(st, W, sc)
    Wh = whitener(W)
    transform = Wh @ W @ probe_matrix(G, st.configs)
    return music_doa(Wh @ x, grid, sc, elevation, transform, refine)


# -- ranging --------------------------------------------------------------

def zc_sequence(L: int = 63) -> ZcSequence:
    """``s(n) = exp(-j pi n (n + 1) / L)`` for ``n = 1..L``, L odd."""
    if int(L) != L or L < 3 or L % 2 == 0:
        raise InvalidInputError(f"L must be an odd integer >= 3, got {L}")
    n = np.arange(1, int(L) + 1, dtype=np.int64)
    # reduce the phase exactly before scaling so long sequences keep precision
    ph = np.mod(n * (n + 1), 2 * int(L))
    return ZcSequence(np.exp(-1j * np.pi * ph / L))


def periodic_autocorrelation(s) -> np.ndarray:
    """Unnormalized ``R(m) = sum_n s(n) s(n - m)^*`` over one period."""
    s = np.asarray(getattr(s, "samples", s), dtype=complex)
    S = np.fft.fft(s)
    return np.fft.ifft(np.abs(S) ** 2)


def upsample(x, U: int) -> np.ndarray:
    """Band-limited (periodic) interpolation by an integer factor along the last axis."""
    if int(U) != U or U < 1:
        raise InvalidInputError(f"U must be a positive integer, got {U}")
    x = np.asarray(x, dtype=complex)
    if U == 1:
        return x.copy()
    L = x.shape[-1]
    X = np.fft.fft(x, axis=-1)
    Z = np.zeros(x.shape[:-1] + (L * U,), dtype=complex)
    h = (L + 1) // 2
    Z[..., :h] = X[..., :h]
    Z[..., L * U - (L - h):] = X[..., h:]
    if L % 2 == 0:
        # drop the Nyquist bin, matching the delay model
        Z[..., L * U - (L - h)] = 0.0
    return np.fft.ifft(Z, axis=-1) * U


def toa_estimate(y: ReceivedBlock, s: ZcSequence, sc: Scenario, U: int = 32,
                 threshold: float = 3.0) -> ToaEstimate:
    """Delay from the peak of the noncoherently summed circular cross-correlation."""
    seq = np.asarray(getattr(s, "samples", s), dtype=complex)
    Y = np.atleast_2d(np.asarray(y.samples))
    if Y.shape[1] != len(seq):
        raise InvalidInputError("block length differs from the sequence length")
    yu = upsample(Y, U)
    su = upsample(seq, U)
    r = np.fft.ifft(np.fft.fft(yu, axis=1) * np.conj(np.fft.fft(su))[None, :], axis=1)
    mag = np.sum(np.abs(r), axis=0)
    m = int(np.argmax(mag))
    med = float(np.median(mag))
    ratio = np.inf if med == 0 else float(mag[m] / med)
    if not np.isfinite(mag[m]) or mag[m] == 0 or ratio < threshold:
        raise EstimationError(f"correlation peak too weak (peak/median {ratio:.3g})")
    tau = m / (U * sc.delta_f)
    return ToaEstimate(tau, m / U, tau * sc.c - sc.d_G, ratio)
