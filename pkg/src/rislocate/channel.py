"""LoS channel model: AP-RIS link, UE-RIS channel, received blocks, SNR."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import InvalidInputError
from .geometry import (CartesianPosition, PolarPosition, cartesian_to_polar, pla_matrix,
                       pla_response, polar_to_cartesian, ula_response)

SPEED_OF_LIGHT = 299_792_458.0


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watt_to_dbm(watt: float) -> float:
    return 10.0 * np.log10(watt) + 30.0


@dataclass(frozen=True)
class Scenario:
    """Physical constants and array geometry.

    Defaults are the reference simulation settings: a 4-antenna AP, a 4x4
    RIS 50 m away at azimuth 225 deg, 20 dBm UE power and -80 dBm noise.
    """

    M: int = 4
    Nx: int = 4
    Ny: int = 4
    d_G: float = 50.0
    psi_D_x: float = 225.0
    psi_D_z: float = 0.0
    psi_A: float = 45.0
    P: float = 0.1
    sigma2: float = 1e-11
    beta: float = 2.0
    delta: float = 0.5
    delta_f: float = 30.72e6
    c: float = SPEED_OF_LIGHT

    def __post_init__(self):
        if min(self.M, self.Nx, self.Ny) < 1:
            raise InvalidInputError("array sizes must be >= 1")
        if self.P <= 0 or self.sigma2 <= 0:
            raise InvalidInputError("powers must be > 0")
        if self.d_G <= 0:
            raise InvalidInputError("d_G must be > 0")
        if self.M >= self.N:
            raise InvalidInputError(f"need M < N, got M={self.M}, N={self.N}")
        if self.delta <= 0 or self.delta_f <= 0 or self.c <= 0:
            raise InvalidInputError("delta, delta_f and c must be > 0")

    @property
    def N(self) -> int:
        return self.Nx * self.Ny

    @property
    def ris_center(self) -> CartesianPosition:
        """RIS center in the global frame, at range d_G along (psi_D_x, psi_D_z)."""
        return polar_to_cartesian(PolarPosition(self.psi_D_x, self.psi_D_z, self.d_G, "global"))

    def with_ris(self, Nx: int, Ny: int) -> "Scenario":
        return replace(self, Nx=Nx, Ny=Ny)


@dataclass(frozen=True)
class RisConfiguration:
    """Reflection vector ``v``; the RIS applies ``Phi = diag(v^H)``."""

    v: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.v, dtype=complex).ravel()
        if np.any(np.abs(v) > 1 + 1e-12):
            raise InvalidInputError("reflection coefficients must satisfy |v_i| <= 1")
        object.__setattr__(self, "v", v)

    @property
    def phi(self) -> np.ndarray:
        return np.diag(self.v.conj())

    @classmethod
    def identity(cls, N: int) -> "RisConfiguration":
        return cls(np.ones(N, dtype=complex))


@dataclass(frozen=True)
class ApRisLink:
    matrix: np.ndarray  # N x M
    gain: float


@dataclass(frozen=True)
class UeRisChannel:
    vector: np.ndarray  # length N
    gain: float
    position: CartesianPosition
    azimuth: float = 0.0
    elevation: float = 0.0
    distance: float = 0.0


@dataclass(frozen=True)
class ReceivedBlock:
    """M x L uplink samples, the nominal transmit sequence and the RIS config in use."""

    samples: np.ndarray
    sequence: np.ndarray
    config: RisConfiguration
    delay: float = field(default=0.0)


def pathloss(d: float, beta: float) -> float:
    """Unitless power gain ``d**-beta``."""
    if not np.isfinite(d) or d <= 0:
        raise InvalidInputError(f"pathloss needs d > 0, got {d}")
    return float(d) ** (-beta)


def build_ap_ris_link(sc: Scenario) -> ApRisLink:
    gain = pathloss(sc.d_G, sc.beta)
    b = pla_response(sc.psi_D_z, sc.psi_D_x, sc.Nx, sc.Ny, sc.delta).entries
    a = ula_response(sc.psi_A, sc.M, sc.delta).entries
    return ApRisLink(np.sqrt(gain) * np.outer(b, a.conj()), gain)


def build_ue_channel(p: CartesianPosition, sc: Scenario,
                     ris_center: CartesianPosition | None = None) -> UeRisChannel:
    """``h(p) = sqrt(d^-beta) b(theta)`` with theta the RIS-frame direction of p."""
    center = sc.ris_center if ris_center is None else ris_center
    pol = cartesian_to_polar(p, center)
    if pol.range == 0.0:
        raise InvalidInputError("UE position coincides with the RIS center")
    gain = pathloss(pol.range, sc.beta)
    b = pla_response(pol.elevation, pol.azimuth, sc.Nx, sc.Ny, sc.delta).entries
    return UeRisChannel(np.sqrt(gain) * b, gain, p, pol.azimuth, pol.elevation, pol.range)


def ue_channel_matrix(azimuth, elevation, distance, sc: Scenario) -> np.ndarray:
    """Columns ``h(p_t)`` for many RIS-frame directions and ranges at once."""
    distance = np.asarray(distance, dtype=float)
    if np.any(distance <= 0):
        raise InvalidInputError("distances must be > 0")
    b = pla_matrix(elevation, azimuth, sc.Nx, sc.Ny, sc.delta)
    return b * np.sqrt(distance.ravel() ** (-sc.beta))


def delay_sequence(s: np.ndarray, shift: float) -> np.ndarray:
    """Circularly delay a sequence by ``shift`` samples (fractional allowed).

    Band-limited interpolation over one period: each DFT bin, taken on the
    symmetric index range, gets the phase ramp ``exp(-j 2 pi k shift / L)``.
    """
    s = np.asarray(s, dtype=complex)
    L = len(s)
    if float(shift).is_integer():
        return np.roll(s, int(shift))
    k = np.fft.fftfreq(L) * L
    if L % 2 == 0:
        # split the Nyquist bin so the interpolant stays real-symmetric
        k[L // 2] = 0.0
    return np.fft.ifft(np.fft.fft(s) * np.exp(-2j * np.pi * k * shift / L))


def received_signal(h: UeRisChannel, G: ApRisLink, phi: RisConfiguration,
                    sc: Scenario) -> np.ndarray:
    """Noiseless per-slot signal ``sqrt(P) G^H Phi^H h`` (length M)."""
    v = phi.v
    if len(v) != G.matrix.shape[0] or len(h.vector) != G.matrix.shape[0]:
        raise InvalidInputError("RIS size mismatch between h, G and the configuration")
    return np.sqrt(sc.P) * (G.matrix.conj().T @ (v * h.vector))


def synthesize_rx(h: UeRisChannel, G: ApRisLink, phi: RisConfiguration, s, sc: Scenario,
                  seed=None, delay: float = 0.0) -> ReceivedBlock:
    """Simulate one probe: L slots under a fixed RIS configuration.

    Column n is ``sqrt(P) G^H Phi^H h s(n - delay*delta_f) + n(n)`` with
    ``n(n) ~ CN(0, sigma2 I_M)``. ``delay`` (seconds) shifts the sequence
    before mixing; zero reproduces the flat-fading model exactly.
    """
    s = np.asarray(s, dtype=complex).ravel()
    if not np.allclose(np.abs(s), 1.0, atol=1e-9):
        raise InvalidInputError("transmit sequence must have unit modulus")
    sig = received_signal(h, G, phi, sc)
    tx = delay_sequence(s, delay * sc.delta_f) if delay else s
    rng = np.random.default_rng(seed)
    shape = (sc.M, len(s))
    noise = np.sqrt(sc.sigma2 / 2) * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
    return ReceivedBlock(np.outer(sig, tx) + noise, s, phi, delay)


def snr(h: UeRisChannel, G: ApRisLink, phi: RisConfiguration, sc: Scenario) -> float:
    """Received sum SNR ``P ||G^H Phi^H h||^2 / sigma2``."""
    sig = received_signal(h, G, phi, sc)
    return float(np.vdot(sig, sig).real / sc.sigma2)


def analytic_max_snr(h: UeRisChannel, G: ApRisLink, sc: Scenario) -> float:
    """Phase-matched optimum ``P gamma gamma_G M N^2 / sigma2``."""
    return sc.P * h.gain * G.gain * sc.M * sc.N ** 2 / sc.sigma2
