"""Coordinate frames and array responses.

Angles cross the public API in degrees. The global frame has the AP at the
origin; the RIS-centered frame is the same frame translated to the RIS
center (no rotation). Azimuth is counterclockwise from +x, elevation is
measured from the xy-plane.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from .errors import InvalidInputError

Frame = Literal["global", "ris"]


@dataclass(frozen=True)
class CartesianPosition:
    x: float
    y: float
    z: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite([self.x, self.y, self.z])):
            raise InvalidInputError(f"non-finite position {self!r}")

    @classmethod
    def from_array(cls, arr) -> "CartesianPosition":
        x, y, z = (float(c) for c in np.asarray(arr, dtype=float).reshape(3))
        return cls(x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    def distance_to(self, other: "CartesianPosition") -> float:
        return float(np.linalg.norm(self.as_array() - other.as_array()))


ORIGIN = CartesianPosition(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PolarPosition:
    azimuth: float
    elevation: float = 0.0
    range: float = 1.0
    frame: Frame = "ris"

    def __post_init__(self):
        if not np.all(np.isfinite([self.azimuth, self.elevation, self.range])):
            raise InvalidInputError(f"non-finite polar position {self!r}")
        if self.range < 0:
            raise InvalidInputError(f"range must be >= 0, got {self.range}")
        if not -90.0 <= self.elevation <= 90.0:
            raise InvalidInputError(f"elevation {self.elevation} outside [-90, 90]")
        if self.frame not in ("global", "ris"):
            raise InvalidInputError(f"unknown frame {self.frame!r}")
        object.__setattr__(self, "azimuth", wrap_azimuth(self.azimuth))


@dataclass(frozen=True)
class SteeringVector:
    """Array response with its geometry tag (``("ula", M)`` or ``("pla", Nx, Ny)``)."""

    entries: np.ndarray
    geometry: tuple
    delta: float

    def __len__(self):
        return len(self.entries)


def wrap_azimuth(az):
    """Map degrees onto [0, 360)."""
    out = np.mod(az, 360.0)
    # np.mod(-1e-17, 360) rounds to 360.0
    out = np.where(out >= 360.0, 0.0, out)
    return float(out) if np.ndim(out) == 0 else out


def _check_angle(*angles):
    if not np.all(np.isfinite(angles)):
        raise InvalidInputError(f"non-finite angle in {angles}")


def ula_response(psi: float, M: int, delta: float = 0.5) -> SteeringVector:
    """ULA response ``a(psi)``; entry k is ``exp(j 2 pi delta k cos psi)``."""
    _check_angle(psi)
    if M < 1 or delta <= 0:
        raise InvalidInputError(f"need M >= 1 and delta > 0, got M={M}, delta={delta}")
    k = np.arange(M)
    entries = np.exp(2j * np.pi * delta * k * np.cos(np.deg2rad(psi)))
    return SteeringVector(entries, ("ula", M), delta)


def pla_response(psi_z: float, psi_x: float, Nx: int, Ny: int,
                 delta: float = 0.5) -> SteeringVector:
    """PLA response ``b = b_z (x) b_x`` with the phase laws of the RIS model.

    The y-axis factor advances by ``2 pi delta sin(psi_z) cos(psi_x)`` per
    element and the x-axis factor by ``2 pi delta sin(psi_x) cos(psi_z)``.
    """
    _check_angle(psi_z, psi_x)
    if Nx < 1 or Ny < 1 or delta <= 0:
        raise InvalidInputError(f"need Nx, Ny >= 1 and delta > 0, got {Nx}, {Ny}, {delta}")
    entries = pla_matrix(np.atleast_1d(psi_z), np.atleast_1d(psi_x), Nx, Ny, delta)[:, 0]
    return SteeringVector(entries, ("pla", Nx, Ny), delta)


def pla_matrix(psi_z, psi_x, Nx: int, Ny: int, delta: float = 0.5) -> np.ndarray:
    """Vectorized PLA responses, one column per (psi_z, psi_x) pair.

    Returns an ``(Nx*Ny, K)`` array. Angles in degrees, broadcast together.
    """
    z, x = np.broadcast_arrays(np.deg2rad(np.asarray(psi_z, dtype=float)),
                               np.deg2rad(np.asarray(psi_x, dtype=float)))
    z, x = z.ravel(), x.ravel()
    ky = np.arange(Ny)[:, None]
    kx = np.arange(Nx)[:, None]
    by = np.exp(2j * np.pi * delta * ky * (np.sin(z) * np.cos(x)))
    bx = np.exp(2j * np.pi * delta * kx * (np.sin(x) * np.cos(z)))
    # column-wise Kronecker: index iy*Nx + ix
    return (by[:, None, :] * bx[None, :, :]).reshape(Ny * Nx, -1)


def unit_direction(azimuth, elevation=0.0) -> np.ndarray:
    """Unit vector(s) for azimuth/elevation in degrees; shape (..., 3)."""
    az = np.deg2rad(np.asarray(azimuth, dtype=float))
    el = np.deg2rad(np.asarray(elevation, dtype=float))
    az, el = np.broadcast_arrays(az, el)
    return np.stack([np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)], axis=-1)


def polar_to_cartesian(pp: PolarPosition,
                       ris_center: CartesianPosition = ORIGIN) -> CartesianPosition:
    """Convert to the global frame; ``ris_center`` is ignored for global polar input."""
    origin = ORIGIN if pp.frame == "global" else ris_center
    xyz = origin.as_array() + pp.range * unit_direction(pp.azimuth, pp.elevation)
    return CartesianPosition.from_array(xyz)


def cartesian_to_polar(p: CartesianPosition, ris_center: CartesianPosition | None = None
                       ) -> PolarPosition:
    """Polar coordinates of ``p`` relative to ``ris_center`` (global frame if None)."""
    frame: Frame = "global" if ris_center is None else "ris"
    rel = p.as_array() - (ORIGIN if ris_center is None else ris_center).as_array()
    rng = float(np.linalg.norm(rel))
    if rng == 0.0:
        return PolarPosition(0.0, 0.0, 0.0, frame)
    az = float(np.rad2deg(np.arctan2(rel[1], rel[0])))
    el = float(np.rad2deg(np.arcsin(np.clip(rel[2] / rng, -1.0, 1.0))))
    return PolarPosition(az, el, rng, frame)


def azimuth_alias(azimuth: float) -> float:
    """Mirror azimuth ``180 - az`` that shares ``sin(az)``.

    For in-plane sources the RIS response depends on the azimuth only
    through its sine, so the two angles cannot be told apart.
    """
    return wrap_azimuth(180.0 - azimuth)
