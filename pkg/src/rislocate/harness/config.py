"""Campaign configuration: flat YAML file plus ``key=value`` overrides."""
from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field, fields

import yaml

from ..beamform import PositionPrior
from ..channel import Scenario, dbm_to_watt
from ..errors import ConfigError, InvalidInputError
from ..localize import LocalizationConfig

_POWER_RE = re.compile(r"^\s*([-+]?[0-9.]+(?:[eE][-+]?\d+)?)\s*(dBm|dBW|W|mW)?\s*$")


def parse_power(key: str, value) -> float:
    """Watts from a number (watts) or a string such as ``"20dBm"`` or ``"0.1 W"``."""
    if isinstance(value, bool):
        raise ConfigError(key, "expected a power")
    if isinstance(value, (int, float)):
        w = float(value)
    else:
        m = _POWER_RE.match(str(value))
        if not m:
            raise ConfigError(key, f"cannot parse power {value!r}")
        num, unit = float(m.group(1)), m.group(2) or "W"
        w = {"dBm": lambda x: dbm_to_watt(x), "dBW": lambda x: 10 ** (x / 10),
             "W": lambda x: x, "mW": lambda x: x * 1e-3}[unit](num)
    if not (w > 0 and math.isfinite(w)):
        raise ConfigError(key, f"power must be positive, got {value!r}")
    return w


@dataclass
class CampaignConfig:
    # scenario
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
    # algorithm
    epsilon: float = 0.5
    N_A: int = 3
    overlap: float = 0.2
    T: int = 1000
    T_max: int = 200
    K: int = 500
    U: int = 32
    L: int = 63
    max_iter: int = 15
    grid_step: float = 0.05
    sdp_tol: float = 1e-6
    toa_threshold: float = 3.0
    # prior (RIS frame)
    prior_azimuth: list = field(default_factory=lambda: [260.0, 320.0])
    prior_range: list = field(default_factory=lambda: [20.0, 80.0])
    prior_elevation: float = 0.0
    # single-instance UE for ``probe``
    ue_azimuth: float = 300.0
    ue_range: float = 70.0
    # campaign
    N_list: list = field(default_factory=lambda: [16, 32, 64])
    square_ris: bool = False
    runs: int = 100
    seed: int = 0
    output_dir: str = "out"
    workers: int = 1
    emit_rmse: bool = True
    emit_raw: bool = True
    emit_pseudospectrum: bool = False
    emit_beampattern: bool = False
    pattern_step: float = 0.5

    def scenario(self, N: int | None = None) -> Scenario:
        nx, ny = (self.Nx, self.Ny) if N is None else ris_shape(N, self.square_ris)
        try:
            return Scenario(self.M, nx, ny, self.d_G, self.psi_D_x, self.psi_D_z, self.psi_A,
                            self.P, self.sigma2, self.beta, self.delta, self.delta_f)
        except InvalidInputError as e:
            raise ConfigError("scenario", str(e)) from e

    def prior(self) -> PositionPrior:
        return PositionPrior(tuple(self.prior_azimuth), tuple(self.prior_range),
                             self.prior_elevation)

    def localization(self) -> LocalizationConfig:
        return LocalizationConfig(self.epsilon, self.N_A, self.overlap, self.T, self.K, self.U,
                                  self.L, self.max_iter, self.grid_step, self.sdp_tol,
                                  self.T_max, self.toa_threshold)

    def as_dict(self) -> dict:
        return dataclasses.asdict(self)


def ris_shape(N: int, square: bool = False) -> tuple[int, int]:
    """``(Nx, Ny)`` with ``Nx * Ny = N``, as square as possible and ``Nx >= Ny``."""
    if N < 1:
        raise ConfigError("N_list", f"RIS size must be positive, got {N}")
    ny = max(d for d in range(1, math.isqrt(N) + 1) if N % d == 0)
    if square and ny * ny != N:
        raise ConfigError("N_list", f"{N} is not a perfect square (square_ris is set)")
    return N // ny, ny


_FIELDS = {f.name: f for f in fields(CampaignConfig)}
_POWER_KEYS = {"P", "sigma2"}


def _coerce(key: str, value):
    f = _FIELDS.get(key)
    if f is None:
        raise ConfigError(key, "unknown key")
    if key in _POWER_KEYS:
        return parse_power(key, value)
    default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
    try:
        if isinstance(default, bool):
            if isinstance(value, str):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise ValueError(value)
                return value.lower() in ("true", "1", "yes")
            return bool(value)
        if isinstance(default, int):
            if isinstance(value, float) and not value.is_integer():
                raise ValueError(value)
            return int(value)
        if isinstance(default, float):
            return float(value)
        if isinstance(default, list):
            if isinstance(value, str):
                value = yaml.safe_load(value)
            if not isinstance(value, (list, tuple)):
                raise ValueError(value)
            kind = int if key == "N_list" else float
            return [kind(v) for v in value]
        return str(value)
    except (TypeError, ValueError) as e:
        raise ConfigError(key, f"bad value {value!r}") from e


def _validate(cfg: CampaignConfig):
    checks = [
        ("runs", cfg.runs >= 1, "must be >= 1"),
        ("workers", cfg.workers >= 1, "must be >= 1"),
        ("N_A", cfg.N_A >= 3, "must be >= 3"),
        ("overlap", 0 <= cfg.overlap < 1, "must lie in [0, 1)"),
        ("epsilon", cfg.epsilon >= 0, "must be >= 0"),
        ("T", cfg.T >= 1, "must be >= 1"),
        ("T_max", cfg.T_max >= 1, "must be >= 1"),
        ("K", cfg.K >= 1, "must be >= 1"),
        ("U", cfg.U >= 1, "must be >= 1"),
        ("L", cfg.L >= 3 and cfg.L % 2 == 1, "must be odd and >= 3"),
        ("max_iter", cfg.max_iter >= 1, "must be >= 1"),
        ("grid_step", cfg.grid_step > 0, "must be > 0"),
        ("pattern_step", cfg.pattern_step > 0, "must be > 0"),
        ("d_G", cfg.d_G > 0, "must be > 0"),
        ("delta", cfg.delta > 0, "must be > 0"),
        ("delta_f", cfg.delta_f > 0, "must be > 0"),
        ("N_list", len(cfg.N_list) >= 1, "must not be empty"),
        ("prior_azimuth", len(cfg.prior_azimuth) == 2, "needs [low, high]"),
        ("prior_range", len(cfg.prior_range) == 2, "needs [low, high]"),
    ]
    for key, ok, msg in checks:
        if not ok:
            raise ConfigError(key, f"{msg}, got {getattr(cfg, key)!r}")
    try:
        cfg.prior()
    except InvalidInputError as e:
        raise ConfigError("prior", str(e)) from e
    cfg.scenario()
    for N in cfg.N_list:
        cfg.scenario(N)


def parse_config(path=None, overrides=None) -> CampaignConfig:
    """Defaults, then the YAML mapping at ``path``, then ``overrides``.

    ``overrides`` is a mapping or a list of ``"key=value"`` strings.
    """
    raw: dict = {}
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                loaded = yaml.safe_load(fh)
        except OSError as e:
            raise ConfigError("config", f"cannot read {path}: {e.strerror}") from e
        except yaml.YAMLError as e:
            raise ConfigError("config", f"invalid YAML in {path}: {e}") from e
        if loaded is not None and not isinstance(loaded, dict):
            raise ConfigError("config", "top level must be a mapping")
        raw.update(loaded or {})
    if overrides:
        if isinstance(overrides, dict):
            raw.update(overrides)
        else:
            for item in overrides:
                key, sep, val = item.partition("=")
                if not sep:
                    raise ConfigError(item, "override must look like key=value")
                raw[key.strip()] = yaml.safe_load(val)
    cfg = CampaignConfig()
    for key, value in raw.items():
        setattr(cfg, key, _coerce(str(key), value))
    _validate(cfg)
    return cfg
