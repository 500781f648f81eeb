"""Lambertian line-of-sight VLC channel and its fixed-rate ON/OFF reduction.

Rates are in bits per frame throughout. Angles are given in degrees on the
config object and converted to radians at the point of use.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, replace

import numpy as np

__all__ = [
    "NEVER_ON",
    "NeverOn",
    "PhyConfig",
    "RateInterval",
    "achievable_rate",
    "channel_gain",
    "lambertian_index",
    "on_probability",
    "outage_radius",
    "rate_interval",
    "default_config",
]


class NeverOn(enum.Enum):
    """Marker returned by :func:`outage_radius` when no position supports the rate."""

    NEVER_ON = "never-on"

    def __repr__(self):
        return "NEVER_ON"


NEVER_ON = NeverOn.NEVER_ON


def lambertian_index(half_angle_deg: float) -> float:
    """Lambertian order ``m = -1 / log2(cos(phi_half))``.

    >>> lambertian_index(60.0)
    1.0000000000000002
    """
    if not 0.0 < half_angle_deg < 90.0:
        raise ValueError(f"half-intensity angle must lie in (0, 90) degrees, got {half_angle_deg}")
    return -1.0 / math.log2(math.cos(math.radians(half_angle_deg)))


@dataclass(frozen=True, kw_only=True)
class PhyConfig:
    """Physical-layer constants of a single downward-facing LED access point.

    Parameters
    ----------
    half_intensity_angle : float
        LED half-intensity viewing angle, degrees.
    fov_angle : float
        Photodetector field-of-view half-angle, degrees.
    pd_area : float
        Photodetector area, m^2.
    bandwidth : float
        Modulation bandwidth, Hz.
    responsivity : float
        Optical-to-electrical conversion efficiency, A/W.
    refractive_index : float
        Concentrator refractive index.
    filter_gain : float
        Optical filter gain.
    noise_psd : float
        Noise power spectral density, A^2/Hz.
    vertical_distance : float
        AP-to-receiver-plane height, m.
    cell_radius : float
        Radius of the disc the user is spread over, m. Must keep the whole
        cell inside the receiver field of view.
    frame_duration : float
        Frame length, s.
    avg_power : float
        Average optical transmit power, W.
    intensity_constant : float
        The rate-formula constant; ``sqrt(e / 2 pi)`` corresponds to an
        exponentially distributed intensity.
    opt_elec_ratio : float
        Average optical to average electrical power ratio.
    """

    half_intensity_angle: float = 60.0
    fov_angle: float = 90.0
    pd_area: float = 1e-4
    bandwidth: float = 40e6
    responsivity: float = 0.53
    refractive_index: float = 1.5
    filter_gain: float = 1.0
    noise_psd: float = 1e-21
    vertical_distance: float = 3.0
    cell_radius: float
    frame_duration: float = 1e-3
    avg_power: float = 0.2
    intensity_constant: float = math.sqrt(math.e / (2.0 * math.pi))
    opt_elec_ratio: float = 3.0

    def __post_init__(self):
        for name in ("half_intensity_angle", "fov_angle", "pd_area", "bandwidth",
                     "responsivity", "refractive_index", "filter_gain", "noise_psd",
                     "vertical_distance", "cell_radius", "frame_duration", "avg_power",
                     "intensity_constant", "opt_elec_ratio"):
            value = getattr(self, name)
            if not (isinstance(value, (int, float)) and math.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a finite positive number, got {value!r}")
        if not self.half_intensity_angle < 90.0:
            raise ValueError("half_intensity_angle must be below 90 degrees")
        if not self.fov_angle <= 90.0:
            raise ValueError("fov_angle must not exceed 90 degrees")
        # keeps rect(psi / psi_C) == 1 on the whole disc
        edge = self.vertical_distance * math.tan(math.radians(self.fov_angle))
        if self.cell_radius > edge:
            raise ValueError(
                f"cell_radius {self.cell_radius} m exceeds the field-of-view footprint "
                f"{edge:.6g} m at vertical distance {self.vertical_distance} m")

    @property
    def lambertian_order(self) -> float:
        return lambertian_index(self.half_intensity_angle)

    @property
    def concentrator_gain(self) -> float:
        return self.refractive_index ** 2 / math.sin(math.radians(self.fov_angle)) ** 2

    @property
    def noise_power(self) -> float:
        """Thermal noise power ``N0 * B`` in A^2."""
        return self.noise_psd * self.bandwidth

    @property
    def rate_scale(self) -> float:
        """``T * B / 2``: bits per frame per unit of ``log2(1 + snr)``."""
        return 0.5 * self.frame_duration * self.bandwidth

    def with_(self, **changes) -> "PhyConfig":
        return replace(self, **changes)


def default_config(cell_radius: float = 3.0, avg_power: float = 0.2, **overrides) -> PhyConfig:
    """Reference link constants with the cell radius and power left to the caller.

    The 3 m cell radius is a package default, not a measured value.
    """
    return PhyConfig(cell_radius=cell_radius, avg_power=avg_power, **overrides)


@dataclass(frozen=True)
class RateInterval:
    rho_min: float
    rho_max: float

    def __post_init__(self):
        if not 0.0 < self.rho_min <= self.rho_max:
            raise ValueError(f"invalid rate interval [{self.rho_min}, {self.rho_max}]")


def _gain(cfg: PhyConfig, d_h):
    m = cfg.lambertian_order
    dv = cfg.vertical_distance
    num = (m + 1.0) * cfg.pd_area * cfg.filter_gain * cfg.concentrator_gain * dv ** (m + 1.0)
    return num / (2.0 * math.pi * (dv * dv + np.square(d_h)) ** ((m + 3.0) / 2.0))


def channel_gain(cfg: PhyConfig, d_h: float) -> float:
    """LOS DC gain for a receiver ``d_h`` metres from the cell centre."""
    if not 0.0 <= d_h <= cfg.cell_radius:
        raise ValueError(f"d_h must lie in [0, {cfg.cell_radius}], got {d_h}")
    return float(_gain(cfg, d_h))


def _rate(cfg: PhyConfig, h):
    snr = (cfg.intensity_constant * cfg.responsivity * cfg.avg_power * h) ** 2 / (
        cfg.opt_elec_ratio ** 2 * cfg.noise_power)
    return cfg.rate_scale * np.log1p(snr) / math.log(2.0)


def achievable_rate(cfg: PhyConfig, h: float) -> float:
    """Achievable rate in bits/frame at channel gain ``h``."""
    if not h > 0:
        raise ValueError(f"channel gain must be positive, got {h}")
    return float(_rate(cfg, h))


def rate_interval(cfg: PhyConfig) -> RateInterval:
    return RateInterval(rho_min=float(_rate(cfg, _gain(cfg, cfg.cell_radius))),
                        rho_max=float(_rate(cfg, _gain(cfg, 0.0))))


def _radius_squared(cfg: PhyConfig, rho):
    """``Delta**2`` for rate(s) ``rho``; negative where the rate is never supported."""
    m = cfg.lambertian_order
    dv = cfg.vertical_distance
    amp = (cfg.intensity_constant * cfg.responsivity * cfg.avg_power * (m + 1.0)
           * cfg.pd_area * cfg.filter_gain * dv ** (m + 1.0) * cfg.concentrator_gain)
    denom = (2.0 * math.pi * math.sqrt(cfg.noise_power) * cfg.opt_elec_ratio) ** 2
    snr_needed = np.expm1(np.asarray(rho, dtype=float) * math.log(2.0) / cfg.rate_scale)
    with np.errstate(divide="ignore"):
        inner = (amp * amp / (denom * snr_needed)) ** (1.0 / (m + 3.0))
    r2 = inner - dv * dv
    # rounding at rho == rho_max must not flip the centre to "never on"
    return np.where((r2 < 0) & (r2 > -1e-12 * dv * dv), 0.0, r2)


def outage_radius(cfg: PhyConfig, rho: float) -> float | NeverOn:
    """Horizontal distance at which the achievable rate equals ``rho``.

    Returns :data:`NEVER_ON` when even the cell centre cannot support
    ``rho``. The radius is not clipped to the cell.
    """
    if not rho > 0:
        raise ValueError(f"rate must be positive, got {rho}")
    r2 = float(_radius_squared(cfg, rho))
    if r2 < 0:
        return NEVER_ON
    return math.sqrt(r2)


def _on_probability(cfg: PhyConfig, rho) -> np.ndarray:
    frac = _radius_squared(cfg, rho) / cfg.cell_radius ** 2
    # rho == rho_min must give exactly 1, not 1 - ulp
    frac = np.where(frac > 1.0 - 1e-12, 1.0, frac)
    return np.clip(frac, 0.0, 1.0)


def on_probability(cfg: PhyConfig, rho: float) -> float:
    """Probability that a user uniform on the cell disc can decode ``rho``."""
    if outage_radius(cfg, rho) is NEVER_ON:
        return 0.0
    return float(_on_probability(cfg, rho))
