"""Network geometry, large-scale fading and imperfect-CSI channel draws.

All matrices are indexed ``[m, k]`` with ``m`` the access point (AP) and
``k`` the user, i.e. they have shape ``(M, K)``.  The downlink channel seen by
the users is the conjugate transpose of these matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "NetworkGeometry",
    "PropagationParams",
    "LargeScaleCoefficients",
    "CsiModel",
    "ChannelSet",
    "random_geometry",
    "distances",
    "attenuation_db",
    "path_loss_db",
    "noise_variance",
    "large_scale",
    "complex_normal",
    "draw_channel",
]


@dataclass(frozen=True)
class NetworkGeometry:
    """Planar AP and user positions inside a square deployment area."""

    ap_positions: np.ndarray
    user_positions: np.ndarray
    area_side: float
    wrap_around: bool = False

    def __post_init__(self):
        aps = np.atleast_2d(np.asarray(self.ap_positions, dtype=float))
        users = np.atleast_2d(np.asarray(self.user_positions, dtype=float))
        if aps.shape[1] != 2 or users.shape[1] != 2:
            raise ValueError("positions must be (N, 2) arrays")
        if len(aps) < 1 or len(users) < 1:
            raise ValueError("need at least one AP and one user")
        if self.area_side <= 0:
            raise ValueError("area_side must be positive")
        for pos in (aps, users):
            if np.any(pos < 0) or np.any(pos > self.area_side):
                raise ValueError("positions must lie inside [0, area_side]^2")
        object.__setattr__(self, "ap_positions", aps)
        object.__setattr__(self, "user_positions", users)

    @property
    def num_aps(self) -> int:
        return len(self.ap_positions)

    @property
    def num_users(self) -> int:
        return len(self.user_positions)


@dataclass(frozen=True)
class PropagationParams:
    """Three-slope path loss, shadowing and thermal-noise constants.

    ``distance_unit_m`` is the length unit the log-distance terms are
    evaluated in.  The attenuation constant of the three-slope model is
    calibrated for kilometres (the default); ``distance_unit_m=1.0`` evaluates
    ``log10`` of the distance in metres.
    """

    d0: float = 10.0
    d1: float = 50.0
    carrier_freq_mhz: float = 1900.0
    h_ap: float = 11.65
    h_user: float = 1.65
    shadow_sigma_db: float = 8.0
    noise_temp_kelvin: float = 290.0
    boltzmann: float = 1.381e-23
    bandwidth_hz: float = 20e6
    noise_figure_db: float = 9.0
    distance_unit_m: float = 1000.0
    min_distance_m: float = 1.0

    def __post_init__(self):
        if not 0 < self.d0 < self.d1:
            raise ValueError("need 0 < d0 < d1")
        positive = ("carrier_freq_mhz", "h_ap", "noise_temp_kelvin", "boltzmann",
                    "bandwidth_hz", "distance_unit_m", "min_distance_m")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.h_user < 0 or self.shadow_sigma_db < 0:
            raise ValueError("h_user and shadow_sigma_db must be nonnegative")


@dataclass(frozen=True)
class LargeScaleCoefficients:
    """Linear large-scale gains ``zeta`` (M x K) and the receiver noise power.

    Both fields are expressed in the same power unit, so rescaling them by a
    common factor leaves every SNR-type ratio unchanged.
    """

    zeta: np.ndarray
    noise_variance: float

    def __post_init__(self):
        zeta = np.asarray(self.zeta, dtype=float)
        if zeta.ndim != 2:
            raise ValueError("zeta must be an (M, K) matrix")
        if not np.all(zeta > 0):
            raise ValueError("large-scale gains must be strictly positive")
        if not self.noise_variance > 0:
            raise ValueError("noise_variance must be positive")
        object.__setattr__(self, "zeta", zeta)

    def scaled(self, factor: float) -> "LargeScaleCoefficients":
        """Both gains and noise divided by ``factor``."""
        return LargeScaleCoefficients(self.zeta / factor, self.noise_variance / factor)


@dataclass(frozen=True)
class CsiModel:
    """CSI error level and the matching normalisation ``tau``.

    ``tau`` defaults to ``sqrt(1 + sigma_e_sq)``.  Passing it explicitly is
    only meant for negative controls: the channel generator always uses the
    consistent value, while precoders and metrics use ``tau`` as given.

    ``error_convention`` selects the estimation-error scaling:
    ``"consistent"`` uses ``g_tilde = sqrt(zeta) * sigma_e * h_tilde`` so that
    ``G = (G_hat + G_tilde) / tau`` reproduces ``sqrt(zeta) * h`` exactly;
    ``"squared"`` uses ``g_tilde = sqrt(zeta) * sigma_e**2 * h_tilde`` and
    defines the true channel through that same identity.
    """

    sigma_e_sq: float = 0.0
    tau: float | None = None
    error_convention: str = "consistent"

    def __post_init__(self):
        if self.sigma_e_sq < 0:
            raise ValueError("sigma_e_sq must be nonnegative")
        if self.error_convention not in ("consistent", "squared"):
            raise ValueError(f"unknown error_convention {self.error_convention!r}")
        if self.tau is None:
            object.__setattr__(self, "tau", math.sqrt(1.0 + self.sigma_e_sq))
        elif not self.tau > 0:
            raise ValueError("tau must be positive")

    @property
    def sigma_e(self) -> float:
        return math.sqrt(self.sigma_e_sq)

    @property
    def consistent_tau(self) -> float:
        return math.sqrt(1.0 + self.sigma_e_sq)

    @property
    def error_scale(self) -> float:
        """Amplitude multiplying ``sqrt(zeta) * h_tilde`` in ``g_tilde``."""
        if self.error_convention == "squared":
            return self.sigma_e_sq
        return self.sigma_e

    def error_variance(self, zeta: np.ndarray) -> np.ndarray:
        """Per-entry variance of ``g_tilde``."""
        return self.error_scale**2 * np.asarray(zeta)


@dataclass(frozen=True)
class ChannelSet:
    """One small-scale realisation: true, estimated and error channels."""

    g_true: np.ndarray
    g_hat: np.ndarray
    g_tilde: np.ndarray
    h: np.ndarray
    h_tilde: np.ndarray
    tau: float = field(default=1.0)

    @property
    def shape(self) -> tuple[int, int]:
        return self.g_hat.shape


def random_geometry(num_aps: int, num_users: int, area_side: float, rng: np.random.Generator,
                    wrap_around: bool = False, ap_positions=None) -> NetworkGeometry:
    """Uniform placement in the square; reuse ``ap_positions`` if given."""
    if ap_positions is None:
        ap_positions = rng.uniform(0.0, area_side, size=(num_aps, 2))
    users = rng.uniform(0.0, area_side, size=(num_users, 2))
    return NetworkGeometry(ap_positions, users, area_side, wrap_around)


def distances(geom: NetworkGeometry, min_distance: float = 1.0) -> np.ndarray:
    """AP-user distance matrix (M x K) in metres, clamped below."""
    diff = np.abs(geom.ap_positions[:, None, :] - geom.user_positions[None, :, :])
    if geom.wrap_around:
        diff = np.minimum(diff, geom.area_side - diff)
    return np.maximum(np.hypot(diff[..., 0], diff[..., 1]), min_distance)


def attenuation_db(p: PropagationParams) -> float:
    """Attenuation constant ``L`` of the three-slope model, in dB."""
    lf = math.log10(p.carrier_freq_mhz)
    return (46.3 + 33.9 * lf - 13.82 * math.log10(p.h_ap)
            - (1.1 * lf - 0.7) * p.h_user + (1.56 * lf - 0.8))


def path_loss_db(d, L: float, p: PropagationParams):
    """Three-slope path loss in dB for distances ``d`` in metres.

    Works elementwise on arrays; returns a float for scalar input.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distances must be nonnegative")
    u = p.distance_unit_m
    d0, d1 = p.d0 / u, p.d1 / u
    du = np.maximum(d / u, np.finfo(float).tiny)
    far = -L - 35.0 * np.log10(du)
    mid = -L - 15.0 * math.log10(d1) - 20.0 * np.log10(du)
    near = -L - 15.0 * math.log10(d1) - 20.0 * math.log10(d0)
    out = np.where(d > p.d1, far, np.where(d > p.d0, mid, near))
    return float(out) if out.ndim == 0 else out


def noise_variance(p: PropagationParams) -> float:
    """Thermal noise power ``T0 kB B NF`` in Watts."""
    return p.noise_temp_kelvin * p.boltzmann * p.bandwidth_hz * 10.0 ** (p.noise_figure_db / 10.0)


def large_scale(geom: NetworkGeometry, p: PropagationParams,
                rng: np.random.Generator) -> LargeScaleCoefficients:
    """Path loss plus i.i.d. log-normal shadowing, in linear scale."""
    pl = path_loss_db(distances(geom, p.min_distance_m), attenuation_db(p), p)
    z = rng.standard_normal(pl.shape)
    zeta = 10.0 ** ((pl + p.shadow_sigma_db * z) / 10.0)
    return LargeScaleCoefficients(zeta, noise_variance(p))


def complex_normal(shape, rng: np.random.Generator) -> np.ndarray:
    """i.i.d. CN(0, 1) samples (real and imaginary parts N(0, 1/2))."""
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(0.5)


def draw_channel(zeta, csi: CsiModel, rng: np.random.Generator) -> ChannelSet:
    """Draw ``h``, ``h_tilde`` and build the estimate/error decomposition.

    ``zeta`` may be a :class:`LargeScaleCoefficients` or a bare matrix.
    """
    if isinstance(zeta, LargeScaleCoefficients):
        zeta = zeta.zeta
    amp = np.sqrt(np.asarray(zeta, dtype=float))
    h = complex_normal(amp.shape, rng)
    h_tilde = complex_normal(amp.shape, rng)
    tau = csi.consistent_tau
    g_hat = amp * (tau * h - csi.sigma_e * h_tilde)
    g_tilde = amp * (csi.error_scale * h_tilde)
    if csi.error_convention == "consistent":
        g_true = amp * h
    else:
        g_true = (g_hat + g_tilde) / tau
    return ChannelSet(g_true=g_true, g_hat=g_hat, g_tilde=g_tilde, h=h, h_tilde=h_tilde, tau=tau)
