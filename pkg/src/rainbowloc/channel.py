"""Frequency-domain channel synthesis over the OFDM grid.

Each propagation path contributes gain * exp(-j2*pi*f_m*delay) at subcarrier
m, steered across the array by the per-element plane-wave phase.  Noise is
circularly-symmetric complex Gaussian, regenerated deterministically per
(sample, epoch) so training epochs see fresh but reproducible realizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import SPEED_OF_LIGHT
from .paths import PathSet

_STREAM_NOISE = 103


@dataclass(frozen=True)
class FrequencyGrid:
    """OFDM subcarrier grid starting at the carrier f0 (band edge)."""

    f0_hz: float
    delta_f_hz: float
    num_subcarriers: int

    def __post_init__(self):
        if self.num_subcarriers < 1:
            raise ValueError("need at least one subcarrier")
        if self.delta_f_hz <= 0.0:
            raise ValueError("subcarrier spacing must be positive")

    @property
    def bandwidth_hz(self) -> float:
        return self.num_subcarriers * self.delta_f_hz

    def frequencies(self) -> np.ndarray:
        m = np.arange(self.num_subcarriers)
        return self.f0_hz + m * self.delta_f_hz

    def offsets(self) -> np.ndarray:
        """f_m - f0 for every subcarrier."""
        return np.arange(self.num_subcarriers) * self.delta_f_hz

    @property
    def wavelength_m(self) -> float:
        return SPEED_OF_LIGHT / self.f0_hz


@dataclass(frozen=True)
class ArrayConfig:
    """Uniform linear array along +y at the base-station height."""

    num_elements: int
    spacing_m: float

    def __post_init__(self):
        if self.num_elements < 1:
            raise ValueError("need at least one element")
        if self.spacing_m <= 0.0:
            raise ValueError("element spacing must be positive")

    @classmethod
    def half_wavelength(cls, num_elements: int, f0_hz: float) -> "ArrayConfig":
        return cls(num_elements=num_elements, spacing_m=SPEED_OF_LIGHT / f0_hz / 2.0)


def steering_phase(n: int, f_hz: float, azimuth_rad: float, elevation_rad: float, cfg: ArrayConfig) -> float:
    """Plane-wave phase at element n; the element response is exp(-j*phase).

    Element 0 is the phase reference.  The direction cosine along the array
    axis is sin(azimuth)*cos(elevation), so broadside (azimuth 0) gives zero
    phase at every element.
    """
    if not 0 <= n < cfg.num_elements:
        raise ValueError(f"element index {n} out of range")
    u = math.sin(azimuth_rad) * math.cos(elevation_rad)
    return 2.0 * math.pi * f_hz * n * cfg.spacing_m * u / SPEED_OF_LIGHT


def steering_powers(f: np.ndarray, azimuth_rad: float, elevation_rad: float, cfg: ArrayConfig) -> np.ndarray:
    """exp(-j*steering_phase) for all (subcarrier, element) pairs -> (M, N).

    Uses one exp per subcarrier and a cumulative product across elements;
    the product of unit-modulus factors stays within a few ulp of the direct
    exponential for any realistic element count.
    """
    u = math.sin(azimuth_rad) * math.cos(elevation_rad)
    zeta = np.exp(-2j * math.pi * f * cfg.spacing_m * u / SPEED_OF_LIGHT)
    n = cfg.num_elements
    powers = np.empty((f.size, n), dtype=complex)
    powers[:, 0] = 1.0
    if n > 1:
        np.cumprod(np.broadcast_to(zeta[:, None], (f.size, n - 1)), axis=1, out=powers[:, 1:])
    return powers


def channel_rows(paths: PathSet, grid: FrequencyGrid, cfg: ArrayConfig) -> np.ndarray:
    """Per-subcarrier channel rows h_m as an (M, N) matrix.

    Row m holds the N-element channel vector at subcarrier m; an empty path
    set yields all zeros.
    """
    f = grid.frequencies()
    h = np.zeros((grid.num_subcarriers, cfg.num_elements), dtype=complex)
    for path in paths.paths:
        phasor = path.gain * np.exp(-2j * math.pi * f * path.delay_s)
        h += phasor[:, None] * steering_powers(f, path.azimuth_rad, path.elevation_rad, cfg)
    return h


def synthesize_channel(paths: PathSet, grid: FrequencyGrid, cfg: ArrayConfig) -> np.ndarray:
    """Full channel matrix H with shape (N, M); column m is h_m."""
    return channel_rows(paths, grid, cfg).T.copy()


def noise_vector(sample_seed: int, epoch: int, noise_power_w: float, num_subcarriers: int) -> np.ndarray:
    """Circularly-symmetric complex Gaussian draws, variance noise_power_w each.

    Deterministic in (sample_seed, epoch); epoch 0 is reserved for evaluation.
    """
    if noise_power_w < 0.0:
        raise ValueError("noise power must be >= 0")
    rng = np.random.default_rng([int(sample_seed), int(epoch), _STREAM_NOISE])
    raw = rng.standard_normal(2 * num_subcarriers)
    scale = math.sqrt(noise_power_w / 2.0)
    return scale * (raw[:num_subcarriers] + 1j * raw[num_subcarriers:])


def noise_block(sample_seeds, epoch: int, noise_power_w: float, num_subcarriers: int) -> np.ndarray:
    """Stack of noise_vector draws for many samples -> (B, M)."""
    return np.stack(
        [noise_vector(s, epoch, noise_power_w, num_subcarriers) for s in sample_seeds]
    )


def thermal_noise_power_w(delta_f_hz: float, noise_figure_db: float = 7.0) -> float:
    """Per-subcarrier thermal noise power: -174 dBm/Hz plus the noise figure."""
    noise_dbm = -174.0 + 10.0 * math.log10(delta_f_hz) + noise_figure_db
    return 10.0 ** (noise_dbm / 10.0) / 1e3
