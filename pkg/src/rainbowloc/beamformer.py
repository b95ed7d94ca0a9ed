"""Learnable frequency-swept analog beamformer.

Per-element weights combine a frequency-flat phase shift with a true time
delay, so the combined beam direction sweeps with subcarrier frequency.  The
phase vector and a nanosecond-scaled delay vector are the trainable
parameters; this module provides the forward spectrum computation and exact
analytic gradients with respect to both.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .channel import ArrayConfig, FrequencyGrid, channel_rows, steering_powers
from .geometry import SPEED_OF_LIGHT
from .paths import PathSet

TAU_SCALE_S = 1e-9
"""Delays are stored in units of 1 ns so optimizer state stays O(1)."""

LOG10_FACTOR = 10.0 / math.log(10.0)


def dbm_to_watts(p_dbm: float) -> float:
    return 10.0 ** (p_dbm / 10.0) / 1e3


def watts_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w * 1e3)


@dataclass
class BeamformerParams:
    """Trainable per-element phase (rad) and scaled delay (units of 1 ns)."""

    phi: np.ndarray
    tau_tilde: np.ndarray

    def __post_init__(self):
        self.phi = np.asarray(self.phi, dtype=float)
        self.tau_tilde = np.asarray(self.tau_tilde, dtype=float)
        if self.phi.shape != self.tau_tilde.shape or self.phi.ndim != 1:
            raise ValueError("phi and tau_tilde must be 1-D with equal length")
        if not (np.isfinite(self.phi).all() and np.isfinite(self.tau_tilde).all()):
            raise ValueError("beamformer parameters must be finite")

    @property
    def num_elements(self) -> int:
        return self.phi.size

    def copy(self) -> "BeamformerParams":
        return BeamformerParams(self.phi.copy(), self.tau_tilde.copy())

    def to_bytes(self) -> bytes:
        header = struct.pack("<I", self.num_elements)
        return header + self.phi.astype("<f8").tobytes() + self.tau_tilde.astype("<f8").tobytes()

    @classmethod
    def from_bytes(cls, blob: bytes) -> "BeamformerParams":
        (n,) = struct.unpack_from("<I", blob, 0)
        need = 4 + 16 * n
        if len(blob) != need:
            raise ValueError(f"beamformer blob length {len(blob)}, expected {need}")
        phi = np.frombuffer(blob, dtype="<f8", count=n, offset=4).copy()
        tau = np.frombuffer(blob, dtype="<f8", count=n, offset=4 + 8 * n).copy()
        return cls(phi, tau)


@dataclass(frozen=True)
class PhysicsConfig:
    """Link-level constants for the received spectrum."""

    tx_power_w: float
    noise_power_w: float
    pilot: complex = 1.0 + 0.0j
    epsilon_db_floor: float = 1e-12

    def __post_init__(self):
        if self.tx_power_w <= 0.0:
            raise ValueError("transmit power must be positive")
        if abs(abs(self.pilot) - 1.0) > 1e-12:
            raise ValueError("pilot symbol must have unit magnitude")


@dataclass(frozen=True)
class Spectrum:
    """Received samples y_m and the log-power feature vector."""

    y: np.ndarray
    p_db: np.ndarray


@dataclass
class ForwardCache:
    """State retained by the spectrum forward pass for backward_params.

    contrib[b, m, n] is conj(w_mn) * h_mn, y is the noisy output, amp the
    sqrt(P_t/M) scale, and omega the per-subcarrier delay-to-phase factors
    2*pi*(f_m - f0)*tau_scale.
    """

    contrib: np.ndarray
    y: np.ndarray
    amp: float
    pilot: complex
    epsilon: float
    omega: np.ndarray


def init_rainbow(
    cfg: ArrayConfig,
    grid: FrequencyGrid,
    theta_start_rad: float,
    theta_end_rad: float,
) -> BeamformerParams:
    """Closed-form sweep initialization.

    The beam points at theta_start at f0 and at theta_end at f0 + W, with
    linear-in-element phase and delay profiles.
    """
    w_hz = grid.bandwidth_hz
    if w_hz <= 0.0:
        raise ValueError("degenerate sweep: zero bandwidth")
    n = np.arange(cfg.num_elements, dtype=float)
    d = cfg.spacing_m
    f0 = grid.f0_hz
    phi = 2.0 * math.pi * f0 * n * d * math.sin(theta_start_rad) / SPEED_OF_LIGHT
    t0 = (
        d
        * ((f0 + w_hz) * math.sin(theta_end_rad) - f0 * math.sin(theta_start_rad))
        / (SPEED_OF_LIGHT * w_hz)
    )
    return BeamformerParams(phi=phi, tau_tilde=n * t0 / TAU_SCALE_S)


def _weights_mn(params: BeamformerParams, grid: FrequencyGrid) -> np.ndarray:
    """Weights as an (M, N) matrix: w[m, n] = [w_m]_n."""
    offsets = grid.offsets()
    tau_s = params.tau_tilde * TAU_SCALE_S
    phase = params.phi[None, :] + 2.0 * math.pi * offsets[:, None] * tau_s[None, :]
    return np.exp(-1j * phase) / math.sqrt(params.num_elements)


def beam_weights(params: BeamformerParams, grid: FrequencyGrid, cfg: ArrayConfig) -> np.ndarray:
    """Per-subcarrier combining weights, shape (N, M); every entry has
    modulus 1/sqrt(N)."""
    if params.num_elements != cfg.num_elements:
        raise ValueError("parameter length does not match the array")
    return _weights_mn(params, grid).T.copy()


def spectrum_from_contrib(
    contrib: np.ndarray,
    phys: PhysicsConfig,
    num_subcarriers: int,
    noise: np.ndarray,
    want_cache: bool,
    omega: np.ndarray,
):
    """Assemble y and p_db from per-element contributions (..., M, N)."""
    amp = math.sqrt(phys.tx_power_w / num_subcarriers)
    y = amp * phys.pilot * contrib.sum(axis=-1) + noise
    power = y.real**2 + y.imag**2
    p_db = 10.0 * np.log10(power + phys.epsilon_db_floor)
    cache = None
    if want_cache:
        cache = ForwardCache(
            contrib=contrib, y=y, amp=amp, pilot=phys.pilot,
            epsilon=phys.epsilon_db_floor, omega=omega,
        )
    return Spectrum(y=y, p_db=p_db), cache


def _omega(grid: FrequencyGrid) -> np.ndarray:
    return 2.0 * math.pi * grid.offsets() * TAU_SCALE_S


def received_spectrum(
    params: BeamformerParams,
    paths: PathSet,
    phys: PhysicsConfig,
    grid: FrequencyGrid,
    cfg: ArrayConfig,
    noise: np.ndarray,
    want_cache: bool = False,
):
    """Beamformed received spectrum for one sample, accumulated path-wise.

    Never materializes the full channel matrix as a standalone product; each
    path's steered contribution is folded straight into the per-element sum.
    Returns (Spectrum, cache) where cache is None unless requested.
    """
    noise = np.asarray(noise)
    if noise.shape != (grid.num_subcarriers,):
        raise ValueError("noise vector length must equal the subcarrier count")
    w = _weights_mn(params, grid)
    f = grid.frequencies()
    contrib = np.zeros_like(w)
    for path in paths.paths:
        phasor = path.gain * np.exp(-2j * math.pi * f * path.delay_s)
        contrib += phasor[:, None] * steering_powers(f, path.azimuth_rad, path.elevation_rad, cfg)
    contrib *= np.conj(w)
    return spectrum_from_contrib(
        contrib, phys, grid.num_subcarriers, noise, want_cache, _omega(grid)
    )


def received_spectrum_block(
    params: BeamformerParams,
    h_rows_block: np.ndarray,
    phys: PhysicsConfig,
    grid: FrequencyGrid,
    noise_block: np.ndarray,
    want_cache: bool = False,
):
    """Batched spectrum forward over precomputed channel rows (B, M, N)."""
    w = _weights_mn(params, grid)
    contrib = np.conj(w)[None, :, :] * h_rows_block
    return spectrum_from_contrib(
        contrib, phys, grid.num_subcarriers, noise_block, want_cache, _omega(grid)
    )


def backward_params(cache: ForwardCache, grad_p_db: np.ndarray):
    """Exact gradients of a scalar loss w.r.t. (phi, tau_tilde).

    grad_p_db matches the cached batch shape (..., M).  Uses
    d p_db / d|y|^2 = (10/ln10) / (|y|^2 + eps) and
    d y / d phi_n = j * amp * pilot * contrib[..., n]; the delay gradient is
    the phase gradient scaled by 2*pi*(f_m - f0)*tau_scale per subcarrier.
    """
    if cache is None:
        raise ValueError("backward_params requires the cache from a forward pass")
    grad_p_db = np.asarray(grad_p_db, dtype=float)
    if grad_p_db.shape != cache.y.shape:
        raise ValueError("grad_p_db shape must match the cached spectrum")
    y = cache.y
    power = y.real**2 + y.imag**2
    c = grad_p_db * (LOG10_FACTOR / (power + cache.epsilon))
    dy_scale = 1j * cache.amp * cache.pilot
    inner = (dy_scale * np.conj(y))[..., None] * cache.contrib
    # per-(m, n) loss contribution; the delay gradient is this scaled by
    # omega_m, so the subcarrier-wise identity holds bit-exactly
    weighted = c[..., None] * (2.0 * inner.real)
    axes = tuple(range(weighted.ndim - 1))
    grad_phi = weighted.sum(axis=axes)
    grad_tau = (cache.omega[:, None] * weighted).sum(axis=axes)
    return grad_phi, grad_tau


def beam_pattern(
    params: BeamformerParams,
    grid: FrequencyGrid,
    f_hz: float,
    angles_rad: np.ndarray,
    cfg: ArrayConfig,
) -> np.ndarray:
    """Combined array gain 20*log10|w(f)^H a(theta, f)| per grid angle (dB)."""
    tau_s = params.tau_tilde * TAU_SCALE_S
    w = np.exp(-1j * (params.phi + 2.0 * math.pi * (f_hz - grid.f0_hz) * tau_s))
    w /= math.sqrt(params.num_elements)
    angles = np.atleast_1d(np.asarray(angles_rad, dtype=float))
    n = np.arange(cfg.num_elements)
    u = np.sin(angles)
    psi = 2.0 * math.pi * f_hz * cfg.spacing_m * np.outer(u, n) / SPEED_OF_LIGHT
    response = np.exp(-1j * psi) @ np.conj(w)
    return 20.0 * np.log10(np.abs(response) + 1e-300)


def channel_rows_for(paths: PathSet, grid: FrequencyGrid, cfg: ArrayConfig) -> np.ndarray:
    """Convenience re-export used by training caches."""
    return channel_rows(paths, grid, cfg)
