import math

import numpy as np
import pytest

from rainbowloc.channel import (
    ArrayConfig,
    FrequencyGrid,
    noise_vector,
    steering_phase,
    steering_powers,
    synthesize_channel,
    thermal_noise_power_w,
)
from rainbowloc.geometry import Position
from rainbowloc.paths import PathSet, PropagationPath

F0 = 28e9


def make_path(gain, delay, az, el=0.0):
    return PropagationPath(
        kind="los", reflector_chain=(), vertices=np.zeros((0, 3)),
        length_m=delay * 299792458.0, delay_s=delay,
        azimuth_rad=az, elevation_rad=el, gain=gain,
    )


def pathset(paths):
    # distinct chains so the PathSet invariant holds for synthetic paths
    tagged = []
    for i, p in enumerate(paths):
        tagged.append(
            PropagationPath(
                kind=p.kind, reflector_chain=(i,) if i else (), vertices=p.vertices,
                length_m=p.length_m, delay_s=p.delay_s, azimuth_rad=p.azimuth_rad,
                elevation_rad=p.elevation_rad, gain=p.gain,
            )
        )
    return PathSet(target=Position(1.0, 0.0, 25.0), paths=tuple(tagged))


def test_grid_properties():
    grid = FrequencyGrid(F0, 240e3, 1584)
    assert grid.bandwidth_hz == pytest.approx(380.16e6)
    f = grid.frequencies()
    assert f[0] == F0
    assert f[-1] == pytest.approx(F0 + 1583 * 240e3)
    with pytest.raises(ValueError):
        FrequencyGrid(F0, 0.0, 4)
    with pytest.raises(ValueError):
        FrequencyGrid(F0, 240e3, 0)


def test_steering_phase_examples():
    cfg = ArrayConfig.half_wavelength(8, F0)
    assert steering_phase(0, F0, 0.7, -0.2, cfg) == 0.0
    for n in range(8):
        assert steering_phase(n, F0, 0.0, 0.0, cfg) == 0.0
    # half-wave spacing at f0, azimuth 30 deg, elevation 0, n = 1 -> pi/2
    assert steering_phase(1, F0, math.radians(30.0), 0.0, cfg) == pytest.approx(
        math.pi / 2, rel=1e-12
    )


def test_steering_powers_match_direct_exponential():
    cfg = ArrayConfig.half_wavelength(64, F0)
    grid = FrequencyGrid(F0, 1.485e6, 32)
    f = grid.frequencies()
    rng = np.random.default_rng(0)
    for _ in range(5):
        az, el = rng.uniform(-1.0, 1.0), rng.uniform(-0.5, 0.0)
        fast = steering_powers(f, az, el, cfg)
        direct = np.exp(
            -1j * np.array([[steering_phase(n, fm, az, el, cfg) for n in range(64)] for fm in f])
        )
        assert np.abs(fast - direct).max() < 1e-12


def test_synthesize_empty_and_linearity():
    grid = FrequencyGrid(F0, 1.485e6, 16)
    cfg = ArrayConfig.half_wavelength(4, F0)
    empty = PathSet(target=Position(1.0, 0.0, 25.0), paths=())
    assert np.all(synthesize_channel(empty, grid, cfg) == 0.0)

    p1 = make_path(1.0 + 0j, 0.0, 0.0)
    h1 = synthesize_channel(pathset([p1]), grid, cfg)
    assert h1.shape == (4, 16)
    assert np.abs(h1 - 1.0).max() < 1e-12  # gain 1, zero delay, broadside

    p2 = make_path(0.5 - 0.2j, 2e-7, 0.4, -0.1)
    h2 = synthesize_channel(pathset([p2]), grid, cfg)
    h12 = synthesize_channel(pathset([p1, p2]), grid, cfg)
    assert np.abs(h12 - (h1 + h2)).max() < 1e-12


def test_synthesize_matches_path_sum_definition():
    grid = FrequencyGrid(F0, 1.485e6, 8)
    cfg = ArrayConfig.half_wavelength(6, F0)
    rng = np.random.default_rng(3)
    paths = [
        make_path(complex(rng.normal(), rng.normal()) * 1e-6,
                  rng.uniform(1e-8, 1e-6), rng.uniform(-1, 1), rng.uniform(-0.3, 0))
        for _ in range(3)
    ]
    ps = pathset(paths)
    h = synthesize_channel(ps, grid, cfg)
    f = grid.frequencies()
    ref = np.zeros_like(h)
    for p in ps.paths:
        for m, fm in enumerate(f):
            for n in range(6):
                psi = steering_phase(n, fm, p.azimuth_rad, p.elevation_rad, cfg)
                ref[n, m] += p.gain * np.exp(-2j * math.pi * fm * p.delay_s) * np.exp(-1j * psi)
    scale = np.abs(ref).max()
    assert np.abs(h - ref).max() / scale < 1e-12


def test_noise_vector_properties():
    assert np.all(noise_vector(7, 0, 0.0, 64) == 0.0)
    a = noise_vector(7, 3, 1e-13, 128)
    b = noise_vector(7, 3, 1e-13, 128)
    assert np.array_equal(a, b)
    c = noise_vector(7, 4, 1e-13, 128)
    assert not np.array_equal(a, c)


def test_noise_variance_monte_carlo():
    power = 2.5e-13
    v = noise_vector(42, 1, power, 1_000_000)
    est = v.real.var() + v.imag.var()
    assert est == pytest.approx(power, rel=0.01)


def test_thermal_noise_reference():
    # -174 dBm/Hz + 10 log10(240 kHz) + 7 dB = -113.2 dBm
    p = thermal_noise_power_w(240e3, 7.0)
    assert 10 * math.log10(p * 1e3) == pytest.approx(-113.1979, abs=1e-3)
