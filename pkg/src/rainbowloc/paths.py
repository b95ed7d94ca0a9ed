"""Specular multipath enumeration via the image method.

For a target/base-station pair in a scene, enumerates the line-of-sight path
and every one- or two-bounce mirror path whose reflection points land inside
their facet bounds and whose segments clear all walls.  Per-path complex
amplitudes combine free-space spreading with material reflection
coefficients at the carrier; frequency dependence across the band is applied
downstream from the stored delay.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from .geometry import (
    SPEED_OF_LIGHT,
    DeploymentRegion,
    MaterialParams,
    Position,
    Reflector,
    Scene,
)

# Parametric tolerance for segment/plane crossings: endpoints of a segment
# that merely touch a plane do not count as crossings, and occluders must be
# hit strictly inside their bounds.
_T_TOL = 1e-9
_OCCLUDER_MARGIN = 1e-9

KIND_BY_DEPTH = {0: "los", 1: "bounce1", 2: "bounce2"}


@dataclass(frozen=True, eq=False)
class PropagationPath:
    """One specular path from the target to the base station.

    vertices runs target -> reflection points -> BS.  gain is the complex
    amplitude at the carrier only; the per-subcarrier phasor exp(-j2*pi*f*delay)
    is applied during channel synthesis.  azimuth/elevation describe the
    arrival direction at the BS.
    """

    kind: str
    reflector_chain: tuple[int, ...]
    vertices: np.ndarray
    length_m: float
    delay_s: float
    azimuth_rad: float
    elevation_rad: float
    gain: complex


@dataclass(frozen=True, eq=False)
class PathSet:
    target: Position
    paths: tuple[PropagationPath, ...]

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        chains = [p.reflector_chain for p in self.paths]
        if len(set(chains)) != len(chains):
            raise ValueError("duplicate reflector chains in path set")


def mirror_point(p, reflector: Reflector) -> np.ndarray:
    """Reflect a point across the reflector's infinite plane (involutive)."""
    p = np.asarray(p, dtype=float)
    n = reflector.normal
    return p - 2.0 * float((p - reflector.p0) @ n) * n


def fresnel_coefficient(material: MaterialParams, incidence_angle_rad: float, f_hz: float) -> complex:
    """Perpendicular-polarization reflection coefficient at a material face.

    incidence_angle_rad is measured from the surface normal, in [0, pi/2).
    Uses the complex relative permittivity eta = eps_r - j*17.98*sigma/f_GHz.
    """
    if not 0.0 <= incidence_angle_rad < math.pi / 2:
        raise ValueError(f"incidence angle {incidence_angle_rad} outside [0, pi/2)")
    f_ghz = f_hz / 1e9
    eta = material.rel_permittivity - 1j * 17.98 * material.conductivity_s_m / f_ghz
    cos_t = math.cos(incidence_angle_rad)
    root = np.sqrt(eta - math.sin(incidence_angle_rad) ** 2)
    return complex((cos_t - root) / (cos_t + root))


def path_gain(vertices: np.ndarray, chain: tuple[int, ...], scene: Scene, f0_hz: float) -> complex:
    """Free-space amplitude times the product of reflection coefficients.

    The spreading amplitude is lambda0 / (4*pi*length) over the full unfolded
    path length, so reflections only ever attenuate.
    """
    vertices = np.asarray(vertices, dtype=float)
    seg = np.diff(vertices, axis=0)
    seg_len = np.linalg.norm(seg, axis=1)
    length = float(seg_len.sum())
    lam0 = SPEED_OF_LIGHT / f0_hz
    amp = lam0 / (4.0 * math.pi * length)

    by_id = {r.id: r for r in scene.reflectors}
    gain = complex(amp)
    for k, rid in enumerate(chain):
        refl = by_id[rid]
        d_in = seg[k] / seg_len[k]
        cos_inc = min(abs(float(d_in @ refl.normal)), 1.0)
        theta = math.acos(cos_inc)
        gain *= fresnel_coefficient(refl.material, theta, f0_hz)
    return gain


class _ScenePlanes:
    """Scene reflectors unpacked into flat arrays for vectorized queries."""

    def __init__(self, scene: Scene):
        refl = scene.reflectors
        self.scene = scene
        self.ids = np.array([r.id for r in refl])
        self.p0 = np.stack([r.p0 for r in refl])
        self.n = np.stack([r.normal for r in refl])
        self.u = np.stack([r.u_axis for r in refl])
        self.v = np.stack([r.v_axis for r in refl])
        self.u_lo = np.array([r.u_range[0] for r in refl])
        self.u_hi = np.array([r.u_range[1] for r in refl])
        self.v_lo = np.array([r.v_range[0] for r in refl])
        self.v_hi = np.array([r.v_range[1] for r in refl])
        wall = np.array([r.kind == "wall-segment" for r in refl])
        self.wall_idx = np.where(wall)[0]

    def mirror(self, points: np.ndarray, plane_sel=slice(None)) -> np.ndarray:
        """Mirror points (..., 3) across each selected plane -> (..., P, 3)."""
        p0 = self.p0[plane_sel]
        n = self.n[plane_sel]
        pts = np.asarray(points, dtype=float)[..., None, :]
        dist = ((pts - p0) * n).sum(axis=-1)
        return pts - 2.0 * dist[..., None] * n

    def cross_points(self, a: np.ndarray, b: np.ndarray, plane_idx: np.ndarray):
        """Intersection of segments a->b with the planes at plane_idx.

        a, b, plane_idx broadcast over a common leading shape.  Returns
        (t, point, inside) where inside means the hit lies within the facet
        bounds and 0 < t < 1 strictly (endpoint touches excluded).
        """
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        n = self.n[plane_idx]
        p0 = self.p0[plane_idx]
        d = b - a
        denom = (n * d).sum(axis=-1)
        num = (n * (p0 - a)).sum(axis=-1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(denom != 0.0, num / denom, np.inf)
        point = a + t[..., None] * d
        rel = point - p0
        uu = (rel * self.u[plane_idx]).sum(axis=-1)
        vv = (rel * self.v[plane_idx]).sum(axis=-1)
        inside = (
            (t > _T_TOL)
            & (t < 1.0 - _T_TOL)
            & (uu >= self.u_lo[plane_idx])
            & (uu <= self.u_hi[plane_idx])
            & (vv >= self.v_lo[plane_idx])
            & (vv <= self.v_hi[plane_idx])
        )
        return t, point, inside

    def segment_blocked(self, a: np.ndarray, b: np.ndarray) -> bool:
        """True if the open segment a->b pierces any wall strictly inside its
        bounds.  The ground never occludes (everything sits above z = 0)."""
        if self.wall_idx.size == 0:
            return False
        n = self.n[self.wall_idx]
        p0 = self.p0[self.wall_idx]
        d = b - a
        denom = n @ d
        num = ((p0 - a) * n).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            t = np.where(denom != 0.0, num / denom, np.inf)
        live = (t > _T_TOL) & (t < 1.0 - _T_TOL)
        if not live.any():
            return False
        pts = a + t[live, None] * d
        sel = self.wall_idx[live]
        rel = pts - self.p0[sel]
        uu = (rel * self.u[sel]).sum(axis=1)
        vv = (rel * self.v[sel]).sum(axis=1)
        hit = (
            (uu >= self.u_lo[sel] + _OCCLUDER_MARGIN)
            & (uu <= self.u_hi[sel] - _OCCLUDER_MARGIN)
            & (vv >= self.v_lo[sel] + _OCCLUDER_MARGIN)
            & (vv <= self.v_hi[sel] - _OCCLUDER_MARGIN)
        )
        return bool(hit.any())


_plane_cache: "weakref.WeakKeyDictionary[Scene, _ScenePlanes]" = weakref.WeakKeyDictionary()


def _planes_for(scene: Scene) -> _ScenePlanes:
    planes = _plane_cache.get(scene)
    if planes is None:
        planes = _ScenePlanes(scene)
        _plane_cache[scene] = planes
    return planes


def _arrival_direction(vertices: np.ndarray, bs: np.ndarray) -> tuple[float, float]:
    d = vertices[-2] - bs
    az = math.atan2(d[1], d[0])
    el = math.atan2(d[2], math.hypot(d[0], d[1]))
    return az, el


def _finalize_path(
    planes: _ScenePlanes, vertices: np.ndarray, chain: tuple[int, ...], f0_hz: float
) -> PropagationPath:
    seg = np.diff(vertices, axis=0)
    length = float(np.linalg.norm(seg, axis=1).sum())
    az, el = _arrival_direction(vertices, planes.scene.bs_position)
    return PropagationPath(
        kind=KIND_BY_DEPTH[len(chain)],
        reflector_chain=chain,
        vertices=vertices,
        length_m=length,
        delay_s=length / SPEED_OF_LIGHT,
        azimuth_rad=az,
        elevation_rad=el,
        gain=path_gain(vertices, chain, planes.scene, f0_hz),
    )


def solve_paths(
    scene: Scene,
    target: Position,
    max_depth: int = 2,
    f0_hz: float = 28e9,
    region: DeploymentRegion | None = None,
) -> PathSet:
    """Enumerate LoS plus all specular chains up to max_depth bounces.

    Chains are ordered reflector sequences without immediate repeats; a chain
    yields a path iff every mirrored reflection point lands inside its facet
    and no segment is blocked by a wall.  Output order is deterministic:
    LoS, then single bounces by reflector id, then double bounces by id pair.
    """
    if not 0 <= max_depth <= 2:
        raise ValueError(f"max_depth must be in 0..2, got {max_depth}")
    if region is not None and not region.contains(target):
        raise ValueError(f"target {target} outside deployment region")

    planes = _planes_for(scene)
    bs = scene.bs_position
    tgt = target.as_array()
    n_refl = len(scene.reflectors)
    found: list[PropagationPath] = []

    if not planes.segment_blocked(tgt, bs):
        vertices = np.stack([tgt, bs])
        found.append(_finalize_path(planes, vertices, (), f0_hz))

    if max_depth >= 1:
        all_idx = np.arange(n_refl)
        images1 = planes.mirror(tgt)  # (R, 3)
        _, pts, inside = planes.cross_points(
            np.broadcast_to(bs, (n_refl, 3)), images1, all_idx
        )
        for i in np.where(inside)[0]:
            p1 = pts[i]
            if planes.segment_blocked(tgt, p1) or planes.segment_blocked(p1, bs):
                continue
            vertices = np.stack([tgt, p1, bs])
            chain = (int(planes.ids[i]),)
            found.append(_finalize_path(planes, vertices, chain, f0_hz))

    if max_depth >= 2 and n_refl >= 2:
        # Ordered pairs (i, j), i != j: first bounce off i, then j.
        images1 = planes.mirror(tgt)  # (R, 3)
        images2 = planes.mirror(images1)  # (R, R, 3): [i, j] = mirror_j(mirror_i(tgt))
        ii, jj = np.meshgrid(np.arange(n_refl), np.arange(n_refl), indexing="ij")
        keep = ii != jj
        ii, jj = ii[keep], jj[keep]
        img2 = images2[ii, jj]

        _, p2, in2 = planes.cross_points(np.broadcast_to(bs, img2.shape), img2, jj)
        ii, jj, p2 = ii[in2], jj[in2], p2[in2]
        _, p1, in1 = planes.cross_points(p2, images1[ii], ii)
        ii, jj, p1, p2 = ii[in1], jj[in1], p1[in1], p2[in1]

        order = np.lexsort((jj, ii))
        for k in order:
            a, b = p1[k], p2[k]
            if (
                planes.segment_blocked(tgt, a)
                or planes.segment_blocked(a, b)
                or planes.segment_blocked(b, bs)
            ):
                continue
            vertices = np.stack([tgt, a, b, bs])
            chain = (int(planes.ids[ii[k]]), int(planes.ids[jj[k]]))
            found.append(_finalize_path(planes, vertices, chain, f0_hz))

    return PathSet(target=target, paths=tuple(found))
