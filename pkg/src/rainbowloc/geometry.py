"""Evaluation scenes and target sampling.

Four deployment environments around a base station at the origin: an open
ground plane, a semicircular wall, a quarter arc joined to a straight wall,
and two perpendicular walls (street corner).  Curved walls are approximated
by planar chord facets so the specular image method applies everywhere.

Coordinates: x/y horizontal in meters, z up.  The base station sits at
(0, 0, 25) with its linear antenna array along +y; target azimuth is
measured from the +x axis, so broadside is azimuth 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0
"""Propagation speed in m/s."""

BS_POSITION = (0.0, 0.0, 25.0)
TARGET_HEIGHT_M = 25.0
WALL_HEIGHT_M = 50.0

SCENE_IDS = ("los", "circle", "rounded_l", "l")

# Sub-stream tags for seeded RNG derivation, so positions, noise seeds and
# noise draws never share a stream.
_STREAM_POSITION = 101
_STREAM_NOISE_SEED = 102


@dataclass(frozen=True)
class MaterialParams:
    """Electromagnetic surface material.

    conductivity_s_m is evaluated at the carrier frequency; the frequency
    exponent models are applied by the factory functions below.
    """

    name: str
    rel_permittivity: float
    conductivity_s_m: float

    def __post_init__(self):
        if self.rel_permittivity < 1.0:
            raise ValueError(f"rel_permittivity must be >= 1, got {self.rel_permittivity}")
        if self.conductivity_s_m < 0.0:
            raise ValueError(f"conductivity must be >= 0, got {self.conductivity_s_m}")


def concrete(f_ghz: float) -> MaterialParams:
    """ITU-style concrete parametrization at carrier frequency f_ghz."""
    return MaterialParams("concrete", 5.24, 0.0462 * f_ghz**0.7822)


def brick(f_ghz: float) -> MaterialParams:
    """ITU-style brick parametrization at carrier frequency f_ghz."""
    return MaterialParams("brick", 3.91, 0.0238 * f_ghz**0.16)


@dataclass(frozen=True, eq=False)
class Reflector:
    """One planar reflective face.

    The plane is anchored at ``p0`` with unit ``normal``.  In-plane bounds are
    a rectangle in the (u_axis, v_axis) frame relative to p0: u is horizontal
    along the face, v is +z for walls (height interval) and +y for the ground.
    """

    id: int
    kind: str  # "ground-plane" | "wall-segment"
    p0: np.ndarray
    normal: np.ndarray
    u_axis: np.ndarray
    v_axis: np.ndarray
    u_range: tuple[float, float]
    v_range: tuple[float, float]
    material: MaterialParams

    def __post_init__(self):
        for name in ("p0", "normal", "u_axis", "v_axis"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if abs(np.linalg.norm(self.normal) - 1.0) >= 1e-12:
            raise ValueError(f"reflector {self.id}: normal is not unit length")
        if self.kind == "wall-segment":
            lo, hi = self.v_range
            if not (0.0 <= lo < hi <= WALL_HEIGHT_M):
                raise ValueError(f"reflector {self.id}: wall height interval {self.v_range}")

    def contains_uv(self, u, v, margin: float = 0.0):
        """True where (u, v) lies inside the face bounds, shrunk by margin."""
        return (
            (u >= self.u_range[0] + margin)
            & (u <= self.u_range[1] - margin)
            & (v >= self.v_range[0] + margin)
            & (v <= self.v_range[1] - margin)
        )

    def to_uv(self, points: np.ndarray):
        """Project world points (..., 3) into in-plane (u, v) coordinates."""
        rel = np.asarray(points, dtype=float) - self.p0
        return rel @ self.u_axis, rel @ self.v_axis


@dataclass(frozen=True, eq=False)
class Scene:
    """Immutable collection of reflectors around the base station."""

    scene_id: str
    reflectors: tuple[Reflector, ...]
    bs_position: np.ndarray = field(default_factory=lambda: np.array(BS_POSITION))
    array_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))

    def __post_init__(self):
        object.__setattr__(self, "reflectors", tuple(self.reflectors))
        ids = [r.id for r in self.reflectors]
        if len(set(ids)) != len(ids):
            raise ValueError("reflector ids must be unique")
        if self.scene_id == "los" and len(self.reflectors) != 1:
            raise ValueError("los scene must contain exactly the ground plane")

    @property
    def ground(self) -> Reflector:
        return self.reflectors[0]

    @property
    def walls(self) -> tuple[Reflector, ...]:
        return self.reflectors[1:]


@dataclass(frozen=True)
class Position:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def range_m(self) -> float:
        return math.hypot(self.x, self.y)

    @property
    def azimuth_rad(self) -> float:
        return math.atan2(self.y, self.x)


@dataclass(frozen=True)
class DeploymentRegion:
    """Polar sampling region for targets, all at fixed height."""

    range_min_m: float = 5.0
    range_max_m: float = 200.0
    az_min_deg: float = -60.0
    az_max_deg: float = 60.0
    height_m: float = TARGET_HEIGHT_M

    def contains(self, p: Position, tol: float = 1e-9) -> bool:
        az = math.degrees(p.azimuth_rad)
        return (
            self.range_min_m - tol <= p.range_m <= self.range_max_m + tol
            and self.az_min_deg - tol <= az <= self.az_max_deg + tol
        )


def _ground_plane(material: MaterialParams, half_extent_m: float = 2000.0) -> Reflector:
    return Reflector(
        id=0,
        kind="ground-plane",
        p0=np.zeros(3),
        normal=np.array([0.0, 0.0, 1.0]),
        u_axis=np.array([1.0, 0.0, 0.0]),
        v_axis=np.array([0.0, 1.0, 0.0]),
        u_range=(-half_extent_m, half_extent_m),
        v_range=(-half_extent_m, half_extent_m),
        material=material,
    )


def _wall_from_endpoints(rid: int, a_xy, b_xy, inward_xy, material: MaterialParams) -> Reflector:
    """Vertical wall on the segment a->b, normal on the side of inward_xy."""
    a = np.asarray(a_xy, dtype=float)
    b = np.asarray(b_xy, dtype=float)
    mid = 0.5 * (a + b)
    along = b - a
    length = float(np.linalg.norm(along))
    if length <= 0.0:
        raise ValueError("degenerate wall segment")
    u = along / length
    n_xy = np.array([-u[1], u[0]])
    if float(n_xy @ (np.asarray(inward_xy) - mid)) < 0.0:
        n_xy = -n_xy
    return Reflector(
        id=rid,
        kind="wall-segment",
        p0=np.array([mid[0], mid[1], 0.0]),
        normal=np.array([n_xy[0], n_xy[1], 0.0]),
        u_axis=np.array([u[0], u[1], 0.0]),
        v_axis=np.array([0.0, 0.0, 1.0]),
        u_range=(-length / 2.0, length / 2.0),
        v_range=(0.0, WALL_HEIGHT_M),
        material=material,
    )


def facetize_arc(
    center_xy,
    radius_m: float,
    az_start_rad: float,
    az_end_rad: float,
    height_range: tuple[float, float],
    facet_deg: float,
    material: MaterialParams,
    first_id: int = 1,
) -> list[Reflector]:
    """Approximate a vertical arc wall by planar chord facets.

    Facet endpoints lie exactly on the arc; each normal points toward the
    arc center.  The number of facets is ceil(span / facet_deg).
    """
    if radius_m <= 0.0:
        raise ValueError("radius must be positive")
    span = az_end_rad - az_start_rad
    if span <= 0.0:
        raise ValueError("empty azimuth span")
    facet_rad = math.radians(facet_deg)
    n_facets = math.ceil(span / facet_rad - 1e-12)
    center = np.asarray(center_xy, dtype=float)

    facets = []
    for i in range(n_facets):
        a0 = az_start_rad + span * i / n_facets
        a1 = az_start_rad + span * (i + 1) / n_facets
        p_a = center + radius_m * np.array([math.cos(a0), math.sin(a0)])
        p_b = center + radius_m * np.array([math.cos(a1), math.sin(a1)])
        wall = _wall_from_endpoints(first_id + i, p_a, p_b, center, material)
        facets.append(
            Reflector(
                id=wall.id,
                kind=wall.kind,
                p0=wall.p0,
                normal=wall.normal,
                u_axis=wall.u_axis,
                v_axis=wall.v_axis,
                u_range=wall.u_range,
                v_range=(height_range[0], height_range[1]),
                material=material,
            )
        )
    return facets


def build_scene(scene_id: str, facet_deg: float = 1.0, f_ghz: float = 28.0) -> Scene:
    """Construct one of the four evaluation scenes.

    circle:    semicircular wall, radius 300 m, azimuth [-90, +90] deg.
    rounded_l: quarter arc radius 300 m over [0, 90] deg, joined tangentially
               at (300, 0) to a straight wall running to (300, -400).
    l:         perpendicular wall planes x = 205 (|y| <= 400) and y = 180
               (|x| <= 400).
    All walls are brick and span heights [0, 50] m; the ground is concrete.
    """
    if not 0.0 < facet_deg <= 10.0:
        raise ValueError(f"facet_deg must be in (0, 10], got {facet_deg}")
    ground_mat = concrete(f_ghz)
    wall_mat = brick(f_ghz)
    ground = _ground_plane(ground_mat)

    if scene_id == "los":
        reflectors = [ground]
    elif scene_id == "circle":
        arc = facetize_arc(
            (0.0, 0.0), 300.0, -math.pi / 2, math.pi / 2, (0.0, WALL_HEIGHT_M), facet_deg, wall_mat
        )
        reflectors = [ground, *arc]
    elif scene_id == "rounded_l":
        arc = facetize_arc(
            (0.0, 0.0), 300.0, 0.0, math.pi / 2, (0.0, WALL_HEIGHT_M), facet_deg, wall_mat
        )
        straight = _wall_from_endpoints(
            len(arc) + 1, (300.0, 0.0), (300.0, -400.0), (0.0, -200.0), wall_mat
        )
        reflectors = [ground, *arc, straight]
    elif scene_id == "l":
        wall_ns = _wall_from_endpoints(1, (205.0, -400.0), (205.0, 400.0), (0.0, 0.0), wall_mat)
        wall_ew = _wall_from_endpoints(2, (-400.0, 180.0), (400.0, 180.0), (0.0, 0.0), wall_mat)
        reflectors = [ground, wall_ns, wall_ew]
    else:
        raise ValueError(f"unknown scene_id {scene_id!r}; expected one of {SCENE_IDS}")
    return Scene(scene_id=scene_id, reflectors=tuple(reflectors))


def sample_position(seed: int, index: int, region: DeploymentRegion | None = None) -> Position:
    """Draw the index-th target position for a seed, uniform in (range, azimuth).

    Pure function of (seed, index): repeated calls are bit-identical.
    """
    region = region or DeploymentRegion()
    rng = np.random.default_rng([seed, index, _STREAM_POSITION])
    r = rng.uniform(region.range_min_m, region.range_max_m)
    az = math.radians(rng.uniform(region.az_min_deg, region.az_max_deg))
    return Position(x=r * math.cos(az), y=r * math.sin(az), z=region.height_m)


def derive_noise_seed(seed: int, index: int) -> int:
    """Stable per-sample noise seed, independent of the position stream."""
    rng = np.random.default_rng([seed, index, _STREAM_NOISE_SEED])
    return int(rng.integers(0, 2**63))
