"""Walker shells, two-body circular propagation, ground sites and link geometry.

All positions share one Earth-centred frame whose x axis passes through
longitude 0 at the scenario epoch (t = 0). Satellites move in that frame on
circular orbits; ground sites rotate with the Earth about z.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from satnet.constants import (
    EARTH_MU_KM3_S2,
    EARTH_RADIUS_KM,
    EARTH_ROTATION_RAD_S,
    SPEED_OF_LIGHT_KM_S,
)
from satnet.errors import ContractViolation, ValidationError

# Walker-Star (near-polar) shells spread their planes over 180 deg.
STAR_INCLINATION_THRESHOLD_DEG = 80.0


@dataclass(frozen=True)
class ShellSpec:
    name: str
    altitude_km: float
    num_orbits: int
    sats_per_orbit: int
    inclination_deg: float
    phasing_factor: int = 0
    raan_span_deg: Optional[float] = None

    def __post_init__(self):
        if not self.name:
            raise ValidationError("shell name must be non-empty", field="name")
        if not self.altitude_km > 0:
            raise ValidationError(
                f"altitude_km must be > 0, got {self.altitude_km}", field="altitude_km")
        for fname in ("num_orbits", "sats_per_orbit"):
            value = getattr(self, fname)
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ValidationError(f"{fname} must be a positive integer, got {value!r}",
                                      field=fname)
        if not 0 < self.inclination_deg <= 180:
            raise ValidationError(
                f"inclination_deg must be in (0, 180], got {self.inclination_deg}",
                field="inclination_deg")
        if not isinstance(self.phasing_factor, (int, np.integer)) or self.phasing_factor < 0:
            raise ValidationError(
                f"phasing_factor must be an integer >= 0, got {self.phasing_factor!r}",
                field="phasing_factor")
        if self.raan_span_deg is not None and not 0 < self.raan_span_deg <= 360:
            raise ValidationError(
                f"raan_span_deg must be in (0, 360], got {self.raan_span_deg}",
                field="raan_span_deg")

    @property
    def total_satellites(self) -> int:
        return self.num_orbits * self.sats_per_orbit

    @property
    def effective_raan_span_deg(self) -> float:
        if self.raan_span_deg is not None:
            return float(self.raan_span_deg)
        return 180.0 if self.is_star else 360.0

    @property
    def is_star(self) -> bool:
        """Walker-Star when planes span 180 deg, Walker-Delta otherwise."""
        if self.raan_span_deg is not None:
            return self.raan_span_deg <= 180.0
        return self.inclination_deg >= STAR_INCLINATION_THRESHOLD_DEG

    @property
    def semi_major_axis_km(self) -> float:
        return EARTH_RADIUS_KM + self.altitude_km


@dataclass(frozen=True)
class GroundSiteSpec:
    name: str
    latitude_deg: float
    longitude_deg: float
    altitude_km: float = 0.0
    min_elevation_deg: float = 25.0

    def __post_init__(self):
        if not self.name:
            raise ValidationError("ground site name must be non-empty", field="name")
        if not -90 <= self.latitude_deg <= 90:
            raise ValidationError(
                f"latitude_deg must be in [-90, 90], got {self.latitude_deg}",
                field="latitude_deg")
        if not -180 < self.longitude_deg <= 180:
            raise ValidationError(
                f"longitude_deg must be in (-180, 180], got {self.longitude_deg}",
                field="longitude_deg")
        if not 0 <= self.min_elevation_deg < 90:
            raise ValidationError(
                f"min_elevation_deg must be in [0, 90), got {self.min_elevation_deg}",
                field="min_elevation_deg")
        if self.altitude_km < 0:
            raise ValidationError(
                f"altitude_km must be >= 0, got {self.altitude_km}", field="altitude_km")


@dataclass(frozen=True)
class SatelliteElement:
    shell_name: str
    orbit_index: int
    slot_index: int
    raan_rad: float
    phase_rad: float
    semi_major_axis_km: float
    inclination_rad: float

    @property
    def period_s(self) -> float:
        return orbital_period(self.semi_major_axis_km)


@dataclass(frozen=True)
class EcefPosition:
    x: float
    y: float
    z: float
    t: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])

    @property
    def norm(self) -> float:
        return math.sqrt(self.x * self.x + self.y * self.y + self.z * self.z)


def orbital_period(semi_major_axis_km: float) -> float:
    return 2.0 * math.pi * math.sqrt(semi_major_axis_km ** 3 / EARTH_MU_KM3_S2)


def generate_shell(spec: ShellSpec) -> list[SatelliteElement]:
    """Return the satellites of one Walker shell, orbit-major order."""
    span = math.radians(spec.effective_raan_span_deg)
    inc = math.radians(spec.inclination_deg)
    a = spec.semi_major_axis_km
    n_orb, n_slot = spec.num_orbits, spec.sats_per_orbit
    total = n_orb * n_slot
    elements = []
    for o in range(n_orb):
        raan = o * span / n_orb
        phase_offset = 2.0 * math.pi * spec.phasing_factor * o / total
        for k in range(n_slot):
            phase = 2.0 * math.pi * k / n_slot + phase_offset
            elements.append(SatelliteElement(spec.name, o, k, raan, phase, a, inc))
    return elements


def _orbit_to_frame(a, u, inc, raan):
    # Position in the orbital plane rotated by inclination (about x) then RAAN (about z).
    cu, su = np.cos(u), np.sin(u)
    ci, si = np.cos(inc), np.sin(inc)
    co, so = np.cos(raan), np.sin(raan)
    x = a * (co * cu - so * ci * su)
    y = a * (so * cu + co * ci * su)
    z = a * (si * su)
    return x, y, z


def propagate_satellite(elem: SatelliteElement, t: float) -> EcefPosition:
    if not t >= 0:
        raise ContractViolation(f"t must be >= 0, got {t}")
    n = 2.0 * math.pi / elem.period_s
    u = elem.phase_rad + n * t
    x, y, z = _orbit_to_frame(elem.semi_major_axis_km, u, elem.inclination_rad, elem.raan_rad)
    return EcefPosition(float(x), float(y), float(z), float(t))


def propagate_many(elements, t: float) -> np.ndarray:
    """Vectorised :func:`propagate_satellite`; returns an (n, 3) array."""
    if not elements:
        return np.zeros((0, 3))
    a = np.fromiter((e.semi_major_axis_km for e in elements), float, len(elements))
    phase = np.fromiter((e.phase_rad for e in elements), float, len(elements))
    inc = np.fromiter((e.inclination_rad for e in elements), float, len(elements))
    raan = np.fromiter((e.raan_rad for e in elements), float, len(elements))
    n = 2.0 * np.pi / (2.0 * np.pi * np.sqrt(a ** 3 / EARTH_MU_KM3_S2))
    x, y, z = _orbit_to_frame(a, phase + n * t, inc, raan)
    return np.column_stack([x, y, z])


def ground_site_position(site: GroundSiteSpec, t: float) -> EcefPosition:
    r = EARTH_RADIUS_KM + site.altitude_km
    lat = math.radians(site.latitude_deg)
    lon = math.radians(site.longitude_deg) + EARTH_ROTATION_RAD_S * t
    if site.latitude_deg in (90, -90):
        # keep the poles exactly on the axis
        return EcefPosition(0.0, 0.0, math.copysign(r, site.latitude_deg), float(t))
    return EcefPosition(
        r * math.cos(lat) * math.cos(lon),
        r * math.cos(lat) * math.sin(lon),
        r * math.sin(lat),
        float(t),
    )


def slant_range_and_delay(p: EcefPosition, q: EcefPosition) -> tuple[float, float]:
    """Euclidean range (km) and one-way light delay (ms) between two points."""
    if p.t != q.t:
        raise ContractViolation(f"positions at different times: {p.t} != {q.t}")
    rng = math.dist((p.x, p.y, p.z), (q.x, q.y, q.z))
    return rng, delay_ms(rng)


def delay_ms(distance_km: float) -> float:
    return distance_km / SPEED_OF_LIGHT_KM_S * 1000.0


def elevation_and_visibility(site_pos: EcefPosition, sat_pos: EcefPosition,
                             min_elevation_deg: float) -> tuple[float, bool]:
    if site_pos.t != sat_pos.t:
        raise ContractViolation(f"positions at different times: {site_pos.t} != {sat_pos.t}")
    site = site_pos.as_array()
    site_norm = np.linalg.norm(site)
    if site_norm == 0.0:
        raise ContractViolation("ground site at the origin has no local vertical")
    los = sat_pos.as_array() - site
    if not np.any(los):
        return 90.0, True
    elevation = float(elevations_deg(site, los[None, :] + site)[0])
    return elevation, elevation >= min_elevation_deg


def elevations_deg(site_pos: np.ndarray, sat_pos: np.ndarray) -> np.ndarray:
    """Elevation of each row of ``sat_pos`` seen from one site, in degrees."""
    up = site_pos / np.linalg.norm(site_pos)
    los = sat_pos - site_pos
    vertical = los @ up
    # atan2 of vertical vs horizontal parts stays accurate near the zenith
    horizontal = np.linalg.norm(los - np.outer(vertical, up), axis=1)
    out = np.degrees(np.arctan2(vertical, horizontal))
    out[(vertical == 0) & (horizontal == 0)] = 90.0
    return out


# Constellations used in the experiments. Iridium follows the 6 x 11 layout;
# "iridium-table" keeps the 11-orbit reading of the same 66 satellites.
CONSTELLATIONS: dict[str, list[ShellSpec]] = {
    "iridium": [ShellSpec("iridium", 780.0, 6, 11, 86.4)],
    "iridium-table": [ShellSpec("iridium", 780.0, 11, 6, 86.4)],
    "oneweb": [ShellSpec("oneweb", 1200.0, 18, 40, 87.9)],
    "kuiper": [ShellSpec("kuiper", 630.0, 34, 34, 51.9)],
    "starlink-shell-1": [ShellSpec("starlink-shell-1", 550.0, 72, 22, 53.0)],
    "starlink-shell-2": [ShellSpec("starlink-shell-2", 540.0, 72, 22, 53.2)],
    "starlink-shell-3": [ShellSpec("starlink-shell-3", 570.0, 36, 20, 70.0)],
    "starlink-shell-4": [ShellSpec("starlink-shell-4", 560.0, 6, 58, 97.6)],
    "starlink-shell-5": [ShellSpec("starlink-shell-5", 560.0, 4, 43, 97.6)],
}
CONSTELLATIONS["starlink"] = [
    CONSTELLATIONS[f"starlink-shell-{i}"][0] for i in range(1, 6)
]
