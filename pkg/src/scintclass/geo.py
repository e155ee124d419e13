"""Thin-shell ionospheric pierce point (IPP) geometry on a spherical Earth."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DEFAULT_SHELL_HEIGHT_KM = 350.0
EARTH_RADIUS_KM = 6371.0


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ShellModel:
    shell_height_km: float = DEFAULT_SHELL_HEIGHT_KM
    earth_radius_km: float = EARTH_RADIUS_KM

    def __post_init__(self):
        if not self.shell_height_km > 0:
            raise GeometryError(f"shell height must be positive, got {self.shell_height_km}")
        if not self.earth_radius_km > 0:
            raise GeometryError(f"Earth radius must be positive, got {self.earth_radius_km}")


@dataclass(frozen=True)
class IppCoordinate:
    lat_deg: float
    lon_deg: float


def earth_central_angle(elevation_deg, shell: ShellModel = ShellModel()):
    """Angle (radians) at Earth's centre between the receiver and the IPP."""
    el = np.radians(elevation_deg)
    ratio = shell.earth_radius_km / (shell.earth_radius_km + shell.shell_height_km)
    return np.pi / 2 - el - np.arcsin(ratio * np.cos(el))


def compute_ipp_array(
    receiver_lat_deg: float,
    receiver_lon_deg: float,
    elevation_deg,
    azimuth_deg,
    shell: ShellModel = ShellModel(),
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised IPP latitude/longitude in degrees, longitude in [0, 360).

    The longitude offset uses the two-argument arctangent, which agrees with
    the ``asin(sin psi sin A / cos lat)`` form wherever that is defined and
    keeps the right quadrant when the offset exceeds 90 degrees.
    """
    el = np.asarray(elevation_deg, dtype=float)
    if np.any(~(el > 0)) or np.any(el > 90):
        raise GeometryError("elevation must lie in (0, 90] degrees")
    az = np.radians(np.asarray(azimuth_deg, dtype=float))
    phi = math.radians(receiver_lat_deg)
    psi = earth_central_angle(el, shell)

    sin_lat = np.sin(phi) * np.cos(psi) + np.cos(phi) * np.sin(psi) * np.cos(az)
    lat = np.arcsin(np.clip(sin_lat, -1.0, 1.0))
    dlon = np.arctan2(
        np.sin(psi) * np.sin(az) * np.cos(phi),
        np.cos(psi) - np.sin(phi) * sin_lat,
    )
    lat_deg = np.degrees(lat)
    lon_deg = receiver_lon_deg + np.degrees(dlon)
    # at a pole the longitude is undefined; report the receiver's
    lon_deg = np.where(np.abs(lat_deg) >= 90.0, receiver_lon_deg, lon_deg)
    lon_deg = np.mod(lon_deg, 360.0)
    lon_deg = np.where(lon_deg >= 360.0, 0.0, lon_deg)
    return lat_deg, lon_deg


def compute_ipp(
    receiver_lat_deg: float,
    receiver_lon_deg: float,
    elevation_deg: float,
    azimuth_deg: float,
    shell: ShellModel = ShellModel(),
) -> IppCoordinate:
    """Pierce point of one line of sight through the thin shell.

    Raises :class:`GeometryError` for elevations outside (0, 90].
    """
    lat, lon = compute_ipp_array(
        receiver_lat_deg, receiver_lon_deg, elevation_deg, azimuth_deg, shell
    )
    return IppCoordinate(float(lat), float(lon))


def great_circle_angle(lat1_deg, lon1_deg, lat2_deg, lon2_deg):
    """Central angle in radians between two points (haversine form)."""
    p1, p2 = np.radians(lat1_deg), np.radians(lat2_deg)
    dl = np.radians(np.asarray(lon2_deg) - np.asarray(lon1_deg))
    h = np.sin((p2 - p1) / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2) ** 2
    return 2 * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
