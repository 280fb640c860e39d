"""
Weather zone assignment: a home coordinate is perturbed with Gaussian
noise and replaced by the resolution-4 hexagonal cell that contains it.
Only the cell id and the timezone name ever leave this module.
"""
import logging
import math
import random
from dataclasses import dataclass
from typing import Dict, Tuple
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError
import h3  # type: ignore
from .errors import GeoError

logger = logging.getLogger(__name__)

WEATHER_ZONE_RESOLUTION = 4
EARTH_RADIUS_M = 6371008.8
PAYLOAD_FIELDS = frozenset(['cell_id', 'tz'])


@dataclass(frozen=True)
class WeatherZoneResult:
    cell_id: str
    tz: str

    def to_payload(self) -> Dict[str, str]:
        return {'cell_id': self.cell_id, 'tz': self.tz}


def _check_coordinate(lat: float, lon: float) -> None:
    for value in (lat, lon):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise GeoError('coordinates must be numbers')
        if not math.isfinite(value):
            raise GeoError('coordinates must be finite')
    if not -90 <= lat <= 90:
        raise GeoError('latitude out of range [-90, 90]')
    if not -180 <= lon <= 180:
        raise GeoError('longitude out of range [-180, 180]')


def check_timezone(tz: str) -> str:
    try:
        ZoneInfo(tz)
    except (ZoneInfoNotFoundError, ValueError):
        raise GeoError(f'unknown timezone {tz!r}')
    return tz


def check_cell(cell_id: str) -> str:
    if not isinstance(cell_id, str) or not h3.is_valid_cell(cell_id):
        raise GeoError(f'malformed cell id {cell_id!r}')
    if h3.get_resolution(cell_id) != WEATHER_ZONE_RESOLUTION:
        raise GeoError(
            f'cell {cell_id} is not at resolution {WEATHER_ZONE_RESOLUTION}')
    return cell_id


def displace(
        lat: float,
        lon: float,
        north_m: float,
        east_m: float) -> Tuple[float, float]:
    """Local metric approximation: longitude degrees shrink with cos(lat)."""
    dlat = math.degrees(north_m / EARTH_RADIUS_M)
    coslat = max(math.cos(math.radians(lat)), 1e-12)
    dlon = math.degrees(east_m / (EARTH_RADIUS_M * coslat))
    new_lat = max(-90.0, min(90.0, lat + dlat))
    new_lon = (lon + dlon + 180.0) % 360.0 - 180.0
    return new_lat, new_lon


def assign_weather_zone(
        lat: float,
        lon: float,
        sigma: float,
        tz: str,
        rng: random.Random) -> WeatherZoneResult:
    _check_coordinate(lat, lon)
    if isinstance(sigma, bool) or not sigma >= 0 or not math.isfinite(sigma):
        raise GeoError('sigma must be a finite number >= 0')
    check_timezone(tz)
    if sigma > 0:
        lat, lon = displace(
            lat, lon, rng.gauss(0.0, sigma), rng.gauss(0.0, sigma))
    cell_id = h3.latlng_to_cell(lat, lon, WEATHER_ZONE_RESOLUTION)
    logger.debug(f'Assigned weather zone {cell_id} ({tz})')
    return WeatherZoneResult(cell_id, tz)


def cell_center(cell_id: str) -> Tuple[float, float]:
    check_cell(cell_id)
    lat, lon = h3.cell_to_latlng(cell_id)
    return lat, lon
