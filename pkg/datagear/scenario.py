"""
Declarative simulation scenarios (YAML): households, their devices,
outages, clock behaviour and the campaign they are enrolled in.
"""
import logging
import os
import re
from dataclasses import dataclass, field
from datetime import date, datetime, timezone
from typing import Any, List, Mapping, Optional, Tuple
import yaml
from .catalog import (
    CATALOG,
    SMART_METER_MODULE,
    WEATHER_ZONE
)
from .common import DEFAULT_WEATHER_ZONE_SIGMA_M
from .errors import ConfigurationError, DataGearError
from .firmware import (
    COREINK,
    DEFAULT_DRIFT_PPM,
    DEFAULT_SYNC_TOLERANCE,
    PowerProfile
)
from .geo import check_timezone

logger = logging.getLogger(__name__)

DEFAULT_SEED = 1
DEFAULT_HORIZON = 86400
DEFAULT_TIMEZONE = 'Europe/Amsterdam'
DEFAULT_POLL_INTERVAL = 3600
DEFAULT_PSEUDONYM_PREFIX = 'hh'
DSMR_VERSIONS = ('3.0', '4.2', '5.0')
DEFAULT_DSMR_VERSION = '5.0'
EXAMPLE_SCENARIO_PATH = os.path.join(
    os.path.dirname(__file__), 'data', 'example_scenario.yaml')

_DURATION = re.compile(r'^(\d+)\s*([smhdw]?)$')
_UNITS = {'': 1, 's': 1, 'm': 60, 'h': 3600, 'd': 86400, 'w': 604800}


def parse_duration(value: Any) -> int:
    """Seconds from an int or text like '90', '10m', '6h', '7d', '3w'."""
    if isinstance(value, bool):
        raise ConfigurationError(f'not a duration: {value!r}')
    if isinstance(value, int):
        return value
    match = _DURATION.match(str(value).strip().lower())
    if not match:
        raise ConfigurationError(f'not a duration: {value!r}')
    return int(match.group(1)) * _UNITS[match.group(2)]


def parse_start(value: Any) -> int:
    if isinstance(value, bool):
        raise ConfigurationError(f'not a start time: {value!r}')
    if isinstance(value, int):
        return value
    if isinstance(value, datetime):
        moment = value
    elif isinstance(value, date):
        moment = datetime(value.year, value.month, value.day)
    else:
        try:
            moment = datetime.fromisoformat(str(value))
        except ValueError:
            raise ConfigurationError(f'not a start time: {value!r}')
    if moment.tzinfo is None:
        moment = moment.replace(tzinfo=timezone.utc)
    return int(moment.timestamp())


@dataclass(frozen=True)
class Outage:
    start: int
    end: int

    def covers(self, t: int) -> bool:
        return self.start <= t < self.end


@dataclass(frozen=True)
class RandomOutages:
    count: int
    min_duration: int
    max_duration: int


@dataclass(frozen=True)
class DeviceSpec:
    kind: str
    relay: Optional[str] = None
    signals: Mapping[str, Mapping[str, Any]] = field(default_factory=dict)

    @property
    def satellite(self) -> bool:
        return CATALOG.lookup(self.kind).relayed


@dataclass(frozen=True)
class HouseholdSpec:
    pseudonym: str
    devices: Tuple[DeviceSpec, ...]
    dsmr_version: str = DEFAULT_DSMR_VERSION
    outages: Tuple[Outage, ...] = ()
    random_outages: Optional[RandomOutages] = None
    drift_ppm: float = DEFAULT_DRIFT_PPM
    sync_tolerance: float = DEFAULT_SYNC_TOLERANCE
    upload_interval: Optional[int] = None
    buffer_capacity: Optional[int] = None
    residents: int = 2
    home: Optional[Tuple[float, float]] = None
    silent: Tuple[str, ...] = ()


@dataclass(frozen=True)
class CampaignSpec:
    app: str
    name: str
    data_sources: Tuple[str, ...]


@dataclass(frozen=True)
class Scenario:
    seed: int
    start: int
    horizon: int
    timezone: str
    campaign: CampaignSpec
    households: Tuple[HouseholdSpec, ...]
    power: PowerProfile = COREINK
    weather_zone_sigma_m: float = DEFAULT_WEATHER_ZONE_SIGMA_M
    poll_interval: int = DEFAULT_POLL_INTERVAL
    base_dir: str = '.'

    @property
    def end(self) -> int:
        return self.start + self.horizon


def _mapping(value: Any, what: str) -> Mapping[str, Any]:
    if not isinstance(value, Mapping):
        raise ConfigurationError(f'{what} must be a mapping')
    return value


def _number(value: Any, what: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigurationError(f'{what} must be a number')
    return float(value)


def _device(value: Any) -> DeviceSpec:
    if isinstance(value, str):
        value = {'kind': value}
    body = _mapping(value, 'device')
    kind = str(body.get('kind', ''))
    source_type = CATALOG.get(kind)
    if source_type is None or not source_type.is_device:
        raise ConfigurationError(f'unknown device kind {kind!r}')
    signals = dict(_mapping(body.get('signals') or dict(), 'signals'))
    for name, spec in signals.items():
        _mapping(spec, f'signal {name}')
    relay = body.get('relay')
    if relay is not None and str(relay) not in CATALOG:
        raise ConfigurationError(f'unknown relay kind {relay!r}')
    return DeviceSpec(kind, str(relay) if relay else None, signals)


def _outage(value: Any, start: int) -> Outage:
    body = _mapping(value, 'outage')
    begin = start + parse_duration(body.get('start', 0))
    if 'end' in body:
        end = start + parse_duration(body['end'])
    else:
        end = begin + parse_duration(body.get('duration', 0))
    if end <= begin:
        raise ConfigurationError(f'outage must have positive length: {body}')
    return Outage(begin, end)


def _random_outages(value: Any) -> RandomOutages:
    body = _mapping(value, 'random_outages')
    spec = RandomOutages(
        int(body.get('count', 1)),
        parse_duration(body.get('min', '1h')),
        parse_duration(body.get('max', '6h')))
    if spec.count < 0 or not 0 < spec.min_duration <= spec.max_duration:
        raise ConfigurationError(f'bad random outage spec: {dict(body)}')
    return spec


def _home(value: Any) -> Tuple[float, float]:
    body = _mapping(value, 'home')
    return (_number(body.get('lat'), 'home.lat'),
            _number(body.get('lon'), 'home.lon'))


def _households(
        entries: Any,
        start: int) -> List[HouseholdSpec]:
    if not isinstance(entries, list) or not entries:
        raise ConfigurationError('scenario needs a list of households')
    households: List[HouseholdSpec] = []
    for entry in entries:
        body = _mapping(entry, 'household')
        count = int(body.get('count', 1))
        if count < 1:
            raise ConfigurationError('household count must be >= 1')
        devices = tuple(_device(d) for d in body.get('devices') or [])
        if not devices:
            raise ConfigurationError('household needs at least one device')
        version = str(body.get('dsmr_version', DEFAULT_DSMR_VERSION))
        if version not in DSMR_VERSIONS:
            raise ConfigurationError(
                f'dsmr_version must be one of {", ".join(DSMR_VERSIONS)}')
        upload = body.get('upload_interval')
        capacity = body.get('buffer_capacity')
        silent = tuple(str(kind) for kind in body.get('silent') or [])
        prefix = str(body.get('pseudonym_prefix', DEFAULT_PSEUDONYM_PREFIX))
        for _ in range(count):
            pseudonym = body.get('pseudonym') if count == 1 else None
            households.append(HouseholdSpec(
                pseudonym=str(pseudonym or
                              f'{prefix}-{len(households) + 1:03d}'),
                devices=devices,
                dsmr_version=version,
                outages=tuple(
                    _outage(o, start) for o in body.get('outages') or []),
                random_outages=_random_outages(body['random_outages'])
                if body.get('random_outages') else None,
                drift_ppm=_number(
                    body.get('drift_ppm', DEFAULT_DRIFT_PPM), 'drift_ppm'),
                sync_tolerance=_number(
                    body.get('sync_tolerance', DEFAULT_SYNC_TOLERANCE),
                    'sync_tolerance'),
                upload_interval=parse_duration(upload) if upload else None,
                buffer_capacity=int(capacity) if capacity else None,
                residents=int(body.get('residents', 2)),
                home=_home(body['home']) if body.get('home') else None,
                silent=silent))
    names = [h.pseudonym for h in households]
    if len(set(names)) != len(names):
        raise ConfigurationError('household pseudonyms must be unique')
    return households


def _data_sources(households: List[HouseholdSpec]) -> Tuple[str, ...]:
    kinds: List[str] = []
    for household in households:
        for device in household.devices:
            if device.kind not in kinds:
                kinds.append(device.kind)
    if any(h.home for h in households):
        kinds.append(WEATHER_ZONE)
    return tuple(kinds)


def parse_scenario(
        data: Mapping[str, Any],
        base_dir: str = '.') -> Scenario:
    data = _mapping(data, 'scenario')
    start = parse_start(data.get('start', 0))
    horizon = parse_duration(data.get('horizon', DEFAULT_HORIZON))
    if horizon <= 0:
        raise ConfigurationError('horizon must be positive')
    tz = str(data.get('timezone', DEFAULT_TIMEZONE))
    try:
        check_timezone(tz)
    except DataGearError as e:
        raise ConfigurationError(str(e))
    households = _households(data.get('households'), start)
    campaign = _mapping(data.get('campaign') or dict(), 'campaign')
    sources = campaign.get('data_sources')
    spec = CampaignSpec(
        str(campaign.get('app', 'datagear-sim')),
        str(campaign.get('name', 'simulated campaign')),
        tuple(str(s) for s in sources) if sources
        else _data_sources(households))
    for type_name in spec.data_sources:
        if type_name not in CATALOG:
            raise ConfigurationError(f'unknown data source {type_name!r}')
    power = COREINK
    if data.get('power'):
        body = _mapping(data['power'], 'power')
        try:
            power = PowerProfile(
                _number(body.get('boot_energy', COREINK.boot_energy),
                        'boot_energy'),
                _number(body.get('sleep_power', COREINK.sleep_power),
                        'sleep_power'),
                _number(body.get('off_power', COREINK.off_power),
                        'off_power'))
        except DataGearError as e:
            raise ConfigurationError(str(e))
    return Scenario(
        seed=int(data.get('seed', DEFAULT_SEED)),
        start=start,
        horizon=horizon,
        timezone=tz,
        campaign=spec,
        households=tuple(households),
        power=power,
        weather_zone_sigma_m=_number(
            data.get('weather_zone_sigma_m', DEFAULT_WEATHER_ZONE_SIGMA_M),
            'weather_zone_sigma_m'),
        poll_interval=parse_duration(
            data.get('poll_interval', DEFAULT_POLL_INTERVAL)),
        base_dir=base_dir)


def load_scenario(path: str) -> Scenario:
    try:
        with open(path, encoding='utf-8') as handle:
            data = yaml.safe_load(handle)
    except OSError as e:
        raise ConfigurationError(f'cannot read scenario {path}: {e}')
    except yaml.YAMLError as e:
        raise ConfigurationError(f'scenario {path} is not valid YAML: {e}')
    return parse_scenario(
        data or dict(), os.path.dirname(os.path.abspath(path)))


def relay_kind(household: HouseholdSpec, device: DeviceSpec) -> Optional[str]:
    """Kind of the household device that forwards a satellite's data."""
    wanted = device.relay or SMART_METER_MODULE
    kinds = [d.kind for d in household.devices if not d.satellite]
    return wanted if wanted in kinds else None
