"""
DSMR P1 telegram parsing: structure, CRC16 integrity, OBIS-to-property
mapping and local-time to Unix-time conversion (including the ambiguous
autumn hour on flagless DSMR 3.0 meters).
"""
import enum
import fnmatch
import logging
import os
import re
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Dict, List, Optional, Tuple, Union
from zoneinfo import ZoneInfo, ZoneInfoNotFoundError
import crcmod.predefined  # type: ignore
import yaml
from .catalog import CATALOG, SMART_METER_MODULE
from .domain import Measurement
from .errors import (
    DataGearError,
    InconsistentDstFlagError,
    MalformedObisLineError,
    NonexistentLocalTimeError,
    TelegramStructureError,
    TimestampError,
)
from .properties import render_value, parse_value

logger = logging.getLogger(__name__)

# CRC-16/ARC: reflected polynomial 0xA001, initial value 0, no final xor
DSMR_CRC16_VARIANT = 'crc16'
DSMR_CRC16 = crcmod.predefined.mkPredefinedCrcFun(DSMR_CRC16_VARIANT)

DEFAULT_OBIS_MAP_PATH = os.path.join(
    os.path.dirname(__file__), 'data', 'obis_map.yaml')

GAS_PROPERTY = 'g_use_cum__m3'
VERSION_PROPERTY = 'dsmr_version__0'
METER_CODE_PROPERTY = 'meter_code_str'

_OBJECT_LINE = re.compile(r'^(\d+-\d+:\d+\.\d+\.\d+)((?:\([^()]*\))+)$')
_CONTINUATION_LINE = re.compile(r'^(?:\([^()]*\))+$')
_VALUE = re.compile(r'\(([^()]*)\)')
_OBIS_REFERENCE = re.compile(r'^\d+-\d+:\d+\.\d+\.\d+$')
_CRC_TRAILER = re.compile(r'^[0-9A-Fa-f]{4}$')
_TIMESTAMP = re.compile(r'^(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})(\d{2})([SW])?$')

ObisValue = Tuple[str, Optional[str]]


@dataclass(frozen=True)
class ObisObject:
    reference: str
    values: Tuple[ObisValue, ...]

    def __post_init__(self) -> None:
        if not _OBIS_REFERENCE.match(self.reference):
            raise TelegramStructureError(
                f'not an OBIS reference: {self.reference!r}')

    def render(self) -> str:
        parts = [
            f'({text}*{unit})' if unit else f'({text})'
            for text, unit in self.values]
        return self.reference + ''.join(parts)


@dataclass(frozen=True)
class P1Telegram:
    header: str
    objects: Tuple[ObisObject, ...]
    crc: Optional[int] = None

    def find(self, reference_pattern: str) -> Optional[ObisObject]:
        for obj in self.objects:
            if fnmatch.fnmatchcase(obj.reference, reference_pattern):
                return obj
        return None


@dataclass(frozen=True)
class DsmrTimestamp:
    year: int
    month: int
    day: int
    hour: int
    minute: int
    second: int
    dst_flag: Optional[str] = None

    @classmethod
    def parse(cls, text: str) -> 'DsmrTimestamp':
        match = _TIMESTAMP.match(text.strip())
        if not match:
            raise TimestampError(f'not a DSMR timestamp: {text!r}')
        fields = [int(g) for g in match.groups()[:6]]
        timestamp = cls(2000 + fields[0], *fields[1:], match.group(7))
        timestamp.local()
        return timestamp

    def local(self) -> datetime:
        try:
            return datetime(
                self.year, self.month, self.day,
                self.hour, self.minute, self.second)
        except ValueError as e:
            raise TimestampError(f'not a calendar time: {e}')

    def render(self) -> str:
        return (
            f'{self.year % 100:02d}{self.month:02d}{self.day:02d}'
            f'{self.hour:02d}{self.minute:02d}{self.second:02d}'
            f'{self.dst_flag or ""}')


@dataclass(frozen=True)
class SmartMeterReading:
    measurements: Tuple[Measurement, ...]
    telegram_time: int

    def get(self, property_name: str) -> Optional[Measurement]:
        for measurement in self.measurements:
            if measurement.property == property_name:
                return measurement
        return None


class CrcStatus(enum.Enum):
    OK = 'ok'
    MISMATCH = 'mismatch'
    ABSENT = 'absent'


@dataclass(frozen=True)
class CrcCheck:
    status: CrcStatus
    expected: Optional[int] = None
    found: Optional[int] = None


class ObisMap:
    def __init__(
            self,
            properties: Dict[str, str],
            timestamp: str = '0-0:1.0.0',
            meter_code: str = 'header') -> None:
        self.properties = dict(properties)
        self.timestamp = timestamp
        self.meter_code = meter_code

    @classmethod
    def load(cls, path: str = DEFAULT_OBIS_MAP_PATH) -> 'ObisMap':
        with open(path, encoding='utf-8') as f:
            data = yaml.safe_load(f)
        return cls(
            data['properties'],
            data.get('timestamp', '0-0:1.0.0'),
            data.get('meter_code', 'header'))

    def property_for(self, reference: str) -> Optional[str]:
        for pattern, name in self.properties.items():
            if fnmatch.fnmatchcase(reference, pattern):
                return name
        return None


_default_obis_map: Optional[ObisMap] = None


def default_obis_map() -> ObisMap:
    global _default_obis_map
    if _default_obis_map is None:
        path = os.environ.get('DATAGEAR_OBIS_MAP', DEFAULT_OBIS_MAP_PATH)
        _default_obis_map = ObisMap.load(path)
    return _default_obis_map


def _split_value(text: str) -> ObisValue:
    value, sep, unit = text.partition('*')
    return (value, unit) if sep else (text, None)


def parse_p1_telegram(text: Union[str, bytes]) -> P1Telegram:
    if isinstance(text, bytes):
        text = text.decode('ascii', errors='replace')
    text = text.lstrip()
    if not text.startswith('/'):
        raise TelegramStructureError('missing start marker "/"')
    lines = [line.rstrip('\r') for line in text.split('\n')]
    end = next(
        (i for i, line in enumerate(lines) if line.startswith('!')), None)
    if end is None or end == 0:
        raise TelegramStructureError('missing end marker "!"')
    trailer = lines[end][1:].strip()
    crc: Optional[int] = None
    if trailer:
        if not _CRC_TRAILER.match(trailer):
            raise TelegramStructureError(
                f'malformed CRC trailer {trailer!r}')
        crc = int(trailer, 16)
    objects: List[ObisObject] = []
    for index in range(1, end):
        line = lines[index].strip()
        if not line:
            continue
        match = _OBJECT_LINE.match(line)
        if match:
            values = tuple(
                _split_value(v) for v in _VALUE.findall(match.group(2)))
            objects.append(ObisObject(match.group(1), values))
        elif objects and _CONTINUATION_LINE.match(line):
            previous = objects[-1]
            extra = tuple(_split_value(v) for v in _VALUE.findall(line))
            objects[-1] = ObisObject(
                previous.reference, previous.values + extra)
        else:
            raise MalformedObisLineError(index + 1, line)
    return P1Telegram(lines[0][1:], tuple(objects), crc)


def verify_telegram_crc(raw: bytes) -> CrcCheck:
    start = max(raw.find(b'/'), 0)
    end = raw.find(b'!', start)
    if end < 0:
        return CrcCheck(CrcStatus.ABSENT)
    trailer = raw[end + 1:].strip()
    if not trailer:
        return CrcCheck(CrcStatus.ABSENT)
    computed = DSMR_CRC16(raw[start:end + 1])
    if not re.match(rb'^[0-9A-Fa-f]{4}$', trailer):
        return CrcCheck(CrcStatus.MISMATCH, computed, None)
    found = int(trailer, 16)
    if found != computed:
        return CrcCheck(CrcStatus.MISMATCH, computed, found)
    return CrcCheck(CrcStatus.OK, computed, found)


def build_telegram(header: str, lines: List[str], with_crc: bool) -> bytes:
    body = '/' + header + '\r\n\r\n' + ''.join(
        line + '\r\n' for line in lines) + '!'
    raw = body.encode('ascii')
    if with_crc:
        raw += f'{DSMR_CRC16(raw):04X}'.encode('ascii')
    return raw + b'\r\n'


def _zone(tz: str) -> ZoneInfo:
    try:
        return ZoneInfo(tz)
    except (ZoneInfoNotFoundError, ValueError) as e:
        raise TimestampError(f'unknown time zone {tz!r}: {e}')


def _candidates(naive: datetime, zone: ZoneInfo) -> List[Tuple[int, bool]]:
    found: Dict[int, bool] = dict()
    for fold in (0, 1):
        instant = naive.replace(tzinfo=zone, fold=fold).astimezone(
            timezone.utc)
        back = instant.astimezone(zone)
        if back.replace(tzinfo=None) == naive:
            found[int(instant.timestamp())] = bool(back.dst())
    return sorted(found.items())


def dsmr_timestamp_to_unix(
        ts: DsmrTimestamp,
        tz: str,
        prev_time: Optional[int] = None) -> int:
    naive = ts.local()
    candidates = _candidates(naive, _zone(tz))
    if not candidates:
        raise NonexistentLocalTimeError(
            f'{naive.isoformat()} does not exist in {tz}')
    if ts.dst_flag is not None:
        summer = ts.dst_flag == 'S'
        for instant, is_summer in candidates:
            if is_summer == summer:
                return instant
        raise InconsistentDstFlagError(
            f'flag {ts.dst_flag} does not fit {naive.isoformat()} in {tz}')
    instants = [instant for instant, _ in candidates]
    if len(instants) == 1 or prev_time is None:
        return instants[0]
    later = [instant for instant in instants if instant > prev_time]
    return later[0] if later else instants[-1]


def unix_to_dsmr_timestamp(
        unix_time: int, tz: str, with_flag: bool = True) -> DsmrTimestamp:
    local = datetime.fromtimestamp(unix_time, _zone(tz))
    flag = ('S' if local.dst() else 'W') if with_flag else None
    return DsmrTimestamp(
        local.year, local.month, local.day,
        local.hour, local.minute, local.second, flag)


def _register_time(ts: DsmrTimestamp, tz: str, not_after: int) -> int:
    """Gas registers lag the telegram; pick the latest fitting instant."""
    if ts.dst_flag is not None:
        return dsmr_timestamp_to_unix(ts, tz)
    naive = ts.local()
    candidates = [i for i, _ in _candidates(naive, _zone(tz))]
    if not candidates:
        raise NonexistentLocalTimeError(
            f'{naive.isoformat()} does not exist in {tz}')
    fitting = [i for i in candidates if i <= not_after]
    return fitting[-1] if fitting else candidates[0]


def _measure(property_name: str, time: int, text: str) -> Measurement:
    descriptor = CATALOG.descriptor_for(SMART_METER_MODULE, property_name)
    value = parse_value(descriptor, text)
    if isinstance(value, (int, float)) and value < 0:
        raise TelegramStructureError(
            f'negative cumulative register {property_name}: {text}')
    return Measurement(property_name, time, render_value(descriptor, value))


def telegram_to_reading(
        t: P1Telegram,
        tz: str,
        prev_time: Optional[int] = None,
        obis_map: Optional[ObisMap] = None) -> SmartMeterReading:
    mapping = obis_map or default_obis_map()
    stamp = t.find(mapping.timestamp)
    if stamp is None or not stamp.values:
        raise TelegramStructureError('telegram carries no timestamp object')
    telegram_time = dsmr_timestamp_to_unix(
        DsmrTimestamp.parse(stamp.values[0][0]), tz, prev_time)
    measurements: List[Measurement] = []
    if mapping.meter_code == 'header' and t.header:
        measurements.append(
            Measurement(METER_CODE_PROPERTY, telegram_time, t.header))
    seen = set()
    for obj in t.objects:
        name = mapping.property_for(obj.reference)
        if name is None or name in seen or not obj.values:
            continue
        try:
            if name == GAS_PROPERTY:
                if len(obj.values) < 2:
                    raise TelegramStructureError('gas register lacks value')
                gas_time = _register_time(
                    DsmrTimestamp.parse(obj.values[0][0]), tz, telegram_time)
                measurement = _measure(name, gas_time, obj.values[-1][0])
            elif name == VERSION_PROPERTY:
                raw = obj.values[0][0].strip()
                if not raw.isdigit():
                    raise TelegramStructureError(f'bad version {raw!r}')
                descriptor = CATALOG.descriptor_for(SMART_METER_MODULE, name)
                measurement = Measurement(
                    name, telegram_time,
                    render_value(descriptor, int(raw) / 10))
            else:
                measurement = _measure(name, telegram_time, obj.values[0][0])
        except DataGearError as e:
            logger.warning(f'Skipping {obj.reference}: {e}')
            continue
        seen.add(name)
        measurements.append(measurement)
    return SmartMeterReading(tuple(measurements), telegram_time)
