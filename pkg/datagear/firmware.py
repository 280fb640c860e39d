"""
Behaviour shared by every simulated measurement device: provisioning
identity, power strategy, clock drift and sync, persistent buffering,
occupancy counting and the satellite-to-relay link.
"""
import enum
import hashlib
import logging
import math
import random
from collections import Counter, deque
from dataclasses import dataclass, field
from typing import (
    Deque,
    Dict,
    FrozenSet,
    Iterable,
    List,
    Optional,
    Set,
    Tuple
)
from .domain import DataSourceType, Measurement
from .errors import ValidationError

logger = logging.getLogger(__name__)

HARDWARE_ADDRESS_BITS = 48
NAME_HASH_CHARS = 12
POP_BITS = 128
DEFAULT_DRIFT_PPM = 20.0
DEFAULT_SYNC_TOLERANCE = 1.0
DEFAULT_HEARTBEAT_INTERVAL = 600
DEFAULT_NTP_SYNC_INTERVAL = 86400
SECONDS_PER_DAY = 86400


@dataclass(frozen=True)
class PowerProfile:
    boot_energy: float
    sleep_power: float
    off_power: float

    def __post_init__(self) -> None:
        for name in ('boot_energy', 'sleep_power', 'off_power'):
            value = getattr(self, name)
            if not value >= 0 or not math.isfinite(value):
                raise ValidationError(f'{name} must be a finite value >= 0')

    @property
    def threshold(self) -> float:
        """Gap length above which switching off costs less than sleeping."""
        saving = self.sleep_power - self.off_power
        if saving <= 0:
            return math.inf
        return self.boot_energy / saving


# M5Stack CoreInk-like: 2.3 uA off-state current at 3.3 V
COREINK_OFF_CURRENT = 2.3e-6
COREINK_VOLTAGE = 3.3
COREINK = PowerProfile(
    boot_energy=0.15,
    sleep_power=0.002,
    off_power=COREINK_OFF_CURRENT * COREINK_VOLTAGE)


class PowerMode(enum.Enum):
    SLEEP = 'sleep'
    OFF = 'off'


def choose_power_strategy(gap: float, profile: PowerProfile) -> PowerMode:
    if not gap > 0:
        raise ValidationError(f'gap must be positive: {gap}')
    return PowerMode.OFF if gap > profile.threshold else PowerMode.SLEEP


def gap_energy(gap: float, mode: PowerMode, profile: PowerProfile) -> float:
    if mode is PowerMode.OFF:
        return profile.boot_energy + gap * profile.off_power
    return gap * profile.sleep_power


class PowerMeter:
    """Energy spent between wake-ups, with the cheaper mode per gap."""

    def __init__(self, profile: PowerProfile) -> None:
        self.profile = profile
        self.energy = 0.0
        self.boots = 0
        self.last_wake: Optional[int] = None

    def wake(self, now: int) -> Optional[PowerMode]:
        last, self.last_wake = self.last_wake, now
        if last is None or now <= last:
            return None
        gap = now - last
        mode = choose_power_strategy(gap, self.profile)
        self.energy += gap_energy(gap, mode, self.profile)
        if mode is PowerMode.OFF:
            self.boots += 1
        return mode


@dataclass(frozen=True)
class FirmwareSchedule:
    measurement_intervals: Dict[str, int]
    upload_interval: int
    heartbeat_interval: int = DEFAULT_HEARTBEAT_INTERVAL
    ntp_sync_interval: int = DEFAULT_NTP_SYNC_INTERVAL

    def __post_init__(self) -> None:
        if self.upload_interval <= 0:
            raise ValidationError('upload interval must be positive')
        if any(i <= 0 for i in self.measurement_intervals.values()):
            raise ValidationError('measurement intervals must be positive')
        if self.upload_interval % self.fastest:
            raise ValidationError(
                f'upload interval {self.upload_interval} is not a multiple'
                f' of the measurement interval {self.fastest}')
        if self.heartbeat_interval <= 0 or self.ntp_sync_interval <= 0:
            raise ValidationError(
                'heartbeat and sync intervals must be positive')

    @property
    def fastest(self) -> int:
        if not self.measurement_intervals:
            return self.upload_interval
        return min(self.measurement_intervals.values())

    @classmethod
    def for_type(
            cls,
            source_type: DataSourceType,
            upload_interval: Optional[int] = None,
            heartbeat_interval: int = DEFAULT_HEARTBEAT_INTERVAL,
            ntp_sync_interval: int = DEFAULT_NTP_SYNC_INTERVAL
            ) -> 'FirmwareSchedule':
        return cls(
            {p.name: p.default_interval for p in source_type.properties},
            upload_interval or source_type.upload_interval or 600,
            heartbeat_interval,
            ntp_sync_interval)


class DeviceClock:
    """Device time = true time + offset; the offset drifts between syncs."""

    def __init__(
            self,
            true_time: int,
            drift_ppm: float = DEFAULT_DRIFT_PPM,
            device_offset: float = 0.0) -> None:
        self.true_time = true_time
        self.drift_ppm = drift_ppm
        self.device_offset = device_offset

    def advance(self, true_now: int) -> None:
        elapsed = true_now - self.true_time
        if elapsed > 0:
            self.device_offset += self.drift_ppm * 1e-6 * elapsed
            self.true_time = true_now

    def now(self, true_now: int) -> int:
        self.advance(true_now)
        return int(math.floor(true_now + self.device_offset))


def sync_clock(
        clock: DeviceClock,
        true_now: int,
        rng: random.Random,
        tolerance: float = DEFAULT_SYNC_TOLERANCE) -> DeviceClock:
    clock.advance(true_now)
    clock.device_offset = rng.uniform(-tolerance, tolerance) \
        if tolerance > 0 else 0.0
    return clock


BufferEntry = Tuple[str, Measurement]


class MeasurementBuffer:
    """
    Bounded store-and-forward queue of (source device name, measurement).
    When full the oldest entry is dropped and counted against its source.
    """

    def __init__(self, capacity: int) -> None:
        if capacity <= 0:
            raise ValidationError('buffer capacity must be positive')
        self.capacity = capacity
        self.entries: Deque[BufferEntry] = deque()
        self.dropped: Dict[str, int] = Counter()

    def push(self, source: str, measurement: Measurement
             ) -> Optional[BufferEntry]:
        evicted: Optional[BufferEntry] = None
        if len(self.entries) >= self.capacity:
            evicted = self.entries.popleft()
            self.dropped[evicted[0]] += 1
            logger.warning(
                f'Buffer full ({self.capacity}), dropped {evicted[1].property}'
                f' of {evicted[0]}')
        self.entries.append((source, measurement))
        return evicted

    def drain(self) -> List[BufferEntry]:
        entries = list(self.entries)
        self.entries.clear()
        return entries

    def requeue(self, entries: Iterable[BufferEntry]) -> None:
        """Put undelivered entries back in front, in their original order."""
        self.entries.extendleft(reversed(list(entries)))

    def pending(self, source: str) -> int:
        return sum(1 for name, _ in self.entries if name == source)

    def persist(self) -> List[Tuple[str, str, int, str]]:
        return [(s, m.property, m.time, m.value) for s, m in self.entries]

    @classmethod
    def restore(
            cls,
            capacity: int,
            rows: Iterable[Tuple[str, str, int, str]],
            dropped: Optional[Dict[str, int]] = None) -> 'MeasurementBuffer':
        buffer = cls(capacity)
        for source, name, when, value in rows:
            buffer.entries.append((source, Measurement(name, when, value)))
        buffer.dropped = Counter(dropped or dict())
        return buffer

    def __len__(self) -> int:
        return len(self.entries)


def daily_entries(source_types: Iterable[DataSourceType]) -> int:
    return sum(
        SECONDS_PER_DAY // p.default_interval
        for source_type in source_types
        for p in source_type.properties)


def buffer_capacity(source_types: Iterable[DataSourceType]) -> int:
    """Two days of everything the device and its satellites generate."""
    return max(1, 2 * daily_entries(source_types))


@dataclass(frozen=True)
class QrPayload:
    name: str
    pop: str


def make_qr_payload(
        device_type_name: str,
        hardware_address: int,
        rng: random.Random) -> QrPayload:
    if not 0 <= hardware_address < 1 << HARDWARE_ADDRESS_BITS:
        raise ValidationError(
            f'hardware address out of range: {hardware_address}')
    digest = hashlib.sha256(
        f'{device_type_name}:{hardware_address:012x}'.encode('ascii'))
    name = f'{device_type_name}-{digest.hexdigest()[:NAME_HASH_CHARS]}'
    return QrPayload(name, f'{rng.getrandbits(POP_BITS):032x}')


@dataclass
class OccupancyRegistry:
    registered_ids: Set[int] = field(default_factory=set)

    def register(self, address: int) -> None:
        self.registered_ids.add(address)


def occupancy_scan(
        registry: OccupancyRegistry,
        present_ids: FrozenSet[int]) -> Tuple[int, int]:
    """Returns (onboarded, present) counting registered phones only."""
    registered = registry.registered_ids
    return len(registered), len(registered & set(present_ids))


@dataclass
class SatelliteLink:
    satellite: str
    relay: str
    buffer: MeasurementBuffer
    active: bool = True


def relay_satellite(
        link: SatelliteLink,
        measurement: Measurement) -> Optional[BufferEntry]:
    if not link.active:
        raise ValidationError(f'relay {link.relay} is not activated')
    return link.buffer.push(link.satellite, measurement)
