"""
Deterministic discrete-event simulation of a campaign. Households are
provisioned through the server API, then every device runs on one
virtual clock: measuring, buffering, uploading, syncing its clock and
choosing between light sleep and power-off between wake-ups.
"""
import csv
import heapq
import io
import itertools
import json
import logging
import random
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from typing import (
    Any,
    Awaitable,
    Callable,
    Dict,
    FrozenSet,
    List,
    Optional,
    Sequence,
    Tuple,
    Type
)
from tabulate import tabulate
from .api import ServerApi
from .catalog import (
    BOILER_SATELLITE_ROWS,
    CATALOG,
    DEFAULT_UPLOAD_INTERVAL,
    ENELOGIC_STUB,
    HEARTBEAT,
    INTEGRATED_BOILER_MONITOR,
    LIVING_ROOM_MODULE,
    OPENTHERM_MONITOR,
    OPENTHERM_ROWS,
    SMART_METER_MODULE,
    WEATHER_ZONE
)
from .common import UploadResult, UploadResultHandler
from .domain import Measurement, Upload
from .environment import (
    BoilerModel,
    MeterSimulator,
    PresenceModel,
    data_ids_due
)
from .errors import ApiError, DataGearError
from .firmware import (
    COREINK,
    DEFAULT_DRIFT_PPM,
    DEFAULT_SYNC_TOLERANCE,
    DeviceClock,
    FirmwareSchedule,
    MeasurementBuffer,
    OccupancyRegistry,
    PowerMeter,
    PowerMode,
    PowerProfile,
    QrPayload,
    SatelliteLink,
    buffer_capacity,
    make_qr_payload,
    occupancy_scan,
    relay_satellite,
    sync_clock
)
from .geo import assign_weather_zone
from .opentherm import FrameSampler, decode_opentherm_frame
from .p1 import (
    CrcStatus,
    ObisObject,
    P1Telegram,
    default_obis_map,
    parse_p1_telegram,
    telegram_to_reading,
    unix_to_dsmr_timestamp,
    verify_telegram_crc
)
from .properties import PropertyDescriptor, render_value
from .scenario import (
    CampaignSpec,
    DeviceSpec,
    HouseholdSpec,
    Outage,
    Scenario,
    relay_kind
)
from .signals import Signal, signal_from_config

logger = logging.getLogger(__name__)

PRIORITY_SYNC = 0
PRIORITY_MEASURE = 1
PRIORITY_UPLOAD = 2
PRIORITY_POLL = 3
UPLOAD_PHASE = 30
EXCHANGE_PHASE = 5
EXCHANGE_SLOT = 10

FRAME_PROPERTIES = frozenset(row[0] for row in OPENTHERM_ROWS)
PIPE_PROPERTIES = tuple(row[0] for row in BOILER_SATELLITE_ROWS)
OCCUPANCY_PROPERTIES = ('onboarded__p', 'occupancy__p')

_CO2 = {'diurnal': dict(
    base=650.0, amplitude=250.0, peak_hour=21.0, noise=25.0, low=400.0)}
_ROOM = {'diurnal': dict(
    base=19.5, amplitude=1.5, peak_hour=19.0, noise=0.1)}
_HUMIDITY = {'diurnal': dict(
    base=55.0, amplitude=6.0, peak_hour=7.0, noise=1.0, low=0.0,
    high=100.0)}
DEFAULT_SIGNALS: Dict[str, Dict[str, Any]] = {
    'co2__ppm': _CO2,
    'temp_indoor__degC': _ROOM,
    'rel_humidity__0': _HUMIDITY,
    'CO2concentration': _CO2,
    'roomTempCO2': _ROOM,
    'humidity': _HUMIDITY,
    'roomTemp': _ROOM,
}

Action = Callable[[int], Awaitable[None]]
AccountHook = Callable[[str, str], None]


class VirtualClock:
    """Simulation time; also serves as the in-process server's clock."""

    def __init__(self, now: int = 0) -> None:
        self.now = now

    def advance_to(self, t: int) -> None:
        if t < self.now:
            raise ValueError(f'time cannot go back from {self.now} to {t}')
        self.now = t

    def __call__(self) -> int:
        return self.now


class EventQueue:
    """Time-ordered event list; equal times run by priority, then FIFO."""

    def __init__(self, clock: VirtualClock) -> None:
        self.clock = clock
        self._heap: List[Tuple[int, int, int, Action]] = []
        self._counter = itertools.count()

    def schedule(self, when: int, priority: int, action: Action) -> None:
        heapq.heappush(
            self._heap, (when, priority, next(self._counter), action))

    def every(
            self,
            first: int,
            interval: int,
            until: int,
            priority: int,
            action: Action) -> None:
        async def tick(t: int) -> None:
            await action(t)
            if t + interval < until:
                self.schedule(t + interval, priority, tick)
        if first < until:
            self.schedule(first, priority, tick)

    async def run(self) -> None:
        while self._heap:
            when, _, _, action = heapq.heappop(self._heap)
            self.clock.advance_to(when)
            await action(when)

    def __len__(self) -> int:
        return len(self._heap)


@dataclass
class DeviceReport:
    household: str
    kind: str
    device_name: str
    generated: int = 0
    stored: int = 0
    duplicates: int = 0
    dropped: int = 0
    pending: int = 0
    uploads: int = 0
    skipped_uploads: int = 0
    boots: int = 0
    energy_j: float = 0.0
    overdue_episodes: int = 0

    @property
    def conserved(self) -> bool:
        return self.generated == \
            self.stored + self.duplicates + self.dropped + self.pending


REPORT_HEADER = [
    'household', 'kind', 'device_name', 'generated', 'stored',
    'duplicates', 'dropped', 'pending', 'uploads', 'skipped_uploads',
    'boots', 'energy_j', 'overdue_episodes']


@dataclass
class CampaignReport:
    seed: int
    start: int
    horizon: int
    devices: List[DeviceReport] = field(default_factory=list)
    errors: List[Tuple[str, str]] = field(default_factory=list)
    final_overdue: Optional[int] = None
    events: List[str] = field(default_factory=list)

    @property
    def conserved(self) -> bool:
        return all(d.conserved for d in self.devices)

    def rows(self) -> List[List[Any]]:
        rows: List[List[Any]] = []
        for device in self.devices:
            row = asdict(device)
            row['energy_j'] = round(device.energy_j, 3)
            rows.append([row[name] for name in REPORT_HEADER])
        return rows

    def to_table(self) -> str:
        text = tabulate(self.rows(), headers=REPORT_HEADER)
        lines = [text]
        for household, message in self.errors:
            lines.append(f'aborted {household}: {message}')
        if self.final_overdue is not None:
            lines.append(f'overdue at end: {self.final_overdue}')
        return '\n'.join(lines) + '\n'

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(REPORT_HEADER)
        writer.writerows(self.rows())
        return out.getvalue()

    def to_json(self) -> str:
        return json.dumps({
            'seed': self.seed,
            'start': self.start,
            'horizon': self.horizon,
            'devices': [dict(zip(REPORT_HEADER, row)) for row in self.rows()],
            'errors': [
                {'household': h, 'message': m} for h, m in self.errors],
            'final_overdue': self.final_overdue,
            'conserved': self.conserved,
        }, indent=2, sort_keys=True) + '\n'


class SimDevice:
    """Firmware common to every device kind."""

    def __init__(
            self,
            household: 'HouseholdRun',
            spec: DeviceSpec,
            index: int) -> None:
        scenario = household.scenario
        self.household = household
        self.spec = spec
        self.kind = spec.kind
        self.source_type = CATALOG.lookup(spec.kind)
        key = f'{scenario.seed}:{household.spec.pseudonym}:{spec.kind}:{index}'
        self.rng = random.Random(key)
        self.clock_rng = random.Random(f'{key}:clock')
        self.qr: QrPayload = make_qr_payload(
            spec.kind, self.rng.getrandbits(48), self.rng)
        self.name = self.qr.name
        self.schedule = FirmwareSchedule.for_type(
            self.source_type, household.spec.upload_interval)
        self.clock = DeviceClock(scenario.start, household.spec.drift_ppm)
        self.power = PowerMeter(scenario.power)
        self.report = DeviceReport(
            household.spec.pseudonym, spec.kind, self.name)
        self.session: Optional[str] = None
        self.buffer: Optional[MeasurementBuffer] = None
        self.link: Optional[SatelliteLink] = None
        self.relay: Optional['SimDevice'] = None
        self.links: List[SatelliteLink] = []
        self.heartbeat = 0
        self.sync_pending = False
        self.silent = spec.kind in household.spec.silent
        self._last_time: Dict[str, int] = dict()

    @property
    def satellite(self) -> bool:
        return self.source_type.relayed

    @property
    def tz(self) -> str:
        return self.household.scenario.timezone

    def attach(self, relay: 'SimDevice') -> None:
        assert relay.buffer is not None
        self.relay = relay
        self.clock = relay.clock
        self.link = SatelliteLink(self.name, relay.name, relay.buffer)
        relay.links.append(self.link)

    def wake(self, t: int) -> None:
        if self.power.wake(t) is PowerMode.OFF and self.buffer is not None:
            self.reboot()

    def reboot(self) -> None:
        """The buffer lives in flash; a cold boot reloads it."""
        assert self.buffer is not None
        self.buffer = MeasurementBuffer.restore(
            self.buffer.capacity, self.buffer.persist(), self.buffer.dropped)
        for link in self.links:
            link.buffer = self.buffer

    def record(self, measurement: Measurement) -> None:
        # a register read twice at the same capture time is one measurement
        if self._last_time.get(measurement.property) == measurement.time:
            return
        self._last_time[measurement.property] = measurement.time
        self.report.generated += 1
        if self.link is not None:
            relay_satellite(self.link, measurement)
        elif self.buffer is not None:
            self.buffer.push(self.name, measurement)

    def start(self, queue: EventQueue) -> None:
        scenario = self.household.scenario
        begin, end = scenario.start, scenario.end
        if self.satellite:
            if self.link is None:
                self.household.log(
                    begin, f'{self.name} has no relay; nothing is delivered')
                return
        else:
            queue.every(begin, self.schedule.ntp_sync_interval, end,
                        PRIORITY_SYNC, self.sync)
            queue.every(
                begin + self.schedule.upload_interval + UPLOAD_PHASE,
                self.schedule.upload_interval, end, PRIORITY_UPLOAD,
                self.upload)
        if self.source_type.descriptor(HEARTBEAT) is not None:
            queue.every(begin, self.schedule.heartbeat_interval, end,
                        PRIORITY_MEASURE, self.beat)
        self.start_measuring(queue)

    def start_measuring(self, queue: EventQueue) -> None:
        pass

    async def sync(self, t: int) -> None:
        if self.household.aborted:
            return
        self.wake(t)
        if not self.household.online(t):
            self.sync_pending = True
            self.household.log(t, f'{self.name} clock sync skipped')
            return
        sync_clock(self.clock, t, self.clock_rng,
                   self.household.spec.sync_tolerance)
        self.sync_pending = False

    async def beat(self, t: int) -> None:
        if self.household.aborted:
            return
        self.wake(t)
        self.heartbeat += 1
        descriptor = self.source_type.descriptor(HEARTBEAT)
        assert descriptor is not None
        self.record(Measurement(
            HEARTBEAT, self.clock.now(t),
            render_value(descriptor, self.heartbeat)))

    async def upload(self, t: int) -> None:
        household = self.household
        if household.aborted or self.buffer is None:
            return
        self.wake(t)
        if self.silent:
            return
        if not household.online(t):
            self.report.skipped_uploads += 1
            household.log(t, f'{self.name} offline, upload skipped')
            return
        if self.sync_pending:
            await self.sync(t)
        entries = self.buffer.drain()
        if not entries:
            return
        now = self.clock.now(t)
        groups: Dict[str, List[Measurement]] = OrderedDict()
        for source, measurement in entries:
            groups.setdefault(source, []).append(measurement)
        delivered = set()
        for source, measurements in groups.items():
            owner = household.devices_by_name[source]
            result = UploadResult(
                household.spec.pseudonym, source, now, len(measurements))
            try:
                ingest = await household.api.upload(
                    self.session or '',
                    Upload(None, now, tuple(measurements)),
                    None if source == self.name else source)
            except ApiError as e:
                result.error = e
                household.handler.handle_result(result)
                self.buffer.requeue(
                    entry for entry in entries if entry[0] not in delivered)
                household.abort(t, f'upload for {source} rejected: {e}')
                return
            delivered.add(source)
            result.stored = ingest.stored
            result.duplicates = ingest.duplicates
            owner.report.stored += ingest.stored
            owner.report.duplicates += ingest.duplicates
            owner.report.uploads += 1
            household.handler.handle_result(result)
            household.log(
                t, f'{source} upload size={len(measurements)}'
                f' stored={ingest.stored} duplicates={ingest.duplicates}')

    def finish(self) -> None:
        report = self.report
        buffer = self.link.buffer if self.link else self.buffer
        if buffer is not None:
            report.dropped = buffer.dropped.get(self.name, 0)
            report.pending = buffer.pending(self.name)
        report.boots = self.power.boots
        report.energy_j = self.power.energy


class SensorDevice(SimDevice):
    """Samples its own sensors on the catalog intervals."""

    frame_properties: FrozenSet[str] = frozenset()

    def __init__(
            self,
            household: 'HouseholdRun',
            spec: DeviceSpec,
            index: int) -> None:
        super().__init__(household, spec, index)
        self.sensed: List[PropertyDescriptor] = [
            p for p in self.source_type.properties
            if p.name != HEARTBEAT and p.name not in self.frame_properties]
        self.signals: Dict[str, Signal] = dict()
        scenario = household.scenario
        for descriptor in self.sensed:
            config = spec.signals.get(descriptor.name) or \
                DEFAULT_SIGNALS.get(descriptor.name)
            if config is not None:
                self.signals[descriptor.name] = signal_from_config(
                    config, scenario.timezone, scenario.base_dir)

    def start_measuring(self, queue: EventQueue) -> None:
        if not self.sensed:
            return
        scenario = self.household.scenario
        interval = min(p.default_interval for p in self.sensed)
        queue.every(scenario.start, interval, scenario.end,
                    PRIORITY_MEASURE, self.measure)

    def sample_values(
            self,
            t: int,
            due: Sequence[PropertyDescriptor]) -> Dict[str, float]:
        names = [d.name for d in due]
        values: Dict[str, float] = dict()
        if any(name in PIPE_PROPERTIES for name in names):
            pipes = self.household.boiler.pipe_temperatures(t)
            values.update(zip(PIPE_PROPERTIES, pipes))
        for name in names:
            if name in self.signals:
                values[name] = self.signals[name].sample(t, self.rng)
        return values

    async def measure(self, t: int) -> None:
        if self.household.aborted:
            return
        self.wake(t)
        if self.relay is not None:
            self.relay.wake(t)
        offset = t - self.household.scenario.start
        due = [p for p in self.sensed if offset % p.default_interval == 0]
        values = self.sample_values(t, due)
        now = self.clock.now(t)
        for descriptor in due:
            if descriptor.name not in values:
                continue
            value = values[descriptor.name]
            if not descriptor.value_format.endswith('f'):
                value = round(value)
            self.record(Measurement(
                descriptor.name, now, render_value(descriptor, value)))


class LivingRoomDevice(SensorDevice):
    def __init__(
            self,
            household: 'HouseholdRun',
            spec: DeviceSpec,
            index: int) -> None:
        super().__init__(household, spec, index)
        phones = [self.rng.getrandbits(48)
                  for _ in range(household.spec.residents)]
        self.registry = OccupancyRegistry(set(phones))
        self.presence = PresenceModel(phones, self.tz, self.rng)

    def sample_values(
            self,
            t: int,
            due: Sequence[PropertyDescriptor]) -> Dict[str, float]:
        values = super().sample_values(t, due)
        if any(d.name in OCCUPANCY_PROPERTIES for d in due):
            present: FrozenSet[int] = self.presence.present(t)
            onboarded, occupancy = occupancy_scan(self.registry, present)
            values['onboarded__p'] = onboarded
            values['occupancy__p'] = occupancy
        return values


class SmartMeterDevice(SimDevice):
    """Reads the P1 port every measurement interval."""

    def __init__(
            self,
            household: 'HouseholdRun',
            spec: DeviceSpec,
            index: int) -> None:
        super().__init__(household, spec, index)
        self.meter = MeterSimulator(
            household.spec.dsmr_version,
            self.tz,
            random.Random(f'{household.scenario.seed}:'
                          f'{household.spec.pseudonym}:meter:{index}'),
            f'{self.rng.getrandbits(64):016X}')
        self.previous: Optional[int] = None
        self.rejected = 0

    def start_measuring(self, queue: EventQueue) -> None:
        scenario = self.household.scenario
        queue.every(scenario.start, self.schedule.fastest, scenario.end,
                    PRIORITY_MEASURE, self.read_meter)

    def stamped(self, telegram: P1Telegram, t: int) -> P1Telegram:
        """Meters before DSMR 4 send no time; the reader adds its own."""
        reference = default_obis_map().timestamp
        if telegram.find(reference) is not None:
            return telegram
        stamp = unix_to_dsmr_timestamp(
            self.clock.now(t), self.tz, with_flag=False).render()
        return P1Telegram(
            telegram.header,
            (ObisObject(reference, ((stamp, None),)),) + telegram.objects,
            telegram.crc)

    async def read_meter(self, t: int) -> None:
        if self.household.aborted:
            return
        self.wake(t)
        raw = self.meter.telegram(t)
        try:
            if verify_telegram_crc(raw).status is CrcStatus.MISMATCH:
                raise DataGearError('CRC mismatch')
            telegram = self.stamped(parse_p1_telegram(raw), t)
            reading = telegram_to_reading(telegram, self.tz, self.previous)
        except DataGearError as e:
            self.rejected += 1
            logger.warning(f'{self.name}: telegram rejected: {e}')
            return
        self.previous = reading.telegram_time
        for measurement in reading.measurements:
            self.record(measurement)


class OpenThermDevice(SensorDevice):
    """Listens in on the thermostat-boiler line and samples reply frames."""

    frame_properties = FRAME_PROPERTIES

    def __init__(
            self,
            household: 'HouseholdRun',
            spec: DeviceSpec,
            index: int) -> None:
        super().__init__(household, spec, index)
        self.sampler = FrameSampler(spec.kind)

    def start_measuring(self, queue: EventQueue) -> None:
        super().start_measuring(queue)
        scenario = self.household.scenario
        queue.every(scenario.start + EXCHANGE_PHASE, EXCHANGE_SLOT,
                    scenario.end, PRIORITY_MEASURE, self.exchange)

    async def exchange(self, t: int) -> None:
        if self.household.aborted:
            return
        self.wake(t)
        offset = t - self.household.scenario.start - EXCHANGE_PHASE
        now = self.clock.now(t)
        for data_id in data_ids_due(offset):
            for word in self.household.boiler.exchange(t, data_id):
                for measurement in self.sampler.add(
                        now, decode_opentherm_frame(word)):
                    self.record(measurement)


DEVICE_CLASSES: Dict[str, Type[SimDevice]] = {
    LIVING_ROOM_MODULE: LivingRoomDevice,
    SMART_METER_MODULE: SmartMeterDevice,
    OPENTHERM_MONITOR: OpenThermDevice,
    INTEGRATED_BOILER_MONITOR: OpenThermDevice,
}


def make_device(
        household: 'HouseholdRun',
        spec: DeviceSpec,
        index: int) -> SimDevice:
    return DEVICE_CLASSES.get(spec.kind, SensorDevice)(household, spec, index)


def random_outage_windows(
        spec: HouseholdSpec,
        scenario: Scenario) -> List[Outage]:
    """Outages that end at least one upload interval before the horizon."""
    if spec.random_outages is None:
        return []
    rng = random.Random(f'{scenario.seed}:{spec.pseudonym}:outages')
    margin = (spec.upload_interval or DEFAULT_UPLOAD_INTERVAL) + UPLOAD_PHASE
    latest_end = scenario.end - margin
    windows: List[Outage] = []
    for _ in range(spec.random_outages.count):
        duration = rng.randint(
            spec.random_outages.min_duration,
            spec.random_outages.max_duration)
        if latest_end - duration <= scenario.start:
            continue
        begin = rng.randint(scenario.start, latest_end - duration)
        windows.append(Outage(begin, begin + duration))
    return windows


class HouseholdRun:
    def __init__(self, simulation: 'Simulation', spec: HouseholdSpec) -> None:
        scenario = simulation.scenario
        self.simulation = simulation
        self.scenario = scenario
        self.spec = spec
        self.api = simulation.api
        self.handler = simulation.handler
        self.outages = list(spec.outages) + \
            random_outage_windows(spec, scenario)
        self.boiler = BoilerModel(
            scenario.timezone,
            random.Random(f'{scenario.seed}:{spec.pseudonym}:boiler'))
        self.aborted = False
        self.error: Optional[str] = None
        self.account_id: Optional[str] = None
        self.session: Optional[str] = None
        self.devices: List[SimDevice] = []
        seen: Dict[str, int] = dict()
        for device_spec in spec.devices:
            index = seen.get(device_spec.kind, 0)
            seen[device_spec.kind] = index + 1
            self.devices.append(make_device(self, device_spec, index))
        self.devices_by_name = {d.name: d for d in self.devices}
        self._wire()

    def _wire(self) -> None:
        relays = [d for d in self.devices if not d.satellite]
        satellites = [d for d in self.devices if d.satellite]
        for relay in relays:
            served = [
                s.source_type for s in satellites
                if relay_kind(self.spec, s.spec) == relay.kind]
            relay.buffer = MeasurementBuffer(
                self.spec.buffer_capacity
                or buffer_capacity([relay.source_type] + served))
        for satellite in satellites:
            kind = relay_kind(self.spec, satellite.spec)
            relay = next((d for d in relays if d.kind == kind), None)
            if relay is not None:
                satellite.attach(relay)

    def online(self, t: int) -> bool:
        return not any(outage.covers(t) for outage in self.outages)

    def log(self, t: int, text: str) -> None:
        self.simulation.log(t, f'{self.spec.pseudonym} {text}')

    def abort(self, t: int, message: str) -> None:
        self.aborted = True
        self.error = message
        for device in self.devices:
            if device.link is not None:
                device.link.active = False
        logger.error(f'Household {self.spec.pseudonym} aborted: {message}')
        self.log(t, f'aborted: {message}')

    async def provision(self, campaign_id: int) -> None:
        scenario = self.scenario
        api = self.api
        token = await api.create_account(campaign_id)
        self.account_id = token.account_id
        self.session, _ = await api.activate_account(token.token)
        self.simulation.account_created(self.spec.pseudonym, token.account_id)
        sources = scenario.campaign.data_sources
        if WEATHER_ZONE in sources and self.spec.home is not None:
            lat, lon = self.spec.home
            zone = assign_weather_zone(
                lat, lon, scenario.weather_zone_sigma_m, scenario.timezone,
                random.Random(f'{scenario.seed}:{self.spec.pseudonym}:geo'))
            await api.energy_query(
                self.session, WEATHER_ZONE, zone.to_payload())
        if ENELOGIC_STUB in sources:
            await api.activate_cloud_feed(self.session, ENELOGIC_STUB)
        for device in self.devices:
            await api.register_device(device.name, device.kind, device.qr.pop)
            device.session = await api.activate_device(
                self.session, device.name, device.qr.pop,
                device.schedule.upload_interval)
        self.log(scenario.start, f'provisioned {len(self.devices)} devices')

    def start(self, queue: EventQueue) -> None:
        for device in self.devices:
            device.start(queue)

    async def final_drain(self, t: int) -> None:
        for device in self.devices:
            if not device.satellite:
                await device.upload(t)


class Simulation:
    def __init__(
            self,
            scenario: Scenario,
            api: ServerApi,
            clock: Optional[VirtualClock] = None,
            handler: Optional[UploadResultHandler] = None,
            on_account: Optional[AccountHook] = None) -> None:
        self.scenario = scenario
        self.api = api
        self.clock = clock or VirtualClock(scenario.start)
        self.handler = handler or UploadResultHandler()
        self.on_account = on_account
        self.queue = EventQueue(self.clock)
        self.events: List[str] = []
        self.campaign_id: Optional[int] = None
        self.households = [HouseholdRun(self, h) for h in scenario.households]
        self._by_account: Dict[str, HouseholdRun] = dict()
        self._overdue: Dict[Tuple[str, str], bool] = dict()
        self.final_overdue: Optional[int] = None

    def log(self, t: int, text: str) -> None:
        self.events.append(f'{t - self.scenario.start} {text}')

    def account_created(self, pseudonym: str, account_id: str) -> None:
        household = next(
            h for h in self.households if h.spec.pseudonym == pseudonym)
        self._by_account[account_id] = household
        if self.on_account is not None:
            self.on_account(pseudonym, account_id)

    async def _campaign(self, spec: CampaignSpec) -> int:
        apps = await self.api.list_apps()
        app = next((a for a in apps if a.name == spec.app), None)
        if app is None:
            app = await self.api.create_app(spec.app)
        campaign = await self.api.create_campaign(
            app.app_id, spec.name, spec.data_sources)
        logger.info(f'Simulating campaign {spec.name!r}')
        return campaign.campaign_id

    async def poll(self, t: int) -> None:
        assert self.campaign_id is not None
        try:
            fleet = await self.api.fleet_status(self.campaign_id, at=t)
        except ApiError as e:
            logger.error(f'Fleet status failed: {e}')
            self.log(t, f'fleet status failed: {e.code}')
            return
        for account in fleet.accounts:
            household = self._by_account.get(account.account_id)
            if household is None:
                continue
            for source in account.sources:
                label = source.device_name or source.type_name
                key = (household.spec.pseudonym, label)
                if source.overdue and not self._overdue.get(key, False):
                    device = household.devices_by_name.get(label)
                    if device is not None:
                        device.report.overdue_episodes += 1
                    household.log(t, f'{label} overdue')
                self._overdue[key] = source.overdue
        if t >= self.scenario.end:
            self.final_overdue = sum(
                1 for account in fleet.accounts
                if account.account_id in self._by_account
                for source in account.sources if source.overdue)

    async def _finish(self, t: int) -> None:
        for household in self.households:
            if not household.aborted:
                await household.final_drain(t)
        await self.poll(t)

    async def run(self) -> CampaignReport:
        scenario = self.scenario
        self.clock.advance_to(scenario.start)
        self.campaign_id = await self._campaign(scenario.campaign)
        for household in self.households:
            try:
                await household.provision(self.campaign_id)
            except (ApiError, DataGearError) as e:
                household.abort(scenario.start, f'provisioning failed: {e}')
                continue
            household.start(self.queue)
        self.queue.every(
            scenario.start + scenario.poll_interval, scenario.poll_interval,
            scenario.end, PRIORITY_POLL, self.poll)
        self.queue.schedule(scenario.end, PRIORITY_POLL, self._finish)
        await self.queue.run()
        return self.report()

    def report(self) -> CampaignReport:
        report = CampaignReport(
            self.scenario.seed, self.scenario.start, self.scenario.horizon)
        for household in self.households:
            for device in household.devices:
                device.finish()
                report.devices.append(device.report)
            if household.error:
                report.errors.append((household.spec.pseudonym,
                                      household.error))
        report.final_overdue = self.final_overdue
        report.events = self.events
        return report


async def run_campaign(
        scenario: Scenario,
        api: ServerApi,
        clock: Optional[VirtualClock] = None,
        handler: Optional[UploadResultHandler] = None,
        on_account: Optional[AccountHook] = None) -> CampaignReport:
    return await Simulation(scenario, api, clock, handler, on_account).run()


async def run_device(
        api: ServerApi,
        kind: str,
        start: int,
        horizon: int,
        outages: Sequence[Tuple[int, int]] = (),
        seed: int = 1,
        timezone: str = 'Europe/Amsterdam',
        dsmr_version: str = '5.0',
        drift_ppm: float = DEFAULT_DRIFT_PPM,
        sync_tolerance: float = DEFAULT_SYNC_TOLERANCE,
        power: PowerProfile = COREINK,
        clock: Optional[VirtualClock] = None,
        handler: Optional[UploadResultHandler] = None) -> CampaignReport:
    """One household holding a single device; outages are (start, end)."""
    household = HouseholdSpec(
        pseudonym='hh-001',
        devices=(DeviceSpec(kind),),
        dsmr_version=dsmr_version,
        outages=tuple(Outage(begin, end) for begin, end in outages),
        drift_ppm=drift_ppm,
        sync_tolerance=sync_tolerance)
    scenario = Scenario(
        seed=seed,
        start=start,
        horizon=horizon,
        timezone=timezone,
        campaign=CampaignSpec('datagear-sim', f'{kind} run', (kind,)),
        households=(household,),
        power=power)
    return await run_campaign(scenario, api, clock, handler)
