"""
The simulated surroundings of a household's devices: a smart meter
writing P1 telegrams, a thermostat-boiler pair exchanging OpenTherm
frames, and residents' phones coming and going.
"""
import logging
import random
from dataclasses import dataclass
from datetime import datetime
from typing import Dict, FrozenSet, List, Optional, Tuple
from zoneinfo import ZoneInfo
from .opentherm import (
    DataId,
    MsgType,
    STATUS_CH_ACTIVE,
    STATUS_DHW_ACTIVE,
    STATUS_FLAME_ON,
    encode_f88,
    encode_opentherm_frame,
    make_opentherm_frame
)
from .p1 import build_telegram, unix_to_dsmr_timestamp
from .signals import CumulativeRegister, DiurnalSignal

logger = logging.getLogger(__name__)

METER_HEADERS = {
    '3.0': 'XMX5XMXABCE100129872',
    '4.2': 'KFM5KAIFA-METER',
    '5.0': 'ISk5\\2MT382-1000',
}
GAS_CAPTURE_PERIOD = {'3.0': 3600, '4.2': 3600, '5.0': 300}
CH_PRESSURE_DATA_ID = 18

# data-ids asked by the thermostat, by exchange period in seconds
EXCHANGE_PLAN: List[Tuple[int, Tuple[int, ...]]] = [
    (10, (DataId.BOILER_WATER_TEMP, DataId.RETURN_WATER_TEMP)),
    (30, (DataId.STATUS, DataId.MAX_REL_MODULATION,
          DataId.MAX_CAPACITY_MIN_MODULATION, DataId.REL_MODULATION_LEVEL)),
    (300, (DataId.ROOM_SETPOINT, DataId.ROOM_TEMP, DataId.MAX_CH_SETPOINT,
           CH_PRESSURE_DATA_ID)),
]
# written by the thermostat, acknowledged by the boiler
WRITTEN_IDS = frozenset([
    DataId.MAX_REL_MODULATION, DataId.ROOM_SETPOINT, DataId.ROOM_TEMP])


def _local(t: int, tz: str) -> datetime:
    return datetime.fromtimestamp(t, ZoneInfo(tz))


def heating_hours(t: int, tz: str) -> bool:
    hour = _local(t, tz).hour
    return 6 <= hour < 9 or 17 <= hour < 22


class MeterSimulator:
    """A DSMR meter; registers advance with household consumption."""

    def __init__(
            self,
            version: str,
            tz: str,
            rng: random.Random,
            equipment_id: str) -> None:
        self.version = version
        self.tz = tz
        self.rng = rng
        self.equipment_id = equipment_id
        self.demand = DiurnalSignal(
            0.35, 0.25, peak_hour=19.0, noise=0.05, low=0.05, tz=tz)
        self.solar = DiurnalSignal(
            0.0, 1.2, peak_hour=13.0, low=0.0, tz=tz)
        self.gas = CumulativeRegister(
            rng.uniform(1000.0, 4000.0), 0.0, jitter=0.2)
        self.registers = {
            'use_lo': rng.uniform(5000.0, 20000.0),
            'use_hi': rng.uniform(5000.0, 20000.0),
            'ret_lo': rng.uniform(0.0, 3000.0),
            'ret_hi': rng.uniform(0.0, 3000.0),
        }
        self.last: Optional[int] = None
        self.power = 0.0
        self.gas_capture: Optional[Tuple[int, float]] = None

    def high_tariff(self, t: int) -> bool:
        local = _local(t, self.tz)
        return local.weekday() < 5 and 7 <= local.hour < 23

    def advance(self, t: int) -> Tuple[int, float]:
        """Moves the registers to t; returns the latest gas capture."""
        if self.last is not None and t > self.last:
            hours = (t - self.last) / 3600
            net = self.demand.sample(t, self.rng) - \
                self.solar.sample(t, self.rng)
            band = 'hi' if self.high_tariff(t) else 'lo'
            if net >= 0:
                self.registers[f'use_{band}'] += net * hours
            else:
                self.registers[f'ret_{band}'] += -net * hours
            self.power = net
            self.gas.rate = 0.25 if heating_hours(t, self.tz) else 0.03
        self.gas.sample(t, self.rng)
        if self.last is None or t > self.last:
            self.last = t
        period = GAS_CAPTURE_PERIOD[self.version]
        captured = t - t % period
        if self.gas_capture is None or self.gas_capture[0] != captured:
            self.gas_capture = (captured, self.gas.value)
        return self.gas_capture

    def _stamp(self, t: int) -> str:
        return unix_to_dsmr_timestamp(
            t, self.tz, with_flag=self.version != '3.0').render()

    def lines(self, t: int) -> List[str]:
        gas_time, gas_value = self.advance(t)
        r = self.registers
        tariff = '0002' if self.high_tariff(t) else '0001'
        use = max(self.power, 0.0)
        ret = max(-self.power, 0.0)
        if self.version == '3.0':
            return [
                f'0-0:96.1.1({self.equipment_id})',
                f'1-0:1.8.1({r["use_lo"]:09.3f}*kWh)',
                f'1-0:1.8.2({r["use_hi"]:09.3f}*kWh)',
                f'1-0:2.8.1({r["ret_lo"]:09.3f}*kWh)',
                f'1-0:2.8.2({r["ret_hi"]:09.3f}*kWh)',
                f'0-0:96.14.0({tariff})',
                f'1-0:1.7.0({use:07.2f}*kW)',
                f'1-0:2.7.0({ret:07.2f}*kW)',
                '0-0:17.0.0(999*A)',
                '0-0:96.13.1()',
                '0-0:96.13.0()',
                '0-1:24.1.0(3)',
                f'0-1:96.1.0({self.equipment_id[::-1]})',
                f'0-1:24.3.0({self._stamp(gas_time)})(00)(60)(1)'
                '(0-1:24.2.1)(m3)',
                f'({gas_value:09.3f})',
            ]
        return [
            f'1-3:0.2.8({self.version.replace(".", "")})',
            f'0-0:1.0.0({self._stamp(t)})',
            f'0-0:96.1.1({self.equipment_id})',
            f'1-0:1.8.1({r["use_lo"]:010.3f}*kWh)',
            f'1-0:1.8.2({r["use_hi"]:010.3f}*kWh)',
            f'1-0:2.8.1({r["ret_lo"]:010.3f}*kWh)',
            f'1-0:2.8.2({r["ret_hi"]:010.3f}*kWh)',
            f'0-0:96.14.0({tariff})',
            f'1-0:1.7.0({use:06.3f}*kW)',
            f'1-0:2.7.0({ret:06.3f}*kW)',
            '0-0:96.7.21(00004)',
            '0-1:24.1.0(003)',
            f'0-1:96.1.0({self.equipment_id[::-1]})',
            f'0-1:24.2.1({self._stamp(gas_time)})({gas_value:09.3f}*m3)',
        ]

    def telegram(self, t: int) -> bytes:
        return build_telegram(
            METER_HEADERS[self.version], self.lines(t),
            with_crc=self.version != '3.0')


@dataclass(frozen=True)
class BoilerState:
    heating: bool
    hot_water: bool
    supply: float
    ret: float
    modulation: float
    setpoint: float
    room: float

    @property
    def flame(self) -> bool:
        return self.heating or self.hot_water


class BoilerModel:
    """Thermostat and boiler of one household, state held per 10 s slot."""

    MAX_CAPACITY_KW = 24
    MIN_MODULATION = 20
    MAX_CH_SETPOINT = 80.0
    CH_PRESSURE_BAR = 1.6

    def __init__(self, tz: str, rng: random.Random) -> None:
        self.tz = tz
        self.rng = rng
        self.room = DiurnalSignal(
            19.0, 1.5, peak_hour=20.0, noise=0.05, tz=tz)
        self._slot: Optional[int] = None
        self._state: Optional[BoilerState] = None

    def state(self, t: int) -> BoilerState:
        slot = t // 10
        if self._state is None or slot != self._slot:
            heating = heating_hours(t, self.tz)
            hot_water = self.rng.random() < 0.03
            if heating:
                supply = 55.0 + self.rng.gauss(0.0, 1.5)
                ret = supply - 12.0 + self.rng.gauss(0.0, 0.5)
                modulation = min(100.0, max(
                    float(self.MIN_MODULATION),
                    45.0 + self.rng.gauss(0.0, 10.0)))
            else:
                supply = 30.0 + self.rng.gauss(0.0, 1.0)
                ret = supply - 3.0
                modulation = 35.0 if hot_water else 0.0
            self._state = BoilerState(
                heating, hot_water, supply, ret, modulation,
                20.0 if heating else 16.0, self.room.sample(t, self.rng))
            self._slot = slot
        return self._state

    def _value(self, data_id: int, state: BoilerState) -> int:
        if data_id == DataId.STATUS:
            flags = (STATUS_CH_ACTIVE if state.heating else 0) \
                | (STATUS_DHW_ACTIVE if state.hot_water else 0) \
                | (STATUS_FLAME_ON if state.flame else 0)
            return (0x01 if state.heating else 0) << 8 | flags
        if data_id == DataId.MAX_CAPACITY_MIN_MODULATION:
            return self.MAX_CAPACITY_KW << 8 | self.MIN_MODULATION
        values: Dict[int, float] = {
            DataId.MAX_REL_MODULATION: 100.0,
            DataId.ROOM_SETPOINT: state.setpoint,
            DataId.REL_MODULATION_LEVEL: state.modulation,
            DataId.ROOM_TEMP: state.room,
            DataId.BOILER_WATER_TEMP: state.supply,
            DataId.RETURN_WATER_TEMP: state.ret,
            DataId.MAX_CH_SETPOINT: self.MAX_CH_SETPOINT,
            CH_PRESSURE_DATA_ID: self.CH_PRESSURE_BAR,
        }
        return encode_f88(values[data_id])

    def exchange(self, t: int, data_id: int) -> Tuple[int, int]:
        """One thermostat request and the boiler's reply, as 32-bit words."""
        state = self.state(t)
        value = self._value(data_id, state)
        if data_id in WRITTEN_IDS:
            request = make_opentherm_frame(MsgType.WRITE_DATA, data_id, value)
            reply = make_opentherm_frame(MsgType.WRITE_ACK, data_id, value)
        else:
            request = make_opentherm_frame(
                MsgType.READ_DATA, data_id,
                value & 0xFF00 if data_id == DataId.STATUS else 0)
            reply = make_opentherm_frame(MsgType.READ_ACK, data_id, value)
        return encode_opentherm_frame(request), encode_opentherm_frame(reply)

    def pipe_temperatures(self, t: int) -> Tuple[float, float]:
        state = self.state(t)
        return (state.supply + self.rng.gauss(0.0, 0.3),
                state.ret + self.rng.gauss(0.0, 0.3))


def data_ids_due(offset: int) -> List[int]:
    """Data-ids exchanged in the 10 s slot starting offset seconds in."""
    due: List[int] = []
    for period, data_ids in EXCHANGE_PLAN:
        if offset % period == 0:
            due.extend(data_ids)
    return due


class PresenceModel:
    """Residents' registered phones plus the odd unregistered visitor."""

    def __init__(
            self,
            phones: List[int],
            tz: str,
            rng: random.Random) -> None:
        self.phones = phones
        self.tz = tz
        self.rng = rng

    def present(self, t: int) -> FrozenSet[int]:
        hour = _local(t, self.tz).hour
        chance = 0.9 if hour < 8 or hour >= 18 else 0.35
        present = {p for p in self.phones if self.rng.random() < chance}
        for _ in range(self.rng.randint(0, 2)):
            present.add(self.rng.getrandbits(48))
        return frozenset(present)
