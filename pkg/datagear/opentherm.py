"""
OpenTherm frame decoding and property sampling.

Frame layout (32 bits, most significant first):
  bit 31      parity (even over all 32 bits)
  bits 30-28  message type
  bits 27-24  spare
  bits 23-16  data-id
  bits 15-0   data value (HB = bits 15-8, LB = bits 7-0)
"""
import enum
import logging
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple, Union
from .catalog import CATALOG, OPENTHERM_MONITOR
from .domain import Measurement
from .errors import ParityError, ReplayFormatError
from .properties import render_value

logger = logging.getLogger(__name__)

FrameValue = Union[int, float]


class MsgType(enum.IntEnum):
    READ_DATA = 0
    WRITE_DATA = 1
    INVALID_DATA = 2
    RESERVED = 3
    READ_ACK = 4
    WRITE_ACK = 5
    DATA_INVALID = 6
    UNKNOWN_DATA_ID = 7


REPLY_TYPES = frozenset([MsgType.READ_ACK, MsgType.WRITE_ACK])


class DataId(enum.IntEnum):
    STATUS = 0
    MAX_REL_MODULATION = 14
    MAX_CAPACITY_MIN_MODULATION = 15
    ROOM_SETPOINT = 16
    REL_MODULATION_LEVEL = 17
    ROOM_TEMP = 24
    BOILER_WATER_TEMP = 25
    RETURN_WATER_TEMP = 28
    MAX_CH_SETPOINT = 57


# slave status flags (LB of data-id 0)
STATUS_FAULT = 0x01
STATUS_CH_ACTIVE = 0x02
STATUS_DHW_ACTIVE = 0x04
STATUS_FLAME_ON = 0x08


def _parity(word: int) -> int:
    return bin(word & 0xFFFFFFFF).count('1') & 1


@dataclass(frozen=True)
class OpenThermFrame:
    parity_bit: int
    msg_type: int
    data_id: int
    data_value: int
    spare: int = 0

    @property
    def hb(self) -> int:
        return (self.data_value >> 8) & 0xFF

    @property
    def lb(self) -> int:
        return self.data_value & 0xFF


def encode_opentherm_frame(frame: OpenThermFrame) -> int:
    return (
        (frame.parity_bit & 1) << 31
        | (frame.msg_type & 0x7) << 28
        | (frame.spare & 0xF) << 24
        | (frame.data_id & 0xFF) << 16
        | (frame.data_value & 0xFFFF))


def make_opentherm_frame(
        msg_type: int, data_id: int, data_value: int) -> OpenThermFrame:
    body = OpenThermFrame(0, msg_type, data_id, data_value & 0xFFFF)
    return OpenThermFrame(
        _parity(encode_opentherm_frame(body)),
        msg_type, data_id, data_value & 0xFFFF)


def decode_opentherm_frame(word: int) -> OpenThermFrame:
    word &= 0xFFFFFFFF
    if _parity(word):
        raise ParityError(word)
    return OpenThermFrame(
        parity_bit=(word >> 31) & 1,
        msg_type=(word >> 28) & 0x7,
        data_id=(word >> 16) & 0xFF,
        data_value=word & 0xFFFF,
        spare=(word >> 24) & 0xF)


def decode_f88(value: int) -> float:
    value &= 0xFFFF
    if value & 0x8000:
        value -= 0x10000
    return value / 256


def encode_f88(value: float) -> int:
    return int(round(value * 256)) & 0xFFFF


_F88_PROPERTIES: Dict[int, str] = {
    DataId.BOILER_WATER_TEMP: 'boilerSupplyTemp',
    DataId.RETURN_WATER_TEMP: 'boilerReturnTemp',
    DataId.ROOM_SETPOINT: 'roomSetpointTemp',
    DataId.ROOM_TEMP: 'roomTemp',
    DataId.MAX_CH_SETPOINT: 'boilerMaxSupplyTemp',
}
_F88_PERCENT_PROPERTIES: Dict[int, str] = {
    DataId.MAX_REL_MODULATION: 'maxModulationLevel',
    DataId.REL_MODULATION_LEVEL: 'relativeModulationLevel',
}
SUPPORTED_DATA_IDS = frozenset(
    [DataId.STATUS, DataId.MAX_CAPACITY_MIN_MODULATION]
    + list(_F88_PROPERTIES) + list(_F88_PERCENT_PROPERTIES))


def frame_values(
        frame: OpenThermFrame) -> Optional[List[Tuple[str, FrameValue]]]:
    """Raw (property, value) pairs carried by a reply frame, None if the
    data-id is not one the monitor records."""
    data_id = frame.data_id
    if data_id == DataId.STATUS:
        return [
            ('isBoilerFlameOn', int(bool(frame.lb & STATUS_FLAME_ON))),
            ('isCentralHeatingModeOn', int(bool(frame.lb & STATUS_CH_ACTIVE))),
            ('isDomesticHotWaterModeOn',
                int(bool(frame.lb & STATUS_DHW_ACTIVE))),
        ]
    if data_id == DataId.MAX_CAPACITY_MIN_MODULATION:
        return [('maxBoilerCap', frame.hb), ('minModulationLevel', frame.lb)]
    if data_id in _F88_PROPERTIES:
        return [(_F88_PROPERTIES[data_id], decode_f88(frame.data_value))]
    if data_id in _F88_PERCENT_PROPERTIES:
        return [(_F88_PERCENT_PROPERTIES[data_id],
                 int(round(decode_f88(frame.data_value))))]
    return None


class FrameSampler:
    """
    Accumulates timestamped reply frames into measurements. A property is
    recorded again only once its interval has passed since the last
    recorded frame; equal capture times keep the frame seen first.
    """

    def __init__(self, type_name: str = OPENTHERM_MONITOR) -> None:
        self.source_type = CATALOG.lookup(type_name)
        self.skipped_unknown = 0
        self.skipped_non_reply = 0
        self._last_time: Dict[str, int] = dict()

    def add(self, time: int, frame: OpenThermFrame) -> List[Measurement]:
        if frame.msg_type not in REPLY_TYPES:
            self.skipped_non_reply += 1
            return []
        values = frame_values(frame)
        if values is None:
            self.skipped_unknown += 1
            logger.debug(f'Skipping unsupported data-id {frame.data_id}')
            return []
        result: List[Measurement] = []
        for name, value in values:
            descriptor = self.source_type.descriptor(name)
            if descriptor is None:
                continue
            last = self._last_time.get(name)
            if last is not None and time < last + descriptor.default_interval:
                continue
            self._last_time[name] = time
            result.append(Measurement(
                name, time, render_value(descriptor, value)))
        return result


def frames_to_measurements(
        frames: Iterable[Tuple[int, OpenThermFrame]],
        sampler: Optional[FrameSampler] = None) -> List[Measurement]:
    sampler = sampler or FrameSampler()
    ordered = sorted(
        enumerate(frames), key=lambda item: (item[1][0], item[0]))
    result: List[Measurement] = []
    for _, (time, frame) in ordered:
        result.extend(sampler.add(time, frame))
    return result


def read_frame_replay(
        lines: Iterable[str]) -> List[Tuple[int, OpenThermFrame]]:
    frames: List[Tuple[int, OpenThermFrame]] = []
    for line_no, line in enumerate(lines, start=1):
        text = line.split('#', 1)[0].strip()
        if not text:
            continue
        parts = text.split()
        if len(parts) != 2:
            raise ReplayFormatError(line_no, f'expected 2 fields: {line!r}')
        stamp, word = parts
        if not stamp.isdigit():
            raise ReplayFormatError(line_no, f'bad timestamp {stamp!r}')
        if word.lower().startswith('0x'):
            word = word[2:]
        if len(word) != 8:
            raise ReplayFormatError(line_no, f'bad frame word {word!r}')
        try:
            value = int(word, 16)
        except ValueError:
            raise ReplayFormatError(line_no, f'bad frame word {word!r}')
        try:
            frames.append((int(stamp), decode_opentherm_frame(value)))
        except ParityError as e:
            raise ReplayFormatError(line_no, str(e))
    return frames
