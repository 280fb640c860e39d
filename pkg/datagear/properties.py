"""
Property vocabulary: the physiquant__unit naming convention and the
printf-style value formats used for every stored measurement value.
"""
import enum
import logging
import math
import re
from dataclasses import dataclass
from typing import FrozenSet, Optional, Union
from .errors import PropertyNameError, ValidationError, ValueFormatError

logger = logging.getLogger(__name__)

Value = Union[int, float, str]

FORMAT_UNSIGNED = '%u'
FORMAT_SIGNED = '%d'
FORMAT_STRING = '%s'
FORMAT_FIXED_1 = '%.1f'
FORMAT_FIXED_2 = '%.2f'
FORMAT_FIXED_3 = '%.3f'
VALUE_FORMATS: FrozenSet[str] = frozenset([
    FORMAT_UNSIGNED, FORMAT_SIGNED, FORMAT_STRING,
    FORMAT_FIXED_1, FORMAT_FIXED_2, FORMAT_FIXED_3])
KNOWN_UNITS: FrozenSet[str] = frozenset(['0', 'p', 'ppm', 'degC', 'kWh', 'm3'])
# names from the older device rows, kept loadable for historical imports
LEGACY_NAMES: FrozenSet[str] = frozenset([
    'isBoilerFlameOn', 'isCentralHeatingModeOn', 'isDomesticHotWaterModeOn',
    'maxModulationLevel', 'maxBoilerCap', 'minModulationLevel',
    'relativeModulationLevel', 'boilerSupplyTemp', 'boilerReturnTemp',
    'roomSetpointTemp', 'roomTemp', 'boilerMaxSupplyTemp', 'boilerTemp1',
    'boilerTemp2', 'CO2concentration', 'roomTempCO2', 'humidity'])

_QUANTITY = re.compile(r'^[a-z][a-z0-9]*(?:_[a-z0-9]+)*$')
_UNIT = re.compile(r'^[A-Za-z0-9]+$')
_STR_SUFFIX = re.compile(r'^[a-z][a-z0-9]*(?:_[a-z0-9]+)*_str$')
_UNSIGNED_TEXT = re.compile(r'^\+?\d+$')
_SIGNED_TEXT = re.compile(r'^[+-]?\d+$')
_DECIMAL_TEXT = re.compile(r'^[+-]?(?:\d+(?:\.\d*)?|\.\d+)$')


class NameVerdict(enum.Enum):
    VALID = 'valid'
    LEGACY = 'legacy'
    INVALID = 'invalid'


@dataclass(frozen=True)
class NameCheck:
    verdict: NameVerdict
    reason: Optional[str] = None

    @property
    def accepted(self) -> bool:
        return self.verdict is not NameVerdict.INVALID


def validate_property_name(name: str) -> NameCheck:
    if '__' not in name:
        if _STR_SUFFIX.match(name) or name in LEGACY_NAMES:
            return NameCheck(NameVerdict.LEGACY)
        return NameCheck(
            NameVerdict.INVALID, 'no double-underscore separator')
    quantity, _, unit = name.partition('__')
    if not quantity:
        return NameCheck(NameVerdict.INVALID, 'empty quantity part')
    if not unit:
        return NameCheck(NameVerdict.INVALID, 'empty unit part')
    if '__' in unit:
        return NameCheck(
            NameVerdict.INVALID, 'more than one double-underscore separator')
    if not _QUANTITY.match(quantity):
        return NameCheck(
            NameVerdict.INVALID, 'quantity part is not lowercase snake-case')
    if not _UNIT.match(unit):
        return NameCheck(
            NameVerdict.INVALID, 'unit part contains invalid characters')
    if unit not in KNOWN_UNITS:
        logger.warning(f'Unknown unit suffix {unit!r} in property {name}')
    return NameCheck(NameVerdict.VALID)


def require_property_name(name: str) -> NameVerdict:
    check = validate_property_name(name)
    if not check.accepted:
        raise PropertyNameError(
            f'invalid property name {name!r}: {check.reason}')
    return check.verdict


@dataclass(frozen=True)
class PropertyDescriptor:
    name: str
    unit: str
    value_format: str
    default_interval: int

    def __post_init__(self) -> None:
        require_property_name(self.name)
        if self.value_format not in VALUE_FORMATS:
            raise ValidationError(
                f'unsupported value format {self.value_format!r}')
        if self.default_interval <= 0:
            raise ValidationError(
                f'interval of {self.name} must be positive')


def _decimals(value_format: str) -> int:
    return int(value_format[2])


def _is_fixed(value_format: str) -> bool:
    return value_format.startswith('%.')


def render_value(descriptor: PropertyDescriptor, raw: Value) -> str:
    fmt = descriptor.value_format
    if fmt == FORMAT_STRING:
        return str(raw)
    if isinstance(raw, str):
        raise ValueFormatError(
            f'{descriptor.name}: numeric format {fmt} given text {raw!r}')
    if _is_fixed(fmt):
        number = float(raw)
        if not math.isfinite(number):
            raise ValueFormatError(
                f'{descriptor.name}: non-finite value {raw!r}')
        text = f'{number:.{_decimals(fmt)}f}'
        # avoid '-0.0'
        if float(text) == 0:
            text = text.lstrip('-')
        return text
    if isinstance(raw, float):
        if not raw.is_integer():
            raise ValueFormatError(
                f'{descriptor.name}: integer format {fmt} given {raw!r}')
        raw = int(raw)
    if fmt == FORMAT_UNSIGNED and raw < 0:
        raise ValueFormatError(
            f'{descriptor.name}: negative value {raw} under {fmt}')
    return str(int(raw))


def parse_value(descriptor: PropertyDescriptor, text: str) -> Value:
    fmt = descriptor.value_format
    if fmt == FORMAT_STRING:
        return text
    stripped = text.strip()
    if fmt == FORMAT_UNSIGNED:
        if not _UNSIGNED_TEXT.match(stripped):
            raise ValueFormatError(
                f'{descriptor.name}: {text!r} is not an unsigned integer')
        return int(stripped)
    if fmt == FORMAT_SIGNED:
        if not _SIGNED_TEXT.match(stripped):
            raise ValueFormatError(
                f'{descriptor.name}: {text!r} is not an integer')
        return int(stripped)
    if not _DECIMAL_TEXT.match(stripped):
        raise ValueFormatError(
            f'{descriptor.name}: {text!r} is not a decimal number')
    return float(stripped)


def canonical_value(descriptor: PropertyDescriptor, text: str) -> str:
    """Parse then re-render, e.g. '012345.678' -> '12345.678'."""
    return render_value(descriptor, parse_value(descriptor, text))
