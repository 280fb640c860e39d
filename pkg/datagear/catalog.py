"""
Shipped data-source catalog: every device type with its measured
properties (name, unit, format, interval), the weather-zone energy query
and the cloud-feed stub.
"""
from typing import Dict, Iterable, List, Optional, Tuple
from .domain import DataSourceType, DataSourceVariant
from .errors import UnknownDataSourceTypeError, UnknownPropertyError
from .properties import PropertyDescriptor

LIVING_ROOM_MODULE = 'living-room-module'
SMART_METER_MODULE = 'smart-meter-module'
OPENTHERM_MONITOR = 'opentherm-monitor'
BOILER_MONITOR_SATELLITE = 'boiler-monitor-satellite'
ROOM_MONITOR_SATELLITE = 'room-monitor-satellite'
INTEGRATED_BOILER_MONITOR = 'integrated-boiler-monitor'
WEATHER_ZONE = 'weather-zone'
ENELOGIC_STUB = 'enelogic-stub'

DEFAULT_UPLOAD_INTERVAL = 600

HEARTBEAT = 'heartbeat__0'
WEATHER_ZONE_CELL = 'h3_cell_4_str'
WEATHER_ZONE_TZ = 'time_zone_str'

# (property, unit, format, interval seconds)
_Row = Tuple[str, str, str, int]

LIVING_ROOM_ROWS: List[_Row] = [
    (HEARTBEAT, '[-]', '%u', 600),
    ('co2__ppm', 'ppm', '%u', 600),
    ('temp_indoor__degC', '°C', '%.1f', 600),
    ('rel_humidity__0', '[-]', '%.1f', 600),
    ('onboarded__p', 'persons', '%u', 600),
    ('occupancy__p', 'persons', '%u', 600),
]
SMART_METER_ROWS: List[_Row] = [
    (HEARTBEAT, '-', '%u', 600),
    ('e_use_hi_cum__kWh', 'kWh', '%.3f', 600),
    ('e_use_lo_cum__kWh', 'kWh', '%.3f', 600),
    ('e_ret_hi_cum__kWh', 'kWh', '%.3f', 600),
    ('e_ret_lo_cum__kWh', 'kWh', '%.3f', 600),
    ('g_use_cum__m3', 'm3', '%.3f', 600),
    ('meter_code_str', 'n/a', '%s', 600),
    ('dsmr_version__0', '[-]', '%.1f', 600),
]
OPENTHERM_ROWS: List[_Row] = [
    ('isBoilerFlameOn', 'bool', '%d', 30),
    ('isCentralHeatingModeOn', 'bool', '%d', 30),
    ('isDomesticHotWaterModeOn', 'bool', '%d', 30),
    ('maxModulationLevel', '%', '%d', 30),
    ('maxBoilerCap', 'kW', '%d', 30),
    ('minModulationLevel', '%', '%d', 30),
    ('relativeModulationLevel', '%', '%d', 30),
    ('boilerSupplyTemp', '°C', '%.2f', 10),
    ('boilerReturnTemp', '°C', '%.2f', 10),
    ('roomSetpointTemp', '°C', '%.2f', 300),
    ('roomTemp', '°C', '%.2f', 300),
    ('boilerMaxSupplyTemp', '°C', '%.2f', 300),
]
BOILER_SATELLITE_ROWS: List[_Row] = [
    ('boilerTemp1', '°C', '%.1f', 10),
    ('boilerTemp2', '°C', '%.1f', 10),
]
ROOM_SATELLITE_ROWS: List[_Row] = [
    ('CO2concentration', 'ppm', '%d', 300),
    ('roomTempCO2', '°C', '%.1f', 300),
    ('humidity', '%', '%.1f', 300),
    ('roomTemp', '°C', '%.1f', 300),
]
WEATHER_ZONE_ROWS: List[_Row] = [
    (WEATHER_ZONE_CELL, 'n/a', '%s', 86400),
    (WEATHER_ZONE_TZ, 'n/a', '%s', 86400),
]

# source name as printed in the device table -> catalog type name
DEVICE_TABLE: List[Tuple[str, str, List[_Row]]] = [
    ('Living Room Module', LIVING_ROOM_MODULE, LIVING_ROOM_ROWS),
    ('Smart Meter Module', SMART_METER_MODULE, SMART_METER_ROWS),
    ('OpenTherm Monitor', OPENTHERM_MONITOR, OPENTHERM_ROWS),
    ('Boiler Monitor Satellite', BOILER_MONITOR_SATELLITE,
        BOILER_SATELLITE_ROWS),
    ('Room Monitor Satellite', ROOM_MONITOR_SATELLITE, ROOM_SATELLITE_ROWS),
]


def _descriptors(rows: Iterable[_Row]) -> Tuple[PropertyDescriptor, ...]:
    return tuple(
        PropertyDescriptor(name, unit, fmt, interval)
        for name, unit, fmt, interval in rows)


def _device(
        type_name: str,
        rows: Iterable[_Row],
        relayed: bool = False) -> DataSourceType:
    return DataSourceType(
        DataSourceVariant.DEVICE_TYPE,
        type_name,
        _descriptors(rows),
        upload_interval=DEFAULT_UPLOAD_INTERVAL,
        relayed=relayed)


class Catalog:
    def __init__(self, types: Iterable[DataSourceType]) -> None:
        self.types: Dict[str, DataSourceType] = dict()
        for source_type in types:
            self.types[source_type.type_name] = source_type

    def lookup(self, type_name: str) -> DataSourceType:
        source_type = self.types.get(type_name)
        if source_type is None:
            raise UnknownDataSourceTypeError(
                f'unknown data source type {type_name!r}')
        return source_type

    def get(self, type_name: str) -> Optional[DataSourceType]:
        return self.types.get(type_name)

    def descriptor_for(
            self,
            type_name: str,
            property_name: str) -> PropertyDescriptor:
        descriptor = self.lookup(type_name).descriptor(property_name)
        if descriptor is None:
            raise UnknownPropertyError(
                f'property {property_name!r} is not measured by {type_name}')
        return descriptor

    def __contains__(self, type_name: object) -> bool:
        return type_name in self.types

    def names(self) -> List[str]:
        return sorted(self.types)


def default_catalog() -> Catalog:
    return Catalog([
        _device(LIVING_ROOM_MODULE, LIVING_ROOM_ROWS),
        _device(SMART_METER_MODULE, SMART_METER_ROWS),
        _device(OPENTHERM_MONITOR, OPENTHERM_ROWS),
        _device(BOILER_MONITOR_SATELLITE, BOILER_SATELLITE_ROWS,
                relayed=True),
        _device(ROOM_MONITOR_SATELLITE, ROOM_SATELLITE_ROWS, relayed=True),
        _device(INTEGRATED_BOILER_MONITOR,
                OPENTHERM_ROWS + BOILER_SATELLITE_ROWS),
        DataSourceType(
            DataSourceVariant.ENERGY_QUERY,
            WEATHER_ZONE,
            _descriptors(WEATHER_ZONE_ROWS)),
        DataSourceType(DataSourceVariant.CLOUD_FEED, ENELOGIC_STUB),
    ])


CATALOG = default_catalog()
