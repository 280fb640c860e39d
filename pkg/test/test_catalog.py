import csv
import os
import unittest
from datagear.catalog import (
    CATALOG,
    DEVICE_TABLE,
    ENELOGIC_STUB,
    INTEGRATED_BOILER_MONITOR,
    OPENTHERM_MONITOR,
    ROOM_MONITOR_SATELLITE,
    BOILER_MONITOR_SATELLITE,
    WEATHER_ZONE,
    default_catalog
)
from datagear.domain import DataSourceVariant
from datagear.errors import UnknownDataSourceTypeError, UnknownPropertyError

DEVICE_TABLE_PATH = os.path.join(
    os.path.dirname(__file__), 'data', 'device_table.tsv')


def _seconds(hms: str) -> int:
    hours, minutes, seconds = (int(p) for p in hms.split(':'))
    return hours * 3600 + minutes * 60 + seconds


def read_device_table():
    with open(DEVICE_TABLE_PATH, newline='', encoding='utf-8') as handle:
        reader = csv.DictReader(handle, delimiter='\t')
        return [(row['source'], row['property'], row['unit'], row['format'],
                 _seconds(row['interval'])) for row in reader]


class TestCatalog(unittest.TestCase):

    def test_device_table_matches_checked_in_copy(self):
        expected = read_device_table()
        actual = [
            (type_name, p.name, p.unit, p.value_format, p.default_interval)
            for _, type_name, _ in DEVICE_TABLE
            for p in CATALOG.lookup(type_name).properties]
        self.assertEqual(32, len(expected))
        self.assertEqual(expected, actual)

    def test_integrated_boiler_monitor_combines_rows(self):
        integrated = CATALOG.lookup(INTEGRATED_BOILER_MONITOR)
        names = integrated.property_names()
        self.assertEqual(
            CATALOG.lookup(OPENTHERM_MONITOR).property_names()
            + ['boilerTemp1', 'boilerTemp2'], names)
        self.assertFalse(integrated.relayed)

    def test_satellites_are_relayed(self):
        for name in [BOILER_MONITOR_SATELLITE, ROOM_MONITOR_SATELLITE]:
            with self.subTest(name=name):
                self.assertTrue(CATALOG.lookup(name).relayed)

    def test_device_types_upload_every_ten_minutes(self):
        for _, type_name, _ in DEVICE_TABLE:
            with self.subTest(type_name=type_name):
                self.assertEqual(
                    600, CATALOG.lookup(type_name).upload_interval)

    def test_weather_zone_and_cloud_feed(self):
        zone = CATALOG.lookup(WEATHER_ZONE)
        self.assertEqual(DataSourceVariant.ENERGY_QUERY, zone.variant)
        self.assertEqual(
            ['h3_cell_4_str', 'time_zone_str'], zone.property_names())
        self.assertIsNone(zone.upload_interval)
        feed = CATALOG.lookup(ENELOGIC_STUB)
        self.assertEqual(DataSourceVariant.CLOUD_FEED, feed.variant)
        self.assertEqual((), feed.properties)

    def test_unknown_type(self):
        with self.assertRaises(UnknownDataSourceTypeError):
            CATALOG.lookup('toaster')
        self.assertIsNone(CATALOG.get('toaster'))
        self.assertNotIn('toaster', CATALOG)

    def test_descriptor_for(self):
        descriptor = CATALOG.descriptor_for('living-room-module', 'co2__ppm')
        self.assertEqual('%u', descriptor.value_format)
        with self.assertRaises(UnknownPropertyError):
            CATALOG.descriptor_for('living-room-module', 'boilerTemp1')

    def test_room_temp_differs_between_sources(self):
        opentherm = CATALOG.descriptor_for(OPENTHERM_MONITOR, 'roomTemp')
        satellite = CATALOG.descriptor_for(ROOM_MONITOR_SATELLITE, 'roomTemp')
        self.assertEqual('%.2f', opentherm.value_format)
        self.assertEqual('%.1f', satellite.value_format)

    def test_names_sorted(self):
        names = default_catalog().names()
        self.assertEqual(sorted(names), names)
        self.assertEqual(8, len(names))
