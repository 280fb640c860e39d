import datetime
import os
import tempfile
import unittest
from datagear.errors import ConfigurationError
from datagear.firmware import COREINK
from datagear.scenario import (
    EXAMPLE_SCENARIO_PATH,
    HouseholdSpec,
    DeviceSpec,
    load_scenario,
    parse_duration,
    parse_scenario,
    parse_start,
    relay_kind
)

TEST_START = 1729468800


def scenario(**overrides):
    data = {
        'start': TEST_START,
        'horizon': '1d',
        'households': [{'devices': ['living-room-module']}],
    }
    data.update(overrides)
    return data


class TestParsing(unittest.TestCase):

    def test_durations(self):
        for value, expected in [(90, 90), ('90', 90), ('10m', 600),
                                ('6h', 21600), ('7d', 604800),
                                ('2w', 1209600), (' 5 s ', 5)]:
            with self.subTest(value=value):
                self.assertEqual(expected, parse_duration(value))
        for value in [True, '1y', '-5', 'soon']:
            with self.subTest(value=value):
                with self.assertRaises(ConfigurationError):
                    parse_duration(value)

    def test_start_times(self):
        self.assertEqual(TEST_START, parse_start(TEST_START))
        self.assertEqual(TEST_START, parse_start('2024-10-21T00:00:00+00:00'))
        self.assertEqual(TEST_START, parse_start('2024-10-21'))
        self.assertEqual(TEST_START, parse_start(datetime.date(2024, 10, 21)))
        self.assertEqual(TEST_START - 7200, parse_start(
            '2024-10-21T00:00:00+02:00'))
        with self.assertRaises(ConfigurationError):
            parse_start('someday')


class TestParseScenario(unittest.TestCase):

    def test_defaults(self):
        result = parse_scenario(scenario())
        self.assertEqual(1, result.seed)
        self.assertEqual(TEST_START + 86400, result.end)
        self.assertEqual('Europe/Amsterdam', result.timezone)
        self.assertEqual(COREINK, result.power)
        self.assertEqual(('living-room-module',),
                         result.campaign.data_sources)
        household = result.households[0]
        self.assertEqual('hh-001', household.pseudonym)
        self.assertEqual('5.0', household.dsmr_version)

    def test_count_expands_households(self):
        result = parse_scenario(scenario(households=[
            {'count': 3, 'pseudonym_prefix': 'flat',
             'devices': ['smart-meter-module'],
             'home': {'lat': 52.0, 'lon': 4.3}},
            {'pseudonym': 'villa', 'devices': ['opentherm-monitor'],
             'outages': [{'start': '1h', 'duration': '30m'},
                         {'start': '3h', 'end': '4h'}]}]))
        self.assertEqual(
            ['flat-001', 'flat-002', 'flat-003', 'villa'],
            [h.pseudonym for h in result.households])
        self.assertEqual(
            ('smart-meter-module', 'opentherm-monitor', 'weather-zone'),
            result.campaign.data_sources)
        outages = result.households[3].outages
        self.assertEqual(TEST_START + 3600, outages[0].start)
        self.assertEqual(TEST_START + 5400, outages[0].end)
        self.assertTrue(outages[1].covers(TEST_START + 3 * 3600))
        self.assertFalse(outages[1].covers(TEST_START + 4 * 3600))

    def test_power_override(self):
        result = parse_scenario(scenario(power={'boot_energy': 0.3}))
        self.assertEqual(0.3, result.power.boot_energy)
        self.assertEqual(COREINK.sleep_power, result.power.sleep_power)

    def test_rejects(self):
        for overrides in [
                {'households': []},
                {'households': [{'devices': []}]},
                {'households': [{'devices': ['toaster']}]},
                {'households': [{'devices': ['weather-zone']}]},
                {'households': [{'devices': ['living-room-module'],
                                 'dsmr_version': '2.2'}]},
                {'households': [{'devices': ['living-room-module'],
                                 'outages': [{'start': '2h', 'end': '1h'}]}]},
                {'households': [
                    {'pseudonym': 'a', 'devices': ['living-room-module']},
                    {'pseudonym': 'a', 'devices': ['living-room-module']}]},
                {'households': [{'devices': ['living-room-module'],
                                 'random_outages': {'min': '2h',
                                                    'max': '1h'}}]},
                {'horizon': 0},
                {'timezone': 'Moon/Base'},
                {'campaign': {'data_sources': ['toaster']}},
                {'power': {'sleep_power': -1}}]:
            with self.subTest(overrides=overrides):
                with self.assertRaises(ConfigurationError):
                    parse_scenario(scenario(**overrides))

    def test_relay_kind(self):
        household = HouseholdSpec('hh', (
            DeviceSpec('smart-meter-module'),
            DeviceSpec('room-monitor-satellite'),
            DeviceSpec('boiler-monitor-satellite',
                       relay='living-room-module')))
        self.assertEqual(
            'smart-meter-module', relay_kind(household, household.devices[1]))
        self.assertIsNone(relay_kind(household, household.devices[2]))


class TestLoadScenario(unittest.TestCase):

    def test_example_scenario(self):
        result = load_scenario(EXAMPLE_SCENARIO_PATH)
        self.assertEqual(5, len(result.households))
        self.assertEqual(7 * 86400, result.horizon)
        self.assertEqual(TEST_START, result.start)
        self.assertEqual(
            ('smart-meter-module', 'living-room-module', 'weather-zone'),
            result.campaign.data_sources)
        self.assertEqual(3, result.households[0].random_outages.count)
        self.assertEqual(
            os.path.dirname(os.path.abspath(EXAMPLE_SCENARIO_PATH)),
            result.base_dir)

    def test_bad_files(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'bad.yaml')
            with open(path, 'w', encoding='utf-8') as handle:
                handle.write('households: [\n')
            with self.assertRaises(ConfigurationError):
                load_scenario(path)
            with self.assertRaises(ConfigurationError):
                load_scenario(os.path.join(directory, 'none.yaml'))
