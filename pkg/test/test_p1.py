import os
import random
import unittest
import yaml
from datagear.errors import (
    DataGearError,
    InconsistentDstFlagError,
    MalformedObisLineError,
    NonexistentLocalTimeError,
    TelegramStructureError,
    TimestampError
)
from datagear.p1 import (
    CrcStatus,
    DsmrTimestamp,
    build_telegram,
    default_obis_map,
    dsmr_timestamp_to_unix,
    parse_p1_telegram,
    telegram_to_reading,
    unix_to_dsmr_timestamp,
    verify_telegram_crc
)

TZ = 'Europe/Amsterdam'
TELEGRAM_DIR = os.path.join(os.path.dirname(__file__), 'data', 'p1_telegrams')
# 2024-10-21 10:00:00 UTC, 12:00 CEST
TEST_TIME = 1729504800
# 2024-10-27 00:30 UTC and 01:30 UTC: both 02:30 local
AMBIGUOUS_SUMMER = 1729989000
AMBIGUOUS_WINTER = 1729992600

DSMR5_LINES = [
    '1-3:0.2.8(50)',
    '0-0:1.0.0(241021120000S)',
    '0-0:96.1.1(4B384547303034303436333935353037)',
    '1-0:1.8.1(123456.789*kWh)',
    '1-0:1.8.2(000789.012*kWh)',
    '1-0:2.8.1(000012.345*kWh)',
    '1-0:2.8.2(000023.456*kWh)',
    '0-0:96.14.0(0002)',
    '1-0:1.7.0(01.193*kW)',
    '0-1:24.1.0(003)',
    '0-1:24.2.1(241021115500S)(12785.123*m3)',
]
DSMR42_LINES = [
    '1-3:0.2.8(42)',
    '0-0:1.0.0(241021120000S)',
    '1-0:1.8.1(001234.000*kWh)',
    '1-0:1.8.2(002345.500*kWh)',
    '1-0:2.8.1(000000.000*kWh)',
    '1-0:2.8.2(000001.250*kWh)',
    '0-1:24.2.1(241021110000S)(00981.443*m3)',
]
DSMR3_LINES = [
    '0-0:96.1.1(4B414C37303035313039303831323133)',
    '1-0:1.8.1(00185.000*kWh)',
    '1-0:1.8.2(00084.000*kWh)',
    '1-0:2.8.1(00013.000*kWh)',
    '1-0:2.8.2(00019.000*kWh)',
    '0-0:96.14.0(0001)',
    '0-0:96.13.1()',
    '0-1:24.3.0(241021110000)(00)(60)(1)(0-1:24.2.1)(m3)',
    '(00646.531)',
]


class TestParseTelegram(unittest.TestCase):

    def test_parses_header_objects_and_crc(self):
        raw = build_telegram('ISk5\\2MT382-1000', DSMR5_LINES, with_crc=True)
        telegram = parse_p1_telegram(raw)
        self.assertEqual('ISk5\\2MT382-1000', telegram.header)
        self.assertEqual(len(DSMR5_LINES), len(telegram.objects))
        self.assertIsNotNone(telegram.crc)
        gas = telegram.find('0-*:24.2.1')
        self.assertEqual(
            (('241021115500S', None), ('12785.123', 'm3')), gas.values)

    def test_continuation_line_extends_previous_object(self):
        raw = build_telegram(
            'XMX5XMXABCE100129872', DSMR3_LINES, with_crc=False)
        telegram = parse_p1_telegram(raw)
        gas = telegram.find('0-1:24.3.0')
        self.assertEqual('00646.531', gas.values[-1][0])
        self.assertEqual(7, len(gas.values))
        self.assertIsNone(telegram.crc)

    def test_structure_errors(self):
        with self.assertRaises(TelegramStructureError):
            parse_p1_telegram('1-0:1.8.1(1*kWh)\r\n!')
        with self.assertRaises(TelegramStructureError):
            parse_p1_telegram('/HDR\r\n\r\n1-0:1.8.1(1*kWh)\r\n')
        with self.assertRaises(TelegramStructureError):
            parse_p1_telegram('/HDR\r\n\r\n1-0:1.8.1(1*kWh)\r\n!XYZ\r\n')

    def test_malformed_line_is_located(self):
        with self.assertRaises(MalformedObisLineError) as cm:
            parse_p1_telegram(
                '/HDR\r\n\r\n1-0:1.8.1(1*kWh)\r\nnot an object\r\n!\r\n')
        self.assertEqual(4, cm.exception.line_no)

    def test_survives_mutated_input(self):
        rng = random.Random(7)
        raw = build_telegram('ISk5\\2MT382-1000', DSMR5_LINES, with_crc=True)
        alphabet = b'/!()*:.-0123456789ABCDEF\r\nxyz '
        for _ in range(10000):
            data = bytearray(raw)
            for _ in range(rng.randint(1, 6)):
                data[rng.randrange(len(data))] = rng.choice(alphabet)
            try:
                parse_p1_telegram(bytes(data))
            except DataGearError:
                pass
            verify_telegram_crc(bytes(data))


class TestCrc(unittest.TestCase):

    def test_built_telegram_verifies(self):
        raw = build_telegram('ISk5\\2MT382-1000', DSMR5_LINES, with_crc=True)
        check = verify_telegram_crc(raw)
        self.assertEqual(CrcStatus.OK, check.status)
        self.assertEqual(check.expected, check.found)

    def test_altered_body_mismatches(self):
        raw = build_telegram('ISk5\\2MT382-1000', DSMR5_LINES, with_crc=True)
        altered = raw.replace(b'123456.789', b'123456.788')
        check = verify_telegram_crc(altered)
        self.assertEqual(CrcStatus.MISMATCH, check.status)
        self.assertNotEqual(check.expected, check.found)

    def test_absent_crc(self):
        raw = build_telegram('XMX5', DSMR3_LINES, with_crc=False)
        self.assertEqual(CrcStatus.ABSENT, verify_telegram_crc(raw).status)
        self.assertEqual(
            CrcStatus.ABSENT, verify_telegram_crc(b'/HDR\r\n').status)

    def test_garbage_trailer_mismatches(self):
        raw = b'/HDR\r\n\r\n1-0:1.8.1(1*kWh)\r\n!ZZZZ\r\n'
        self.assertEqual(CrcStatus.MISMATCH, verify_telegram_crc(raw).status)


class TestTimestamps(unittest.TestCase):

    def test_flagged_round_trip(self):
        stamp = unix_to_dsmr_timestamp(TEST_TIME, TZ)
        self.assertEqual('241021120000S', stamp.render())
        self.assertEqual(TEST_TIME, dsmr_timestamp_to_unix(stamp, TZ))

    def test_flag_resolves_ambiguous_hour(self):
        self.assertEqual(AMBIGUOUS_SUMMER, dsmr_timestamp_to_unix(
            DsmrTimestamp.parse('241027023000S'), TZ))
        self.assertEqual(AMBIGUOUS_WINTER, dsmr_timestamp_to_unix(
            DsmrTimestamp.parse('241027023000W'), TZ))

    def test_flagless_ambiguous_uses_previous_time(self):
        stamp = DsmrTimestamp.parse('241027023000')
        self.assertEqual(AMBIGUOUS_SUMMER, dsmr_timestamp_to_unix(stamp, TZ))
        self.assertEqual(AMBIGUOUS_WINTER, dsmr_timestamp_to_unix(
            stamp, TZ, prev_time=AMBIGUOUS_SUMMER + 1200))

    def test_flagless_stream_over_autumn_transition(self):
        start = AMBIGUOUS_SUMMER - 4 * 3600
        previous = None
        for true_time in range(start, start + 8 * 3600, 600):
            rendered = unix_to_dsmr_timestamp(
                true_time, TZ, with_flag=False).render()
            resolved = dsmr_timestamp_to_unix(
                DsmrTimestamp.parse(rendered), TZ, previous)
            self.assertEqual(true_time, resolved)
            if previous is not None:
                self.assertGreater(resolved, previous)
            previous = resolved

    def test_flagged_stream_round_trips(self):
        start = AMBIGUOUS_SUMMER - 4 * 3600
        for true_time in range(start, start + 8 * 3600, 600):
            stamp = unix_to_dsmr_timestamp(true_time, TZ)
            self.assertEqual(true_time, dsmr_timestamp_to_unix(
                DsmrTimestamp.parse(stamp.render()), TZ))

    def test_spring_gap_does_not_exist(self):
        with self.assertRaises(NonexistentLocalTimeError):
            dsmr_timestamp_to_unix(DsmrTimestamp.parse('240331023000'), TZ)

    def test_inconsistent_flag(self):
        with self.assertRaises(InconsistentDstFlagError):
            dsmr_timestamp_to_unix(DsmrTimestamp.parse('240715120000W'), TZ)

    def test_bad_timestamps(self):
        for text in ['2410211200', '241321120000S', '241021120000X', '']:
            with self.subTest(text=text):
                with self.assertRaises(TimestampError):
                    DsmrTimestamp.parse(text)


class TestTelegramToReading(unittest.TestCase):

    def _values(self, reading):
        return {m.property: (m.time, m.value) for m in reading.measurements}

    def test_dsmr5_values(self):
        telegram = parse_p1_telegram(build_telegram(
            'ISk5\\2MT382-1000', DSMR5_LINES, with_crc=True))
        reading = telegram_to_reading(telegram, TZ)
        self.assertEqual(TEST_TIME, reading.telegram_time)
        self.assertEqual({
            'meter_code_str': (TEST_TIME, 'ISk5\\2MT382-1000'),
            'dsmr_version__0': (TEST_TIME, '5.0'),
            'e_use_lo_cum__kWh': (TEST_TIME, '123456.789'),
            'e_use_hi_cum__kWh': (TEST_TIME, '789.012'),
            'e_ret_lo_cum__kWh': (TEST_TIME, '12.345'),
            'e_ret_hi_cum__kWh': (TEST_TIME, '23.456'),
            'g_use_cum__m3': (TEST_TIME - 300, '12785.123'),
        }, self._values(reading))

    def test_dsmr42_values(self):
        telegram = parse_p1_telegram(build_telegram(
            'KFM5KAIFA-METER', DSMR42_LINES, with_crc=True))
        values = self._values(telegram_to_reading(telegram, TZ))
        self.assertEqual('4.2', values['dsmr_version__0'][1])
        self.assertEqual('2345.500', values['e_use_hi_cum__kWh'][1])
        self.assertEqual((TEST_TIME - 3600, '981.443'),
                         values['g_use_cum__m3'])

    def test_dsmr3_needs_a_timestamp(self):
        telegram = parse_p1_telegram(build_telegram(
            'XMX5XMXABCE100129872', DSMR3_LINES, with_crc=False))
        with self.assertRaises(TelegramStructureError):
            telegram_to_reading(telegram, TZ)

    def test_dsmr3_with_reader_timestamp(self):
        lines = ['0-0:1.0.0(241021120000)'] + DSMR3_LINES
        telegram = parse_p1_telegram(build_telegram(
            'XMX5XMXABCE100129872', lines, with_crc=False))
        values = self._values(telegram_to_reading(telegram, TZ))
        self.assertEqual((TEST_TIME - 3600, '646.531'),
                         values['g_use_cum__m3'])
        self.assertEqual((TEST_TIME, '185.000'), values['e_use_lo_cum__kWh'])
        self.assertNotIn('dsmr_version__0', values)

    def test_bad_object_is_skipped_not_fatal(self):
        lines = list(DSMR5_LINES)
        lines[3] = '1-0:1.8.1(-5.000*kWh)'
        telegram = parse_p1_telegram(build_telegram(
            'ISk5\\2MT382-1000', lines, with_crc=True))
        with self.assertLogs('datagear.p1', level='WARNING'):
            values = self._values(telegram_to_reading(telegram, TZ))
        self.assertNotIn('e_use_lo_cum__kWh', values)
        self.assertIn('e_use_hi_cum__kWh', values)

    def test_default_map(self):
        mapping = default_obis_map()
        self.assertEqual('0-0:1.0.0', mapping.timestamp)
        self.assertEqual('g_use_cum__m3', mapping.property_for('0-2:24.2.1'))
        self.assertIsNone(mapping.property_for('1-0:1.7.0'))


class TestRecordedTelegrams(unittest.TestCase):

    def setUp(self):
        path = os.path.join(TELEGRAM_DIR, 'expected.yaml')
        with open(path, encoding='utf-8') as handle:
            self.expected = yaml.safe_load(handle)

    def read(self, name):
        with open(os.path.join(TELEGRAM_DIR, name), 'rb') as handle:
            return handle.read()

    def test_five_per_version(self):
        for prefix in ['dsmr30_', 'dsmr42_', 'dsmr50_']:
            names = [n for n in self.expected if n.startswith(prefix)]
            self.assertGreaterEqual(len(names), 5, prefix)

    def test_readings_are_exact(self):
        for name, want in sorted(self.expected.items()):
            with self.subTest(telegram=name):
                raw = self.read(name)
                self.assertEqual(
                    CrcStatus(want['crc']), verify_telegram_crc(raw).status)
                reading = telegram_to_reading(parse_p1_telegram(raw), TZ)
                self.assertEqual(want['telegram_time'], reading.telegram_time)
                self.assertEqual(
                    {p: tuple(v) for p, v in want['measurements'].items()},
                    {m.property: (m.time, m.value)
                     for m in reading.measurements})
