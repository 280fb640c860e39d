import random
import unittest
from datagear.catalog import INTEGRATED_BOILER_MONITOR
from datagear.errors import ParityError, ReplayFormatError
from datagear.opentherm import (
    DataId,
    FrameSampler,
    MsgType,
    OpenThermFrame,
    decode_f88,
    decode_opentherm_frame,
    encode_f88,
    encode_opentherm_frame,
    frames_to_measurements,
    make_opentherm_frame,
    read_frame_replay
)

# 2024-10-21 00:00 UTC, on a five minute boundary
TEST_START = 1729468800


def reply(data_id, value, msg_type=MsgType.READ_ACK):
    return make_opentherm_frame(msg_type, data_id, value)


class TestFrames(unittest.TestCase):

    def test_decode_fields(self):
        # READ_ACK, data-id 25 (boiler water temp), 0x3780 = 55.5 degC
        word = encode_opentherm_frame(reply(DataId.BOILER_WATER_TEMP, 0x3780))
        frame = decode_opentherm_frame(word)
        self.assertEqual(MsgType.READ_ACK, frame.msg_type)
        self.assertEqual(25, frame.data_id)
        self.assertEqual(0x37, frame.hb)
        self.assertEqual(0x80, frame.lb)
        self.assertEqual(55.5, decode_f88(frame.data_value))

    def test_parity_violation(self):
        word = encode_opentherm_frame(reply(DataId.ROOM_TEMP, 0x1400))
        with self.assertRaises(ParityError) as cm:
            decode_opentherm_frame(word ^ 0x1)
        self.assertEqual(word ^ 0x1, cm.exception.word)

    def test_random_parity_valid_words_round_trip(self):
        rng = random.Random(3)
        for _ in range(10000):
            word = rng.getrandbits(32)
            if bin(word).count('1') % 2:
                word ^= 0x80000000
            self.assertEqual(
                word, encode_opentherm_frame(decode_opentherm_frame(word)))

    def test_made_frames_have_even_parity(self):
        for data_id in DataId:
            frame = make_opentherm_frame(MsgType.READ_DATA, data_id, 0x1234)
            word = encode_opentherm_frame(frame)
            self.assertEqual(0, bin(word).count('1') % 2)

    def test_f88_all_inputs(self):
        for value in range(65536):
            signed = value - 65536 if value >= 32768 else value
            self.assertEqual(signed / 256, decode_f88(value))

    def test_encode_f88(self):
        self.assertEqual(0x3780, encode_f88(55.5))
        self.assertEqual(0xFF00, encode_f88(-1.0))
        self.assertEqual(-1.0, decode_f88(encode_f88(-1.0)))


class TestFrameSampler(unittest.TestCase):

    def setUp(self):
        self.testObj = FrameSampler()

    def test_status_flags(self):
        frame = reply(DataId.STATUS, 0x0300 | 0x0A)
        values = {m.property: m.value for m in self.testObj.add(30, frame)}
        self.assertEqual({
            'isBoilerFlameOn': '1',
            'isCentralHeatingModeOn': '1',
            'isDomesticHotWaterModeOn': '0',
        }, values)

    def test_capacity_and_modulation(self):
        frame = reply(DataId.MAX_CAPACITY_MIN_MODULATION, 24 << 8 | 20)
        values = {m.property: m.value for m in self.testObj.add(0, frame)}
        self.assertEqual(
            {'maxBoilerCap': '24', 'minModulationLevel': '20'}, values)
        frame = reply(DataId.REL_MODULATION_LEVEL, encode_f88(45.3))
        self.assertEqual(
            '45', self.testObj.add(0, frame)[0].value)

    def test_write_ack_counts_as_reply(self):
        frame = reply(DataId.ROOM_SETPOINT, encode_f88(20.0),
                      MsgType.WRITE_ACK)
        measurements = self.testObj.add(300, frame)
        self.assertEqual('roomSetpointTemp', measurements[0].property)
        self.assertEqual('20.00', measurements[0].value)

    def test_requests_and_unknown_ids_are_counted(self):
        request = make_opentherm_frame(
            MsgType.READ_DATA, DataId.BOILER_WATER_TEMP, 0)
        self.assertEqual([], self.testObj.add(0, request))
        self.assertEqual([], self.testObj.add(0, reply(18, 0x0199)))
        self.assertEqual(1, self.testObj.skipped_non_reply)
        self.assertEqual(1, self.testObj.skipped_unknown)

    def test_one_measurement_per_slot(self):
        frame = reply(DataId.BOILER_WATER_TEMP, encode_f88(55.0))
        times = [t for t in range(0, 60, 5)
                 if self.testObj.add(t, frame)]
        self.assertEqual([0, 10, 20, 30, 40, 50], times)

    def test_replies_closer_than_interval_give_one(self):
        frame = reply(DataId.ROOM_TEMP, encode_f88(20.5))
        first = self.testObj.add(TEST_START + 280, frame)
        second = self.testObj.add(TEST_START + 520, frame)
        self.assertEqual(1, len(first))
        self.assertEqual([], second)
        third = self.testObj.add(TEST_START + 580, frame)
        self.assertEqual([TEST_START + 580], [m.time for m in third])

    def test_regular_stream_day_count(self):
        room = reply(DataId.ROOM_TEMP, encode_f88(20.5))
        water = reply(DataId.BOILER_WATER_TEMP, encode_f88(55.0))
        rooms = sum(len(self.testObj.add(t, room))
                    for t in range(5, 86400, 300))
        waters = sum(len(self.testObj.add(t, water))
                     for t in range(5, 86400, 10))
        self.assertEqual((288, 8640), (rooms, waters))

    def test_frames_are_ordered_before_sampling(self):
        early = reply(DataId.ROOM_TEMP, encode_f88(19.0))
        late = reply(DataId.ROOM_TEMP, encode_f88(21.0))
        measurements = frames_to_measurements([(120, late), (60, early)])
        self.assertEqual(1, len(measurements))
        self.assertEqual((60, '19.00'),
                         (measurements[0].time, measurements[0].value))

    def test_integrated_type(self):
        sampler = FrameSampler(INTEGRATED_BOILER_MONITOR)
        frame = reply(DataId.RETURN_WATER_TEMP, encode_f88(40.25))
        self.assertEqual('40.25', sampler.add(0, frame)[0].value)


class TestReplay(unittest.TestCase):

    def test_reads_lines(self):
        word = encode_opentherm_frame(reply(DataId.ROOM_TEMP, 0x1400))
        frames = read_frame_replay([
            '# recorded on the bus',
            '',
            f'1700000000 {word:08X}',
            f'1700000010 0x{word:08x}  # same again',
        ])
        self.assertEqual([1700000000, 1700000010], [t for t, _ in frames])
        self.assertIsInstance(frames[0][1], OpenThermFrame)

    def test_errors_name_the_line(self):
        word = encode_opentherm_frame(reply(DataId.ROOM_TEMP, 0x1400))
        for bad in ['1700000000', 'soon 00000000', '1700000000 123',
                    '1700000000 GGGGGGGG', f'1700000000 {word ^ 1:08X}']:
            with self.subTest(bad=bad):
                with self.assertRaises(ReplayFormatError) as cm:
                    read_frame_replay(['# header', bad])
                self.assertEqual(2, cm.exception.line_no)
