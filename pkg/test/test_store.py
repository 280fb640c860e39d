import os
import tempfile
import threading
import unittest
from datagear.domain import (
    ActivationState,
    Measurement,
    Principal,
    PrincipalKind,
    SourceOrigin
)
from datagear.errors import (
    DuplicateNameError,
    TokenConsumedError,
    UnknownTokenError
)
from datagear.store import SqliteStore

TEST_TIME = 1729504800
TEST_TYPES = ['living-room-module', 'weather-zone']


class TestSqliteStore(unittest.TestCase):

    def setUp(self):
        self.testObj = SqliteStore()
        self.app = self.testObj.add_app('app')
        self.campaign = self.testObj.add_campaign(
            self.app.app_id, 'pilot', TEST_TYPES, None)

    def tearDown(self):
        self.testObj.close()

    def test_names_are_unique(self):
        with self.assertRaises(DuplicateNameError):
            self.testObj.add_app('app')
        with self.assertRaises(DuplicateNameError):
            self.testObj.add_campaign(self.app.app_id, 'pilot', [], None)
        self.testObj.add_device('dev-1', 'living-room-module', 'h')
        with self.assertRaises(DuplicateNameError):
            self.testObj.add_device('dev-1', 'living-room-module', 'h')

    def test_campaign_keeps_type_order(self):
        row = self.testObj.get_campaign(self.campaign.campaign_id)
        self.assertEqual(TEST_TYPES, row.type_names)
        self.assertIsNone(self.testObj.get_campaign(99))

    def test_token_is_consumed_once(self):
        self.testObj.add_account('acc', self.campaign.campaign_id, 'tok')
        self.assertEqual(
            ActivationState.PENDING,
            self.testObj.get_account('acc').activation_state)
        self.assertEqual(
            'acc', self.testObj.consume_activation_token('tok', TEST_TIME))
        with self.assertRaises(TokenConsumedError):
            self.testObj.consume_activation_token('tok', TEST_TIME + 1)
        with self.assertRaises(UnknownTokenError):
            self.testObj.consume_activation_token('other', TEST_TIME)
        account = self.testObj.get_account('acc')
        self.assertEqual(ActivationState.ACTIVATED, account.activation_state)
        self.assertEqual(TEST_TIME, account.activated_at)

    def test_concurrent_consumers_one_wins(self):
        self.testObj.add_account('acc', self.campaign.campaign_id, 'tok')
        outcomes = []

        def consume():
            try:
                outcomes.append(
                    self.testObj.consume_activation_token('tok', TEST_TIME))
            except TokenConsumedError:
                outcomes.append(None)

        threads = [threading.Thread(target=consume) for _ in range(8)]
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
        self.assertEqual(['acc'], [o for o in outcomes if o])
        self.assertEqual(7, outcomes.count(None))

    def test_sessions_revoke(self):
        principal = Principal(PrincipalKind.DEVICE, 'dev-1')
        self.testObj.add_session('s', principal, TEST_TIME)
        self.assertEqual(principal, self.testObj.find_session('s'))
        self.assertTrue(self.testObj.revoke_session('s'))
        self.assertFalse(self.testObj.revoke_session('s'))
        self.assertIsNone(self.testObj.find_session('s'))

    def test_bind_device_once(self):
        self.testObj.add_account(
            'acc', self.campaign.campaign_id, None, TEST_TIME)
        device = self.testObj.add_device('dev-1', 'living-room-module', 'h')
        source = self.testObj.bind_device(device.device_id, 'acc', TEST_TIME)
        self.assertEqual('dev-1', source.device_name)
        self.assertEqual(SourceOrigin.DEVICE, source.origin)
        self.assertIsNone(
            self.testObj.bind_device(device.device_id, 'acc', TEST_TIME + 5))
        self.assertEqual(
            TEST_TIME, self.testObj.get_device('dev-1').activated_at)

    def test_upload_is_idempotent_per_key(self):
        self.testObj.add_account(
            'acc', self.campaign.campaign_id, None, TEST_TIME)
        source = self.testObj.ensure_source(
            'acc', 'weather-zone', SourceOrigin.ENERGY_QUERY, TEST_TIME)
        batch = [Measurement('co2__ppm', TEST_TIME, '400'),
                 Measurement('co2__ppm', TEST_TIME + 600, '410')]
        self.assertEqual((2, 0), self.testObj.add_upload(
            source.source_id, TEST_TIME + 600, TEST_TIME, 'upload', batch))
        replay = [Measurement('co2__ppm', TEST_TIME + 600, '999'),
                  Measurement('co2__ppm', TEST_TIME + 1200, '420')]
        self.assertEqual((1, 1), self.testObj.add_upload(
            source.source_id, TEST_TIME + 1200, TEST_TIME, 'upload', replay))
        self.assertEqual(
            (TEST_TIME + 600, '410'),
            self.testObj.latest_value(source.source_id, 'co2__ppm'))
        self.assertEqual(
            TEST_TIME + 1200,
            self.testObj.latest_measurement_time(source.source_id))

    def test_ensure_source_reuses(self):
        self.testObj.add_account(
            'acc', self.campaign.campaign_id, None, TEST_TIME)
        first = self.testObj.ensure_source(
            'acc', 'weather-zone', SourceOrigin.ENERGY_QUERY, TEST_TIME)
        second = self.testObj.ensure_source(
            'acc', 'weather-zone', SourceOrigin.ENERGY_QUERY, TEST_TIME + 9)
        self.assertEqual(first, second)
        self.assertEqual(1, len(self.testObj.list_sources('acc')))

    def test_cloud_feed_authorization_replaced(self):
        self.testObj.add_account(
            'acc', self.campaign.campaign_id, None, TEST_TIME)
        first = self.testObj.replace_cloud_feed_authorization(
            'acc', 'enelogic-stub', TEST_TIME)
        second = self.testObj.replace_cloud_feed_authorization(
            'acc', 'enelogic-stub', TEST_TIME + 1)
        self.assertNotEqual(first, second)
        self.assertEqual(
            [second], self.testObj.active_cloud_feed_authorizations('acc'))

    def test_property_unit_first_wins(self):
        self.assertIsNone(self.testObj.set_property_unit('x', 'p__W', 'W'))
        self.assertEqual(
            'W', self.testObj.set_property_unit('x', 'p__W', 'kW'))
        self.assertEqual({('x', 'p__W'): 'W'}, self.testObj.property_units())

    def test_export_range_is_half_open(self):
        self.testObj.add_account(
            'acc', self.campaign.campaign_id, None, TEST_TIME)
        source = self.testObj.ensure_source(
            'acc', 'weather-zone', SourceOrigin.IMPORT, TEST_TIME)
        self.testObj.add_upload(
            source.source_id, TEST_TIME, TEST_TIME, 'import',
            [Measurement('p__W', TEST_TIME + i, str(i)) for i in range(3)])
        rows = self.testObj.export_rows(
            self.campaign.campaign_id, None, TEST_TIME, TEST_TIME + 2)
        self.assertEqual([TEST_TIME, TEST_TIME + 1], [r[3] for r in rows])
        self.assertEqual([], self.testObj.export_rows(
            self.campaign.campaign_id, 'nobody', None, None))


class TestSqliteStoreOnDisk(unittest.TestCase):

    def test_survives_reopen(self):
        with tempfile.TemporaryDirectory() as directory:
            path = os.path.join(directory, 'store.sqlite')
            store = SqliteStore(path)
            store.add_app('kept')
            store.close()
            store = SqliteStore(path)
            self.assertEqual(['kept'], [a.name for a in store.list_apps()])
            self.assertTrue(any('kept' in line for line in store.dump()))
            store.close()
