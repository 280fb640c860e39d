import aiohttp
from aiohttp import ClientSession
from aioresponses import aioresponses
from aiounittest import AsyncTestCase
from unittest.mock import Mock
from datagear.api import HttpServerApi, LocalServerApi
from datagear.clientsession import ClientSessionFactory
from datagear.common import ClientConfig
from datagear.domain import ImportRecord, Measurement, Upload
from datagear.errors import ApiError, ConfigurationError
from datagear.service import CampaignService
from datagear.store import SqliteStore

TEST_URL = 'http://test.com'
TEST_TIME = 1729504800
TEST_ADMIN_TOKEN = 'admin-secret'
TEST_CAMPAIGN = {
    'campaign_id': 3, 'app_id': 1, 'name': 'pilot', 'activatable': True,
    'overdue_multiplier': None,
    'data_source_list': [{'type_name': 'living-room-module'}]}


class TestHttpServerApi(AsyncTestCase):

    def setUp(self):
        self.config = ClientConfig()
        self.config.server_url = TEST_URL
        self.config.admin_token = TEST_ADMIN_TOKEN
        self.factory = Mock(spec=ClientSessionFactory)

    def api(self):
        self.factory.get_client_session.return_value = ClientSession()
        return HttpServerApi(self.config, self.factory)

    @aioresponses()
    async def test_create_campaign(self, m):
        m.post(f'{TEST_URL}/campaign', status=201, payload=TEST_CAMPAIGN)
        async with self.api() as api:
            campaign = await api.create_campaign(
                1, 'pilot', ['living-room-module'])
        self.assertEqual(3, campaign.campaign_id)
        self.assertEqual(['living-room-module'], campaign.type_names())
        (method, url), calls = next(iter(m.requests.items()))
        self.assertEqual('POST', method)
        kwargs = calls[0].kwargs
        self.assertEqual(
            f'Bearer {TEST_ADMIN_TOKEN}', kwargs['headers']['Authorization'])
        self.assertEqual(['living-room-module'],
                         kwargs['json']['data_source_list'])

    @aioresponses()
    async def test_activate_account_sends_no_bearer(self, m):
        m.post(f'{TEST_URL}/account/activate', payload={
            'session_token': 'sess', 'account_id': 'acc',
            'campaign': TEST_CAMPAIGN})
        async with self.api() as api:
            session, campaign = await api.activate_account('tok')
        self.assertEqual('sess', session)
        self.assertEqual('pilot', campaign.name)
        calls = next(iter(m.requests.values()))
        self.assertEqual({}, calls[0].kwargs['headers'])

    @aioresponses()
    async def test_upload_groups_by_property(self, m):
        m.post(f'{TEST_URL}/upload',
               payload={'stored': 2, 'duplicates': 1})
        upload = Upload(None, TEST_TIME, (
            Measurement('co2__ppm', TEST_TIME - 600, '400'),
            Measurement('co2__ppm', TEST_TIME, '410'),
            Measurement('heartbeat__0', TEST_TIME, '1')))
        async with self.api() as api:
            result = await api.upload('dev', upload, 'sat-1')
        self.assertEqual((2, 1), (result.stored, result.duplicates))
        body = next(iter(m.requests.values()))[0].kwargs['json']
        self.assertEqual('sat-1', body['device_name'])
        self.assertEqual(
            ['co2__ppm', 'heartbeat__0'],
            [g['property_name'] for g in body['property_measurements']])

    @aioresponses()
    async def test_error_body_becomes_api_error(self, m):
        m.post(f'{TEST_URL}/account/activate', status=409, payload={
            'error': 'token_consumed', 'message': 'already used'})
        async with self.api() as api:
            with self.assertRaises(ApiError) as context:
                await api.activate_account('tok')
        self.assertEqual(409, context.exception.status)
        self.assertEqual('token_consumed', context.exception.code)
        self.assertEqual('/account/activate', context.exception.path)

    @aioresponses()
    async def test_plain_error_body(self, m):
        m.get(f'{TEST_URL}/app', status=502, body='bad gateway')
        async with self.api() as api:
            with self.assertRaises(ApiError) as context:
                await api.list_apps()
        self.assertEqual(502, context.exception.status)
        self.assertEqual('http', context.exception.code)

    @aioresponses()
    async def test_unreachable(self, m):
        m.get(f'{TEST_URL}/app',
              exception=aiohttp.ClientConnectionError('refused'))
        async with self.api() as api:
            with self.assertRaises(ApiError) as context:
                await api.list_apps()
        self.assertEqual(0, context.exception.status)
        self.assertEqual('unreachable', context.exception.code)

    @aioresponses()
    async def test_export_returns_text(self, m):
        m.get(f'{TEST_URL}/export?campaign_id=3&from=10&to=20',
              body='account,source\r\n')
        async with self.api() as api:
            text = await api.export(3, start=10, end=20)
        self.assertEqual('account,source\r\n', text)

    async def test_admin_token_required(self):
        self.config.admin_token = None
        api = HttpServerApi(self.config, self.factory)
        with self.assertRaises(ConfigurationError):
            await api.list_apps()
        self.factory.get_client_session.assert_not_called()


class TestLocalServerApi(AsyncTestCase):

    def setUp(self):
        self.store = SqliteStore()
        self.service = CampaignService(
            self.store, TEST_ADMIN_TOKEN, clock=lambda: TEST_TIME)
        self.testObj = LocalServerApi(self.service, TEST_ADMIN_TOKEN)

    def tearDown(self):
        self.store.close()

    async def test_full_flow(self):
        app = await self.testObj.create_app('app')
        campaign = await self.testObj.create_campaign(
            app.app_id, 'pilot', ['living-room-module'])
        token = await self.testObj.create_account(campaign.campaign_id)
        session, _ = await self.testObj.activate_account(token.token)
        await self.testObj.register_device(
            'dev-1', 'living-room-module', 'pop')
        device = await self.testObj.activate_device(session, 'dev-1', 'pop')
        result = await self.testObj.upload(device, Upload(None, TEST_TIME, (
            Measurement('co2__ppm', TEST_TIME, '400'),)))
        self.assertEqual(1, result.stored)
        status = await self.testObj.status(session, TEST_TIME)
        self.assertEqual(TEST_TIME, status.sources[0].latest_measurement_time)
        fleet = await self.testObj.fleet_status(campaign.campaign_id)
        self.assertEqual(0, fleet.overdue_count())
        text = await self.testObj.export(campaign.campaign_id)
        self.assertIn(f',co2__ppm,ppm,{TEST_TIME},400', text)

    async def test_rejections_are_api_errors(self):
        with self.assertRaises(ApiError) as context:
            await self.testObj.activate_account('nope')
        self.assertEqual(404, context.exception.status)
        with self.assertRaises(ApiError) as context:
            await self.testObj.status('nope')
        self.assertEqual('unauthorized', context.exception.code)
        with self.assertRaises(ApiError) as context:
            await self.testObj.create_campaign(99, 'x', [])
        self.assertEqual(404, context.exception.status)

    async def test_import_batch(self):
        app = await self.testObj.create_app('app')
        campaign = await self.testObj.create_campaign(
            app.app_id, 'pilot', ['living-room-module'])
        result = await self.testObj.import_batch(campaign.campaign_id, [
            ImportRecord('legacy', 'old', 'power__W', 'W', TEST_TIME, '3')])
        self.assertEqual(1, result.stored)
        accounts = await self.testObj.list_accounts(campaign.campaign_id)
        self.assertEqual(['legacy'], [a.account_id for a in accounts])

    async def test_admin_token_required(self):
        api = LocalServerApi(self.service, None)
        with self.assertRaises(ConfigurationError):
            await api.list_apps()
