"""
HTTP routes of the campaign server. Handlers decode JSON, authenticate
the bearer token and run the blocking service call in the default
executor.
"""
import asyncio
import functools
import logging
from typing import Any, Awaitable, Callable, Dict, Optional, TypeVar
from aiohttp import web
from .codec import (
    account_status_to_json,
    account_to_json,
    app_to_json,
    campaign_to_json,
    error_to_json,
    export_to_csv,
    fetch,
    fetch_optional,
    fleet_to_json,
    ingest_to_json,
    measurements_to_json,
    record_from_json,
    upload_from_json
)
from .domain import Principal
from .errors import DataGearError, ValidationError
from .service import CampaignService

logger = logging.getLogger(__name__)

SERVICE_KEY = web.AppKey('service', CampaignService)

T = TypeVar('T')
Handler = Callable[[web.Request], Awaitable[web.StreamResponse]]


@web.middleware
async def error_middleware(
        request: web.Request,
        handler: Handler) -> web.StreamResponse:
    try:
        return await handler(request)
    except DataGearError as e:
        logger.warning(
            f'{request.method} {request.path} -> {e.status} {e.code}')
        return web.json_response(error_to_json(e), status=e.status)


def _bearer(request: web.Request) -> Optional[str]:
    header = request.headers.get('Authorization', '')
    scheme, _, token = header.partition(' ')
    if scheme.lower() != 'bearer' or not token.strip():
        return None
    return token.strip()


async def _body(request: web.Request) -> Dict[str, Any]:
    try:
        body = await request.json()
    except ValueError:
        raise ValidationError('request body is not valid JSON')
    if not isinstance(body, dict):
        raise ValidationError('request body must be a JSON object')
    return body


def _int_param(
        request: web.Request,
        name: str,
        default: Optional[int] = None) -> Optional[int]:
    text = request.query.get(name)
    if text is None or text == '':
        return default
    try:
        return int(text)
    except ValueError:
        raise ValidationError(f'query parameter {name!r} must be an integer')


def _path_int(request: web.Request, name: str) -> int:
    try:
        return int(request.match_info[name])
    except ValueError:
        raise ValidationError(f'{name} must be an integer')


class Routes:
    def __init__(self, service: CampaignService) -> None:
        self.service = service

    async def _call(self, func: Callable[..., T], *args: Any) -> T:
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(
            None, functools.partial(func, *args))

    async def _principal(self, request: web.Request) -> Principal:
        return await self._call(self.service.authenticate, _bearer(request))

    async def create_app(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        app = await self._call(
            self.service.create_app, principal, fetch(body, 'name', str))
        return web.json_response(app_to_json(app), status=201)

    async def list_apps(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        apps = await self._call(self.service.list_apps, principal)
        return web.json_response({'apps': [app_to_json(a) for a in apps]})

    async def create_campaign(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        sources = fetch(body, 'data_source_list', list)
        if not all(isinstance(s, str) for s in sources):
            raise ValidationError('data_source_list must list type names')
        multiplier = body.get('overdue_multiplier')
        if multiplier is not None and not isinstance(multiplier, (int, float)):
            raise ValidationError('overdue_multiplier must be a number')
        campaign = await self._call(
            self.service.create_campaign,
            principal,
            fetch(body, 'app_id', int),
            fetch(body, 'name', str),
            sources,
            multiplier)
        return web.json_response(campaign_to_json(campaign), status=201)

    async def list_campaigns(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        campaigns = await self._call(self.service.list_campaigns, principal)
        return web.json_response(
            {'campaigns': [campaign_to_json(c) for c in campaigns]})

    async def list_accounts(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        accounts = await self._call(
            self.service.list_accounts, principal,
            _path_int(request, 'campaign_id'))
        return web.json_response(
            {'accounts': [account_to_json(a) for a in accounts]})

    async def fleet_status(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        fleet = await self._call(
            self.service.fleet_status, principal,
            _path_int(request, 'campaign_id'), _int_param(request, 'at'))
        return web.json_response(fleet_to_json(fleet))

    async def create_account(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        token = await self._call(
            self.service.create_account, principal,
            fetch(body, 'campaign_id', int))
        return web.json_response({
            'account_id': token.account_id,
            'activation_token': token.token,
        }, status=201)

    async def activate_account(self, request: web.Request) -> web.Response:
        body = await _body(request)
        session, campaign = await self._call(
            self.service.activate_account,
            fetch(body, 'activation_token', str))
        return web.json_response({
            'session_token': session.token,
            'account_id': session.principal.subject,
            'campaign': campaign_to_json(campaign),
        })

    async def register_device(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        record = await self._call(
            self.service.register_device,
            principal,
            fetch(body, 'device_name', str),
            fetch(body, 'device_type', str),
            fetch(body, 'pop', str))
        return web.json_response({
            'device_id': record.device_id,
            'device_name': record.device_name,
            'device_type': record.type_name,
        }, status=201)

    async def activate_device(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        session = await self._call(
            self.service.activate_device,
            principal,
            fetch(body, 'device_name', str),
            fetch(body, 'pop', str),
            fetch_optional(body, 'upload_interval', int))
        return web.json_response({'session_token': session.token})

    async def upload(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        upload, device_name = upload_from_json(await _body(request))
        result = await self._call(
            self.service.ingest_upload, principal, upload, device_name)
        return web.json_response(ingest_to_json(result))

    async def energy_query(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        source, measurements = await self._call(
            self.service.ingest_energy_query,
            principal,
            fetch(body, 'query_kind', str),
            fetch(body, 'payload', dict))
        return web.json_response({
            'source_id': source.source_id,
            'measurements': measurements_to_json(measurements),
        }, status=201)

    async def activate_cloud_feed(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        authorization_id = await self._call(
            self.service.activate_cloud_feed,
            principal,
            fetch(body, 'feed_type', str))
        return web.json_response(
            {'authorization_id': authorization_id}, status=201)

    async def status(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        status = await self._call(
            self.service.data_source_status, principal,
            _int_param(request, 'at'))
        return web.json_response(account_status_to_json(status))

    async def import_batch(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        records = [
            record_from_json(r) for r in fetch(body, 'records', list)]
        result = await self._call(
            self.service.import_batch,
            principal,
            fetch(body, 'campaign_id', int),
            records)
        return web.json_response(ingest_to_json(result))

    async def export(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        campaign_id = _int_param(request, 'campaign_id')
        if campaign_id is None:
            raise ValidationError('query parameter campaign_id is required')
        rows = await self._call(
            self.service.export_measurements,
            principal,
            campaign_id,
            request.query.get('account_id') or None,
            _int_param(request, 'from'),
            _int_param(request, 'to'))
        return web.Response(
            text=export_to_csv(rows), content_type='text/csv',
            charset='utf-8')

    async def revoke_session(self, request: web.Request) -> web.Response:
        principal = await self._principal(request)
        body = await _body(request)
        await self._call(
            self.service.revoke_session,
            principal,
            fetch(body, 'session_token', str))
        return web.json_response({'revoked': True})


def make_app(service: CampaignService) -> web.Application:
    app = web.Application(middlewares=[error_middleware])
    app[SERVICE_KEY] = service
    routes = Routes(service)
    app.router.add_post('/app', routes.create_app)
    app.router.add_get('/app', routes.list_apps)
    app.router.add_post('/campaign', routes.create_campaign)
    app.router.add_get('/campaign', routes.list_campaigns)
    app.router.add_get(
        '/campaign/{campaign_id}/accounts', routes.list_accounts)
    app.router.add_get('/campaign/{campaign_id}/status', routes.fleet_status)
    app.router.add_post('/account', routes.create_account)
    app.router.add_post('/account/activate', routes.activate_account)
    app.router.add_post('/device', routes.register_device)
    app.router.add_post('/device/activate', routes.activate_device)
    app.router.add_post('/upload', routes.upload)
    app.router.add_post('/energyquery', routes.energy_query)
    app.router.add_post('/cloudfeed/activate', routes.activate_cloud_feed)
    app.router.add_get('/status', routes.status)
    app.router.add_post('/import', routes.import_batch)
    app.router.add_get('/export', routes.export)
    app.router.add_post('/session/revoke', routes.revoke_session)
    return app
