"""
Client view of the campaign server. HttpServerApi talks to a remote
server; LocalServerApi drives an in-process CampaignService through the
same codec. Both raise ApiError for any rejection.
"""
import asyncio
import logging
from abc import ABC, abstractmethod
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Optional,
    Sequence,
    Tuple,
    TypeVar
)
from urllib.parse import urljoin
import aiohttp
from .clientsession import ClientSessionFactory, DefaultClientSessionFactory
from .codec import (
    Json,
    account_from_json,
    account_status_from_json,
    app_from_json,
    campaign_from_json,
    error_from_json,
    export_to_csv,
    fetch,
    fleet_from_json,
    ingest_from_json,
    record_to_json,
    upload_from_json,
    upload_to_json
)
from .common import ClientConfig
from .domain import (
    Account,
    AccountStatus,
    ActivationToken,
    App,
    Campaign,
    FleetStatus,
    ImportRecord,
    IngestResult,
    Measurement,
    Upload
)
from .errors import ApiError, ConfigurationError, DataGearError
from .service import CampaignService

logger = logging.getLogger(__name__)

T = TypeVar('T')


class ServerApi(ABC):
    """Every campaign server operation a deployer, app or device uses."""

    @abstractmethod  # pragma: no mutate
    async def create_app(self, name: str) -> App:
        pass

    @abstractmethod  # pragma: no mutate
    async def list_apps(self) -> List[App]:
        pass

    @abstractmethod  # pragma: no mutate
    async def create_campaign(
            self,
            app_id: int,
            name: str,
            data_source_list: Sequence[str],
            overdue_multiplier: Optional[float] = None) -> Campaign:
        pass

    @abstractmethod  # pragma: no mutate
    async def list_campaigns(self) -> List[Campaign]:
        pass

    @abstractmethod  # pragma: no mutate
    async def create_account(self, campaign_id: int) -> ActivationToken:
        pass

    @abstractmethod  # pragma: no mutate
    async def list_accounts(self, campaign_id: int) -> List[Account]:
        pass

    @abstractmethod  # pragma: no mutate
    async def fleet_status(
            self,
            campaign_id: int,
            at: Optional[int] = None) -> FleetStatus:
        pass

    @abstractmethod  # pragma: no mutate
    async def register_device(
            self,
            device_name: str,
            device_type: str,
            pop: str) -> int:
        pass

    @abstractmethod  # pragma: no mutate
    async def activate_account(self, token: str) -> Tuple[str, Campaign]:
        """Exchange an activation token for (session token, campaign)."""

    @abstractmethod  # pragma: no mutate
    async def activate_device(
            self,
            session: str,
            device_name: str,
            pop: str,
            upload_interval: Optional[int] = None) -> str:
        pass

    @abstractmethod  # pragma: no mutate
    async def upload(
            self,
            session: str,
            upload: Upload,
            device_name: Optional[str] = None) -> IngestResult:
        pass

    @abstractmethod  # pragma: no mutate
    async def energy_query(
            self,
            session: str,
            query_kind: str,
            payload: Dict[str, Any]) -> List[Measurement]:
        pass

    @abstractmethod  # pragma: no mutate
    async def activate_cloud_feed(self, session: str, feed_type: str) -> int:
        pass

    @abstractmethod  # pragma: no mutate
    async def status(
            self,
            session: str,
            at: Optional[int] = None) -> AccountStatus:
        pass

    @abstractmethod  # pragma: no mutate
    async def import_batch(
            self,
            campaign_id: int,
            records: Sequence[ImportRecord]) -> IngestResult:
        pass

    @abstractmethod  # pragma: no mutate
    async def export(
            self,
            campaign_id: int,
            account_id: Optional[str] = None,
            start: Optional[int] = None,
            end: Optional[int] = None) -> str:
        """Long-format CSV text of the selected measurements."""

    @abstractmethod  # pragma: no mutate
    async def revoke_session(self, token: str) -> None:
        pass

    async def close(self) -> None:
        pass

    async def __aenter__(self) -> 'ServerApi':
        return self

    async def __aexit__(self, *exc_info: Any) -> None:
        await self.close()


def _measurements(items: List[Json]) -> List[Measurement]:
    return [
        Measurement(
            fetch(item, 'property', str),
            fetch(item, 'time', int),
            fetch(item, 'value', str))
        for item in items]


class HttpServerApi(ServerApi):
    def __init__(
            self,
            config: ClientConfig,
            sessionfactory: Optional[ClientSessionFactory] = None) -> None:
        self.config = config
        self.sessionfactory: ClientSessionFactory = \
            sessionfactory or DefaultClientSessionFactory()
        self._client: Any = None

    def _session(self) -> Any:
        if self._client is None:
            self._client = self.sessionfactory.get_client_session(self.config)
        return self._client

    def _admin(self) -> str:
        if not self.config.admin_token:
            raise ConfigurationError('admin token is not configured')
        return self.config.admin_token

    async def _request(
            self,
            method: str,
            path: str,
            token: Optional[str],
            body: Optional[Json] = None,
            params: Optional[Dict[str, str]] = None,
            text: bool = False) -> Any:
        url = urljoin(self.config.server_url.rstrip('/') + '/', path[1:])
        headers = {'Authorization': f'Bearer {token}'} if token else {}
        try:
            async with self._session().request(
                    method, url, json=body, params=params,
                    headers=headers) as resp:
                if resp.status >= 400:
                    try:
                        payload = await resp.json(content_type=None)
                    except ValueError:
                        payload = None
                    raise error_from_json(resp.status, payload, path)
                if text:
                    return await resp.text()
                return await resp.json(content_type=None)
        except (aiohttp.ClientError, asyncio.TimeoutError) as e:
            logger.error(f'{method} {path} failed: {type(e).__name__}')
            raise ApiError(0, 'unreachable', str(e) or type(e).__name__, path)

    async def create_app(self, name: str) -> App:
        body = await self._request(
            'POST', '/app', self._admin(), {'name': name})
        return app_from_json(body)

    async def list_apps(self) -> List[App]:
        body = await self._request('GET', '/app', self._admin())
        return [app_from_json(a) for a in fetch(body, 'apps', list)]

    async def create_campaign(
            self,
            app_id: int,
            name: str,
            data_source_list: Sequence[str],
            overdue_multiplier: Optional[float] = None) -> Campaign:
        body = await self._request('POST', '/campaign', self._admin(), {
            'app_id': app_id,
            'name': name,
            'data_source_list': list(data_source_list),
            'overdue_multiplier': overdue_multiplier,
        })
        return campaign_from_json(body)

    async def list_campaigns(self) -> List[Campaign]:
        body = await self._request('GET', '/campaign', self._admin())
        return [
            campaign_from_json(c) for c in fetch(body, 'campaigns', list)]

    async def create_account(self, campaign_id: int) -> ActivationToken:
        body = await self._request(
            'POST', '/account', self._admin(), {'campaign_id': campaign_id})
        return ActivationToken(
            fetch(body, 'activation_token', str),
            fetch(body, 'account_id', str))

    async def list_accounts(self, campaign_id: int) -> List[Account]:
        body = await self._request(
            'GET', f'/campaign/{campaign_id}/accounts', self._admin())
        return [account_from_json(a) for a in fetch(body, 'accounts', list)]

    async def fleet_status(
            self,
            campaign_id: int,
            at: Optional[int] = None) -> FleetStatus:
        params = {'at': str(at)} if at is not None else None
        body = await self._request(
            'GET', f'/campaign/{campaign_id}/status', self._admin(),
            params=params)
        return fleet_from_json(body)

    async def register_device(
            self,
            device_name: str,
            device_type: str,
            pop: str) -> int:
        body = await self._request('POST', '/device', self._admin(), {
            'device_name': device_name,
            'device_type': device_type,
            'pop': pop,
        })
        return int(fetch(body, 'device_id', int))

    async def activate_account(self, token: str) -> Tuple[str, Campaign]:
        body = await self._request(
            'POST', '/account/activate', None, {'activation_token': token})
        return (
            fetch(body, 'session_token', str),
            campaign_from_json(fetch(body, 'campaign', dict)))

    async def activate_device(
            self,
            session: str,
            device_name: str,
            pop: str,
            upload_interval: Optional[int] = None) -> str:
        payload: Json = {'device_name': device_name, 'pop': pop}
        if upload_interval is not None:
            payload['upload_interval'] = upload_interval
        body = await self._request(
            'POST', '/device/activate', session, payload)
        return str(fetch(body, 'session_token', str))

    async def upload(
            self,
            session: str,
            upload: Upload,
            device_name: Optional[str] = None) -> IngestResult:
        body = await self._request(
            'POST', '/upload', session, upload_to_json(upload, device_name))
        return ingest_from_json(body)

    async def energy_query(
            self,
            session: str,
            query_kind: str,
            payload: Dict[str, Any]) -> List[Measurement]:
        body = await self._request(
            'POST', '/energyquery', session,
            {'query_kind': query_kind, 'payload': payload})
        return _measurements(fetch(body, 'measurements', list))

    async def activate_cloud_feed(self, session: str, feed_type: str) -> int:
        body = await self._request(
            'POST', '/cloudfeed/activate', session, {'feed_type': feed_type})
        return int(fetch(body, 'authorization_id', int))

    async def status(
            self,
            session: str,
            at: Optional[int] = None) -> AccountStatus:
        params = {'at': str(at)} if at is not None else None
        body = await self._request('GET', '/status', session, params=params)
        return account_status_from_json(body)

    async def import_batch(
            self,
            campaign_id: int,
            records: Sequence[ImportRecord]) -> IngestResult:
        body = await self._request('POST', '/import', self._admin(), {
            'campaign_id': campaign_id,
            'records': [record_to_json(r) for r in records],
        })
        return ingest_from_json(body)

    async def export(
            self,
            campaign_id: int,
            account_id: Optional[str] = None,
            start: Optional[int] = None,
            end: Optional[int] = None) -> str:
        params = {'campaign_id': str(campaign_id)}
        if account_id:
            params['account_id'] = account_id
        if start is not None:
            params['from'] = str(start)
        if end is not None:
            params['to'] = str(end)
        return str(await self._request(
            'GET', '/export', self._admin(), params=params, text=True))

    async def revoke_session(self, token: str) -> None:
        await self._request(
            'POST', '/session/revoke', self._admin(), {'session_token': token})

    async def close(self) -> None:
        if self._client is not None:
            await self._client.close()
            self._client = None


class LocalServerApi(ServerApi):
    """In-process transport; bodies pass through the same codec."""

    def __init__(
            self,
            service: CampaignService,
            admin_token: Optional[str]) -> None:
        self.service = service
        self.admin_token = admin_token

    def _call(
            self,
            token: Optional[str],
            func: Callable[..., T],
            *args: Any) -> T:
        try:
            principal = self.service.authenticate(token)
            return func(principal, *args)
        except ApiError:
            raise
        except DataGearError as e:
            raise ApiError(e.status, e.code, e.message)

    def _admin(self) -> str:
        if not self.admin_token:
            raise ConfigurationError('admin token is not configured')
        return self.admin_token

    async def create_app(self, name: str) -> App:
        return self._call(self._admin(), self.service.create_app, name)

    async def list_apps(self) -> List[App]:
        return self._call(self._admin(), self.service.list_apps)

    async def create_campaign(
            self,
            app_id: int,
            name: str,
            data_source_list: Sequence[str],
            overdue_multiplier: Optional[float] = None) -> Campaign:
        return self._call(
            self._admin(), self.service.create_campaign, app_id, name,
            list(data_source_list), overdue_multiplier)

    async def list_campaigns(self) -> List[Campaign]:
        return self._call(self._admin(), self.service.list_campaigns)

    async def create_account(self, campaign_id: int) -> ActivationToken:
        return self._call(
            self._admin(), self.service.create_account, campaign_id)

    async def list_accounts(self, campaign_id: int) -> List[Account]:
        return self._call(
            self._admin(), self.service.list_accounts, campaign_id)

    async def fleet_status(
            self,
            campaign_id: int,
            at: Optional[int] = None) -> FleetStatus:
        return self._call(
            self._admin(), self.service.fleet_status, campaign_id, at)

    async def register_device(
            self,
            device_name: str,
            device_type: str,
            pop: str) -> int:
        record = self._call(
            self._admin(), self.service.register_device, device_name,
            device_type, pop)
        return record.device_id

    async def activate_account(self, token: str) -> Tuple[str, Campaign]:
        try:
            session, campaign = self.service.activate_account(token)
        except DataGearError as e:
            raise ApiError(e.status, e.code, e.message)
        return session.token, campaign

    async def activate_device(
            self,
            session: str,
            device_name: str,
            pop: str,
            upload_interval: Optional[int] = None) -> str:
        token = self._call(
            session, self.service.activate_device, device_name, pop,
            upload_interval)
        return token.token

    async def upload(
            self,
            session: str,
            upload: Upload,
            device_name: Optional[str] = None) -> IngestResult:
        try:
            decoded, relayed = upload_from_json(
                upload_to_json(upload, device_name))
        except DataGearError as e:
            raise ApiError(e.status, e.code, e.message)
        return self._call(
            session, self.service.ingest_upload, decoded, relayed)

    async def energy_query(
            self,
            session: str,
            query_kind: str,
            payload: Dict[str, Any]) -> List[Measurement]:
        _, measurements = self._call(
            session, self.service.ingest_energy_query, query_kind,
            dict(payload))
        return measurements

    async def activate_cloud_feed(self, session: str, feed_type: str) -> int:
        return self._call(
            session, self.service.activate_cloud_feed, feed_type)

    async def status(
            self,
            session: str,
            at: Optional[int] = None) -> AccountStatus:
        return self._call(session, self.service.data_source_status, at)

    async def import_batch(
            self,
            campaign_id: int,
            records: Sequence[ImportRecord]) -> IngestResult:
        return self._call(
            self._admin(), self.service.import_batch, campaign_id,
            list(records))

    async def export(
            self,
            campaign_id: int,
            account_id: Optional[str] = None,
            start: Optional[int] = None,
            end: Optional[int] = None) -> str:
        rows = self._call(
            self._admin(), self.service.export_measurements, campaign_id,
            account_id, start, end)
        return export_to_csv(rows)

    async def revoke_session(self, token: str) -> None:
        self._call(self._admin(), self.service.revoke_session, token)
