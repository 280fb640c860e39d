"""
Campaign service: account lifecycle, provisioning, ingestion and data
health, independent of any transport. Every public operation takes the
authenticated principal first.
"""
import hashlib
import hmac
import logging
import re
import secrets
import time
from collections import OrderedDict
from typing import (
    Any,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    Tuple
)
from .catalog import (
    CATALOG,
    HEARTBEAT,
    WEATHER_ZONE_CELL,
    WEATHER_ZONE_TZ,
    Catalog
)
from .common import DEFAULT_OVERDUE_MULTIPLIER
from .domain import (
    Account,
    AccountStatus,
    ActivationState,
    ActivationToken,
    App,
    Campaign,
    DataSourceInstance,
    DataSourceStatus,
    DataSourceType,
    DataSourceVariant,
    DeviceRecord,
    ExportRow,
    FleetStatus,
    ImportRecord,
    IngestResult,
    Measurement,
    Principal,
    PrincipalKind,
    SessionToken,
    SourceOrigin,
    Upload
)
from .errors import (
    DuplicateActivationError,
    ForbiddenError,
    NotActivatableError,
    NotFoundError,
    PrivacyViolationError,
    ProofOfPossessionError,
    UnauthorizedError,
    UnknownDataSourceTypeError,
    UnknownPropertyError,
    ValidationError
)
from .geo import PAYLOAD_FIELDS, check_cell, check_timezone
from .properties import canonical_value, require_property_name
from .store import CampaignRow, Store

logger = logging.getLogger(__name__)

Clock = Callable[[], int]

TOKEN_BYTES = 32
COORDINATE_KEYS = frozenset([
    'lat', 'lon', 'lng', 'latitude', 'longitude', 'coordinates',
    'location', 'geometry'])
_ACCOUNT_ID = re.compile(r'^[A-Za-z0-9][A-Za-z0-9_.-]{0,63}$')
_SOURCE_TYPE = re.compile(r'^[a-z0-9][a-z0-9-]{0,63}$')


def hash_secret(secret: str) -> str:
    return hashlib.sha256(secret.encode('utf-8')).hexdigest()


def wall_clock() -> int:
    return int(time.time())


class CampaignService:
    def __init__(
            self,
            store: Store,
            admin_token: str,
            overdue_multiplier: float = DEFAULT_OVERDUE_MULTIPLIER,
            clock: Optional[Clock] = None,
            catalog: Catalog = CATALOG) -> None:
        if not admin_token:
            raise ValueError('admin token must not be empty')
        self.store = store
        self.overdue_multiplier = overdue_multiplier
        self.clock: Clock = clock or wall_clock
        self.catalog = catalog
        self._admin_token = admin_token

    # auth

    def authenticate(self, bearer: Optional[str]) -> Principal:
        if not bearer:
            raise UnauthorizedError('missing bearer token')
        if hmac.compare_digest(
                bearer.encode('utf-8'), self._admin_token.encode('utf-8')):
            return Principal(PrincipalKind.ADMIN)
        principal = self.store.find_session(hash_secret(bearer))
        if principal is None:
            raise UnauthorizedError('unknown or revoked session token')
        return principal

    def _require(self, principal: Principal, kind: PrincipalKind) -> str:
        if principal.kind is not kind:
            raise UnauthorizedError(f'{kind.value} session required')
        return principal.subject or ''

    def _issue_session(self, principal: Principal) -> SessionToken:
        token = secrets.token_urlsafe(TOKEN_BYTES)
        now = self.clock()
        self.store.add_session(hash_secret(token), principal, now)
        return SessionToken(token, principal, now)

    def revoke_session(self, principal: Principal, token: str) -> None:
        self._require(principal, PrincipalKind.ADMIN)
        if not self.store.revoke_session(hash_secret(token)):
            raise NotFoundError('unknown or already revoked session')
        logger.info('Revoked one session')

    # apps and campaigns

    def create_app(self, principal: Principal, name: str) -> App:
        self._require(principal, PrincipalKind.ADMIN)
        name = self._name(name, 'app')
        app = self.store.add_app(name)
        logger.info(f'Created app {app.app_id} {name!r}')
        return app

    def list_apps(self, principal: Principal) -> List[App]:
        self._require(principal, PrincipalKind.ADMIN)
        return self.store.list_apps()

    def create_campaign(
            self,
            principal: Principal,
            app_id: int,
            name: str,
            data_source_list: Sequence[str],
            overdue_multiplier: Optional[float] = None) -> Campaign:
        self._require(principal, PrincipalKind.ADMIN)
        name = self._name(name, 'campaign')
        if self.store.get_app(app_id) is None:
            raise NotFoundError(f'unknown app {app_id}')
        for type_name in data_source_list:
            self.catalog.lookup(type_name)
        if overdue_multiplier is not None and overdue_multiplier < 1:
            raise ValidationError('overdue multiplier must be at least 1')
        row = self.store.add_campaign(
            app_id, name, list(data_source_list), overdue_multiplier)
        campaign = self._campaign(row)
        if not campaign.activatable:
            logger.warning(
                f'Campaign {campaign.campaign_id} has no data sources and'
                ' is not activatable')
        logger.info(f'Created campaign {campaign.campaign_id} {name!r}')
        return campaign

    def list_campaigns(self, principal: Principal) -> List[Campaign]:
        self._require(principal, PrincipalKind.ADMIN)
        return [self._campaign(row) for row in self.store.list_campaigns()]

    def get_campaign(self, campaign_id: int) -> Campaign:
        row = self.store.get_campaign(campaign_id)
        if row is None:
            raise NotFoundError(f'unknown campaign {campaign_id}')
        return self._campaign(row)

    def _campaign(self, row: CampaignRow) -> Campaign:
        return Campaign(
            row.campaign_id,
            row.app_id,
            row.name,
            tuple(self.catalog.lookup(t) for t in row.type_names),
            row.overdue_multiplier)

    # accounts

    def create_account(
            self,
            principal: Principal,
            campaign_id: int) -> ActivationToken:
        self._require(principal, PrincipalKind.ADMIN)
        campaign = self.get_campaign(campaign_id)
        if not campaign.activatable:
            raise NotActivatableError(
                f'campaign {campaign_id} has no data sources to activate')
        account_id = f'acc-{secrets.token_hex(8)}'
        token = secrets.token_urlsafe(TOKEN_BYTES)
        self.store.add_account(account_id, campaign_id, hash_secret(token))
        logger.info(f'Created account {account_id} in campaign {campaign_id}')
        return ActivationToken(token, account_id)

    def list_accounts(
            self,
            principal: Principal,
            campaign_id: int) -> List[Account]:
        self._require(principal, PrincipalKind.ADMIN)
        self.get_campaign(campaign_id)
        return self.store.list_accounts(campaign_id)

    def activate_account(self, token: str) -> Tuple[SessionToken, Campaign]:
        if not token:
            raise ValidationError('activation token is required')
        account_id = self.store.consume_activation_token(
            hash_secret(token), self.clock())
        account = self._account(account_id)
        campaign = self.get_campaign(account.campaign_id)
        session = self._issue_session(
            Principal(PrincipalKind.ACCOUNT, account_id))
        logger.info(f'Activated account {account_id}')
        return session, campaign

    def _account(self, account_id: str) -> Account:
        account = self.store.get_account(account_id)
        if account is None:
            raise NotFoundError(f'unknown account {account_id}')
        return account

    # devices

    def register_device(
            self,
            principal: Principal,
            device_name: str,
            type_name: str,
            pop: str) -> DeviceRecord:
        self._require(principal, PrincipalKind.ADMIN)
        device_name = self._name(device_name, 'device')
        source_type = self.catalog.lookup(type_name)
        if not source_type.is_device:
            raise ValidationError(f'{type_name} is not a device type')
        if not pop:
            raise ValidationError('proof of possession is required')
        record = self.store.add_device(
            device_name, type_name, hash_secret(pop))
        logger.info(f'Registered device {device_name}')
        return record

    def activate_device(
            self,
            principal: Principal,
            device_name: str,
            pop: str,
            upload_interval: Optional[int] = None) -> SessionToken:
        account_id = self._require(principal, PrincipalKind.ACCOUNT)
        account = self._account(account_id)
        device = self.store.get_device(device_name)
        if device is None:
            raise NotFoundError(f'unknown device {device_name}')
        if not hmac.compare_digest(
                hash_secret(pop or ''), device.pop_hash):
            logger.warning(
                f'Rejected activation of {device_name}: proof of possession'
                ' mismatch')
            raise ProofOfPossessionError('proof of possession does not match')
        if upload_interval is not None and upload_interval <= 0:
            raise ValidationError(
                f'upload interval must be positive, got {upload_interval}')
        campaign = self.get_campaign(account.campaign_id)
        if device.type_name not in campaign.type_names():
            raise ValidationError(
                f'device type {device.type_name} is not part of campaign'
                f' {campaign.campaign_id}')
        source = self.store.bind_device(
            device.device_id, account_id, self.clock(), upload_interval)
        if source is None:
            raise DuplicateActivationError(
                f'device {device_name} has already been activated')
        logger.info(f'Activated device {device_name} for {account_id}')
        return self._issue_session(
            Principal(PrincipalKind.DEVICE, device_name))

    # ingestion

    def ingest_upload(
            self,
            principal: Principal,
            upload: Upload,
            device_name: Optional[str] = None) -> IngestResult:
        subject = self._require(principal, PrincipalKind.DEVICE)
        device = self._activated_device(subject)
        target = device
        if device_name and device_name != device.device_name:
            target = self._relayed_device(device, device_name)
        source = self.store.device_source(target.device_id)
        if source is None:
            raise NotFoundError(f'device {target.device_name} has no source')
        source_type = self.catalog.lookup(target.type_name)
        if not upload.measurements:
            raise ValidationError('upload carries no measurements')
        upload.check_times()
        measurements = self._canonical(source_type, upload.measurements)
        stored, duplicates = self.store.add_upload(
            source.source_id, upload.upload_time, self.clock(), 'upload',
            measurements)
        logger.info(
            f'Upload from {target.device_name}: {stored} stored,'
            f' {duplicates} duplicates')
        return IngestResult(stored, duplicates)

    def _activated_device(self, device_name: str) -> DeviceRecord:
        device = self.store.get_device(device_name)
        if device is None or device.account_id is None:
            raise UnauthorizedError(f'device {device_name} is not activated')
        return device

    def _relayed_device(
            self,
            relay: DeviceRecord,
            device_name: str) -> DeviceRecord:
        satellite = self.store.get_device(device_name)
        if satellite is None:
            raise NotFoundError(f'unknown device {device_name}')
        if satellite.account_id != relay.account_id:
            raise ForbiddenError(
                f'{device_name} is not activated for the relay account')
        if not self.catalog.lookup(satellite.type_name).relayed:
            raise ForbiddenError(f'{device_name} cannot be relayed')
        return satellite

    def _canonical(
            self,
            source_type: DataSourceType,
            measurements: Sequence[Measurement]) -> List[Measurement]:
        result: List[Measurement] = []
        for measurement in measurements:
            descriptor = source_type.descriptor(measurement.property)
            if descriptor is None:
                raise UnknownPropertyError(
                    f'property {measurement.property!r} is not measured by'
                    f' {source_type.type_name}')
            result.append(Measurement(
                measurement.property,
                measurement.time,
                canonical_value(descriptor, measurement.value)))
        return result

    def ingest_energy_query(
            self,
            principal: Principal,
            query_kind: str,
            payload: Mapping[str, Any]
            ) -> Tuple[DataSourceInstance, List[Measurement]]:
        account_id = self._require(principal, PrincipalKind.ACCOUNT)
        if not isinstance(payload, Mapping):
            raise ValidationError('energy query payload must be an object')
        leaked = sorted(
            key for key in payload if str(key).lower() in COORDINATE_KEYS)
        if leaked:
            logger.warning('Rejected energy query carrying coordinates')
            raise PrivacyViolationError(
                f'payload may not carry location fields: {", ".join(leaked)}')
        if set(payload) != PAYLOAD_FIELDS:
            raise ValidationError(
                'weather zone payload must hold exactly cell_id and tz')
        cell_id = check_cell(payload['cell_id'])
        tz = check_timezone(payload['tz'])
        type_name = query_kind.replace('_', '-')
        source_type = self._campaign_source(
            account_id, type_name, DataSourceVariant.ENERGY_QUERY)
        now = self.clock()
        source = self.store.ensure_source(
            account_id, source_type.type_name, SourceOrigin.ENERGY_QUERY,
            now)
        measurements = [
            Measurement(WEATHER_ZONE_CELL, now, cell_id),
            Measurement(WEATHER_ZONE_TZ, now, tz)]
        self.store.add_upload(
            source.source_id, now, now, 'energy_query', measurements)
        logger.info(f'Stored {type_name} answer for {account_id}')
        return source, measurements

    def activate_cloud_feed(
            self,
            principal: Principal,
            feed_type: str) -> int:
        account_id = self._require(principal, PrincipalKind.ACCOUNT)
        source_type = self._campaign_source(
            account_id, feed_type, DataSourceVariant.CLOUD_FEED)
        now = self.clock()
        self.store.ensure_source(
            account_id, source_type.type_name, SourceOrigin.CLOUD_FEED, now)
        authorization_id = self.store.replace_cloud_feed_authorization(
            account_id, source_type.type_name, now)
        logger.info(f'Authorized {feed_type} stub for {account_id}')
        return authorization_id

    def _campaign_source(
            self,
            account_id: str,
            type_name: str,
            variant: DataSourceVariant) -> DataSourceType:
        account = self._account(account_id)
        campaign = self.get_campaign(account.campaign_id)
        source_type = self.catalog.get(type_name)
        if source_type is None or source_type.variant is not variant:
            raise UnknownDataSourceTypeError(
                f'unknown {variant.value} {type_name!r}')
        if type_name not in campaign.type_names():
            raise ValidationError(
                f'{type_name} is not part of campaign {campaign.campaign_id}')
        return source_type

    # data health

    def data_source_status(
            self,
            principal: Principal,
            at: Optional[int] = None) -> AccountStatus:
        account_id = self._require(principal, PrincipalKind.ACCOUNT)
        account = self._account(account_id)
        campaign = self.get_campaign(account.campaign_id)
        return self._account_status(
            account, campaign, self.clock() if at is None else at)

    def fleet_status(
            self,
            principal: Principal,
            campaign_id: int,
            at: Optional[int] = None) -> FleetStatus:
        self._require(principal, PrincipalKind.ADMIN)
        campaign = self.get_campaign(campaign_id)
        now = self.clock() if at is None else at
        accounts: List[AccountStatus] = []
        not_activated: List[str] = []
        unanswered = 0
        for account in self.store.list_accounts(campaign_id):
            if account.activation_state is ActivationState.PENDING:
                not_activated.append(account.account_id)
                continue
            status = self._account_status(account, campaign, now)
            accounts.append(status)
            unanswered += sum(
                1 for source in status.sources
                if source.variant is DataSourceVariant.ENERGY_QUERY
                and source.latest_measurement_time is None)
        return FleetStatus(
            campaign_id, now, tuple(accounts), tuple(not_activated),
            unanswered)

    def _account_status(
            self,
            account: Account,
            campaign: Campaign,
            at: int) -> AccountStatus:
        multiplier = campaign.overdue_multiplier or self.overdue_multiplier
        instances = [
            source for source in self.store.list_sources(account.account_id)
            if source.origin is not SourceOrigin.IMPORT]
        source_types: Dict[str, DataSourceType] = OrderedDict()
        for source_type in campaign.data_source_list:
            source_types.setdefault(source_type.type_name, source_type)
        statuses: List[DataSourceStatus] = []
        for type_name, source_type in source_types.items():
            matching = [s for s in instances if s.type_name == type_name]
            if not matching:
                statuses.append(self._status(
                    source_type, None, account.activated_at, at, multiplier))
            for instance in matching:
                statuses.append(self._status(
                    source_type, instance, account.activated_at, at,
                    multiplier))
        return AccountStatus(
            account.account_id, account.activated_at, tuple(statuses))

    def _status(
            self,
            source_type: DataSourceType,
            instance: Optional[DataSourceInstance],
            activated_at: Optional[int],
            at: int,
            multiplier: float) -> DataSourceStatus:
        latest: Optional[int] = None
        heartbeat: Optional[int] = None
        if instance is not None:
            latest = self.store.latest_measurement_time(instance.source_id)
            if source_type.descriptor(HEARTBEAT) is not None:
                value = self.store.latest_value(instance.source_id, HEARTBEAT)
                heartbeat = int(value[1]) if value else None
            if instance.created_at is not None:
                activated_at = instance.created_at
        interval = source_type.upload_interval
        if instance is not None and instance.upload_interval:
            interval = instance.upload_interval
        next_expected: Optional[int] = None
        overdue = False
        if interval is not None:
            if latest is not None:
                next_expected = latest + interval
            reference = latest if latest is not None else activated_at
            overdue = reference is not None and \
                at > reference + multiplier * interval
        return DataSourceStatus(
            source_type.type_name,
            source_type.variant,
            instance.source_id if instance else None,
            instance.device_name if instance else None,
            latest,
            interval,
            next_expected,
            overdue,
            heartbeat)

    # batch import and export

    def import_batch(
            self,
            principal: Principal,
            campaign_id: int,
            records: Sequence[ImportRecord]) -> IngestResult:
        self._require(principal, PrincipalKind.ADMIN)
        self.get_campaign(campaign_id)
        known_units = self.store.property_units()
        groups: Dict[Tuple[str, str], List[Measurement]] = OrderedDict()
        new_units: Dict[Tuple[str, str], str] = dict()
        for index, record in enumerate(records, start=1):
            try:
                measurement, unit = self._import_record(record)
            except ValidationError as e:
                raise ValidationError(f'record {index}: {e.message}')
            key = (record.source_type, record.property)
            if unit is not None:
                known = known_units.get(key) or new_units.get(key)
                if known is not None and known != unit:
                    raise ValidationError(
                        f'record {index}: unit {unit!r} conflicts with'
                        f' {known!r} for {record.property}')
                new_units[key] = unit
            self._import_account(record.account_id, campaign_id, index)
            groups.setdefault(
                (record.account_id, record.source_type), []).append(
                    measurement)
        now = self.clock()
        for (type_name, property_name), unit in new_units.items():
            self.store.set_property_unit(type_name, property_name, unit)
        stored = duplicates = 0
        for (account_id, type_name), measurements in groups.items():
            if self.store.get_account(account_id) is None:
                self.store.add_account(account_id, campaign_id, None, now)
            source = self.store.ensure_source(
                account_id, type_name, SourceOrigin.IMPORT, now)
            s, d = self.store.add_upload(
                source.source_id, now, now, 'import', measurements)
            stored += s
            duplicates += d
        logger.info(
            f'Imported {stored} measurements into campaign {campaign_id},'
            f' {duplicates} duplicates')
        return IngestResult(stored, duplicates)

    def _import_record(
            self,
            record: ImportRecord) -> Tuple[Measurement, Optional[str]]:
        if not _ACCOUNT_ID.match(record.account_id):
            raise ValidationError(f'invalid account id {record.account_id!r}')
        if not _SOURCE_TYPE.match(record.source_type):
            raise ValidationError(
                f'invalid source type {record.source_type!r}')
        require_property_name(record.property)
        measurement = Measurement(record.property, record.time, record.value)
        if record.time < 0:
            raise ValidationError(f'negative time {record.time}')
        source_type = self.catalog.get(record.source_type)
        if source_type is not None:
            descriptor = source_type.descriptor(record.property)
            if descriptor is None:
                raise UnknownPropertyError(
                    f'property {record.property!r} is not measured by'
                    f' {record.source_type}')
            return Measurement(
                record.property,
                record.time,
                canonical_value(descriptor, record.value)), None
        if not record.unit:
            raise ValidationError(f'unit missing for {record.property}')
        return measurement, record.unit

    def _import_account(
            self,
            account_id: str,
            campaign_id: int,
            index: int) -> None:
        account = self.store.get_account(account_id)
        if account is not None and account.campaign_id != campaign_id:
            raise ValidationError(
                f'record {index}: account {account_id} belongs to another'
                ' campaign')

    def export_measurements(
            self,
            principal: Principal,
            campaign_id: int,
            account_id: Optional[str] = None,
            start: Optional[int] = None,
            end: Optional[int] = None) -> List[ExportRow]:
        self._require(principal, PrincipalKind.ADMIN)
        self.get_campaign(campaign_id)
        units = self.store.property_units()
        rows: List[ExportRow] = []
        for account, type_name, prop, when, value in self.store.export_rows(
                campaign_id, account_id, start, end):
            rows.append(ExportRow(
                account, type_name, prop, self._unit(units, type_name, prop),
                when, value))
        return rows

    def _unit(
            self,
            units: Mapping[Tuple[str, str], str],
            type_name: str,
            property_name: str) -> str:
        source_type = self.catalog.get(type_name)
        if source_type is not None:
            descriptor = source_type.descriptor(property_name)
            if descriptor is not None:
                return descriptor.unit
        return units.get((type_name, property_name), '')

    def _name(self, name: str, what: str) -> str:
        if not isinstance(name, str) or not name.strip():
            raise ValidationError(f'{what} name must be a non-empty string')
        return name.strip()

