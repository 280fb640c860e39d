"""
Persistence for the campaign server. Tables follow the entity model:
app -> campaign -> account -> data_source -> upload -> measurement, with
devices, tokens and sessions alongside.
"""
import logging
import sqlite3
import threading
from abc import ABC, abstractmethod
from contextlib import contextmanager
from typing import Dict, Iterator, List, Optional, Sequence, Tuple
from .domain import (
    Account,
    ActivationState,
    App,
    DataSourceInstance,
    DeviceRecord,
    Measurement,
    Principal,
    PrincipalKind,
    SourceOrigin
)
from .errors import (
    DuplicateNameError,
    TokenConsumedError,
    UnknownTokenError
)

logger = logging.getLogger(__name__)


class CampaignRow:
    def __init__(
            self,
            campaign_id: int,
            app_id: int,
            name: str,
            type_names: List[str],
            overdue_multiplier: Optional[float]) -> None:
        self.campaign_id = campaign_id
        self.app_id = app_id
        self.name = name
        self.type_names = type_names
        self.overdue_multiplier = overdue_multiplier


# (account_id, source_type, property, time, value)
RawExportRow = Tuple[str, str, str, int, str]


class Store(ABC):
    @abstractmethod  # pragma: no mutate
    def add_app(self, name: str) -> App:
        pass

    @abstractmethod  # pragma: no mutate
    def list_apps(self) -> List[App]:
        pass

    @abstractmethod  # pragma: no mutate
    def get_app(self, app_id: int) -> Optional[App]:
        pass

    @abstractmethod  # pragma: no mutate
    def add_campaign(
            self,
            app_id: int,
            name: str,
            type_names: Sequence[str],
            overdue_multiplier: Optional[float]) -> CampaignRow:
        pass

    @abstractmethod  # pragma: no mutate
    def get_campaign(self, campaign_id: int) -> Optional[CampaignRow]:
        pass

    @abstractmethod  # pragma: no mutate
    def list_campaigns(self) -> List[CampaignRow]:
        pass

    @abstractmethod  # pragma: no mutate
    def add_account(
            self,
            account_id: str,
            campaign_id: int,
            token_hash: Optional[str],
            activated_at: Optional[int] = None) -> Account:
        pass

    @abstractmethod  # pragma: no mutate
    def get_account(self, account_id: str) -> Optional[Account]:
        pass

    @abstractmethod  # pragma: no mutate
    def list_accounts(self, campaign_id: int) -> List[Account]:
        pass

    @abstractmethod  # pragma: no mutate
    def consume_activation_token(self, token_hash: str, now: int) -> str:
        """Atomically consume a pending token, returning its account id."""

    @abstractmethod  # pragma: no mutate
    def add_session(
            self,
            token_hash: str,
            principal: Principal,
            issued_at: int) -> None:
        pass

    @abstractmethod  # pragma: no mutate
    def find_session(self, token_hash: str) -> Optional[Principal]:
        pass

    @abstractmethod  # pragma: no mutate
    def revoke_session(self, token_hash: str) -> bool:
        pass

    @abstractmethod  # pragma: no mutate
    def add_device(
            self,
            device_name: str,
            type_name: str,
            pop_hash: str) -> DeviceRecord:
        pass

    @abstractmethod  # pragma: no mutate
    def get_device(self, device_name: str) -> Optional[DeviceRecord]:
        pass

    @abstractmethod  # pragma: no mutate
    def bind_device(
            self,
            device_id: int,
            account_id: str,
            now: int,
            upload_interval: Optional[int] = None
    ) -> Optional[DataSourceInstance]:
        """Set activated_at once; None if the device was already bound."""

    @abstractmethod  # pragma: no mutate
    def ensure_source(
            self,
            account_id: str,
            type_name: str,
            origin: SourceOrigin,
            now: int) -> DataSourceInstance:
        pass

    @abstractmethod  # pragma: no mutate
    def device_source(self, device_id: int) -> Optional[DataSourceInstance]:
        pass

    @abstractmethod  # pragma: no mutate
    def list_sources(self, account_id: str) -> List[DataSourceInstance]:
        pass

    @abstractmethod  # pragma: no mutate
    def add_upload(
            self,
            source_id: int,
            upload_time: int,
            received_at: int,
            kind: str,
            measurements: Sequence[Measurement]) -> Tuple[int, int]:
        """Persist one upload; returns (stored, duplicates)."""

    @abstractmethod  # pragma: no mutate
    def latest_measurement_time(self, source_id: int) -> Optional[int]:
        pass

    @abstractmethod  # pragma: no mutate
    def latest_value(
            self,
            source_id: int,
            property_name: str) -> Optional[Tuple[int, str]]:
        pass

    @abstractmethod  # pragma: no mutate
    def set_property_unit(
            self,
            type_name: str,
            property_name: str,
            unit: str) -> Optional[str]:
        """Record a unit unless one is known; returns the known unit."""

    @abstractmethod  # pragma: no mutate
    def property_units(self) -> Dict[Tuple[str, str], str]:
        pass

    @abstractmethod  # pragma: no mutate
    def replace_cloud_feed_authorization(
            self,
            account_id: str,
            feed_type: str,
            now: int) -> int:
        pass

    @abstractmethod  # pragma: no mutate
    def active_cloud_feed_authorizations(self, account_id: str) -> List[int]:
        pass

    @abstractmethod  # pragma: no mutate
    def export_rows(
            self,
            campaign_id: int,
            account_id: Optional[str],
            start: Optional[int],
            end: Optional[int]) -> List[RawExportRow]:
        pass

    @abstractmethod  # pragma: no mutate
    def dump(self) -> Iterator[str]:
        pass

    def close(self) -> None:
        pass


_SCHEMA = """
CREATE TABLE IF NOT EXISTS app (
    app_id INTEGER PRIMARY KEY,
    name TEXT NOT NULL UNIQUE
);
CREATE TABLE IF NOT EXISTS campaign (
    campaign_id INTEGER PRIMARY KEY,
    app_id INTEGER NOT NULL REFERENCES app(app_id),
    name TEXT NOT NULL,
    overdue_multiplier REAL,
    UNIQUE (app_id, name)
);
CREATE TABLE IF NOT EXISTS campaign_data_source (
    campaign_id INTEGER NOT NULL REFERENCES campaign(campaign_id),
    position INTEGER NOT NULL,
    type_name TEXT NOT NULL,
    PRIMARY KEY (campaign_id, position)
);
CREATE TABLE IF NOT EXISTS property (
    type_name TEXT NOT NULL,
    name TEXT NOT NULL,
    unit TEXT NOT NULL,
    PRIMARY KEY (type_name, name)
);
CREATE TABLE IF NOT EXISTS account (
    account_id TEXT PRIMARY KEY,
    campaign_id INTEGER NOT NULL REFERENCES campaign(campaign_id),
    activated_at INTEGER
);
CREATE TABLE IF NOT EXISTS activation_token (
    token_hash TEXT PRIMARY KEY,
    account_id TEXT NOT NULL REFERENCES account(account_id),
    consumed_at INTEGER
);
CREATE TABLE IF NOT EXISTS session (
    token_hash TEXT PRIMARY KEY,
    kind TEXT NOT NULL,
    subject TEXT,
    issued_at INTEGER NOT NULL,
    revoked INTEGER NOT NULL DEFAULT 0
);
CREATE TABLE IF NOT EXISTS device (
    device_id INTEGER PRIMARY KEY,
    device_name TEXT NOT NULL UNIQUE,
    type_name TEXT NOT NULL,
    pop_hash TEXT NOT NULL,
    account_id TEXT REFERENCES account(account_id),
    activated_at INTEGER
);
CREATE TABLE IF NOT EXISTS data_source (
    source_id INTEGER PRIMARY KEY,
    account_id TEXT NOT NULL REFERENCES account(account_id),
    type_name TEXT NOT NULL,
    origin TEXT NOT NULL,
    device_id INTEGER UNIQUE REFERENCES device(device_id),
    created_at INTEGER NOT NULL,
    upload_interval INTEGER
);
CREATE TABLE IF NOT EXISTS cloud_feed_authorization (
    authorization_id INTEGER PRIMARY KEY,
    account_id TEXT NOT NULL REFERENCES account(account_id),
    feed_type TEXT NOT NULL,
    authorized_at INTEGER NOT NULL,
    active INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS upload (
    upload_id INTEGER PRIMARY KEY,
    source_id INTEGER NOT NULL REFERENCES data_source(source_id),
    upload_time INTEGER NOT NULL,
    received_at INTEGER NOT NULL,
    size INTEGER NOT NULL,
    kind TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS measurement (
    source_id INTEGER NOT NULL REFERENCES data_source(source_id),
    property TEXT NOT NULL,
    time INTEGER NOT NULL,
    value TEXT NOT NULL,
    upload_id INTEGER NOT NULL REFERENCES upload(upload_id),
    PRIMARY KEY (source_id, property, time)
);
CREATE INDEX IF NOT EXISTS measurement_time ON measurement (time);
"""

_SOURCE_COLUMNS = (
    's.source_id, s.account_id, s.type_name, s.origin, s.device_id,'
    ' d.device_name, s.created_at, s.upload_interval')
_SOURCE_FROM = (
    'data_source s LEFT JOIN device d ON s.device_id = d.device_id')


def _account(row: sqlite3.Row) -> Account:
    activated_at = row['activated_at']
    return Account(
        row['account_id'],
        row['campaign_id'],
        ActivationState.PENDING if activated_at is None
        else ActivationState.ACTIVATED,
        activated_at)


def _device(row: sqlite3.Row) -> DeviceRecord:
    return DeviceRecord(
        row['device_id'], row['device_name'], row['type_name'],
        row['pop_hash'], row['account_id'], row['activated_at'])


def _source(row: sqlite3.Row) -> DataSourceInstance:
    return DataSourceInstance(
        row['source_id'], row['account_id'], row['type_name'],
        SourceOrigin(row['origin']), row['device_id'], row['device_name'],
        row['created_at'], row['upload_interval'])


def _rowid(cursor: sqlite3.Cursor) -> int:
    rowid = cursor.lastrowid
    assert rowid is not None
    return rowid


class SqliteStore(Store):
    """
    Store on one sqlite3 connection shared by all threads. Every mutation
    runs in a BEGIN IMMEDIATE transaction while holding the store lock.
    """

    def __init__(self, path: str = ':memory:') -> None:
        self.path = path
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(
            path, isolation_level=None, check_same_thread=False)
        self._conn.row_factory = sqlite3.Row
        self._conn.execute('PRAGMA foreign_keys = ON')
        with self._transaction() as cursor:
            for statement in _SCHEMA.split(';'):
                if statement.strip():
                    cursor.execute(statement)
        logger.debug(f'Opened store {path}')

    @contextmanager
    def _transaction(self) -> Iterator[sqlite3.Cursor]:
        with self._lock:
            cursor = self._conn.cursor()
            cursor.execute('BEGIN IMMEDIATE')
            try:
                yield cursor
            except BaseException:
                cursor.execute('ROLLBACK')
                raise
            cursor.execute('COMMIT')

    def _query(
            self,
            sql: str,
            params: Sequence[object] = ()) -> List[sqlite3.Row]:
        with self._lock:
            return self._conn.execute(sql, params).fetchall()

    def _query_one(
            self,
            sql: str,
            params: Sequence[object] = ()) -> Optional[sqlite3.Row]:
        rows = self._query(sql, params)
        return rows[0] if rows else None

    def add_app(self, name: str) -> App:
        try:
            with self._transaction() as cursor:
                cursor.execute('INSERT INTO app (name) VALUES (?)', (name,))
                app_id = _rowid(cursor)
        except sqlite3.IntegrityError:
            raise DuplicateNameError(f'app {name!r} already exists')
        return App(app_id, name)

    def list_apps(self) -> List[App]:
        return [App(row['app_id'], row['name']) for row in self._query(
            'SELECT app_id, name FROM app ORDER BY app_id')]

    def get_app(self, app_id: int) -> Optional[App]:
        row = self._query_one(
            'SELECT app_id, name FROM app WHERE app_id = ?', (app_id,))
        return App(row['app_id'], row['name']) if row else None

    def add_campaign(
            self,
            app_id: int,
            name: str,
            type_names: Sequence[str],
            overdue_multiplier: Optional[float]) -> CampaignRow:
        try:
            with self._transaction() as cursor:
                cursor.execute(
                    'INSERT INTO campaign (app_id, name, overdue_multiplier)'
                    ' VALUES (?, ?, ?)', (app_id, name, overdue_multiplier))
                campaign_id = _rowid(cursor)
                cursor.executemany(
                    'INSERT INTO campaign_data_source'
                    ' (campaign_id, position, type_name) VALUES (?, ?, ?)',
                    [(campaign_id, position, type_name)
                        for position, type_name in enumerate(type_names)])
        except sqlite3.IntegrityError:
            raise DuplicateNameError(
                f'campaign {name!r} already exists for app {app_id}')
        return CampaignRow(
            campaign_id, app_id, name, list(type_names), overdue_multiplier)

    def _campaign(self, row: sqlite3.Row) -> CampaignRow:
        type_names = [r['type_name'] for r in self._query(
            'SELECT type_name FROM campaign_data_source'
            ' WHERE campaign_id = ? ORDER BY position',
            (row['campaign_id'],))]
        return CampaignRow(
            row['campaign_id'], row['app_id'], row['name'], type_names,
            row['overdue_multiplier'])

    def get_campaign(self, campaign_id: int) -> Optional[CampaignRow]:
        row = self._query_one(
            'SELECT * FROM campaign WHERE campaign_id = ?', (campaign_id,))
        return self._campaign(row) if row else None

    def list_campaigns(self) -> List[CampaignRow]:
        return [self._campaign(row) for row in self._query(
            'SELECT * FROM campaign ORDER BY campaign_id')]

    def add_account(
            self,
            account_id: str,
            campaign_id: int,
            token_hash: Optional[str],
            activated_at: Optional[int] = None) -> Account:
        with self._transaction() as cursor:
            cursor.execute(
                'INSERT INTO account (account_id, campaign_id, activated_at)'
                ' VALUES (?, ?, ?)', (account_id, campaign_id, activated_at))
            if token_hash is not None:
                cursor.execute(
                    'INSERT INTO activation_token (token_hash, account_id)'
                    ' VALUES (?, ?)', (token_hash, account_id))
        return Account(
            account_id, campaign_id,
            ActivationState.PENDING if activated_at is None
            else ActivationState.ACTIVATED,
            activated_at)

    def get_account(self, account_id: str) -> Optional[Account]:
        row = self._query_one(
            'SELECT * FROM account WHERE account_id = ?', (account_id,))
        return _account(row) if row else None

    def list_accounts(self, campaign_id: int) -> List[Account]:
        return [_account(row) for row in self._query(
            'SELECT * FROM account WHERE campaign_id = ?'
            ' ORDER BY account_id', (campaign_id,))]

    def consume_activation_token(self, token_hash: str, now: int) -> str:
        with self._transaction() as cursor:
            row = cursor.execute(
                'SELECT account_id, consumed_at FROM activation_token'
                ' WHERE token_hash = ?', (token_hash,)).fetchone()
            if row is None:
                raise UnknownTokenError('unknown activation token')
            if row['consumed_at'] is not None:
                raise TokenConsumedError(
                    'activation token has already been used')
            cursor.execute(
                'UPDATE activation_token SET consumed_at = ?'
                ' WHERE token_hash = ? AND consumed_at IS NULL',
                (now, token_hash))
            if cursor.rowcount != 1:
                raise TokenConsumedError(
                    'activation token has already been used')
            cursor.execute(
                'UPDATE account SET activated_at = ?'
                ' WHERE account_id = ? AND activated_at IS NULL',
                (now, row['account_id']))
            return str(row['account_id'])

    def add_session(
            self,
            token_hash: str,
            principal: Principal,
            issued_at: int) -> None:
        with self._transaction() as cursor:
            cursor.execute(
                'INSERT INTO session (token_hash, kind, subject, issued_at)'
                ' VALUES (?, ?, ?, ?)',
                (token_hash, principal.kind.value, principal.subject,
                    issued_at))

    def find_session(self, token_hash: str) -> Optional[Principal]:
        row = self._query_one(
            'SELECT kind, subject FROM session'
            ' WHERE token_hash = ? AND revoked = 0', (token_hash,))
        if row is None:
            return None
        return Principal(PrincipalKind(row['kind']), row['subject'])

    def revoke_session(self, token_hash: str) -> bool:
        with self._transaction() as cursor:
            cursor.execute(
                'UPDATE session SET revoked = 1'
                ' WHERE token_hash = ? AND revoked = 0', (token_hash,))
            return cursor.rowcount == 1

    def add_device(
            self,
            device_name: str,
            type_name: str,
            pop_hash: str) -> DeviceRecord:
        try:
            with self._transaction() as cursor:
                cursor.execute(
                    'INSERT INTO device (device_name, type_name, pop_hash)'
                    ' VALUES (?, ?, ?)', (device_name, type_name, pop_hash))
                device_id = _rowid(cursor)
        except sqlite3.IntegrityError:
            raise DuplicateNameError(
                f'device {device_name!r} is already registered')
        return DeviceRecord(device_id, device_name, type_name, pop_hash)

    def get_device(self, device_name: str) -> Optional[DeviceRecord]:
        row = self._query_one(
            'SELECT * FROM device WHERE device_name = ?', (device_name,))
        return _device(row) if row else None

    def bind_device(
            self,
            device_id: int,
            account_id: str,
            now: int,
            upload_interval: Optional[int] = None
    ) -> Optional[DataSourceInstance]:
        with self._transaction() as cursor:
            cursor.execute(
                'UPDATE device SET account_id = ?, activated_at = ?'
                ' WHERE device_id = ? AND activated_at IS NULL',
                (account_id, now, device_id))
            if cursor.rowcount != 1:
                return None
            cursor.execute(
                'INSERT INTO data_source'
                ' (account_id, type_name, origin, device_id, created_at,'
                ' upload_interval)'
                ' SELECT ?, type_name, ?, device_id, ?, ? FROM device'
                ' WHERE device_id = ?',
                (account_id, SourceOrigin.DEVICE.value, now, upload_interval,
                 device_id))
        return self.device_source(device_id)

    def ensure_source(
            self,
            account_id: str,
            type_name: str,
            origin: SourceOrigin,
            now: int) -> DataSourceInstance:
        select = (
            f'SELECT {_SOURCE_COLUMNS} FROM {_SOURCE_FROM}'
            ' WHERE s.account_id = ? AND s.type_name = ? AND s.origin = ?'
            ' AND s.device_id IS NULL')
        params = (account_id, type_name, origin.value)
        with self._transaction() as cursor:
            row = cursor.execute(select, params).fetchone()
            if row is None:
                cursor.execute(
                    'INSERT INTO data_source'
                    ' (account_id, type_name, origin, created_at)'
                    ' VALUES (?, ?, ?, ?)',
                    (account_id, type_name, origin.value, now))
                row = cursor.execute(select, params).fetchone()
        return _source(row)

    def device_source(self, device_id: int) -> Optional[DataSourceInstance]:
        row = self._query_one(
            f'SELECT {_SOURCE_COLUMNS} FROM {_SOURCE_FROM}'
            ' WHERE s.device_id = ?', (device_id,))
        return _source(row) if row else None

    def list_sources(self, account_id: str) -> List[DataSourceInstance]:
        return [_source(row) for row in self._query(
            f'SELECT {_SOURCE_COLUMNS} FROM {_SOURCE_FROM}'
            ' WHERE s.account_id = ? ORDER BY s.source_id', (account_id,))]

    def add_upload(
            self,
            source_id: int,
            upload_time: int,
            received_at: int,
            kind: str,
            measurements: Sequence[Measurement]) -> Tuple[int, int]:
        stored = 0
        with self._transaction() as cursor:
            cursor.execute(
                'INSERT INTO upload'
                ' (source_id, upload_time, received_at, size, kind)'
                ' VALUES (?, ?, ?, ?, ?)',
                (source_id, upload_time, received_at, len(measurements),
                    kind))
            upload_id = _rowid(cursor)
            for measurement in measurements:
                cursor.execute(
                    'INSERT OR IGNORE INTO measurement'
                    ' (source_id, property, time, value, upload_id)'
                    ' VALUES (?, ?, ?, ?, ?)',
                    (source_id, measurement.property, measurement.time,
                        measurement.value, upload_id))
                stored += cursor.rowcount
        return stored, len(measurements) - stored

    def latest_measurement_time(self, source_id: int) -> Optional[int]:
        row = self._query_one(
            'SELECT MAX(time) AS latest FROM measurement'
            ' WHERE source_id = ?', (source_id,))
        return row['latest'] if row else None

    def latest_value(
            self,
            source_id: int,
            property_name: str) -> Optional[Tuple[int, str]]:
        row = self._query_one(
            'SELECT time, value FROM measurement'
            ' WHERE source_id = ? AND property = ?'
            ' ORDER BY time DESC LIMIT 1', (source_id, property_name))
        return (row['time'], row['value']) if row else None

    def set_property_unit(
            self,
            type_name: str,
            property_name: str,
            unit: str) -> Optional[str]:
        with self._transaction() as cursor:
            row = cursor.execute(
                'SELECT unit FROM property WHERE type_name = ? AND name = ?',
                (type_name, property_name)).fetchone()
            if row is not None:
                return str(row['unit'])
            cursor.execute(
                'INSERT INTO property (type_name, name, unit)'
                ' VALUES (?, ?, ?)', (type_name, property_name, unit))
        return None

    def property_units(self) -> Dict[Tuple[str, str], str]:
        return {
            (row['type_name'], row['name']): row['unit']
            for row in self._query('SELECT * FROM property')}

    def replace_cloud_feed_authorization(
            self,
            account_id: str,
            feed_type: str,
            now: int) -> int:
        with self._transaction() as cursor:
            cursor.execute(
                'UPDATE cloud_feed_authorization SET active = 0'
                ' WHERE account_id = ? AND feed_type = ? AND active = 1',
                (account_id, feed_type))
            cursor.execute(
                'INSERT INTO cloud_feed_authorization'
                ' (account_id, feed_type, authorized_at, active)'
                ' VALUES (?, ?, ?, 1)', (account_id, feed_type, now))
            return _rowid(cursor)

    def active_cloud_feed_authorizations(self, account_id: str) -> List[int]:
        return [row['authorization_id'] for row in self._query(
            'SELECT authorization_id FROM cloud_feed_authorization'
            ' WHERE account_id = ? AND active = 1', (account_id,))]

    def export_rows(
            self,
            campaign_id: int,
            account_id: Optional[str],
            start: Optional[int],
            end: Optional[int]) -> List[RawExportRow]:
        sql = (
            'SELECT a.account_id, s.type_name, m.property, m.time, m.value'
            ' FROM measurement m'
            ' JOIN data_source s ON m.source_id = s.source_id'
            ' JOIN account a ON s.account_id = a.account_id'
            ' WHERE a.campaign_id = ?')
        params: List[object] = [campaign_id]
        if account_id is not None:
            sql += ' AND a.account_id = ?'
            params.append(account_id)
        if start is not None:
            sql += ' AND m.time >= ?'
            params.append(start)
        if end is not None:
            sql += ' AND m.time < ?'
            params.append(end)
        sql += ' ORDER BY m.time, a.account_id, s.type_name, m.property,' \
            ' m.value'
        return [
            (row[0], row[1], row[2], row[3], row[4])
            for row in self._query(sql, params)]

    def dump(self) -> Iterator[str]:
        with self._lock:
            lines = list(self._conn.iterdump())
        return iter(lines)

    def close(self) -> None:
        with self._lock:
            self._conn.close()

