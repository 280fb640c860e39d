"""
JSON and CSV shapes shared by the HTTP routes and both client transports.
"""
import csv
import io
import re
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple
from .catalog import CATALOG
from .domain import (
    Account,
    AccountStatus,
    ActivationState,
    App,
    Campaign,
    DataSourceStatus,
    DataSourceType,
    DataSourceVariant,
    ExportRow,
    FleetStatus,
    ImportRecord,
    IngestResult,
    Measurement,
    Upload
)
from .errors import ApiError, DataGearError, ValidationError
from .properties import validate_property_name

Json = Dict[str, Any]

EXPORT_HEADER = ['account', 'source', 'property', 'unit', 'time_unix', 'value']
_INTEGER = re.compile(r'^-?\d+$')


def fetch(body: Mapping[str, Any], name: str, kind: type) -> Any:
    if not isinstance(body, Mapping):
        raise ValidationError('request body must be a JSON object')
    value = body.get(name)
    if kind is int and isinstance(value, bool):
        value = None
    if not isinstance(value, kind):
        raise ValidationError(f'field {name!r} must be {kind.__name__}')
    return value


def fetch_optional(body: Mapping[str, Any], name: str, kind: type) -> Any:
    if body.get(name) is None:
        return None
    return fetch(body, name, kind)


def error_to_json(error: DataGearError) -> Json:
    return {'error': error.code, 'message': error.message}


def error_from_json(
        status: int,
        body: Any,
        path: Optional[str] = None) -> ApiError:
    if isinstance(body, Mapping) and 'error' in body:
        return ApiError(
            status, str(body['error']), str(body.get('message', '')), path)
    return ApiError(status, 'http', f'HTTP status {status}', path)


def app_to_json(app: App) -> Json:
    return {'app_id': app.app_id, 'name': app.name}


def app_from_json(body: Mapping[str, Any]) -> App:
    return App(fetch(body, 'app_id', int), fetch(body, 'name', str))


def source_type_to_json(source_type: DataSourceType) -> Json:
    return {
        'type_name': source_type.type_name,
        'variant': source_type.variant.value,
        'upload_interval': source_type.upload_interval,
        'relayed': source_type.relayed,
        'properties': [{
            'name': p.name,
            'unit': p.unit,
            'format': p.value_format,
            'interval': p.default_interval,
        } for p in source_type.properties],
    }


def campaign_to_json(campaign: Campaign) -> Json:
    return {
        'campaign_id': campaign.campaign_id,
        'app_id': campaign.app_id,
        'name': campaign.name,
        'activatable': campaign.activatable,
        'overdue_multiplier': campaign.overdue_multiplier,
        'data_source_list': [
            source_type_to_json(t) for t in campaign.data_source_list],
    }


def campaign_from_json(body: Mapping[str, Any]) -> Campaign:
    sources = fetch(body, 'data_source_list', list)
    return Campaign(
        fetch(body, 'campaign_id', int),
        fetch(body, 'app_id', int),
        fetch(body, 'name', str),
        tuple(CATALOG.lookup(fetch(s, 'type_name', str)) for s in sources),
        body.get('overdue_multiplier'))


def account_to_json(account: Account) -> Json:
    return {
        'account_id': account.account_id,
        'campaign_id': account.campaign_id,
        'activated': account.activation_state is ActivationState.ACTIVATED,
        'activated_at': account.activated_at,
    }


def account_from_json(body: Mapping[str, Any]) -> Account:
    activated_at = fetch_optional(body, 'activated_at', int)
    return Account(
        fetch(body, 'account_id', str),
        fetch(body, 'campaign_id', int),
        ActivationState.PENDING if activated_at is None
        else ActivationState.ACTIVATED,
        activated_at)


def upload_to_json(upload: Upload, device_name: Optional[str] = None) -> Json:
    grouped: Dict[str, List[Json]] = dict()
    for m in upload.measurements:
        grouped.setdefault(m.property, []).append(
            {'time': m.time, 'value': m.value})
    body: Json = {
        'upload_time': upload.upload_time,
        'property_measurements': [
            {'property_name': name, 'measurements': items}
            for name, items in grouped.items()],
    }
    if device_name:
        body['device_name'] = device_name
    return body


def upload_from_json(body: Mapping[str, Any]) -> Tuple[Upload, Optional[str]]:
    upload_time = fetch(body, 'upload_time', int)
    measurements: List[Measurement] = []
    for group in fetch(body, 'property_measurements', list):
        name = fetch(group, 'property_name', str)
        for item in fetch(group, 'measurements', list):
            measurements.append(Measurement(
                name, fetch(item, 'time', int), fetch(item, 'value', str)))
    return (
        Upload(None, upload_time, tuple(measurements)),
        fetch_optional(body, 'device_name', str))


def ingest_to_json(result: IngestResult) -> Json:
    return {'stored': result.stored, 'duplicates': result.duplicates}


def ingest_from_json(body: Mapping[str, Any]) -> IngestResult:
    return IngestResult(
        fetch(body, 'stored', int), fetch(body, 'duplicates', int))


def measurements_to_json(measurements: Iterable[Measurement]) -> List[Json]:
    return [
        {'property': m.property, 'time': m.time, 'value': m.value}
        for m in measurements]


def status_to_json(status: DataSourceStatus) -> Json:
    return {
        'type_name': status.type_name,
        'variant': status.variant.value,
        'source_id': status.source_id,
        'device_name': status.device_name,
        'latest_measurement_time': status.latest_measurement_time,
        'expected_interval': status.expected_interval,
        'next_expected_time': status.next_expected_time,
        'overdue': status.overdue,
        'latest_heartbeat': status.latest_heartbeat,
    }


def status_from_json(body: Mapping[str, Any]) -> DataSourceStatus:
    return DataSourceStatus(
        fetch(body, 'type_name', str),
        DataSourceVariant(fetch(body, 'variant', str)),
        fetch_optional(body, 'source_id', int),
        fetch_optional(body, 'device_name', str),
        fetch_optional(body, 'latest_measurement_time', int),
        fetch_optional(body, 'expected_interval', int),
        fetch_optional(body, 'next_expected_time', int),
        bool(body.get('overdue')),
        fetch_optional(body, 'latest_heartbeat', int))


def account_status_to_json(status: AccountStatus) -> Json:
    return {
        'account_id': status.account_id,
        'activated_at': status.activated_at,
        'sources': [status_to_json(s) for s in status.sources],
    }


def account_status_from_json(body: Mapping[str, Any]) -> AccountStatus:
    return AccountStatus(
        fetch(body, 'account_id', str),
        fetch_optional(body, 'activated_at', int),
        tuple(status_from_json(s) for s in fetch(body, 'sources', list)))


def fleet_to_json(fleet: FleetStatus) -> Json:
    return {
        'campaign_id': fleet.campaign_id,
        'at': fleet.at,
        'accounts': [account_status_to_json(a) for a in fleet.accounts],
        'not_activated': list(fleet.not_activated),
        'unanswered_queries': fleet.unanswered_queries,
    }


def fleet_from_json(body: Mapping[str, Any]) -> FleetStatus:
    return FleetStatus(
        fetch(body, 'campaign_id', int),
        fetch(body, 'at', int),
        tuple(account_status_from_json(a)
              for a in fetch(body, 'accounts', list)),
        tuple(fetch(body, 'not_activated', list)),
        fetch(body, 'unanswered_queries', int))


def record_to_json(record: ImportRecord) -> Json:
    return {
        'account': record.account_id,
        'source': record.source_type,
        'property': record.property,
        'unit': record.unit,
        'time_unix': record.time,
        'value': record.value,
    }


def record_from_json(body: Mapping[str, Any]) -> ImportRecord:
    return ImportRecord(
        fetch(body, 'account', str),
        fetch(body, 'source', str),
        fetch(body, 'property', str),
        fetch_optional(body, 'unit', str) or '',
        fetch(body, 'time_unix', int),
        fetch(body, 'value', str))


def export_to_csv(rows: Iterable[ExportRow]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator='\r\n')
    writer.writerow(EXPORT_HEADER)
    for row in rows:
        writer.writerow([
            row.account_id, row.source_type, row.property, row.unit,
            row.time, row.value])
    return out.getvalue()


def read_import_csv(text: str) -> List[ImportRecord]:
    """
    Parse the long-format export CSV. Every problem is reported with the
    line it was found on; nothing is skipped.
    """
    reader = csv.reader(io.StringIO(text, newline=''))
    header = next(reader, None)
    if header != EXPORT_HEADER:
        raise ValidationError(
            f'line 1: expected header {",".join(EXPORT_HEADER)}')
    records: List[ImportRecord] = []
    for fields in reader:
        line_no = reader.line_num
        if not fields:
            continue
        if len(fields) != len(EXPORT_HEADER):
            raise ValidationError(
                f'line {line_no}: expected {len(EXPORT_HEADER)} fields,'
                f' found {len(fields)}')
        account, source, prop, unit, when, value = fields
        check = validate_property_name(prop)
        if not check.accepted:
            raise ValidationError(
                f'line {line_no}: invalid property name {prop!r}:'
                f' {check.reason}')
        if not _INTEGER.match(when):
            raise ValidationError(
                f'line {line_no}: time_unix {when!r} is not an integer')
        records.append(ImportRecord(
            account, source, prop, unit, int(when), value))
    return records


def export_from_csv(text: str) -> List[ExportRow]:
    return [
        ExportRow(r.account_id, r.source_type, r.property, r.unit, r.time,
                  r.value)
        for r in read_import_csv(text)]
