from .api import HttpServerApi, LocalServerApi, ServerApi
from .codec import read_import_csv
from .errors import ConfigurationError, DataGearError
from .ledger import PseudonymLedger
from .loggingresponsehandler import LoggingUploadResultHandler
from .scenario import EXAMPLE_SCENARIO_PATH, load_scenario, parse_start
from .service import CampaignService, wall_clock
from .settings import Settings, load_config_file
from .simulator import VirtualClock, run_campaign
from .store import SqliteStore
from dataclasses import replace
from datetime import datetime, timezone
from typing import (
    Any,
    Awaitable,
    Callable,
    Dict,
    List,
    Mapping,
    Optional,
    Sequence,
    TextIO,
    Union
)
from urllib.parse import quote
from tabulate import tabulate
import argparse
import asyncio
import csv
import io
import logging
import os
import secrets
import sys

"""
The deployer's command line: campaigns, accounts and their activation
links, the pseudonym ledger, fleet monitoring, import, export and
simulated campaigns. Settings come from flags, then DATAGEAR_*
environment variables, then the --config YAML file.
"""

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIGURATION = 2
IN_MEMORY_DB = ':memory:'
SETTING_FLAGS = (
    'server_url', 'admin_token_file', 'ledger', 'format', 'db', 'config',
    'verbose')

Handler = Callable[['Gearctl'], Awaitable[int]]


def setup_logging(verbosity: Union[bool, int]) -> None:
    if(isinstance(verbosity, bool)):
        if(verbosity):
            logging.basicConfig(
                level=logging.INFO,
                format='%(message)s')
        else:
            logging.basicConfig(
                level=logging.CRITICAL,
                format='%(message)s')
    else:
        logging.basicConfig(level=verbosity)


def activation_link(base_url: str, token: str) -> str:
    return f'{base_url.rstrip("/")}/activate?token={quote(token, safe="")}'


def render_rows(
        rows: Sequence[Sequence[Any]],
        headers: Sequence[str],
        output_format: str) -> str:
    if output_format == 'csv':
        out = io.StringIO()
        writer = csv.writer(out, lineterminator='\n')
        writer.writerow(headers)
        writer.writerows(rows)
        return out.getvalue()
    return tabulate(rows, headers=headers) + '\n'


def _when(t: Optional[int], output_format: str) -> Any:
    if t is None:
        return ''
    if output_format == 'csv':
        return t
    return datetime.fromtimestamp(t, timezone.utc).strftime(
        '%Y-%m-%d %H:%M:%SZ')


def _time_arg(value: Optional[str]) -> Optional[int]:
    if value is None:
        return None
    return parse_start(int(value) if value.lstrip('-').isdigit() else value)


class Gearctl:
    def __init__(
            self,
            settings: Settings,
            args: argparse.Namespace,
            out: TextIO,
            err: TextIO) -> None:
        self.settings = settings
        self.args = args
        self.out = out
        self.err = err
        self.output_format = settings.get_output_format()
        self._store: Optional[SqliteStore] = None

    def local(self, db: str, clock: Optional[VirtualClock] = None
              ) -> LocalServerApi:
        token = self.settings.get_admin_token() or secrets.token_urlsafe(32)
        self._store = SqliteStore(db)
        service = CampaignService(
            self._store, token, self.settings.get_overdue_multiplier(),
            clock or wall_clock)
        logger.info(f'Using in-process server over {db}')
        return LocalServerApi(service, token)

    def api(self) -> ServerApi:
        db = self.settings.get_db()
        if db:
            return self.local(db)
        config = self.settings.client_config()
        if not config.admin_token:
            self.settings.require_admin_token()
        return HttpServerApi(config)

    def close(self) -> None:
        if self._store is not None:
            self._store.close()

    def ledger(self) -> PseudonymLedger:
        return PseudonymLedger(self.settings.get_ledger())

    def print(self, text: str) -> None:
        self.out.write(text if text.endswith('\n') else text + '\n')

    def table(self, rows: Sequence[Sequence[Any]],
              headers: Sequence[str]) -> None:
        self.out.write(render_rows(rows, headers, self.output_format))


async def cmd_app_create(ctl: Gearctl) -> int:
    async with ctl.api() as api:
        app = await api.create_app(ctl.args.name)
    ctl.print(str(app.app_id))
    return EXIT_OK


def read_campaign_file(path: str) -> Dict[str, Any]:
    data = load_config_file(path)
    sources = data.get('data_sources')
    if not data.get('name') or not isinstance(sources, list):
        raise ConfigurationError(
            f'campaign file {path} needs a name and a data_sources list')
    return data


async def cmd_campaign_create(ctl: Gearctl) -> int:
    data = read_campaign_file(ctl.args.file)
    app_name = str(ctl.args.app or data.get('app') or 'datagear')
    async with ctl.api() as api:
        apps = await api.list_apps()
        app = next((a for a in apps if a.name == app_name), None)
        if app is None:
            app = await api.create_app(app_name)
        multiplier = data.get('overdue_multiplier')
        campaign = await api.create_campaign(
            app.app_id, str(data['name']),
            [str(s) for s in data['data_sources']],
            float(multiplier) if multiplier is not None else None)
    logger.info(f'Created campaign {campaign.name!r} in app {app_name!r}')
    ctl.print(str(campaign.campaign_id))
    return EXIT_OK


async def cmd_campaign_list(ctl: Gearctl) -> int:
    async with ctl.api() as api:
        campaigns = await api.list_campaigns()
    ctl.table(
        [[c.campaign_id, c.app_id, c.name, ' '.join(c.type_names()),
          '' if c.overdue_multiplier is None else c.overdue_multiplier]
         for c in campaigns],
        ['campaign_id', 'app_id', 'name', 'data_sources',
         'overdue_multiplier'])
    return EXIT_OK


async def cmd_account_create(ctl: Gearctl) -> int:
    ledger = ctl.ledger()
    pseudonym = ctl.args.pseudonym
    ledger.check_unused(pseudonym)
    async with ctl.api() as api:
        token = await api.create_account(ctl.args.campaign)
    ledger.append(
        pseudonym, token.account_id, wall_clock(), ctl.args.note or '')
    ctl.print(activation_link(
        ctl.settings.get_activation_base_url(), token.token))
    return EXIT_OK


async def cmd_account_list(ctl: Gearctl) -> int:
    names = ctl.ledger().by_account()
    async with ctl.api() as api:
        accounts = await api.list_accounts(ctl.args.campaign)
    ctl.table(
        [[names.get(a.account_id, ''), a.account_id,
          a.activation_state.value, _when(a.activated_at, ctl.output_format)]
         for a in accounts],
        ['pseudonym', 'account_id', 'state', 'activated_at'])
    return EXIT_OK


async def cmd_device_register(ctl: Gearctl) -> int:
    async with ctl.api() as api:
        device_id = await api.register_device(
            ctl.args.name, ctl.args.type, ctl.args.pop)
    ctl.print(str(device_id))
    return EXIT_OK


MONITOR_HEADER = [
    'pseudonym', 'account_id', 'source', 'device_name', 'latest',
    'next_expected', 'overdue', 'heartbeat']


async def cmd_monitor(ctl: Gearctl) -> int:
    names = ctl.ledger().by_account()
    fmt = ctl.output_format
    async with ctl.api() as api:
        fleet = await api.fleet_status(
            ctl.args.campaign, _time_arg(ctl.args.at))
    rows: List[List[Any]] = []
    for account in fleet.accounts:
        for source in account.sources:
            rows.append([
                names.get(account.account_id, ''), account.account_id,
                source.type_name, source.device_name or '',
                _when(source.latest_measurement_time, fmt),
                _when(source.next_expected_time, fmt),
                'OVERDUE' if source.overdue else '',
                '' if source.latest_heartbeat is None
                else source.latest_heartbeat])
    ctl.table(rows, MONITOR_HEADER)
    not_activated = [names.get(a, a) for a in fleet.not_activated]
    summary = [
        f'overdue: {fleet.overdue_count()}',
        f'not activated: {len(not_activated)}'
        + (f' ({", ".join(not_activated)})' if not_activated else ''),
        f'unanswered queries: {fleet.unanswered_queries}',
    ]
    target = ctl.out if fmt == 'table' else ctl.err
    target.write('\n'.join(summary) + '\n')
    return EXIT_OK


async def cmd_import(ctl: Gearctl) -> int:
    try:
        with open(ctl.args.file, newline='', encoding='utf-8') as handle:
            text = handle.read()
    except OSError as e:
        raise ConfigurationError(f'cannot read {ctl.args.file}: {e}')
    records = read_import_csv(text)
    async with ctl.api() as api:
        result = await api.import_batch(ctl.args.campaign, records)
    ctl.print(f'stored {result.stored} duplicates {result.duplicates}')
    return EXIT_OK


async def cmd_export(ctl: Gearctl) -> int:
    args = ctl.args
    async with ctl.api() as api:
        text = await api.export(
            args.campaign, args.account, _time_arg(args.start),
            _time_arg(args.end))
    if args.out:
        with open(args.out, 'w', newline='', encoding='utf-8') as handle:
            handle.write(text)
        logger.info(f'Wrote {args.out}')
    else:
        ctl.out.write(text)
    return EXIT_OK


async def cmd_simulate(ctl: Gearctl) -> int:
    args = ctl.args
    scenario = load_scenario(args.scenario or EXAMPLE_SCENARIO_PATH)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    clock = VirtualClock(scenario.start)
    settings = ctl.settings
    if settings.get_db() or not settings.is_set('server_url'):
        api: ServerApi = ctl.local(settings.get_db() or IN_MEMORY_DB, clock)
    else:
        logger.warning(
            'Remote server keeps wall-clock activation times;'
            ' overdue episodes are approximate')
        api = ctl.api()
    ledger = ctl.ledger() if settings.is_set('ledger') else None

    def on_account(pseudonym: str, account_id: str) -> None:
        if ledger is not None:
            ledger.append(pseudonym, account_id, clock(), 'simulated')

    async with api:
        report = await run_campaign(
            scenario, api, clock, LoggingUploadResultHandler(), on_account)
    if ctl.output_format == 'csv':
        ctl.out.write(report.to_csv())
    else:
        ctl.out.write(report.to_table())
    if args.report:
        with open(args.report, 'w', encoding='utf-8') as handle:
            handle.write(report.to_json())
    if args.events:
        with open(args.events, 'w', encoding='utf-8') as handle:
            handle.write('\n'.join(report.events) + '\n')
    if not report.conserved:
        logger.critical('Measurement conservation violated')
        return EXIT_FAILURE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='gearctl', description='DataGear campaign deployer tool')
    parser.add_argument('--server-url', dest='server_url')
    parser.add_argument('--admin-token-file', dest='admin_token_file')
    parser.add_argument('--ledger')
    parser.add_argument('--format', choices=['table', 'csv'])
    parser.add_argument(
        '--db', help='operate an in-process server on this SQLite file')
    parser.add_argument('--config', help='YAML settings file')
    parser.add_argument(
        '--verbose', help='true, false or a log level name')
    verbs = parser.add_subparsers(dest='verb', required=True)

    app = verbs.add_parser('app').add_subparsers(dest='action', required=True)
    app_create = app.add_parser('create')
    app_create.add_argument('name')
    app_create.set_defaults(handler=cmd_app_create)

    campaign = verbs.add_parser('campaign').add_subparsers(
        dest='action', required=True)
    campaign_create = campaign.add_parser('create')
    campaign_create.add_argument('file', help='campaign YAML file')
    campaign_create.add_argument('--app')
    campaign_create.set_defaults(handler=cmd_campaign_create)
    campaign.add_parser('list').set_defaults(handler=cmd_campaign_list)

    account = verbs.add_parser('account').add_subparsers(
        dest='action', required=True)
    account_create = account.add_parser('create')
    account_create.add_argument('--campaign', type=int, required=True)
    account_create.add_argument('--pseudonym', required=True)
    account_create.add_argument('--note')
    account_create.set_defaults(handler=cmd_account_create)
    account_list = account.add_parser('list')
    account_list.add_argument('--campaign', type=int, required=True)
    account_list.set_defaults(handler=cmd_account_list)

    device = verbs.add_parser('device').add_subparsers(
        dest='action', required=True)
    device_register = device.add_parser('register')
    device_register.add_argument('name')
    device_register.add_argument('type')
    device_register.add_argument('pop')
    device_register.set_defaults(handler=cmd_device_register)

    monitor = verbs.add_parser('monitor')
    monitor.add_argument('--campaign', type=int, required=True)
    monitor.add_argument('--at', help='evaluate as of this time')
    monitor.set_defaults(handler=cmd_monitor)

    importer = verbs.add_parser('import')
    importer.add_argument('file', help='long-format CSV')
    importer.add_argument('--campaign', type=int, required=True)
    importer.set_defaults(handler=cmd_import)

    exporter = verbs.add_parser('export')
    exporter.add_argument('--campaign', type=int, required=True)
    exporter.add_argument('--account')
    exporter.add_argument('--from', dest='start')
    exporter.add_argument('--to', dest='end')
    exporter.add_argument('--out')
    exporter.set_defaults(handler=cmd_export)

    simulate = verbs.add_parser('simulate')
    simulate.add_argument('scenario', nargs='?', help='scenario YAML file')
    simulate.add_argument('--seed', type=int)
    simulate.add_argument('--report', help='write the JSON report here')
    simulate.add_argument('--events', help='write the event log here')
    simulate.set_defaults(handler=cmd_simulate)
    return parser


async def _run(ctl: Gearctl) -> int:
    handler: Handler = ctl.args.handler
    try:
        return await handler(ctl)
    finally:
        ctl.close()


def main(
        argv: Optional[Sequence[str]] = None,
        env: Optional[Mapping[str, str]] = None,
        out: Optional[TextIO] = None,
        err: Optional[TextIO] = None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    args = build_parser().parse_args(argv)
    flags = {name: getattr(args, name) for name in SETTING_FLAGS}
    try:
        settings = Settings.from_sources(
            flags, dict(os.environ) if env is None else env)
        setup_logging(settings.get_verbosity())
        ctl = Gearctl(settings, args, out, err)
        return asyncio.run(_run(ctl))
    except ConfigurationError as e:
        err.write(f'gearctl: {e.message}\n')
        return EXIT_CONFIGURATION
    except DataGearError as e:
        logger.critical(f'{type(e).__name__}: {e.message}')
        err.write(f'gearctl: {e.code}: {e.message}\n')
        return EXIT_FAILURE


def run_gearctl() -> None:
    sys.exit(main())


if __name__ == '__main__':  # pragma: no mutate
    run_gearctl()
