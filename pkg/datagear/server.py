from .common import ServerConfig
from .errors import ConfigurationError
from .gearctl import setup_logging
from .service import CampaignService
from .settings import Settings
from .store import SqliteStore
from .webapp import make_app
from aiohttp import web
from typing import Mapping, Optional, Sequence
import argparse
import logging
import os
import sys

"""
Runs the campaign server over HTTP. Settings resolve like gearctl's:
flags, then DATAGEAR_* environment variables, then the --config file.
"""

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='datagear.server', description='DataGear campaign server')
    parser.add_argument('--db', help='SQLite file')
    parser.add_argument('--listen-host', dest='listen_host')
    parser.add_argument('--listen-port', dest='listen_port')
    parser.add_argument('--admin-token-file', dest='admin_token_file')
    parser.add_argument('--overdue-multiplier', dest='overdue_multiplier')
    parser.add_argument('--config')
    parser.add_argument('--verbose')
    return parser


def make_server(config: ServerConfig) -> web.Application:
    assert config.admin_token is not None
    store = SqliteStore(config.db_path)
    service = CampaignService(
        store, config.admin_token, config.overdue_multiplier)

    async def close_store(app: web.Application) -> None:
        store.close()

    app = make_app(service)
    app.on_cleanup.append(close_store)
    return app


def run_server(
        argv: Optional[Sequence[str]] = None,
        env: Optional[Mapping[str, str]] = None) -> None:
    args = build_parser().parse_args(argv)
    try:
        settings = Settings.from_sources(
            vars(args), dict(os.environ) if env is None else env)
        setup_logging(settings.get_verbosity())
        config = settings.server_config()
    except ConfigurationError as e:
        sys.stderr.write(f'datagear.server: {e.message}\n')
        sys.exit(2)
    logger.info(
        f'Serving {config.db_path} on'
        f' {config.listen_host}:{config.listen_port}')
    web.run_app(
        make_server(config), host=config.listen_host,
        port=config.listen_port, print=None)


if __name__ == '__main__':  # pragma: no mutate
    run_server()
