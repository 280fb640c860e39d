import logging
import re
from typing import Any, Dict, Mapping, Optional, Union
import validators  # type: ignore
import yaml
from .common import (
    DEFAULT_ACTIVATION_BASE_URL,
    DEFAULT_CONNECT_LIMIT_PER_HOST,
    DEFAULT_DB_PATH,
    DEFAULT_LEDGER_PATH,
    DEFAULT_LISTEN_HOST,
    DEFAULT_LISTEN_PORT,
    DEFAULT_OUTPUT_FORMAT,
    DEFAULT_OVERDUE_MULTIPLIER,
    DEFAULT_RETRY_MAX_TIME,
    DEFAULT_RETRY_MAX_TRIES,
    DEFAULT_SERVER_URL,
    DEFAULT_TIMEOUT,
    ENV_PREFIX,
    OUTPUT_FORMATS,
    ClientConfig,
    ServerConfig
)
from .errors import ConfigurationError

logger = logging.getLogger(__name__)


def load_config_file(path: Optional[str]) -> Dict[str, Any]:
    if not path:
        return dict()
    try:
        with open(path, encoding='utf-8') as handle:
            data = yaml.safe_load(handle)
    except OSError as e:
        raise ConfigurationError(f'cannot read config file {path}: {e}')
    except yaml.YAMLError as e:
        raise ConfigurationError(f'config file {path} is not valid YAML: {e}')
    if data is None:
        return dict()
    if not isinstance(data, dict):
        raise ConfigurationError(
            f'config file {path} must hold a mapping of settings')
    return data


class Settings:
    """
    Resolves every setting from command-line flags, then DATAGEAR_*
    environment variables, then the YAML config file.
    """

    def __init__(
            self,
            flags: Optional[Mapping[str, Any]] = None,
            env: Optional[Mapping[str, str]] = None,
            config_file: Optional[Mapping[str, Any]] = None) -> None:
        self.flags = dict(flags or dict())
        self.env = dict(env or dict())
        self.config_file = dict(config_file or dict())

    @classmethod
    def from_sources(
            cls,
            flags: Mapping[str, Any],
            env: Mapping[str, str]) -> 'Settings':
        path = flags.get('config') or env.get(f'{ENV_PREFIX}CONFIG')
        return cls(flags, env, load_config_file(path))

    def _lookup(self, name: str) -> Optional[str]:
        value = self.flags.get(name)
        if value is None:
            value = self.env.get(self._varname(name))
        if value is None:
            value = self.config_file.get(name)
        if value is None:
            return None
        text = str(value).strip()
        return text or None

    def _varname(self, name: str) -> str:
        return f'{ENV_PREFIX}{name.upper()}'

    def is_set(self, name: str) -> bool:
        """True when a flag, variable or config entry names this setting."""
        return self._lookup(name) is not None

    def get_server_url(self) -> str:
        return self._url('server_url', DEFAULT_SERVER_URL)

    def get_activation_base_url(self) -> str:
        return self._url(
            'activation_base_url', DEFAULT_ACTIVATION_BASE_URL).rstrip('/')

    def get_admin_token(self) -> Optional[str]:
        token = self._lookup('admin_token')
        if token:
            return token
        path = self._lookup('admin_token_file')
        if not path:
            return None
        try:
            with open(path, encoding='utf-8') as handle:
                token = handle.read().strip()
        except OSError as e:
            raise ConfigurationError(
                f"'{self._varname('admin_token_file')}' unreadable: {e}")
        if not token:
            raise ConfigurationError(f'admin token file {path} is empty')
        return token

    def require_admin_token(self) -> str:
        token = self.get_admin_token()
        if not token:
            raise ConfigurationError(
                'admin token expected: pass --admin-token-file or set '
                f"'{self._varname('admin_token')}'")
        return token

    def get_ledger(self) -> str:
        return self._lookup('ledger') or DEFAULT_LEDGER_PATH

    def get_db(self) -> Optional[str]:
        return self._lookup('db')

    def get_listen_host(self) -> str:
        return self._lookup('listen_host') or DEFAULT_LISTEN_HOST

    def get_listen_port(self) -> int:
        return self._numeric('listen_port', DEFAULT_LISTEN_PORT)

    def get_overdue_multiplier(self) -> float:
        value = self._decimal('overdue_multiplier', DEFAULT_OVERDUE_MULTIPLIER)
        if value < 1:
            raise ConfigurationError(
                f"'{self._varname('overdue_multiplier')}'"
                ' expected to be at least 1')
        return value

    def get_retry_maxtries(self) -> int:
        return self._numeric('max_retries', DEFAULT_RETRY_MAX_TRIES)

    def get_retry_maxtime(self) -> int:
        return self._numeric('max_retry_time', DEFAULT_RETRY_MAX_TIME)

    def get_timeout(self) -> int:
        return self._numeric('timeout', DEFAULT_TIMEOUT)

    def get_output_format(self) -> str:
        value = self._lookup('format') or DEFAULT_OUTPUT_FORMAT
        if value not in OUTPUT_FORMATS:
            raise ConfigurationError(
                f"'{self._varname('format')}' expected one of "
                f"{', '.join(OUTPUT_FORMATS)}")
        return value

    def get_verbosity(self) -> Union[bool, int]:
        verboseStr = self._lookup('verbose')
        if verboseStr:
            if self._get_boolean(verboseStr):
                return True
            levelpattern = '^debug|info|warn(?:ing)?|error|critical$'
            levelmatch = re.search(
                levelpattern, verboseStr, flags=re.IGNORECASE)
            if levelmatch:
                levelname = levelmatch.group(0).upper()
                return logging.getLevelName(levelname)
        return False

    def client_config(self) -> ClientConfig:
        config = ClientConfig()
        config.server_url = self.get_server_url()
        config.admin_token = self.get_admin_token()
        config.max_tries = self.get_retry_maxtries()
        config.max_time = self.get_retry_maxtime()
        config.timeout = self.get_timeout()
        config.connect_limit_per_host = DEFAULT_CONNECT_LIMIT_PER_HOST
        return config

    def server_config(self) -> ServerConfig:
        config = ServerConfig()
        config.db_path = self.get_db() or DEFAULT_DB_PATH
        config.listen_host = self.get_listen_host()
        config.listen_port = self.get_listen_port()
        config.admin_token = self.require_admin_token()
        config.overdue_multiplier = self.get_overdue_multiplier()
        return config

    def _get_boolean(self, valueStr: Optional[str]) -> bool:
        truepattern = '^t|true|y|yes|on$'
        return bool(
            valueStr and
            re.search(truepattern, valueStr, flags=re.IGNORECASE))

    def _url(self, name: str, default: str) -> str:
        value = self._lookup(name)
        if not value:
            return default
        if not validators.url(value):
            raise ConfigurationError(
                f"'{self._varname(name)}' expected to contain valid url: "
                f'{value}')
        return value

    def _numeric(self, name: str, default: int) -> int:
        valueStr = self._lookup(name)
        if valueStr:
            if not re.search('^-?\\d+$', valueStr):
                raise ConfigurationError(
                    f"'{self._varname(name)}' expected to be a number")
            return int(valueStr)
        return default

    def _decimal(self, name: str, default: float) -> float:
        valueStr = self._lookup(name)
        if valueStr:
            if not re.search('^\\d+(?:\\.\\d+)?$', valueStr):
                raise ConfigurationError(
                    f"'{self._varname(name)}' expected to be a"
                    ' non-negative number')
            return float(valueStr)
        return default
