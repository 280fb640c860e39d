from typing import Optional

DEFAULT_AGENT: str = 'datagear/1.0'
DEFAULT_SERVER_URL: str = 'http://127.0.0.1:8080'
DEFAULT_LISTEN_HOST: str = '127.0.0.1'
DEFAULT_LISTEN_PORT: int = 8080
DEFAULT_DB_PATH: str = 'datagear.sqlite'
DEFAULT_LEDGER_PATH: str = 'pseudonyms.csv'
DEFAULT_ACTIVATION_BASE_URL: str = 'https://app.example.org'
DEFAULT_OVERDUE_MULTIPLIER: float = 2.0
DEFAULT_WEATHER_ZONE_SIGMA_M: float = 3000.0
DEFAULT_RETRY_MAX_TRIES: int = 4
DEFAULT_RETRY_MAX_TIME: int = 30
DEFAULT_CONNECT_LIMIT_PER_HOST: int = 10
DEFAULT_TIMEOUT: int = 60
DEFAULT_OUTPUT_FORMAT: str = 'table'
OUTPUT_FORMATS = ('table', 'csv')
ENV_PREFIX: str = 'DATAGEAR_'


class ServerConfig:
    def __init__(self) -> None:
        self.db_path: str = DEFAULT_DB_PATH
        self.listen_host: str = DEFAULT_LISTEN_HOST
        self.listen_port: int = DEFAULT_LISTEN_PORT
        self.admin_token: Optional[str] = None
        self.overdue_multiplier: float = DEFAULT_OVERDUE_MULTIPLIER


class ClientConfig:
    def __init__(self) -> None:
        self.server_url: str = DEFAULT_SERVER_URL
        self.admin_token: Optional[str] = None
        self.max_tries: int = DEFAULT_RETRY_MAX_TRIES
        self.max_time: int = DEFAULT_RETRY_MAX_TIME
        self.connect_limit_per_host: int = DEFAULT_CONNECT_LIMIT_PER_HOST
        self.timeout: int = DEFAULT_TIMEOUT
        self.agent: str = DEFAULT_AGENT


class UploadResult:
    """Outcome of one simulated upload attempt."""

    def __init__(
            self,
            household: str,
            device_name: str,
            upload_time: int,
            size: int) -> None:
        self.household = household
        self.device_name = device_name
        self.upload_time = upload_time
        self.size = size
        self.stored: int = 0
        self.duplicates: int = 0
        self.error: Optional[Exception] = None


class UploadResultHandler:
    def handle_result(self, result: UploadResult) -> None:
        pass
