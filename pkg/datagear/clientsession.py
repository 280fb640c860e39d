from .common import ClientConfig
import aiohttp
import asyncio
import logging
from types import SimpleNamespace
from aiohttp import (
    ClientSession,
    TraceConfig,
    TraceRequestStartParams,
    TCPConnector,
    ClientTimeout
)
from aiohttp_retry import RetryClient, ExponentialRetry  # type: ignore
from abc import abstractmethod, ABC

logger = logging.getLogger(__name__)


class ClientSessionFactory(ABC):
    @abstractmethod  # pragma: no mutate
    def get_client_session(self, config: ClientConfig) -> ClientSession:
        pass


class DefaultClientSessionFactory(ClientSessionFactory):
    """
    Retrying session for the campaign server. Server errors (5xx) and
    connection failures are retried with exponential backoff; 4xx answers
    are returned to the caller, which turns them into ApiError.
    """

    def get_client_session(self, config: ClientConfig) -> ClientSession:
        async def _on_request_start(
            session: ClientSession,
            trace_config_ctx: SimpleNamespace,
            params: TraceRequestStartParams
        ) -> None:
            current_attempt = \
                trace_config_ctx.trace_request_ctx['current_attempt']
            if current_attempt > 1:
                logger.warning(
                    f'Retry attempt #{current_attempt} of '
                    f'{config.max_tries}: {params.method} {params.url.path}')
        trace_config = TraceConfig()
        trace_config.on_request_start.append(_on_request_start)
        connector = TCPConnector(
            limit_per_host=max(0, config.connect_limit_per_host),
            ttl_dns_cache=600
        )
        retry_options = ExponentialRetry(
            attempts=config.max_tries,
            max_timeout=config.max_time,
            exceptions={
                aiohttp.ClientConnectionError,
                asyncio.TimeoutError
            })
        return RetryClient(
            raise_for_status=False,
            connector=connector,
            timeout=ClientTimeout(total=config.timeout),
            headers={'User-Agent': config.agent},
            retry_options=retry_options,
            trace_configs=[trace_config])
