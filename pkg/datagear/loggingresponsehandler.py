from .common import UploadResult, UploadResultHandler
import logging

logger = logging.getLogger(__name__)


class LoggingUploadResultHandler(UploadResultHandler):
    def handle_result(self, result: UploadResult) -> None:
        target = f'{result.household}/{result.device_name}'
        error = result.error
        if error:
            errortype = type(error).__name__
            logger.error(
                f'{errortype}: {str(error)} - {target} @ {result.upload_time}')
        elif result.duplicates:
            logger.warning(
                f'{result.stored}/{result.size} stored,'
                f' {result.duplicates} duplicates - {target}')
        else:
            logger.info(
                f'{result.stored}/{result.size} stored - {target}'
                f' @ {result.upload_time}')
