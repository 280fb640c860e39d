import unittest
from unittest.mock import patch
from datagear.common import UploadResult
from datagear.errors import ApiError
from datagear.loggingresponsehandler import LoggingUploadResultHandler
import logging

TEST_HOUSEHOLD = 'hh-001'
TEST_DEVICE = 'living-0123456789ab'
TEST_TIME = 1729468800


class TestLoggingUploadResultHandler(unittest.TestCase):

    def setUp(self):
        self.testobj = LoggingUploadResultHandler()
        self.result = UploadResult(TEST_HOUSEHOLD, TEST_DEVICE, TEST_TIME, 6)
        self.logger = logging.getLogger('datagear.loggingresponsehandler')

    def test_info_logs_when_stored(self):
        self.result.stored = 6
        with patch.object(self.logger, 'error') as error_mock,\
                patch.object(self.logger, 'info') as info_mock:
            self.testobj.handle_result(self.result)
            expected = '6/6 stored - hh-001/living-0123456789ab' +\
                ' @ 1729468800'
            info_mock.assert_called_with(expected)
            error_mock.assert_not_called()

    def test_warning_logs_when_duplicates(self):
        self.result.stored = 4
        self.result.duplicates = 2
        with patch.object(self.logger, 'warning') as warning_mock,\
                patch.object(self.logger, 'info') as info_mock:
            self.testobj.handle_result(self.result)
            expected = '4/6 stored, 2 duplicates - hh-001/living-0123456789ab'
            warning_mock.assert_called_with(expected)
            info_mock.assert_not_called()

    def test_error_logs_when_rejected(self):
        self.result.error = ApiError(
            409, 'duplicate_activation', 'already bound')
        with patch.object(self.logger, 'error') as error_mock,\
                patch.object(self.logger, 'info') as info_mock:
            self.testobj.handle_result(self.result)
            error_mock.assert_called_once()
            message = error_mock.call_args[0][0]
            self.assertTrue(message.startswith('ApiError: '))
            self.assertTrue(message.endswith(
                ' - hh-001/living-0123456789ab @ 1729468800'))
            info_mock.assert_not_called()


if __name__ == '__main__':
    unittest.main()
