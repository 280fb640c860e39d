from typing import Optional


class DataGearError(Exception):
    code: str = 'error'
    status: int = 400

    def __init__(self, message: str) -> None:
        super().__init__(message)
        self.message = message


class ConfigurationError(DataGearError):
    code = 'configuration'


class ValidationError(DataGearError):
    code = 'invalid'


class PropertyNameError(ValidationError):
    code = 'invalid_property_name'


class ValueFormatError(ValidationError):
    code = 'invalid_value'


class UnknownDataSourceTypeError(ValidationError):
    code = 'unknown_data_source_type'


class UnknownPropertyError(ValidationError):
    code = 'unknown_property'


class TelegramError(DataGearError):
    code = 'telegram'


class TelegramStructureError(TelegramError):
    code = 'telegram_structure'


class MalformedObisLineError(TelegramError):
    code = 'malformed_obis_line'

    def __init__(self, line_no: int, line: str) -> None:
        super().__init__(f'malformed OBIS line {line_no}: {line!r}')
        self.line_no = line_no
        self.line = line


class TimestampError(DataGearError):
    code = 'timestamp'


class NonexistentLocalTimeError(TimestampError):
    code = 'nonexistent_local_time'


class InconsistentDstFlagError(TimestampError):
    code = 'inconsistent_dst_flag'


class ParityError(DataGearError):
    code = 'parity'

    def __init__(self, word: int) -> None:
        super().__init__(f'OpenTherm parity violation in word 0x{word:08X}')
        self.word = word


class ReplayFormatError(DataGearError):
    code = 'replay_format'

    def __init__(self, line_no: int, message: str) -> None:
        super().__init__(f'line {line_no}: {message}')
        self.line_no = line_no


class GeoError(ValidationError):
    code = 'geo'


class UnauthorizedError(DataGearError):
    code = 'unauthorized'
    status = 401


class ForbiddenError(DataGearError):
    code = 'forbidden'
    status = 403


class NotFoundError(DataGearError):
    code = 'not_found'
    status = 404


class UnknownTokenError(NotFoundError):
    code = 'unknown_token'


class ConflictError(DataGearError):
    code = 'conflict'
    status = 409


class DuplicateNameError(ConflictError):
    code = 'duplicate_name'


class TokenConsumedError(ConflictError):
    code = 'token_consumed'


class DuplicateActivationError(ConflictError):
    code = 'duplicate_activation'


class NotActivatableError(ConflictError):
    code = 'not_activatable'


class ProofOfPossessionError(ForbiddenError):
    code = 'proof_of_possession'


class PrivacyViolationError(DataGearError):
    code = 'privacy_violation'
    status = 422


class DuplicatePseudonymError(DataGearError):
    code = 'duplicate_pseudonym'


class ApiError(DataGearError):
    """Server rejection as seen by a client, whatever the transport."""

    def __init__(
            self,
            status: int,
            code: str,
            message: str,
            path: Optional[str] = None) -> None:
        super().__init__(message)
        self.status = status
        self.code = code
        self.path = path

    def __str__(self) -> str:
        return f'{self.status} {self.code}: {self.message}'
