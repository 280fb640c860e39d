import enum
from dataclasses import dataclass, field
from typing import List, Optional, Tuple
from .errors import ValidationError
from .properties import PropertyDescriptor


@dataclass(frozen=True)
class Measurement:
    property: str
    time: int
    value: str

    def __post_init__(self) -> None:
        if isinstance(self.time, bool) or not isinstance(self.time, int):
            raise ValidationError(
                f'measurement time must be integer Unix seconds: '
                f'{self.time!r}')

    def key(self) -> Tuple[str, int]:
        return (self.property, self.time)


@dataclass(frozen=True)
class Upload:
    source_id: Optional[int]
    upload_time: int
    measurements: Tuple[Measurement, ...]

    @property
    def size(self) -> int:
        return len(self.measurements)

    def check_times(self) -> None:
        for measurement in self.measurements:
            if measurement.time > self.upload_time:
                raise ValidationError(
                    f'measurement {measurement.property} at '
                    f'{measurement.time} is later than upload time '
                    f'{self.upload_time}')


class DataSourceVariant(enum.Enum):
    DEVICE_TYPE = 'device_type'
    ENERGY_QUERY = 'energy_query'
    CLOUD_FEED = 'cloud_feed'


@dataclass(frozen=True)
class DataSourceType:
    variant: DataSourceVariant
    type_name: str
    properties: Tuple[PropertyDescriptor, ...] = ()
    upload_interval: Optional[int] = None
    relayed: bool = False

    def __post_init__(self) -> None:
        if self.variant is DataSourceVariant.DEVICE_TYPE:
            if not self.upload_interval or self.upload_interval <= 0:
                raise ValidationError(
                    f'device type {self.type_name} needs an upload interval')
        elif self.upload_interval is not None:
            raise ValidationError(
                f'{self.type_name}: only device types have upload intervals')

    @property
    def is_device(self) -> bool:
        return self.variant is DataSourceVariant.DEVICE_TYPE

    def property_names(self) -> List[str]:
        return [p.name for p in self.properties]

    def descriptor(self, name: str) -> Optional[PropertyDescriptor]:
        for descriptor in self.properties:
            if descriptor.name == name:
                return descriptor
        return None


@dataclass(frozen=True)
class Campaign:
    campaign_id: int
    app_id: int
    name: str
    data_source_list: Tuple[DataSourceType, ...]
    overdue_multiplier: Optional[float] = None

    @property
    def activatable(self) -> bool:
        return len(self.data_source_list) > 0

    def type_names(self) -> List[str]:
        return [t.type_name for t in self.data_source_list]


class ActivationState(enum.Enum):
    PENDING = 'pending'
    ACTIVATED = 'activated'


@dataclass(frozen=True)
class Account:
    account_id: str
    campaign_id: int
    activation_state: ActivationState
    activated_at: Optional[int] = None


class PrincipalKind(enum.Enum):
    ADMIN = 'admin'
    ACCOUNT = 'account'
    DEVICE = 'device'


@dataclass(frozen=True)
class Principal:
    kind: PrincipalKind
    subject: Optional[str] = None


@dataclass(frozen=True)
class DataSourceStatus:
    type_name: str
    variant: DataSourceVariant
    source_id: Optional[int]
    device_name: Optional[str]
    latest_measurement_time: Optional[int]
    expected_interval: Optional[int]
    next_expected_time: Optional[int]
    overdue: bool
    latest_heartbeat: Optional[int] = None


@dataclass(frozen=True)
class AccountStatus:
    account_id: str
    activated_at: Optional[int]
    sources: Tuple[DataSourceStatus, ...] = field(default_factory=tuple)


@dataclass(frozen=True)
class FleetStatus:
    campaign_id: int
    at: int
    accounts: Tuple[AccountStatus, ...]
    not_activated: Tuple[str, ...]
    unanswered_queries: int

    def overdue_count(self) -> int:
        return sum(
            1 for account in self.accounts
            for source in account.sources if source.overdue)


@dataclass(frozen=True)
class App:
    app_id: int
    name: str


@dataclass(frozen=True)
class ActivationToken:
    """Plaintext token, handed out exactly once by account creation."""
    token: str
    account_id: str
    consumed: bool = False


@dataclass(frozen=True)
class SessionToken:
    token: str
    principal: Principal
    issued_at: int


@dataclass(frozen=True)
class DeviceRecord:
    device_id: int
    device_name: str
    type_name: str
    pop_hash: str
    account_id: Optional[str] = None
    activated_at: Optional[int] = None


class SourceOrigin(enum.Enum):
    DEVICE = 'device'
    ENERGY_QUERY = 'energy_query'
    CLOUD_FEED = 'cloud_feed'
    IMPORT = 'import'


@dataclass(frozen=True)
class DataSourceInstance:
    source_id: int
    account_id: str
    type_name: str
    origin: SourceOrigin
    device_id: Optional[int] = None
    device_name: Optional[str] = None
    created_at: Optional[int] = None
    upload_interval: Optional[int] = None


@dataclass(frozen=True)
class IngestResult:
    stored: int
    duplicates: int


@dataclass(frozen=True)
class ImportRecord:
    account_id: str
    source_type: str
    property: str
    unit: str
    time: int
    value: str


@dataclass(frozen=True)
class ExportRow:
    account_id: str
    source_type: str
    property: str
    unit: str
    time: int
    value: str
