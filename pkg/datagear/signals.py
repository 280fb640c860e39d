"""
Sensor value generators for simulated devices. A signal is sampled at a
true Unix time with the device's random generator; recorded traces can
replace any generated curve.
"""
import csv
import logging
import math
import os
import random
from abc import ABC, abstractmethod
from bisect import bisect_right
from datetime import datetime
from typing import Any, List, Mapping, Optional, Sequence, Tuple
from zoneinfo import ZoneInfo
from .errors import ConfigurationError

logger = logging.getLogger(__name__)

HOURS_PER_DAY = 24


def local_hour(t: int, tz: str) -> float:
    local = datetime.fromtimestamp(t, ZoneInfo(tz))
    return local.hour + local.minute / 60 + local.second / 3600


class Signal(ABC):
    @abstractmethod  # pragma: no mutate
    def sample(self, t: int, rng: random.Random) -> float:
        pass


class DiurnalSignal(Signal):
    """Daily cosine around a base value, peaking at peak_hour local time."""

    def __init__(
            self,
            base: float,
            amplitude: float,
            peak_hour: float = 18.0,
            noise: float = 0.0,
            low: Optional[float] = None,
            high: Optional[float] = None,
            tz: str = 'UTC') -> None:
        self.base = base
        self.amplitude = amplitude
        self.peak_hour = peak_hour
        self.noise = noise
        self.low = low
        self.high = high
        self.tz = tz

    def sample(self, t: int, rng: random.Random) -> float:
        phase = 2 * math.pi * (local_hour(t, self.tz) - self.peak_hour) \
            / HOURS_PER_DAY
        value = self.base + self.amplitude * math.cos(phase)
        if self.noise:
            value += rng.gauss(0.0, self.noise)
        if self.low is not None:
            value = max(self.low, value)
        if self.high is not None:
            value = min(self.high, value)
        return value


class CumulativeRegister(Signal):
    """Monotone meter register; rate is units per hour, jitter a fraction."""

    def __init__(
            self,
            start: float,
            rate: float,
            jitter: float = 0.0) -> None:
        if rate < 0:
            raise ConfigurationError('register rate must be >= 0')
        self.value = start
        self.rate = rate
        self.jitter = jitter
        self.last: Optional[int] = None

    def sample(self, t: int, rng: random.Random) -> float:
        if self.last is not None and t > self.last:
            factor = 1.0
            if self.jitter:
                factor += rng.uniform(-self.jitter, self.jitter)
            self.value += max(0.0, self.rate * (t - self.last) / 3600 * factor)
        if self.last is None or t > self.last:
            self.last = t
        return self.value


class ReplaySignal(Signal):
    """Step-hold replay of a recorded (time, value) trace."""

    def __init__(self, points: Sequence[Tuple[int, float]]) -> None:
        if not points:
            raise ConfigurationError('replay trace is empty')
        ordered = sorted(points)
        self.times = [t for t, _ in ordered]
        self.values = [v for _, v in ordered]

    def sample(self, t: int, rng: random.Random) -> float:
        index = bisect_right(self.times, t) - 1
        return self.values[max(index, 0)]


def read_trace(path: str) -> ReplaySignal:
    """Reads 'time,value' rows; a non-numeric first row is a header."""
    points: List[Tuple[int, float]] = []
    try:
        with open(path, newline='', encoding='utf-8') as handle:
            for line_no, row in enumerate(csv.reader(handle), start=1):
                if not row or row[0].startswith('#'):
                    continue
                try:
                    points.append((int(row[0]), float(row[1])))
                except (ValueError, IndexError):
                    if line_no == 1:
                        continue
                    raise ConfigurationError(
                        f'{path} line {line_no}: expected time,value')
    except OSError as e:
        raise ConfigurationError(f'cannot read trace {path}: {e}')
    return ReplaySignal(points)


def signal_from_config(
        config: Mapping[str, Any],
        tz: str,
        base_dir: str = '.') -> Signal:
    """
    Builds a signal from a scenario entry, one of:
      {replay: trace.csv}
      {diurnal: {base, amplitude, peak_hour, noise, low, high}}
      {register: {start, rate, jitter}}
    """
    if 'replay' in config:
        path = str(config['replay'])
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return read_trace(path)
    try:
        if 'diurnal' in config:
            return DiurnalSignal(tz=tz, **dict(config['diurnal']))
        if 'register' in config:
            return CumulativeRegister(**dict(config['register']))
    except TypeError as e:
        raise ConfigurationError(f'bad signal settings {dict(config)}: {e}')
    raise ConfigurationError(
        f'signal needs one of replay, diurnal, register: {dict(config)}')
