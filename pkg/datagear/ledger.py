"""
The deployer's pseudonym ledger: a local CSV file mapping pseudonyms to
server account ids. Contact details live only here; activation tokens
are never written to it.
"""
import csv
import fcntl
import logging
import os
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional, TextIO
from .errors import ConfigurationError, DuplicatePseudonymError

logger = logging.getLogger(__name__)

LEDGER_HEADER = ['pseudonym', 'account_id', 'created_at', 'note']


@dataclass(frozen=True)
class PseudonymLedgerEntry:
    pseudonym: str
    account_id: str
    created_at: int
    note: str = ''


class PseudonymLedger:
    def __init__(self, path: str) -> None:
        self.path = path

    @contextmanager
    def _locked(self, exclusive: bool) -> Iterator[TextIO]:
        directory = os.path.dirname(os.path.abspath(self.path))
        if exclusive:
            os.makedirs(directory, exist_ok=True)
        try:
            handle = open(self.path, 'a+' if exclusive else 'r',
                          newline='', encoding='utf-8')
        except OSError as e:
            raise ConfigurationError(f'cannot open ledger {self.path}: {e}')
        try:
            fcntl.flock(
                handle.fileno(),
                fcntl.LOCK_EX if exclusive else fcntl.LOCK_SH)
            handle.seek(0)
            yield handle
        finally:
            fcntl.flock(handle.fileno(), fcntl.LOCK_UN)
            handle.close()

    def _read(self, handle: TextIO) -> List[PseudonymLedgerEntry]:
        entries: List[PseudonymLedgerEntry] = []
        reader = csv.reader(handle)
        for line_no, row in enumerate(reader, start=1):
            if line_no == 1 and row == LEDGER_HEADER:
                continue
            if not row:
                continue
            if len(row) != len(LEDGER_HEADER) or not row[2].isdigit():
                raise ConfigurationError(
                    f'ledger {self.path} line {line_no} is malformed')
            entries.append(
                PseudonymLedgerEntry(row[0], row[1], int(row[2]), row[3]))
        return entries

    def entries(self) -> List[PseudonymLedgerEntry]:
        if not os.path.exists(self.path):
            return []
        with self._locked(exclusive=False) as handle:
            return self._read(handle)

    def find(self, pseudonym: str) -> Optional[PseudonymLedgerEntry]:
        for entry in self.entries():
            if entry.pseudonym == pseudonym:
                return entry
        return None

    def check_unused(self, pseudonym: str) -> None:
        check_pseudonym(pseudonym)
        if self.find(pseudonym) is not None:
            raise DuplicatePseudonymError(
                f'pseudonym {pseudonym!r} is already in {self.path}')

    def append(
            self,
            pseudonym: str,
            account_id: str,
            created_at: int,
            note: str = '') -> PseudonymLedgerEntry:
        check_pseudonym(pseudonym)
        entry = PseudonymLedgerEntry(pseudonym, account_id, created_at, note)
        with self._locked(exclusive=True) as handle:
            existing = self._read(handle)
            if any(e.pseudonym == pseudonym for e in existing):
                raise DuplicatePseudonymError(
                    f'pseudonym {pseudonym!r} is already in {self.path}')
            handle.seek(0, os.SEEK_END)
            writer = csv.writer(handle, lineterminator='\n')
            if handle.tell() == 0:
                writer.writerow(LEDGER_HEADER)
            writer.writerow(
                [pseudonym, account_id, str(created_at), note])
            handle.flush()
            os.fsync(handle.fileno())
        logger.info(f'Ledger: {pseudonym} -> {account_id}')
        return entry

    def by_account(self) -> Dict[str, str]:
        return {e.account_id: e.pseudonym for e in self.entries()}


def check_pseudonym(pseudonym: str) -> str:
    if not pseudonym or pseudonym != pseudonym.strip() or \
            any(c in pseudonym for c in '\r\n'):
        raise ConfigurationError(f'bad pseudonym {pseudonym!r}')
    return pseudonym
