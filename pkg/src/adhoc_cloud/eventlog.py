"""Line-delimited event log.

Each record is one tab-separated line::

    <time>\t<kind>\t<id,id,...>\t<key=value key=value ...>

Field order is fixed and detail keys keep their emission order, so two
identical runs produce byte-identical logs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional


def fmt_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if value == int(value) and abs(value) < 1e15:
            return str(int(value))
        text = f"{value:.6f}".rstrip("0").rstrip(".")
        return text if text not in ("-0", "") else "0"
    if isinstance(value, (list, tuple, frozenset, set)):
        items = sorted(value) if isinstance(value, (set, frozenset)) else value
        return ",".join(str(v) for v in items) or "-"
    if value is None:
        return "-"
    return str(value)


def parse_value(text: str):
    if text == "true":
        return True
    if text == "false":
        return False
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


@dataclass(frozen=True)
class LogRecord:
    time: float
    kind: str
    ids: tuple = ()
    details: dict = field(default_factory=dict)

    def get(self, key, default=None):
        return self.details.get(key, default)

    def to_line(self) -> str:
        ids = ",".join(self.ids) or "-"
        details = " ".join(f"{k}={fmt_value(v)}" for k, v in self.details.items())
        return f"{fmt_value(float(self.time))}\t{self.kind}\t{ids}\t{details}"

    @classmethod
    def from_line(cls, line: str) -> "LogRecord":
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 4:
            raise ValueError(f"malformed event-log line: {line!r}")
        time, kind, ids, details = parts
        id_tuple = () if ids == "-" else tuple(ids.split(","))
        parsed = {}
        for token in details.split():
            key, _, raw = token.partition("=")
            parsed[key] = parse_value(raw)
        return cls(float(time), kind, id_tuple, parsed)


def list_field(value) -> list[str]:
    """Decode a comma-joined detail value back into a list of strings."""
    if isinstance(value, (list, tuple, set, frozenset)):
        return [str(v) for v in value]
    if value in (None, "-", ""):
        return []
    return str(value).split(",")


class EventLog:
    def __init__(self):
        self.records: list[LogRecord] = []

    def emit(self, time: float, kind: str, ids: Iterable[str] = (), **details) -> LogRecord:
        record = LogRecord(float(time), kind, tuple(ids), dict(details))
        self.records.append(record)
        return record

    def __iter__(self) -> Iterator[LogRecord]:
        return iter(self.records)

    def __len__(self):
        return len(self.records)

    def lines(self) -> list[str]:
        return [r.to_line() for r in self.records]

    def dumps(self) -> str:
        return "".join(line + "\n" for line in self.lines())

    def of_kind(self, kind: str, subject: Optional[str] = None) -> list[LogRecord]:
        return [r for r in self.records
                if r.kind == kind and (subject is None or subject in r.ids)]


def read_log(path) -> list[LogRecord]:
    with open(path) as fh:
        return [LogRecord.from_line(line) for line in fh if line.strip()]
