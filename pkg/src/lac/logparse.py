"""Parsers for the five CERT-style activity log files.

Each file kind (email, file, http, device, logon) is a header-bearing CSV.
Well-formed rows become LogEvents carrying one of the 21 activity codes;
malformed rows are counted and skipped with a diagnostic, never silently
dropped. Email rows additionally yield sender/recipient edge records for
friendship-graph construction.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Iterable

from lac.errors import DataError

TIMESTAMP_FORMAT = "%m/%d/%Y %H:%M:%S"

# Tie-break order for equal timestamps, also the on-disk source encoding.
SOURCE_ORDER = {"logon": 0, "device": 1, "file": 2, "http": 3, "email": 4}
SOURCE_NAMES = tuple(sorted(SOURCE_ORDER, key=SOURCE_ORDER.get))

FILE_COLUMNS = {
    "email": ["Id", "date", "employee", "PC", "to", "cc", "bcc", "from",
              "activity", "size", "attachments", "contents"],
    "file": ["Id", "date", "employee", "PC", "filename", "activity",
             "to_removable_media", "from_removable_media", "content"],
    "http": ["Id", "date", "employee", "PC", "url", "activity", "content"],
    "device": ["Id", "date", "employee", "PC", "file-tree", "activity"],
    "logon": ["Id", "date", "employee", "PC", "activity"],
}

# Activity code table: the full 21-code taxonomy. File activities carry a
# _from-removable_to-removable_decoy suffix triple; only the 12 combinations
# below exist, anything else is treated as malformed.
SIMPLE_ACTIVITY_CODES = {
    "logon": {"Logoff": 1, "Logon": 2},
    "device": {"Connect": 3, "Disconnect": 4},
    "email": {"Send": 5, "View": 6},
    "http": {"WWW Download": 19, "WWW Upload": 20, "WWW Visit": 21},
}

FILE_ACTIVITY_CODES = {
    ("File Copy", 0, 1, 0): 7,
    ("File Copy", 0, 1, 1): 8,
    ("File Copy", 1, 0, 0): 9,
    ("File Copy", 1, 0, 1): 10,
    ("File Delete", 0, 1, 0): 11,
    ("File Delete", 0, 1, 1): 12,
    ("File Open", 0, 0, 0): 13,
    ("File Open", 0, 0, 1): 14,
    ("File Open", 0, 1, 0): 15,
    ("File Open", 0, 1, 1): 16,
    ("File Write", 1, 0, 0): 17,
    ("File Write", 1, 0, 1): 18,
}

ACTIVITY_NAMES = {
    1: "Logoff", 2: "Logon", 3: "Connect", 4: "Disconnect",
    5: "Send", 6: "View",
    7: "File Copy_0_1_0", 8: "File Copy_0_1_1",
    9: "File Copy_1_0_0", 10: "File Copy_1_0_1",
    11: "File Delete_0_1_0", 12: "File Delete_0_1_1",
    13: "File Open_0_0_0", 14: "File Open_0_0_1",
    15: "File Open_0_1_0", 16: "File Open_0_1_1",
    17: "File Write_1_0_0", 18: "File Write_1_0_1",
    19: "WWW Download", 20: "WWW Upload", 21: "WWW Visit",
}

# Codes each source may legally produce (LogEvent invariant).
SOURCE_CODE_RANGES = {
    "logon": frozenset({1, 2}),
    "device": frozenset({3, 4}),
    "email": frozenset({5, 6}),
    "file": frozenset(range(7, 19)),
    "http": frozenset({19, 20, 21}),
}


@dataclass(slots=True)
class LogEvent:
    """One timestamped activity record for one employee."""

    employee: str
    pc: str
    timestamp: datetime
    activity: int
    source: str
    raw_id: str

    def __post_init__(self) -> None:
        if self.activity not in SOURCE_CODE_RANGES[self.source]:
            raise DataError(
                f"activity code {self.activity} is not valid for source "
                f"'{self.source}'"
            )


@dataclass(slots=True)
class EmailEdgeRecord:
    """Sender plus the union of to/cc/bcc recipients of one email row."""

    sender: str
    recipients: list[str]
    timestamp: datetime


@dataclass(slots=True)
class Timeline:
    """Chronologically sorted events of a single employee."""

    employee: str
    events: list[LogEvent] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.events)


@dataclass(slots=True)
class ParseResult:
    events: list[LogEvent]
    email_edges: list[EmailEdgeRecord]
    skipped: int
    diagnostics: list[str]
    # learned from Send rows, where the row's employee is the from-address owner
    address_book: dict[str, str] = field(default_factory=dict)


_MAX_DIAGNOSTICS = 25


def _file_activity_code(activity: str, to_removable: str, from_removable: str) -> int | None:
    """Resolve a file-row activity to its code 7..18, or None if unknown.

    The suffix triple (from-removable, to-removable, decoy) is read from the
    activity string when present; otherwise it is derived from the removable
    media columns with decoy 0.
    """
    if "_" in activity:
        parts = activity.split("_")
        if len(parts) != 4 or any(p not in ("0", "1") for p in parts[1:]):
            return None
        base = parts[0]
        bits = (int(parts[1]), int(parts[2]), int(parts[3]))
    else:
        base = activity
        truthy = ("1", "true", "True", "TRUE")
        bits = (int(from_removable in truthy), int(to_removable in truthy), 0)
    return FILE_ACTIVITY_CODES.get((base, *bits))


def _split_addresses(*fields: str) -> list[str]:
    seen: dict[str, None] = {}
    for f in fields:
        for addr in f.split(";"):
            addr = addr.strip()
            if addr:
                seen.setdefault(addr, None)
    return list(seen)


def parse_log(kind: str, stream: IO[str]) -> ParseResult:
    """Parse one log file of the named kind from a text stream.

    Raises DataError if the kind is unknown or the header row does not match
    the expected column set. Malformed data rows are skipped and counted.
    """
    if kind not in FILE_COLUMNS:
        raise DataError(f"unknown log kind '{kind}'")
    expected = FILE_COLUMNS[kind]
    reader = csv.reader(stream)
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{kind}: file is empty, expected header {expected}") from None
    if header != expected:
        raise DataError(f"{kind}: bad header {header}, expected {expected}")

    col = {name: i for i, name in enumerate(expected)}
    simple_codes = SIMPLE_ACTIVITY_CODES.get(kind)
    events: list[LogEvent] = []
    edges: list[EmailEdgeRecord] = []
    address_book: dict[str, str] = {}
    skipped = 0
    diagnostics: list[str] = []

    def skip(line_no: int, reason: str) -> None:
        nonlocal skipped
        skipped += 1
        if len(diagnostics) < _MAX_DIAGNOSTICS:
            diagnostics.append(f"{kind} line {line_no}: {reason}")

    for line_no, row in enumerate(reader, start=2):
        if len(row) != len(expected):
            skip(line_no, f"expected {len(expected)} fields, got {len(row)}")
            continue
        raw_id = row[col["Id"]]
        employee = row[col["employee"]]
        pc = row[col["PC"]]
        activity = row[col["activity"]]
        if not employee or not pc:
            skip(line_no, "missing employee or PC")
            continue
        try:
            ts = datetime.strptime(row[col["date"]], TIMESTAMP_FORMAT)
        except ValueError:
            skip(line_no, f"bad timestamp {row[col['date']]!r}")
            continue
        if kind == "file":
            code = _file_activity_code(
                activity, row[col["to_removable_media"]], row[col["from_removable_media"]]
            )
        else:
            code = simple_codes.get(activity)
        if code is None:
            skip(line_no, f"unknown activity {activity!r}")
            continue
        events.append(LogEvent(employee, pc, ts, code, kind, raw_id))
        if kind == "email":
            sender = row[col["from"]]
            recipients = _split_addresses(row[col["to"]], row[col["cc"]], row[col["bcc"]])
            if sender and recipients:
                edges.append(EmailEdgeRecord(sender, recipients, ts))
            if code == 5 and sender:
                address_book.setdefault(sender, employee)
    return ParseResult(events, edges, skipped, diagnostics, address_book)


def parse_log_file(kind: str, path) -> ParseResult:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return parse_log(kind, fh)


def event_sort_key(event: LogEvent) -> tuple:
    return (event.timestamp, SOURCE_ORDER[event.source], event.raw_id)


def build_timelines(events: Iterable[LogEvent]) -> dict[str, Timeline]:
    """Group events per employee, sorted by (timestamp, source kind, raw id)."""
    grouped: dict[str, list[LogEvent]] = {}
    for ev in events:
        grouped.setdefault(ev.employee, []).append(ev)
    timelines: dict[str, Timeline] = {}
    for emp in sorted(grouped):
        evs = grouped[emp]
        evs.sort(key=event_sort_key)
        timelines[emp] = Timeline(emp, evs)
    return timelines
