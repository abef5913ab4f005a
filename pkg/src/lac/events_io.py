"""Compact versioned binary container for parsed LogEvents and email edges.

Layout (all integers little-endian):

    magic     8 bytes  b"LACEVT\\x00\\x01" (trailing byte is the format version)
    u32       number of employee-id table entries
    u32       number of pc-id table entries
    u64       number of event records
    u64       number of email-edge records
    employee table: per entry u16 utf-8 byte length + bytes
    pc table:       same encoding
    event records, each:
        u32  employee table index
        u32  pc table index
        i64  timestamp as seconds since 1970-01-01T00:00:00 (naive)
        u8   activity code (1..21)
        u8   source kind (see logparse.SOURCE_ORDER)
        u16  raw-id utf-8 byte length, followed by the bytes
    edge records (sender/recipients already resolved to employee ids), each:
        u32  sender employee table index
        i64  timestamp (same encoding as events)
        u16  recipient count, followed by that many u32 employee indices

Timestamps are naive wall-clock values converted with calendar.timegm, so
files are portable across machine timezones.
"""

from __future__ import annotations

import calendar
import struct
from datetime import datetime, timedelta
from typing import Iterable

from lac.errors import DataError
from lac.logparse import SOURCE_NAMES, SOURCE_ORDER, EmailEdgeRecord, LogEvent

MAGIC = b"LACEVT\x00\x01"

_EPOCH = datetime(1970, 1, 1)


def _to_epoch(ts: datetime) -> int:
    return calendar.timegm(ts.timetuple())


def _from_epoch(sec: int) -> datetime:
    return _EPOCH + timedelta(seconds=sec)


def _write_str_table(fh, entries: list[str]) -> None:
    for s in entries:
        raw = s.encode("utf-8")
        fh.write(struct.pack("<H", len(raw)))
        fh.write(raw)


def write_events(path, events: Iterable[LogEvent],
                 edges: Iterable[EmailEdgeRecord] = ()) -> int:
    """Write events plus id-resolved email edges; returns the event count."""
    events = list(events)
    edges = list(edges)
    employees = sorted(
        {ev.employee for ev in events}
        | {e.sender for e in edges}
        | {r for e in edges for r in e.recipients}
    )
    pcs = sorted({ev.pc for ev in events})
    emp_idx = {e: i for i, e in enumerate(employees)}
    pc_idx = {p: i for i, p in enumerate(pcs)}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIQQ", len(employees), len(pcs), len(events), len(edges)))
        _write_str_table(fh, employees)
        _write_str_table(fh, pcs)
        for ev in events:
            raw = ev.raw_id.encode("utf-8")
            fh.write(struct.pack(
                "<IIqBBH",
                emp_idx[ev.employee], pc_idx[ev.pc], _to_epoch(ev.timestamp),
                ev.activity, SOURCE_ORDER[ev.source], len(raw),
            ))
            fh.write(raw)
        for edge in edges:
            fh.write(struct.pack("<IqH", emp_idx[edge.sender],
                                 _to_epoch(edge.timestamp), len(edge.recipients)))
            for r in edge.recipients:
                fh.write(struct.pack("<I", emp_idx[r]))
    return len(events)


class _Reader:
    def __init__(self, data: bytes, path) -> None:
        self.data = data
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise DataError(f"{self.path}: truncated events file")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str) -> tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_events(path) -> tuple[list[LogEvent], list[EmailEdgeRecord]]:
    """Read a binary events container back into (events, email edges)."""
    with open(path, "rb") as fh:
        data = fh.read()
    r = _Reader(data, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise DataError(f"{path}: not a LACEVT v1 events file")
    n_emp, n_pc, n_events, n_edges = r.unpack("<IIQQ")

    def read_table(n: int) -> list[str]:
        out = []
        for _ in range(n):
            (ln,) = r.unpack("<H")
            out.append(r.take(ln).decode("utf-8"))
        return out

    employees = read_table(n_emp)
    pcs = read_table(n_pc)
    events: list[LogEvent] = []
    for _ in range(n_events):
        ei, pi, sec, act, src, id_len = r.unpack("<IIqBBH")
        raw_id = r.take(id_len).decode("utf-8")
        if ei >= n_emp or pi >= n_pc:
            raise DataError(f"{path}: corrupt table index")
        if src >= len(SOURCE_NAMES):
            raise DataError(f"{path}: corrupt source kind {src}")
        events.append(LogEvent(
            employees[ei], pcs[pi], _from_epoch(sec), act, SOURCE_NAMES[src], raw_id,
        ))
    edges: list[EmailEdgeRecord] = []
    for _ in range(n_edges):
        si, sec, n_rec = r.unpack("<IqH")
        if si >= n_emp:
            raise DataError(f"{path}: corrupt sender index")
        recipients = []
        for _ in range(n_rec):
            (ri,) = r.unpack("<I")
            if ri >= n_emp:
                raise DataError(f"{path}: corrupt recipient index")
            recipients.append(employees[ri])
        edges.append(EmailEdgeRecord(employees[si], recipients, _from_epoch(sec)))
    if r.pos != len(data):
        raise DataError(f"{path}: trailing bytes after last record")
    return events, edges
