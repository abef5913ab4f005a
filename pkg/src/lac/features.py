"""Binarization of events into 22-bit feature vectors and sequence assembly.

Each event becomes 22 bits: hour (5 bits), minute (6), second (6), activity
code (5), each field big-endian, concatenated in that order. Bits are carried
as float64 values in {0.0, 1.0}, the representation the model consumes.
"""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime

import numpy as np

from lac.errors import DataError
from lac.logparse import SOURCE_ORDER, LogEvent, Timeline

FIELD_WIDTHS = (5, 6, 6, 5)  # hour, minute, second, activity
VECTOR_WIDTH = sum(FIELD_WIDTHS)
_FIELD_MAX = (23, 59, 59, 21)
_FIELD_MIN = (0, 0, 0, 1)
_FIELD_NAMES = ("hour", "minute", "second", "activity")


@dataclass(slots=True)
class FeatureSequence:
    """A time-ordered matrix of feature vectors with row provenance.

    rows[t] encodes the event owned by employees[t] at timestamps[t]; the
    provenance arrays stay aligned with rows so per-employee losses can be
    extracted from interleaved sequences.
    """

    label: str
    rows: np.ndarray  # (T, 22) float64 of {0.0, 1.0}
    employees: list[str]
    timestamps: list[datetime]

    def __post_init__(self) -> None:
        if self.rows.shape != (len(self.employees), VECTOR_WIDTH):
            raise DataError("feature rows and provenance length disagree")
        if len(self.employees) != len(self.timestamps):
            raise DataError("provenance employee/timestamp length disagree")

    def __len__(self) -> int:
        return self.rows.shape[0]

    def employee_mask(self, employee: str) -> np.ndarray:
        return np.array([e == employee for e in self.employees], dtype=bool)


def encode_fields(hour: int, minute: int, second: int, activity: int) -> np.ndarray:
    """Encode one (hour, minute, second, activity) tuple into 22 bits."""
    vec = np.empty(VECTOR_WIDTH, dtype=np.float64)
    pos = 0
    for value, width, lo, hi, name in zip(
        (hour, minute, second, activity), FIELD_WIDTHS, _FIELD_MIN, _FIELD_MAX, _FIELD_NAMES
    ):
        if not lo <= value <= hi:
            raise DataError(f"{name} {value} outside [{lo}, {hi}]")
        for k in range(width - 1, -1, -1):
            vec[pos] = float((value >> k) & 1)
            pos += 1
    return vec


def encode_event(event: LogEvent) -> np.ndarray:
    ts = event.timestamp
    return encode_fields(ts.hour, ts.minute, ts.second, event.activity)


def decode_vector(vec: np.ndarray) -> tuple[int, int, int, int]:
    """Decode 22 bits back to (hour, minute, second, activity).

    Rejects vectors whose bits are not 0/1 or whose decoded fields fall
    outside their valid ranges.
    """
    vec = np.asarray(vec, dtype=np.float64)
    if vec.shape != (VECTOR_WIDTH,):
        raise DataError(f"expected {VECTOR_WIDTH} bits, got shape {vec.shape}")
    if not np.all((vec == 0.0) | (vec == 1.0)):
        raise DataError("vector bits must be exactly 0.0 or 1.0")
    values = []
    pos = 0
    for width, lo, hi, name in zip(FIELD_WIDTHS, _FIELD_MIN, _FIELD_MAX, _FIELD_NAMES):
        value = 0
        for _ in range(width):
            value = (value << 1) | int(vec[pos])
            pos += 1
        if not lo <= value <= hi:
            raise DataError(f"decoded {name} {value} outside [{lo}, {hi}]")
        values.append(value)
    return tuple(values)


def build_sequence(timeline: Timeline) -> FeatureSequence:
    """Encode one employee's sorted timeline into a feature sequence."""
    n = len(timeline.events)
    rows = np.empty((n, VECTOR_WIDTH), dtype=np.float64)
    for t, ev in enumerate(timeline.events):
        rows[t] = encode_event(ev)
    return FeatureSequence(
        label=timeline.employee,
        rows=rows,
        employees=[ev.employee for ev in timeline.events],
        timestamps=[ev.timestamp for ev in timeline.events],
    )


def interleave_community(timelines: list[Timeline], label: str = "community") -> FeatureSequence:
    """Merge several timelines into one globally ordered feature sequence.

    Rows are ordered by (timestamp, employee id, source kind, raw id);
    provenance records which employee owns each row.
    """
    merged: list[LogEvent] = []
    for tl in timelines:
        merged.extend(tl.events)
    merged.sort(key=lambda ev: (ev.timestamp, ev.employee, SOURCE_ORDER[ev.source], ev.raw_id))
    rows = np.empty((len(merged), VECTOR_WIDTH), dtype=np.float64)
    for t, ev in enumerate(merged):
        rows[t] = encode_event(ev)
    return FeatureSequence(
        label=label,
        rows=rows,
        employees=[ev.employee for ev in merged],
        timestamps=[ev.timestamp for ev in merged],
    )


def write_sequence_csv(seq: FeatureSequence, path) -> None:
    """Dump a sequence as one 22-column 0/1 row per event."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in seq.rows:
            fh.write(",".join(str(int(b)) for b in row))
            fh.write("\n")
