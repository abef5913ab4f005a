"""Deterministic generator of a desk-scale five-file activity log dataset.

Employees follow a weekday office routine: one logon in a morning window,
a categorical mix of activities through the day, one logoff in an evening
window. Email recipients are chosen per colleague with a higher probability
inside the employee's planted community than across communities, which makes
the community structure recoverable from the email graph. Seeded anomalous
employees additionally receive injected off-routine events (night sessions,
removable-media copy bursts, upload bursts) in a contiguous multi-day window
placed late in the simulated period, so a chronological 70/30 split sees
them only at test time.

Everything is driven by per-employee RNG streams spawned from the master
seed: output is byte-identical for identical configs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path

import numpy as np

from lac.errors import ConfigError, DataError
from lac.logparse import ACTIVITY_NAMES, TIMESTAMP_FORMAT

FILE_NAMES = ("email.csv", "file.csv", "http.csv", "device.csv", "logon.csv")
ANSWERS_NAME = "answers.json"

ARCHETYPES = ("night_owl", "exfil", "uploader")
# Anomaly windows cover the last days of the simulated period so that a
# chronological 70/30 split always trains on clean routine and meets the
# injected events only at test time, even though injections lengthen the
# anomalous employees' sequences.
ANOMALY_WINDOW_DAYS = 6
# injected events per window day (uniform bounds per archetype)
_INJECT_BOUNDS = {"night_owl": (38, 51), "exfil": (32, 43), "uploader": (34, 47)}

# Fixed categorical mix of routine activities (Table-style codes). Codes
# 9, 10 (copies from removable media), 20 (WWW uploads) and the decoy
# variants are reserved for injected anomalies and never drawn here.
NORMAL_MIX = (
    (21, 0.30),  # WWW Visit
    (5, 0.20),   # Send
    (6, 0.20),   # View
    (13, 0.10),  # File Open_0_0_0
    (19, 0.05),  # WWW Download
    (3, 0.04),   # Connect
    (4, 0.04),   # Disconnect
    (7, 0.02),   # File Copy_0_1_0
    (11, 0.02),  # File Delete_0_1_0
    (15, 0.02),  # File Open_0_1_0
    (17, 0.01),  # File Write_1_0_0
)

# injected mixes lean on removable-media copies and decoy-file accesses
# (codes 8, 10, 12, 14), the events a honeypot exists to catch
_NIGHT_MIX = ((10, 0.30), (8, 0.25), (12, 0.15), (14, 0.10), (9, 0.10),
              (20, 0.05), (13, 0.03), (21, 0.02))
_EXFIL_MIX = ((10, 0.40), (9, 0.30), (8, 0.20), (12, 0.10))

_URL_HOSTS = ("news.site.test", "wiki.corp.test", "portal.hub.test", "cloud.share.test")
_EMAIL_TOPICS = ("status update", "meeting notes", "quarterly report",
                 "schedule", "follow-up", "draft")
_EXTERNAL_DOMAINS = ("partner.test", "vendor.test", "mailhub.test")

EMAIL_DOMAIN = "dtaa.test"


@dataclass
class GenConfig:
    employee_count: int
    community_count: int
    day_count: int
    anomaly_count: int = 0
    intra_email_prob: float = 0.10
    inter_email_prob: float = 0.01
    rng_seed: int = 0
    start_date: date = date(2020, 1, 6)

    def __post_init__(self) -> None:
        if self.employee_count < 0:
            raise ConfigError("employee_count must be >= 0")
        if self.day_count < 1:
            raise ConfigError("day_count must be >= 1")
        if not 0 <= self.anomaly_count <= self.employee_count:
            raise ConfigError("anomaly_count must satisfy 0 <= anomalies <= employees")
        if self.employee_count == 0:
            if self.community_count != 0:
                raise ConfigError("community_count must be 0 when there are no employees")
        elif not 1 <= self.community_count <= self.employee_count:
            raise ConfigError("community_count must satisfy 1 <= communities <= employees")
        for name in ("intra_email_prob", "inter_email_prob"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must be a probability in [0, 1]")
        if self.employee_count > 0 and not self.inter_email_prob < self.intra_email_prob:
            raise ConfigError(
                "inter_email_prob must be strictly below intra_email_prob, "
                "otherwise planted communities are unrecoverable"
            )
        if not 0 <= self.rng_seed < 2 ** 64:
            raise ConfigError("rng_seed must be an unsigned 64-bit integer")


@dataclass
class GroundTruth:
    anomalous_employee_ids: list[str] = field(default_factory=list)
    planted_partition: dict[str, int] = field(default_factory=dict)
    # per anomalous employee: list of (ISO date, sorted injected activity codes)
    anomaly_windows: dict[str, list[tuple[str, list[int]]]] = field(default_factory=dict)
    archetypes: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for emp in self.anomalous_employee_ids:
            if emp not in self.planted_partition:
                raise DataError(f"anomalous employee {emp} missing from planted partition")
            if not self.anomaly_windows.get(emp):
                raise DataError(f"anomalous employee {emp} has an empty anomaly window")


def employee_id(index: int) -> str:
    return f"EMP{index:04d}"


def employee_address(index: int) -> str:
    return f"emp{index:04d}@{EMAIL_DOMAIN}"


def _pc_id(index: int) -> str:
    return f"PC-{index:04d}"


def _planted_communities(config: GenConfig) -> dict[int, int]:
    """Contiguous, nearly equal blocks of employee indices."""
    if config.employee_count == 0:
        return {}
    bounds = np.linspace(0, config.employee_count, config.community_count + 1).astype(int)
    assignment: dict[int, int] = {}
    for c in range(config.community_count):
        for i in range(bounds[c], bounds[c + 1]):
            assignment[i] = c
    return assignment


def _weighted_code(rng: np.random.Generator, mix) -> int:
    codes = [c for c, _ in mix]
    probs = [p for _, p in mix]
    return int(rng.choice(codes, p=probs))


@dataclass
class _Event:
    timestamp: datetime
    emp: int
    source: str
    activity: int
    extra: dict


class _Day:
    """One employee-day worth of draws, in a fixed order for determinism."""

    def __init__(self, gen: "_Generator", emp: int, day: date, rng: np.random.Generator):
        self.gen = gen
        self.emp = emp
        self.day = day
        self.rng = rng

    def _at(self, hour: int, minute: int, spread_s: int) -> datetime:
        base = datetime.combine(self.day, datetime.min.time())
        offset = int(self.rng.integers(0, spread_s + 1))
        return base + timedelta(hours=hour, minutes=minute, seconds=offset)

    def routine(self) -> list[_Event]:
        logon = self._at(8, 30, 3600)
        logoff = self._at(17, 0, 3600)
        events = [
            _Event(logon, self.emp, "logon", 2, {}),
            _Event(logoff, self.emp, "logon", 1, {}),
        ]
        n = int(self.rng.integers(20, 61))
        span = int((logoff - logon).total_seconds()) - 120
        offsets = sorted(int(s) for s in self.rng.integers(0, span, size=n))
        for off in offsets:
            ts = logon + timedelta(seconds=60 + off)
            code = _weighted_code(self.rng, NORMAL_MIX)
            events.append(self.gen.make_event(self.rng, self.emp, ts, code))
        return events

    def injected(self, archetype: str) -> list[_Event]:
        rng = self.rng
        emp = self.emp
        gen = self.gen
        events: list[_Event] = []
        lo, hi = _INJECT_BOUNDS.get(archetype, (24, 33))
        n = int(rng.integers(lo, hi))
        if archetype == "night_owl":
            start = self._at(0, 30, 7200)
            session = int(rng.integers(7200, 10801))
            events.append(_Event(start, emp, "logon", 2, {}))
            offsets = sorted(int(o) for o in rng.integers(60, session, size=n))
            for off in offsets:
                code = _weighted_code(rng, _NIGHT_MIX)
                events.append(gen.make_event(rng, emp, start + timedelta(seconds=off), code))
            events.append(_Event(start + timedelta(seconds=session + 60), emp, "logon", 1, {}))
        elif archetype == "exfil":
            start = self._at(5, 0, 5400)
            events.append(gen.make_event(rng, emp, start, 3))
            offsets = sorted(int(o) for o in rng.integers(30, 5400, size=n))
            for off in offsets:
                code = _weighted_code(rng, _EXFIL_MIX)
                events.append(gen.make_event(rng, emp, start + timedelta(seconds=off), code))
            events.append(gen.make_event(rng, emp, start + timedelta(seconds=5460), 4))
        elif archetype == "uploader":
            start = self._at(20, 30, 3600)
            offsets = sorted(int(o) for o in rng.integers(0, 7200, size=n))
            for off in offsets:
                events.append(gen.make_event(rng, emp, start + timedelta(seconds=off), 20))
        else:
            raise ConfigError(f"unknown anomaly archetype {archetype!r}")
        return events


class _Generator:
    def __init__(self, config: GenConfig):
        self.config = config
        self.partition = _planted_communities(config)
        self.by_community: dict[int, list[int]] = {}
        for i, c in self.partition.items():
            self.by_community.setdefault(c, []).append(i)
        root = np.random.SeedSequence(config.rng_seed)
        n = config.employee_count
        children = root.spawn(n + 1)
        self.global_rng = np.random.default_rng(children[0])
        self.employee_rngs = [np.random.default_rng(children[1 + i]) for i in range(n)]
        self.external_pool = [
            f"contact{k:02d}@{_EXTERNAL_DOMAINS[k % len(_EXTERNAL_DOMAINS)]}"
            for k in range(24)
        ]

    def pick_anomalies(self) -> tuple[list[int], dict[int, str], dict[int, int], int]:
        cfg = self.config
        if cfg.anomaly_count == 0:
            return [], {}, {}, 0
        chosen = sorted(
            int(i) for i in self.global_rng.choice(
                cfg.employee_count, size=cfg.anomaly_count, replace=False)
        )
        archetypes = {emp: ARCHETYPES[k % len(ARCHETYPES)] for k, emp in enumerate(chosen)}
        window_len = min(ANOMALY_WINDOW_DAYS, cfg.day_count)
        start = cfg.day_count - window_len
        starts = {emp: start for emp in chosen}
        return chosen, archetypes, starts, window_len

    def make_event(self, rng: np.random.Generator, emp: int, ts: datetime, code: int) -> _Event:
        if code in (5, 6):
            return _Event(ts, emp, "email", code, self._email_extra(rng, emp, code))
        if code in (3, 4):
            return _Event(ts, emp, "device", code,
                          {"file-tree": r"R:\;R:\corp;R:\corp\docs"})
        if 7 <= code <= 18:
            name = ACTIVITY_NAMES[code]
            bits = name.split("_")[1:]
            return _Event(ts, emp, "file", code, {
                "filename": f"doc{int(rng.integers(0, 100000)):05d}.pdf",
                "to_removable_media": "True" if bits[1] == "1" else "False",
                "from_removable_media": "True" if bits[0] == "1" else "False",
                "content": f"file {int(rng.integers(0, 10**6)):06d}",
            })
        if code in (19, 20, 21):
            host = _URL_HOSTS[int(rng.integers(0, len(_URL_HOSTS)))]
            return _Event(ts, emp, "http", code, {
                "url": f"http://{host}/page{int(rng.integers(0, 10000)):04d}",
                "content": f"web {int(rng.integers(0, 10**6)):06d}",
            })
        raise ConfigError(f"cannot synthesize activity code {code}")

    def _email_extra(self, rng: np.random.Generator, emp: int, code: int) -> dict:
        cfg = self.config
        community = self.partition[emp]
        same = [i for i in self.by_community[community] if i != emp]
        other = [i for i in range(cfg.employee_count)
                 if i != emp and self.partition[i] != community]
        extra = {
            "size": str(int(rng.integers(400, 40000))),
            "attachments": str(int(rng.integers(0, 3))),
            "contents": _EMAIL_TOPICS[int(rng.integers(0, len(_EMAIL_TOPICS)))],
        }
        if code == 5:  # Send: employee is the sender
            recipients = [employee_address(i) for i in same
                          if rng.random() < cfg.intra_email_prob]
            recipients += [employee_address(i) for i in other
                           if rng.random() < cfg.inter_email_prob]
            if not recipients:
                recipients = [self.external_pool[int(rng.integers(0, len(self.external_pool)))]]
            cc = ""
            if rng.random() < 0.15:
                cc = self.external_pool[int(rng.integers(0, len(self.external_pool)))]
            extra.update({
                "to": ";".join(recipients),
                "cc": cc,
                "bcc": "",
                "from": employee_address(emp),
            })
        else:  # View: employee reads a message someone sent to them
            w_same = len(same) * cfg.intra_email_prob
            w_other = len(other) * cfg.inter_email_prob
            total = w_same + w_other
            if total > 0 and rng.random() < (w_same / total if total else 0.0) and same:
                sender = employee_address(same[int(rng.integers(0, len(same)))])
            elif other:
                sender = employee_address(other[int(rng.integers(0, len(other)))])
            elif same:
                sender = employee_address(same[int(rng.integers(0, len(same)))])
            else:
                sender = self.external_pool[int(rng.integers(0, len(self.external_pool)))]
            extra.update({
                "to": employee_address(emp),
                "cc": "",
                "bcc": "",
                "from": sender,
            })
        return extra

    def generate(self) -> tuple[list[_Event], GroundTruth]:
        cfg = self.config
        anomalous, archetypes, starts, window_len = self.pick_anomalies()
        windows: dict[int, dict[str, list[int]]] = {emp: {} for emp in anomalous}
        events: list[_Event] = []
        for emp in range(cfg.employee_count):
            rng = self.employee_rngs[emp]
            for d in range(cfg.day_count):
                day = cfg.start_date + timedelta(days=d)
                maker = _Day(self, emp, day, rng)
                events.extend(maker.routine())
                if emp in starts and starts[emp] <= d < starts[emp] + window_len:
                    injected = maker.injected(archetypes[emp])
                    events.extend(injected)
                    windows[emp].setdefault(day.isoformat(), []).extend(
                        ev.activity for ev in injected
                    )
        truth = GroundTruth(
            anomalous_employee_ids=[employee_id(e) for e in anomalous],
            planted_partition={employee_id(i): c for i, c in self.partition.items()},
            anomaly_windows={
                employee_id(e): [(day, sorted(codes)) for day, codes in sorted(w.items())]
                for e, w in windows.items()
            },
            archetypes={employee_id(e): archetypes[e] for e in anomalous},
        )
        return events, truth


_HEADERS = {
    "email": "Id,date,employee,PC,to,cc,bcc,from,activity,size,attachments,contents",
    "file": "Id,date,employee,PC,filename,activity,to_removable_media,from_removable_media,content",
    "http": "Id,date,employee,PC,url,activity,content",
    "device": "Id,date,employee,PC,file-tree,activity",
    "logon": "Id,date,employee,PC,activity",
}

_ID_PREFIX = {"email": "EML", "file": "FIL", "http": "HTT", "device": "DEV", "logon": "LOG"}


def _activity_string(ev: _Event) -> str:
    return ACTIVITY_NAMES[ev.activity]


def _render_row(kind: str, ev: _Event, row_id: str) -> str:
    emp = employee_id(ev.emp)
    pc = _pc_id(ev.emp)
    ts = ev.timestamp.strftime(TIMESTAMP_FORMAT)
    x = ev.extra
    if kind == "email":
        cells = [row_id, ts, emp, pc, x["to"], x["cc"], x["bcc"], x["from"],
                 _activity_string(ev), x["size"], x["attachments"], x["contents"]]
    elif kind == "file":
        cells = [row_id, ts, emp, pc, x["filename"], _activity_string(ev),
                 x["to_removable_media"], x["from_removable_media"], x["content"]]
    elif kind == "http":
        cells = [row_id, ts, emp, pc, x["url"], _activity_string(ev), x["content"]]
    elif kind == "device":
        cells = [row_id, ts, emp, pc, x["file-tree"], _activity_string(ev)]
    else:
        cells = [row_id, ts, emp, pc, _activity_string(ev)]
    return ",".join(cells)


def generate_dataset(config: GenConfig, out_dir) -> GroundTruth:
    """Write the five CSV log files into out_dir and return the ground truth."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    events, truth = _Generator(config).generate()
    by_kind: dict[str, list[_Event]] = {k: [] for k in _ID_PREFIX}
    for ev in events:
        by_kind[ev.source].append(ev)
    for kind, kind_events in by_kind.items():
        kind_events.sort(key=lambda e: (e.timestamp, e.emp, e.activity))
        name = f"{kind}.csv"
        with open(out / name, "w", encoding="utf-8", newline="") as fh:
            fh.write(_HEADERS[kind] + "\n")
            for n, ev in enumerate(kind_events, start=1):
                row_id = f"{{{_ID_PREFIX[kind]}{n:08d}}}"
                fh.write(_render_row(kind, ev, row_id) + "\n")
    return truth


def write_answer_file(truth: GroundTruth, path) -> None:
    payload = {
        "format_version": 1,
        "anomalous_employees": list(truth.anomalous_employee_ids),
        "planted_partition": dict(sorted(truth.planted_partition.items())),
        "anomaly_windows": {
            emp: [{"date": day, "codes": codes} for day, codes in windows]
            for emp, windows in sorted(truth.anomaly_windows.items())
        },
        "archetypes": dict(sorted(truth.archetypes.items())),
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_answer_file(path) -> GroundTruth:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: not valid JSON ({exc})") from None
    if payload.get("format_version") != 1:
        raise DataError(f"{path}: unsupported answers format")
    return GroundTruth(
        anomalous_employee_ids=list(payload["anomalous_employees"]),
        planted_partition={k: int(v) for k, v in payload["planted_partition"].items()},
        anomaly_windows={
            emp: [(w["date"], [int(c) for c in w["codes"]]) for w in windows]
            for emp, windows in payload["anomaly_windows"].items()
        },
        archetypes=dict(payload.get("archetypes", {})),
    )
