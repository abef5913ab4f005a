"""Experiment orchestration: split, train, score, rank, control, report.

Per employee, the first 70% of the time-ordered feature sequence trains a
model and the remaining 30% yields the individual test loss. Community
scoring runs each member's model over the full interleaved community
sequence and restricts the error to the member's own rows; employees are
then ranked per community by mean-normalized loss and the top K flagged.
A random-cohort control scores one anomalous employee inside a randomly
drawn pseudo-community for comparison.

All stages are deterministic for a fixed config; worker parallelism never
changes results. Report files contain no wall-clock data, so reruns are
byte-identical (timings go to a separate run log).
"""

from __future__ import annotations

import json
import multiprocessing
import os
import time
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from lac import events_io
from lac.community import (
    FriendshipGraph,
    Partition,
    build_friendship_graph,
    louvain,
)
from lac.errors import ConfigError, DataError, NumericError
from lac.features import FeatureSequence, build_sequence, interleave_community
from lac.logparse import FILE_COLUMNS, EmailEdgeRecord, Timeline, build_timelines, parse_log_file
from lac.neural.model import AutoencoderModel, forward, load_model, save_model
from lac.neural.train import TrainConfig, evaluate, train
from lac.synthgen import GenConfig, GroundTruth, generate_dataset, read_answer_file, write_answer_file

MIN_TIMELINE_EVENTS = 10
TRAIN_FRACTION_NUMERATOR = 7
TRAIN_FRACTION_DENOMINATOR = 10

REPORT_FORMAT_VERSION = 1
EVENTS_FILE = "events.bin"
PARTITION_FILE = "partition.json"
ANSWERS_FILE = "answers.json"


# ---------------------------------------------------------------------------
# split


def split_sequence(seq: FeatureSequence) -> tuple[FeatureSequence, FeatureSequence]:
    """Chronological prefix/suffix split at floor(0.7 T); rejects T < 10."""
    steps = len(seq)
    if steps < MIN_TIMELINE_EVENTS:
        raise DataError(
            f"timeline of {seq.label} has {steps} events, "
            f"fewer than the {MIN_TIMELINE_EVENTS} required for a 70/30 split"
        )
    cut = (TRAIN_FRACTION_NUMERATOR * steps) // TRAIN_FRACTION_DENOMINATOR
    train_part = FeatureSequence(seq.label, seq.rows[:cut].copy(),
                                 seq.employees[:cut], seq.timestamps[:cut])
    test_part = FeatureSequence(seq.label, seq.rows[cut:].copy(),
                                seq.employees[cut:], seq.timestamps[cut:])
    return train_part, test_part


# ---------------------------------------------------------------------------
# ingest and communities


@dataclass
class IngestSummary:
    event_count: int
    edge_count: int
    skipped: int
    diagnostics: list[str]


def ingest_directory(data_dir, out_path) -> IngestSummary:
    """Parse the five CSV files and write the binary events container.

    Email sender/recipient addresses are resolved to employee ids using the
    address book learned from Send rows; edges with no resolvable internal
    pair are dropped here.
    """
    data_dir = Path(data_dir)
    events = []
    raw_edges = []
    book: dict[str, str] = {}
    skipped = 0
    diagnostics: list[str] = []
    for kind in FILE_COLUMNS:
        path = data_dir / f"{kind}.csv"
        if not path.exists():
            raise DataError(f"missing log file {path}")
        result = parse_log_file(kind, path)
        events.extend(result.events)
        raw_edges.extend(result.email_edges)
        book.update(result.address_book)
        skipped += result.skipped
        diagnostics.extend(result.diagnostics)
    edges = []
    for rec in raw_edges:
        sender = book.get(rec.sender)
        if sender is None:
            continue
        recipients = [book[r] for r in rec.recipients if r in book]
        if recipients:
            edges.append(EmailEdgeRecord(sender, recipients, rec.timestamp))
    events_io.write_events(out_path, events, edges)
    return IngestSummary(len(events), len(edges), skipped, diagnostics)


def detect_communities(events_path) -> tuple[Partition, FriendshipGraph]:
    events, edges = events_io.read_events(events_path)
    internal = {ev.employee for ev in events}
    graph = build_friendship_graph(edges, internal)
    return louvain(graph), graph


def write_partition(partition: Partition, path) -> None:
    payload = {
        "format_version": 1,
        "community_count": partition.community_count,
        "assignment": dict(sorted(partition.assignment.items())),
    }
    with open(path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_partition(path) -> Partition:
    with open(path, "r", encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format_version") != 1:
        raise DataError(f"{path}: unsupported partition format")
    return Partition({k: int(v) for k, v in payload["assignment"].items()},
                     int(payload["community_count"]))


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainSummary:
    trained: list[str] = field(default_factory=list)
    reused: list[str] = field(default_factory=list)
    excluded: list[tuple[str, str]] = field(default_factory=list)
    diverged: list[str] = field(default_factory=list)
    final_losses: dict[str, float] = field(default_factory=dict)
    wall_time: float = 0.0


def model_seed(init_seed: int, employee: str):
    """Stable per-employee seed material, independent of training order."""
    return [init_seed, zlib.crc32(employee.encode("utf-8"))]


def _model_path(model_dir: Path, employee: str) -> Path:
    return model_dir / f"{employee}.lacm"


def _auto_jobs(jobs: int) -> int:
    if jobs and jobs > 0:
        return jobs
    return max(1, min(4, os.cpu_count() or 1))


def _parallel_map(fn, items, jobs: int) -> list:
    if jobs <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    ctx = multiprocessing.get_context("fork")
    with ProcessPoolExecutor(max_workers=min(jobs, len(items)), mp_context=ctx) as ex:
        return list(ex.map(fn, items))


_SHARED: dict = {}


def _train_worker(task) -> tuple[str, bool, float | None, int]:
    employee, rows, path, cfg, seed = task
    model = AutoencoderModel.initialize(seed)
    report = train(model, rows, cfg)
    if report.diverged:
        return employee, True, report.final_loss, report.epochs_run
    save_model(model, path)
    return employee, False, report.final_loss, report.epochs_run


def train_all(timelines: dict[str, Timeline], partition: Partition,
              train_config: TrainConfig, model_dir, init_seed: int,
              jobs: int = 1) -> TrainSummary:
    """Train and persist one model per eligible employee; resumable."""
    if set(timelines) != set(partition.assignment):
        raise DataError("timelines and partition cover different employee sets")
    model_dir = Path(model_dir)
    model_dir.mkdir(parents=True, exist_ok=True)
    summary = TrainSummary()
    t0 = time.perf_counter()
    tasks = []
    for employee in sorted(timelines):
        tl = timelines[employee]
        if len(tl) < MIN_TIMELINE_EVENTS:
            summary.excluded.append(
                (employee, f"timeline too short ({len(tl)} < {MIN_TIMELINE_EVENTS})"))
            continue
        path = _model_path(model_dir, employee)
        if path.exists():
            summary.reused.append(employee)
            continue
        seq = build_sequence(tl)
        train_part, _ = split_sequence(seq)
        tasks.append((employee, train_part.rows, path, train_config,
                      model_seed(init_seed, employee)))
    for employee, diverged, final_loss, _ in _parallel_map(
            _train_worker, tasks, _auto_jobs(jobs)):
        if diverged:
            summary.diverged.append(employee)
            continue
        summary.trained.append(employee)
        if final_loss is not None:
            summary.final_losses[employee] = final_loss
    summary.wall_time = time.perf_counter() - t0
    return summary


# ---------------------------------------------------------------------------
# scoring


@dataclass
class ScoreRecord:
    employee: str
    community: int
    individual_loss: float   # MSE on the employee's own test 30%
    community_loss: float    # MSE on all own rows within the interleaved sequence
    normalized_loss: float   # see _normalize_and_rank
    train_loss: float = float("nan")   # saved model's MSE on its own train rows
    early_loss: float = float("nan")   # own rows before the 70/30 boundary, interleaved
    late_loss: float = float("nan")    # own rows after the boundary, interleaved


@dataclass
class CommunityScores:
    community: int
    records: list[ScoreRecord]          # ranked, highest normalized loss first
    unscored: list[tuple[str, str]] = field(default_factory=list)


def score_individual(model: AutoencoderModel, test_seq: FeatureSequence) -> float:
    """Reconstruction MSE of the model on the employee's own test rows."""
    return evaluate(model, test_seq.rows)


def _member_loss_worker(args) -> tuple[str, float, float, float]:
    """Returns (employee, loss over all own rows, early-period, late-period).

    Own rows appear in the interleaved sequence in the same order as in the
    member's own timeline, so the first floor(0.7 n) of them are exactly the
    rows the member's model was trained on.
    """
    employee, model_path = args
    seq: FeatureSequence = _SHARED["seq"]
    finetune: TrainConfig | None = _SHARED["finetune"]
    model = load_model(model_path)
    if finetune is not None:
        train(model, seq.rows, finetune)
    recon, _ = forward(model, seq.rows, keep_caches=False)
    mask = seq.employee_mask(employee)
    row_se = np.mean((recon[mask] - seq.rows[mask]) ** 2, axis=1)
    n = row_se.shape[0]
    cut = (TRAIN_FRACTION_NUMERATOR * n) // TRAIN_FRACTION_DENOMINATOR
    full = float(row_se.mean())
    early = float(row_se[:cut].mean()) if cut > 0 else float("nan")
    late = float(row_se[cut:].mean()) if cut < n else float("nan")
    return employee, full, early, late


def _score_group(members: list[str], timelines: dict[str, Timeline],
                 model_paths: dict[str, Path], label: str,
                 finetune: TrainConfig | None,
                 jobs: int) -> dict[str, tuple[float, float, float]]:
    """Shared scoring path: interleave the group once, score each member's
    model over the full interleaved sequence restricted to their own rows."""
    seq = interleave_community([timelines[e] for e in members], label=label)
    tasks = [(e, model_paths[e]) for e in members]
    _SHARED["seq"] = seq
    _SHARED["finetune"] = finetune
    try:
        results = _parallel_map(_member_loss_worker, tasks, _auto_jobs(jobs))
    finally:
        _SHARED.clear()
    return {e: (full, early, late) for e, full, early, late in results}


def score_in_community(community: int, members: list[str],
                       timelines: dict[str, Timeline],
                       model_paths: dict[str, Path],
                       individual_losses: dict[str, float],
                       train_losses: dict[str, float] | None = None,
                       finetune: TrainConfig | None = None,
                       jobs: int = 1) -> CommunityScores:
    """Score every modeled member of one community against community data."""
    scored_members = []
    unscored = []
    for e in sorted(members):
        if e not in model_paths:
            unscored.append((e, "no model"))
        elif len(timelines[e]) == 0:
            unscored.append((e, "no rows in community window"))
        else:
            scored_members.append(e)
    if not scored_members:
        return CommunityScores(community, [], unscored)
    losses = _score_group(scored_members, timelines, model_paths,
                          f"community-{community}", finetune, jobs)
    records = _normalize_and_rank(losses, individual_losses, train_losses, community)
    return CommunityScores(community, records, unscored)


def _normalize_and_rank(losses: dict[str, tuple[float, float, float]],
                        individual_losses: dict[str, float],
                        train_losses: dict[str, float] | None,
                        community: int) -> list[ScoreRecord]:
    """Rank members by normalized loss, highest first.

    The raw own-row loss confounds behavior with how far the member's model
    happened to converge and with how the model reacts to foreign rows
    between its own. Both effects hit the early (training-period) and late
    (test-period) own rows alike, so the late/early ratio within the same
    interleaved pass isolates behavioral change; it is then divided by the
    group mean of the ratios, centering normal members near 1 and making
    values comparable across groups. Raw losses stay on the record so
    alternative normalizations can be recomputed.
    """
    ratios: dict[str, float] = {}
    for e, (full, early, late) in losses.items():
        if not np.isfinite(full) or full < 0:
            raise NumericError(f"community loss for {e} is not finite")
        ratios[e] = late / early if np.isfinite(early) and early > 0 and np.isfinite(late) else 1.0
    mean_ratio = sum(ratios.values()) / len(ratios)
    records = []
    for e, (full, early, late) in losses.items():
        normalized = ratios[e] / mean_ratio if mean_ratio > 0 else 0.0
        base = train_losses.get(e, float("nan")) if train_losses else float("nan")
        records.append(ScoreRecord(e, community, individual_losses.get(e, float("nan")),
                                   full, normalized, base, early, late))
    records.sort(key=lambda r: (-r.normalized_loss, r.employee))
    return records


@dataclass
class CohortResult:
    anomalous_employee: str
    cohort_size: int
    seed: int
    records: list[ScoreRecord]   # ranked, highest normalized loss first
    anomaly_rank: int            # 1-based position of the anomalous employee

    @property
    def members(self) -> list[str]:
        return sorted(r.employee for r in self.records)


def random_cohort_control(timelines: dict[str, Timeline],
                          model_paths: dict[str, Path],
                          individual_losses: dict[str, float],
                          anomalous_employee: str, cohort_size: int, seed: int,
                          train_losses: dict[str, float] | None = None,
                          finetune: TrainConfig | None = None,
                          jobs: int = 1) -> CohortResult:
    """Score a random pseudo-community of cohort_size containing the anomaly."""
    population = sorted(e for e in timelines if e in model_paths)
    if anomalous_employee not in population:
        raise DataError(f"anomalous employee {anomalous_employee} has no model or timeline")
    if not 1 <= cohort_size <= len(population):
        raise ConfigError(
            f"cohort size {cohort_size} must be within 1..{len(population)}")
    others = [e for e in population if e != anomalous_employee]
    rng = np.random.default_rng(seed)
    picked = sorted(
        others[int(i)] for i in rng.choice(len(others), size=cohort_size - 1, replace=False)
    ) if cohort_size > 1 else []
    members = sorted(picked + [anomalous_employee])
    losses = _score_group(members, timelines, model_paths, "cohort", finetune, jobs)
    records = _normalize_and_rank(losses, individual_losses, train_losses, community=-1)
    rank = 1 + next(i for i, r in enumerate(records) if r.employee == anomalous_employee)
    return CohortResult(anomalous_employee, cohort_size, seed, records, rank)


# ---------------------------------------------------------------------------
# ranking and report


@dataclass
class CommunityReport:
    community: int
    records: list[ScoreRecord]
    flagged: list[str]
    std_normalized: float | None
    unscored: list[tuple[str, str]] = field(default_factory=list)


@dataclass
class TruthComparison:
    detected: list[str]
    missed: list[str]
    false_positives: list[str]
    precision: float
    recall: float


@dataclass
class AnomalyReport:
    k: int
    communities: list[CommunityReport]
    flagged: list[str]
    excluded: list[tuple[str, str]] = field(default_factory=list)
    truth: TruthComparison | None = None
    cohort: CohortResult | None = None


def rank_and_flag(scores: list[CommunityScores], k: int,
                  excluded: list[tuple[str, str]] | None = None,
                  truth: GroundTruth | None = None) -> AnomalyReport:
    """Flag the top-k employees by normalized loss in every community."""
    if k < 1:
        raise ConfigError("k must be >= 1")
    communities = []
    flagged_all: list[str] = []
    for cs in sorted(scores, key=lambda s: s.community):
        flagged = [r.employee for r in cs.records[:k]]
        values = [r.normalized_loss for r in cs.records]
        std = float(np.std(values)) if len(values) >= 2 else None
        communities.append(CommunityReport(cs.community, cs.records, flagged, std, cs.unscored))
        flagged_all.extend(flagged)
    report = AnomalyReport(k, communities, sorted(flagged_all),
                           excluded=list(excluded or []))
    if truth is not None:
        truth_set = set(truth.anomalous_employee_ids)
        flagged_set = set(report.flagged)
        detected = sorted(truth_set & flagged_set)
        missed = sorted(truth_set - flagged_set)
        false_pos = sorted(flagged_set - truth_set)
        precision = len(detected) / len(flagged_set) if flagged_set else 0.0
        recall = len(detected) / len(truth_set) if truth_set else 1.0
        report.truth = TruthComparison(detected, missed, false_pos, precision, recall)
    return report


def _record_payload(r: ScoreRecord, flagged: set[str], truth_set: set[str] | None) -> dict:
    payload = {
        "employee": r.employee,
        "community": r.community,
        "individual_loss": float(r.individual_loss),
        "community_loss": float(r.community_loss),
        "normalized_loss": float(r.normalized_loss),
        "train_loss": float(r.train_loss) if np.isfinite(r.train_loss) else None,
        "early_loss": float(r.early_loss) if np.isfinite(r.early_loss) else None,
        "late_loss": float(r.late_loss) if np.isfinite(r.late_loss) else None,
        "flagged": r.employee in flagged,
    }
    if truth_set is not None:
        payload["truth_anomalous"] = r.employee in truth_set
    return payload


def emit_report(report: AnomalyReport, out_dir) -> list[Path]:
    """Write report.json plus one plot-data CSV per community (and cohort).

    Plot-data rows carry (rank index, employee, losses, flagged flag and,
    when ground truth was supplied, the truth flag) so any plotting tool can
    draw loss-versus-employee charts.
    """
    out_dir = Path(out_dir)
    plots = out_dir / "plot-data"
    plots.mkdir(parents=True, exist_ok=True)
    truth_set = set(report.truth.detected + report.truth.missed) if report.truth else None

    payload = {
        "format_version": REPORT_FORMAT_VERSION,
        "k": report.k,
        "flagged": report.flagged,
        "excluded": [{"employee": e, "reason": why} for e, why in report.excluded],
        "communities": [
            {
                "community": c.community,
                "member_count": len(c.records),
                "std_normalized_loss": None if c.std_normalized is None else float(c.std_normalized),
                "flagged": c.flagged,
                "unscored": [{"employee": e, "reason": why} for e, why in c.unscored],
                "members": [_record_payload(r, set(c.flagged), truth_set) for r in c.records],
            }
            for c in report.communities
        ],
    }
    if report.truth is not None:
        payload["ground_truth"] = {
            "detected": report.truth.detected,
            "missed": report.truth.missed,
            "false_positives": report.truth.false_positives,
            "false_positive_count": len(report.truth.false_positives),
            "precision": float(report.truth.precision),
            "recall": float(report.truth.recall),
        }
    if report.cohort is not None:
        ch = report.cohort
        payload["cohort_control"] = {
            "anomalous_employee": ch.anomalous_employee,
            "cohort_size": ch.cohort_size,
            "seed": ch.seed,
            "anomaly_rank": ch.anomaly_rank,
            "members": [_record_payload(r, set(), truth_set) for r in ch.records],
        }

    written = []
    report_path = out_dir / "report.json"
    with open(report_path, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(report_path)

    header = "index,employee,individual_loss,community_loss,normalized_loss,flagged,truth_anomalous"
    for c in report.communities:
        path = plots / f"community_{c.community:03d}.csv"
        flagged = set(c.flagged)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(header + "\n")
            for i, r in enumerate(c.records):
                truth_cell = "" if truth_set is None else str(int(r.employee in truth_set))
                fh.write(f"{i},{r.employee},{r.individual_loss!r},{r.community_loss!r},"
                         f"{r.normalized_loss!r},{int(r.employee in flagged)},{truth_cell}\n")
        written.append(path)
    if report.cohort is not None:
        path = plots / "cohort.csv"
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(header + "\n")
            for i, r in enumerate(report.cohort.records):
                truth_cell = "" if truth_set is None else str(int(r.employee in truth_set))
                fh.write(f"{i},{r.employee},{r.individual_loss!r},{r.community_loss!r},"
                         f"{r.normalized_loss!r},0,{truth_cell}\n")
        written.append(path)
    return written


# ---------------------------------------------------------------------------
# run configuration and full pipeline


DEFAULT_CONFIG = {
    "generate": None,           # optional GenConfig fields
    "data_dir": None,           # directory with the five CSV files (+ answers.json)
    "work_dir": None,           # events.bin, partition.json, models/, report/
    "training": {
        "epochs": 50,
        "learning_rate": 0.01,
        "decay": 0.01,
        "chunk_length": 512,
        "chunk_threshold": 2048,
        "min_improvement": 1e-6,
        "init_seed": 900,
        "jobs": 0,              # 0 = auto (up to 4 workers)
    },
    "scoring": {
        "k": 5,
        "community_finetune_epochs": 0,
        "jobs": 0,
    },
    "control": None,            # optional: cohort_size, anomalous_employee, seed
}


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    merged = dict(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            merged[key] = _merge_config(base[key], value, path=f"{path}{key}.")
        else:
            merged[key] = value
    return merged


def load_run_config(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(user, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    cfg = dict(DEFAULT_CONFIG)
    for key in ("generate", "control"):
        if user.get(key) is not None and DEFAULT_CONFIG[key] is None:
            cfg[key] = user.pop(key)
    return _merge_config(cfg, user)


def train_config_from(section: dict) -> TrainConfig:
    return TrainConfig(
        epochs=int(section["epochs"]),
        learning_rate=float(section["learning_rate"]),
        decay=float(section["decay"]),
        chunk_length=int(section["chunk_length"]),
        chunk_threshold=int(section["chunk_threshold"]),
        min_improvement=float(section["min_improvement"]),
    )


def gen_config_from(section: dict) -> GenConfig:
    from datetime import date

    kwargs = dict(section)
    if "start_date" in kwargs:
        kwargs["start_date"] = date.fromisoformat(kwargs["start_date"])
    mapping = {
        "employees": "employee_count",
        "communities": "community_count",
        "days": "day_count",
        "anomalies": "anomaly_count",
        "seed": "rng_seed",
    }
    for short, full in mapping.items():
        if short in kwargs:
            kwargs[full] = kwargs.pop(short)
    try:
        return GenConfig(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"bad generate section: {exc}") from None


@dataclass
class RunResult:
    report: AnomalyReport
    partition: Partition
    truth: GroundTruth | None
    train_summary: TrainSummary
    report_paths: list[Path]
    timings: dict[str, float]


def run_all(config: dict, log=lambda msg: None) -> RunResult:
    """Execute the full pipeline described by a run config dict."""
    if config.get("work_dir") is None:
        raise ConfigError("config needs a work_dir")
    work = Path(config["work_dir"])
    work.mkdir(parents=True, exist_ok=True)
    data_dir = Path(config["data_dir"]) if config.get("data_dir") else work / "data"
    timings: dict[str, float] = {}

    def timed(name: str, fn):
        t0 = time.perf_counter()
        result = fn()
        timings[name] = time.perf_counter() - t0
        log(f"{name}: {timings[name]:.1f}s")
        return result

    truth: GroundTruth | None = None
    if config.get("generate"):
        gen_cfg = gen_config_from(config["generate"])

        def do_generate():
            t = generate_dataset(gen_cfg, data_dir)
            write_answer_file(t, data_dir / ANSWERS_FILE)
            return t

        truth = timed("generate", do_generate)
    elif (data_dir / ANSWERS_FILE).exists():
        truth = read_answer_file(data_dir / ANSWERS_FILE)

    events_path = work / EVENTS_FILE
    timed("ingest", lambda: ingest_directory(data_dir, events_path))

    events, edges = events_io.read_events(events_path)
    timelines = build_timelines(events)

    def do_communities():
        internal = set(timelines)
        graph = build_friendship_graph(edges, internal)
        partition = louvain(graph)
        write_partition(partition, work / PARTITION_FILE)
        return partition

    partition = timed("communities", do_communities)

    tcfg = train_config_from(config["training"])
    jobs = int(config["training"]["jobs"])
    model_dir = work / "models"
    summary = timed("train", lambda: train_all(
        timelines, partition, tcfg, model_dir,
        init_seed=int(config["training"]["init_seed"]), jobs=jobs))

    model_paths = {
        e: _model_path(model_dir, e)
        for e in sorted(timelines)
        if _model_path(model_dir, e).exists()
    }

    def do_individual():
        test_losses = {}
        base_losses = {}
        for e in sorted(model_paths):
            train_part, test_part = split_sequence(build_sequence(timelines[e]))
            model = load_model(model_paths[e])
            test_losses[e] = score_individual(model, test_part)
            base_losses[e] = evaluate(model, train_part.rows)
        return test_losses, base_losses

    individual_losses, train_losses = timed("score-individual", do_individual)

    score_jobs = _auto_jobs(int(config["scoring"]["jobs"]))
    finetune_epochs = int(config["scoring"]["community_finetune_epochs"])
    finetune = None
    if finetune_epochs > 0:
        finetune = train_config_from({**config["training"], "epochs": finetune_epochs})

    def do_community_scores():
        by_community: dict[int, list[str]] = {}
        for e, c in partition.assignment.items():
            by_community.setdefault(c, []).append(e)
        out = []
        for c in sorted(by_community):
            out.append(score_in_community(
                c, by_community[c], timelines, model_paths, individual_losses,
                train_losses=train_losses, finetune=finetune, jobs=score_jobs))
        return out

    scores = timed("score-community", do_community_scores)

    excluded = [(e, reason) for e, reason in
                (summary.excluded + [(e, "training diverged") for e in summary.diverged])]
    report = rank_and_flag(scores, int(config["scoring"]["k"]),
                           excluded=excluded, truth=truth)

    control = config.get("control")
    if control:
        for key in ("cohort_size", "seed"):
            if key not in control:
                raise ConfigError(f"control section needs {key!r}")
        anomalous = control.get("anomalous_employee")
        if anomalous is None:
            if truth is None or not truth.anomalous_employee_ids:
                raise ConfigError(
                    "control.anomalous_employee not set and no ground truth available")
            anomalous = truth.anomalous_employee_ids[0]
        report.cohort = timed("control", lambda: random_cohort_control(
            timelines, model_paths, individual_losses, anomalous,
            int(control["cohort_size"]), int(control["seed"]),
            train_losses=train_losses, finetune=finetune, jobs=score_jobs))

    report_dir = work / "report"
    paths = timed("report", lambda: emit_report(report, report_dir))

    run_log = {
        "timings_seconds": {k: round(v, 3) for k, v in timings.items()},
        "train_wall_time": round(summary.wall_time, 3),
        "trained": len(summary.trained),
        "reused": len(summary.reused),
    }
    with open(work / "run_log.json", "w", encoding="utf-8") as fh:
        json.dump(run_log, fh, indent=2, sort_keys=True)
        fh.write("\n")

    return RunResult(report, partition, truth, summary, paths, timings)
