"""Command-line interface.

Subcommands: generate, ingest, communities, encode, train, score, report,
run-all. Exit codes: 0 success, 1 usage/config error, 2 data error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import date
from pathlib import Path

import numpy as np

from lac import events_io, pipeline
from lac.community import build_friendship_graph, louvain
from lac.errors import ConfigError, DataError, LacError, NumericError
from lac.features import build_sequence, write_sequence_csv
from lac.logparse import build_timelines
from lac.neural.model import load_model
from lac.neural.train import evaluate
from lac.pipeline import (
    CohortResult,
    CommunityScores,
    ScoreRecord,
    score_in_community,
    split_sequence,
)
from lac.synthgen import GenConfig, generate_dataset, read_answer_file, write_answer_file


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); map usage errors to 1
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="lac", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic five-file log dataset")
    p.add_argument("--employees", type=int, required=True)
    p.add_argument("--communities", type=int, required=True)
    p.add_argument("--days", type=int, required=True)
    p.add_argument("--anomalies", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--intra-email-prob", type=float, default=0.10)
    p.add_argument("--inter-email-prob", type=float, default=0.01)
    p.add_argument("--start-date", type=date.fromisoformat, default=date(2020, 1, 6))
    p.add_argument("--out", required=True)

    p = sub.add_parser("ingest", help="parse the five CSV files into events.bin")
    p.add_argument("--dir", dest="data_dir", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("communities", help="detect communities from events.bin")
    p.add_argument("--events", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--graph-out", default=None,
                   help="optional edge-list CSV dump of the friendship graph")

    p = sub.add_parser("encode", help="dump one employee's 22-bit feature rows")
    p.add_argument("--events", required=True)
    p.add_argument("--employee", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train one model per eligible employee")
    p.add_argument("--events", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--learning-rate", type=float, default=0.01)
    p.add_argument("--decay", type=float, default=0.01)
    p.add_argument("--chunk-length", type=int, default=512)
    p.add_argument("--chunk-threshold", type=int, default=2048)
    p.add_argument("--min-improvement", type=float, default=1e-6)
    p.add_argument("--init-seed", type=int, default=900)
    p.add_argument("--jobs", type=int, default=0)

    p = sub.add_parser("score", help="individual and community reconstruction losses")
    p.add_argument("--events", required=True)
    p.add_argument("--partition", required=True)
    p.add_argument("--models", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--community-finetune-epochs", type=int, default=0)
    p.add_argument("--jobs", type=int, default=0)
    p.add_argument("--cohort-size", type=int, default=None,
                   help="also score a random cohort around an anomalous employee")
    p.add_argument("--cohort-anomaly", default=None)
    p.add_argument("--cohort-seed", type=int, default=0)

    p = sub.add_parser("report", help="rank, flag top-K and emit report files")
    p.add_argument("--scores", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("-k", "--k", type=int, default=5)
    p.add_argument("--answers", default=None)

    p = sub.add_parser("run-all", help="full pipeline from one config file")
    p.add_argument("--config", required=True)
    p.add_argument("--data-dir", default=None)
    p.add_argument("--work-dir", default=None)
    p.add_argument("--epochs", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--jobs", type=int, default=None)
    p.add_argument("--init-seed", type=int, default=None)
    p.add_argument("--finetune-epochs", type=int, default=None)
    return parser


def _cmd_generate(args) -> int:
    cfg = GenConfig(
        employee_count=args.employees,
        community_count=args.communities,
        day_count=args.days,
        anomaly_count=args.anomalies,
        intra_email_prob=args.intra_email_prob,
        inter_email_prob=args.inter_email_prob,
        rng_seed=args.seed,
        start_date=args.start_date,
    )
    out = Path(args.out)
    truth = generate_dataset(cfg, out)
    write_answer_file(truth, out / pipeline.ANSWERS_FILE)
    print(f"wrote 5 log files + {pipeline.ANSWERS_FILE} to {out} "
          f"({len(truth.anomalous_employee_ids)} anomalous employees)")
    return 0


def _cmd_ingest(args) -> int:
    summary = pipeline.ingest_directory(args.data_dir, args.out)
    print(f"{summary.event_count} events, {summary.edge_count} email edges, "
          f"{summary.skipped} rows skipped -> {args.out}")
    for diag in summary.diagnostics[:10]:
        print(f"  skipped: {diag}", file=sys.stderr)
    return 0


def _cmd_communities(args) -> int:
    partition, graph = pipeline.detect_communities(args.events)
    pipeline.write_partition(partition, args.out)
    print(f"{partition.community_count} communities over "
          f"{len(partition.assignment)} employees -> {args.out}")
    if args.graph_out:
        with open(args.graph_out, "w", encoding="utf-8", newline="") as fh:
            fh.write("employee_a,employee_b,weight\n")
            for a in graph.nodes:
                for b in sorted(graph.neighbors(a)):
                    if a < b:
                        fh.write(f"{a},{b},{graph.neighbors(a)[b]!r}\n")
    return 0


def _cmd_encode(args) -> int:
    events, _ = events_io.read_events(args.events)
    timelines = build_timelines(events)
    if args.employee not in timelines:
        raise DataError(f"employee {args.employee} not present in {args.events}")
    seq = build_sequence(timelines[args.employee])
    write_sequence_csv(seq, args.out)
    print(f"{len(seq)} rows -> {args.out}")
    return 0


def _cmd_train(args) -> int:
    events, _ = events_io.read_events(args.events)
    timelines = build_timelines(events)
    partition = pipeline.read_partition(args.partition)
    tcfg = pipeline.train_config_from({
        "epochs": args.epochs,
        "learning_rate": args.learning_rate,
        "decay": args.decay,
        "chunk_length": args.chunk_length,
        "chunk_threshold": args.chunk_threshold,
        "min_improvement": args.min_improvement,
    })
    summary = pipeline.train_all(timelines, partition, tcfg, args.models,
                                 init_seed=args.init_seed, jobs=args.jobs)
    print(f"trained {len(summary.trained)}, reused {len(summary.reused)}, "
          f"excluded {len(summary.excluded)}, diverged {len(summary.diverged)} "
          f"in {summary.wall_time:.1f}s")
    for employee, reason in summary.excluded:
        print(f"  excluded {employee}: {reason}", file=sys.stderr)
    return 0


def _cmd_score(args) -> int:
    events, _ = events_io.read_events(args.events)
    timelines = build_timelines(events)
    partition = pipeline.read_partition(args.partition)
    model_dir = Path(args.models)
    model_paths = {e: model_dir / f"{e}.lacm" for e in sorted(timelines)
                   if (model_dir / f"{e}.lacm").exists()}
    if not model_paths:
        raise DataError(f"no model files under {model_dir}")

    individual = {}
    train_bases = {}
    for e in sorted(model_paths):
        try:
            train_part, test_part = split_sequence(build_sequence(timelines[e]))
        except DataError:
            continue
        model = load_model(model_paths[e])
        individual[e] = pipeline.score_individual(model, test_part)
        train_bases[e] = evaluate(model, train_part.rows)

    finetune = None
    if args.community_finetune_epochs > 0:
        finetune = pipeline.train_config_from({
            **pipeline.DEFAULT_CONFIG["training"], "epochs": args.community_finetune_epochs})

    by_community: dict[int, list[str]] = {}
    for e, c in partition.assignment.items():
        by_community.setdefault(c, []).append(e)
    payload_communities = []
    for c in sorted(by_community):
        cs = score_in_community(c, by_community[c], timelines, model_paths,
                                individual, train_losses=train_bases,
                                finetune=finetune, jobs=args.jobs)
        payload_communities.append({
            "community": c,
            "unscored": [{"employee": e, "reason": r} for e, r in cs.unscored],
            "records": [_score_record_payload(r) for r in cs.records],
        })

    payload = {"format_version": 1, "communities": payload_communities}
    if args.cohort_size is not None:
        if args.cohort_anomaly is None:
            raise ConfigError("--cohort-size needs --cohort-anomaly")
        cohort = pipeline.random_cohort_control(
            timelines, model_paths, individual, args.cohort_anomaly,
            args.cohort_size, args.cohort_seed, train_losses=train_bases,
            finetune=finetune, jobs=args.jobs)
        payload["cohort"] = {
            "anomalous_employee": cohort.anomalous_employee,
            "cohort_size": cohort.cohort_size,
            "seed": cohort.seed,
            "anomaly_rank": cohort.anomaly_rank,
            "records": [_score_record_payload(r) for r in cohort.records],
        }
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(f"scores for {sum(len(c['records']) for c in payload_communities)} "
          f"employees -> {args.out}")
    return 0


def _opt(value) -> float | None:
    return float(value) if value is not None and np.isfinite(value) else None


def _score_record_payload(r: ScoreRecord) -> dict:
    return {
        "employee": r.employee,
        "community": r.community,
        "individual_loss": float(r.individual_loss),
        "community_loss": float(r.community_loss),
        "normalized_loss": float(r.normalized_loss),
        "train_loss": _opt(r.train_loss),
        "early_loss": _opt(r.early_loss),
        "late_loss": _opt(r.late_loss),
    }


def _records_from_payload(rows: list[dict]) -> list[ScoreRecord]:
    def val(row, key):
        v = row.get(key)
        return float(v) if v is not None else float("nan")

    return [
        ScoreRecord(
            r["employee"], int(r["community"]), float(r["individual_loss"]),
            float(r["community_loss"]), float(r["normalized_loss"]),
            val(r, "train_loss"), val(r, "early_loss"), val(r, "late_loss"),
        )
        for r in rows
    ]


def _cmd_report(args) -> int:
    with open(args.scores, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{args.scores}: invalid JSON ({exc})") from None
    if payload.get("format_version") != 1:
        raise DataError(f"{args.scores}: unsupported scores format")
    scores = [
        CommunityScores(
            int(c["community"]),
            _records_from_payload(c["records"]),
            [(u["employee"], u["reason"]) for u in c.get("unscored", [])],
        )
        for c in payload["communities"]
    ]
    truth = read_answer_file(args.answers) if args.answers else None
    report = pipeline.rank_and_flag(scores, args.k, truth=truth)
    if "cohort" in payload:
        ch = payload["cohort"]
        report.cohort = CohortResult(
            ch["anomalous_employee"], int(ch["cohort_size"]), int(ch["seed"]),
            _records_from_payload(ch["records"]), int(ch["anomaly_rank"]))
    paths = pipeline.emit_report(report, args.out)
    print(f"wrote {len(paths)} report files to {args.out}")
    if report.truth:
        print(f"recall {report.truth.recall:.2f}, "
              f"false positives {len(report.truth.false_positives)}")
    return 0


def _cmd_run_all(args) -> int:
    config = pipeline.load_run_config(args.config)
    if args.data_dir is not None:
        config["data_dir"] = args.data_dir
    if args.work_dir is not None:
        config["work_dir"] = args.work_dir
    if args.epochs is not None:
        config["training"]["epochs"] = args.epochs
    if args.init_seed is not None:
        config["training"]["init_seed"] = args.init_seed
    if args.jobs is not None:
        config["training"]["jobs"] = args.jobs
        config["scoring"]["jobs"] = args.jobs
    if args.k is not None:
        config["scoring"]["k"] = args.k
    if args.finetune_epochs is not None:
        config["scoring"]["community_finetune_epochs"] = args.finetune_epochs
    result = pipeline.run_all(config, log=lambda msg: print(msg, file=sys.stderr))
    print(f"report files: {', '.join(str(p) for p in result.report_paths[:1])} "
          f"(+{len(result.report_paths) - 1} plot files)")
    print(f"flagged: {', '.join(result.report.flagged) or '(none)'}")
    if result.report.truth:
        t = result.report.truth
        print(f"ground truth: recall {t.recall:.2f}, precision {t.precision:.2f}, "
              f"false positives {len(t.false_positives)}")
    if result.report.cohort:
        print(f"cohort control: {result.report.cohort.anomalous_employee} "
              f"ranked {result.report.cohort.anomaly_rank} "
              f"of {result.report.cohort.cohort_size}")
    return 0


_COMMANDS = {
    "generate": _cmd_generate,
    "ingest": _cmd_ingest,
    "communities": _cmd_communities,
    "encode": _cmd_encode,
    "train": _cmd_train,
    "score": _cmd_score,
    "report": _cmd_report,
    "run-all": _cmd_run_all,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    except LacError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
