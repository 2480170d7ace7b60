"""Command-line front door: every pipeline stage individually, plus the grid runner.

Stage outputs are files, so any pipeline composition is shell-scriptable and
every intermediate result stays inspectable.  All randomness flows from
explicit ``--seed`` flags; rerunning a command with identical inputs and
seeds produces byte-identical outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import experiment, iob, metrics, qa
from .chunking import Chunk, ChunkSpec, chunk, default_overlap
from .dataset_io import ADAPTERS, ParseError, load, rank_labels_by_length, save
from .decoding import (
    ExtractConfig,
    QALogits,
    aggregate,
    decode_tc,
    entities_to_predictions,
    extract_spans,
    spans_to_predictions,
)
from .model import DatasetValidationError, Entity, validate
from .pipeline import chunk_request
from .protocol import MODE_QA, MODE_TC, ScorerError
from .scorer import request
from .subsample import degrade_dataset


class CliError(Exception):
    """Operational failure: reported on stderr, exit code 1."""


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--input", required=True, help="dataset path")
    parser.add_argument("--format", choices=ADAPTERS, default="canonical", help="dataset format adapter")


def _load_dataset(args: argparse.Namespace, validate_data: bool = True):
    try:
        return load(args.input, args.format, validate=validate_data)
    except (ParseError, DatasetValidationError, OSError) as exc:
        raise CliError(str(exc)) from exc


def _cmd_validate(args: argparse.Namespace) -> int:
    try:
        dataset = load(args.input, args.format, validate=False)
    except DatasetValidationError as exc:
        for violation in exc.violations:
            print(violation)
        return 1
    except (ParseError, OSError) as exc:
        raise CliError(str(exc)) from exc
    violations = validate(dataset)
    if violations:
        for violation in violations:
            print(violation)
        return 1
    docs = sum(len(d) for d in dataset.splits.values())
    entities = sum(len(doc.entities) for doc in dataset.documents())
    print(f"OK ({docs} documents, {entities} entities)")
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    qa_dataset = qa.to_qa(dataset, args.template, include_unanswerable=args.include_unanswerable)
    qa.save_squad(qa_dataset, args.output)
    for split, count in qa.qa_stats(qa_dataset).items():
        print(f"{split}: {count} samples")
    return 0


def _cmd_chunk(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    if args.split not in dataset.splits:
        raise CliError(f"dataset has no split {args.split!r}")
    spec = ChunkSpec(args.window, args.overlap if args.overlap is not None else default_overlap(args.window))
    with open(args.output, "w", encoding="utf-8") as fh:
        for doc in dataset.splits[args.split]:
            for c in chunk(doc, spec):
                fh.write(json.dumps(
                    {"doc_id": c.doc_id, "chunk_index": c.index, "start": c.start, "end": c.end}
                ) + "\n")
    return 0


def _cmd_subsample(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    split_names = args.splits.split(",") if args.splits else ["train", "validation"]
    degraded = degrade_dataset(dataset, args.kind, args.ratio, args.seed, split_names, exact=args.exact)
    save(degraded, args.output)
    for name in split_names:
        if name in degraded.splits:
            docs = degraded.splits[name]
            print(f"{name}: {len(docs)} documents, {sum(len(d.entities) for d in docs)} entities")
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    if args.split not in dataset.splits:
        raise CliError(f"dataset has no split {args.split!r}")
    spec = ChunkSpec(args.window, args.overlap if args.overlap is not None else default_overlap(args.window))
    try:
        scorer_spec = experiment.parse_scorer_spec(args.scorer)
        scorer = experiment._build_scorer(  # noqa: SLF001 (shared construction logic)
            experiment.ExperimentConfig(scorer=scorer_spec), dataset, 1.0, 0
        )
    except (ValueError, ScorerError) as exc:
        raise CliError(str(exc)) from exc
    rows = 0
    try:
        with open(args.output, "w", encoding="utf-8") as fh:
            for doc in dataset.splits[args.split]:
                for c in chunk(doc, spec):
                    if args.mode == MODE_QA:
                        for label in dataset.label_set:
                            question = qa.label_to_question(label, args.template)
                            req = chunk_request(doc, c, MODE_QA, question=question, label=label)
                            resp = request(scorer, req)
                            assert resp.qa_logits is not None
                            fh.write(json.dumps({
                                "doc_id": doc.id, "chunk_index": c.index, "start": c.start,
                                "end": c.end, "mode": MODE_QA, "label": label,
                                "null_slot": list(resp.qa_logits.null_slot),
                                "start_logits": list(resp.qa_logits.start_logits),
                                "end_logits": list(resp.qa_logits.end_logits),
                            }) + "\n")
                            rows += 1
                    else:
                        req = chunk_request(doc, c, MODE_TC, label_set=dataset.label_set)
                        resp = request(scorer, req)
                        assert resp.tag_logits is not None
                        fh.write(json.dumps({
                            "doc_id": doc.id, "chunk_index": c.index, "start": c.start,
                            "end": c.end, "mode": MODE_TC,
                            "tag_logits": [list(r) for r in resp.tag_logits],
                        }) + "\n")
                        rows += 1
    except ScorerError as exc:
        raise CliError(f"scoring failed: {exc}") from exc
    finally:
        if hasattr(scorer, "close"):
            scorer.close()
    print(f"scored {rows} chunk requests -> {args.output}")
    return 0


def _cmd_decode(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    docs = {doc.id: doc for doc in dataset.documents()}
    cfg = ExtractConfig(args.k, args.max_answer_len, args.answerability, args.allow_overlap)
    policy = iob.parse_policy(args.policy, args.bridge_gap)
    per_doc: dict[str, list] = {}
    with open(args.logits, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            doc = docs.get(row["doc_id"])
            if doc is None:
                raise CliError(f"logits reference unknown document {row['doc_id']!r}")
            c = Chunk(row["doc_id"], row["chunk_index"], row["start"], row["end"])
            tokens = [t.text for t in doc.tokens[c.start : c.end]]
            if row["mode"] == MODE_QA:
                logits = QALogits(tuple(row["null_slot"]), tuple(row["start_logits"]), tuple(row["end_logits"]))
                spans = extract_spans(logits, cfg, tokens)
                per_doc.setdefault(doc.id, []).extend(spans_to_predictions(c, row["label"], spans))
            else:
                entities = decode_tc(row["tag_logits"], dataset.label_set, policy, tokens)
                per_doc.setdefault(doc.id, []).extend(entities_to_predictions(c, entities))
    with open(args.output, "w", encoding="utf-8") as fh:
        for doc_id in sorted(per_doc):
            for p in aggregate(per_doc[doc_id]):
                fh.write(json.dumps({
                    "doc_id": doc_id, "label": p.label, "token_start": p.token_start,
                    "token_len": p.token_len, "score": p.score, "text": p.text,
                }) + "\n")
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    if args.split not in dataset.splits:
        raise CliError(f"dataset has no split {args.split!r}")
    predictions: dict[str, list[Entity]] = {}
    with open(args.predictions, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            row = json.loads(line)
            predictions.setdefault(row["doc_id"], []).append(
                Entity(row["label"], row["token_start"], row["token_len"], row.get("text", ""))
            )
    gold = {doc.id: list(doc.entities) for doc in dataset.splits[args.split]}
    report = metrics.score(predictions, gold, args.match_mode, dataset.label_set)
    if args.output_csv:
        Path(args.output_csv).write_text(metrics.to_csv(report), encoding="utf-8")
    if args.output_md:
        Path(args.output_md).write_text(metrics.to_markdown(report), encoding="utf-8")
    print(
        f"weighted precision {report.weighted_precision:.4f} "
        f"recall {report.weighted_recall:.4f} f1 {report.weighted_f1:.4f}"
    )
    return 0


def _cmd_rank_labels(args: argparse.Namespace) -> int:
    dataset = _load_dataset(args)
    print("| Label | Count | Mean chars | Median chars |")
    print("|---|---|---|---|")
    for stat in rank_labels_by_length(dataset, args.n):
        print(f"| {stat.label} | {stat.count} | {stat.mean_chars:.0f} | {stat.median_chars:.0f} |")
    return 0


def _cmd_experiment(args: argparse.Namespace) -> int:
    try:
        config = experiment.load_config(args.config)
    except (OSError, ValueError, TypeError) as exc:
        raise CliError(f"bad experiment config: {exc}") from exc
    if args.jobs is not None:
        config = experiment.config_from_dict({**experiment.config_to_dict(config), "jobs": args.jobs})
    try:
        report = experiment.run(config)
    except (ValueError, ParseError, DatasetValidationError) as exc:
        raise CliError(str(exc)) from exc
    written = experiment.emit(report, args.output_dir)
    for path in written:
        print(path)
    for summary in report.summaries:
        print(f"ratio {summary.ratio}: mean f1 {summary.mean_f1:.4f} (std {summary.std_f1:.4f})")
    return 1 if report.any_failed else 0


def _cmd_report(args: argparse.Namespace) -> int:
    try:
        payload = json.loads(Path(args.grid).read_text(encoding="utf-8"))
        report = experiment.grid_report_from_dict(payload)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"bad grid report: {exc}") from exc
    for path in experiment.emit(report, args.output_dir):
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="docie",
        description="Document information extraction experiment harness: "
        "token classification and extractive QA over a model-agnostic scorer protocol.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check dataset invariants")
    _add_dataset_args(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("convert", help="convert a labeled dataset to extractive-QA samples")
    _add_dataset_args(p)
    p.add_argument("--template", default=qa.DEFAULT_TEMPLATE, help="question template with one <LABEL> placeholder")
    p.add_argument("--include-unanswerable", action="store_true", help="emit empty-answer samples for absent labels")
    p.add_argument("--output", required=True, help="output directory for SQuAD-style files")
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("chunk", help="split documents into overlapping token windows")
    _add_dataset_args(p)
    p.add_argument("--split", default="test", help="split to chunk")
    p.add_argument("--window", type=int, default=512, help="context token capacity per chunk")
    p.add_argument("--overlap", type=int, default=None, help="tokens shared by consecutive chunks")
    p.add_argument("--output", required=True, help="output JSONL file")
    p.set_defaults(func=_cmd_chunk)

    p = sub.add_parser("subsample", help="derive a degraded copy of train/validation splits")
    _add_dataset_args(p)
    p.add_argument("--kind", choices=["tags", "documents"], required=True)
    p.add_argument("--ratio", type=float, required=True, help="keep ratio in (0, 1]")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--exact", action="store_true", help="keep exact per-document entity counts instead of Bernoulli draws")
    p.add_argument("--splits", default=None, help="comma-separated splits to degrade (default train,validation)")
    p.add_argument("--output", required=True, help="output canonical dataset directory")
    p.set_defaults(func=_cmd_subsample)

    p = sub.add_parser("score", help="send every chunk to a scorer and save the logits")
    _add_dataset_args(p)
    p.add_argument("--split", default="test")
    p.add_argument("--mode", choices=[MODE_QA, MODE_TC], required=True)
    p.add_argument("--scorer", required=True,
                   help="gold | noisy[:drop[:seed]] | constant:<v> | stdio:<command> | http://<url>")
    p.add_argument("--window", type=int, default=512)
    p.add_argument("--overlap", type=int, default=None)
    p.add_argument("--template", default=qa.DEFAULT_TEMPLATE)
    p.add_argument("--output", required=True, help="output logits JSONL file")
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("decode", help="turn saved logits into predicted entities")
    _add_dataset_args(p)
    p.add_argument("--logits", required=True, help="logits JSONL from the score stage")
    p.add_argument("--k", type=int, default=10, help="top-k answer spans per question")
    p.add_argument("--max-answer-len", type=int, default=100)
    p.add_argument("--answerability", choices=["raw_positive", "null_diff"], default="raw_positive")
    p.add_argument("--allow-overlap", action="store_true")
    p.add_argument("--policy", default="begin_on_orphan",
                   help="IOB repair policy: strict | begin_on_orphan | bridge[:gap]")
    p.add_argument("--bridge-gap", type=int, default=0)
    p.add_argument("--output", required=True, help="output predictions JSONL file")
    p.set_defaults(func=_cmd_decode)

    p = sub.add_parser("eval", help="entity-level metrics for saved predictions")
    _add_dataset_args(p)
    p.add_argument("--predictions", required=True, help="predictions JSONL from the decode stage")
    p.add_argument("--split", default="test")
    p.add_argument("--match-mode", choices=[metrics.SPAN, metrics.TEXT], default=metrics.SPAN)
    p.add_argument("--output-csv", default=None)
    p.add_argument("--output-md", default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("rank-labels", help="labels ranked by mean entity length")
    _add_dataset_args(p)
    p.add_argument("-n", type=int, default=10, help="number of labels to keep")
    p.set_defaults(func=_cmd_rank_labels)

    p = sub.add_parser("experiment", help="run a ratio x seed grid from a config file")
    p.add_argument("--config", required=True, help="JSON config mirroring ExperimentConfig")
    p.add_argument("--output-dir", required=True)
    p.add_argument("--jobs", type=int, default=None, help="parallel cells")
    p.set_defaults(func=_cmd_experiment)

    p = sub.add_parser("report", help="re-emit result files from a saved grid.json")
    p.add_argument("--grid", required=True)
    p.add_argument("--output-dir", required=True)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
