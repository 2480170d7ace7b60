"""Orchestrate the four experimental settings over ratio x seed grids.

Each grid cell derives degraded train/validation splits (the test split is
never touched), runs the full prediction pipeline against the test split,
and records a metrics report.  Per-ratio aggregates use the sample standard
deviation across seeds.  The reduce-on-plateau learning-rate schedule lives
here as a pure state machine so it can be driven and tested without any
training loop; decisions travel to a training server as ``schedule`` control
messages.
"""

from __future__ import annotations

import csv
import io
import json
import os
import shlex
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from . import iob, qa
from .chunking import ChunkSpec, default_overlap
from .dataset_io import load
from .decoding import ExtractConfig
from .metrics import SPAN, TEXT, Report, to_markdown
from .model import Dataset
from .pipeline import PipelineConfig, evaluate_split
from .protocol import MODE_QA, MODE_TC, ScorerError
from .scorer import HttpScorerClient, Scorer, StdioScorerClient, constant, gold_oracle, noisy_oracle
from .subsample import degrade_dataset

DEFAULT_RATIOS = (0.1, 0.3, 0.5, 0.7, 0.9)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)

SETTINGS = ("vanilla", "noisy_tags", "few_shot_docs", "zero_shot")

SCORER_ENV_VAR = "DOCIE_SCORER"

INITIAL_LR = 2e-5
DEFAULT_PATIENCE = 10
LR_FLOOR = 1e-7


# --- learning-rate schedule ----------------------------------------------------


@dataclass(frozen=True)
class ScheduleState:
    lr: float
    epochs_since_improvement: int = 0
    best_val_f1: float = 0.0
    halvings: int = 0
    stopped: bool = False


class ScheduleStoppedError(RuntimeError):
    pass


def initial_schedule_state(lr: float = INITIAL_LR) -> ScheduleState:
    if lr <= 0:
        raise ValueError("initial lr must be positive")
    return ScheduleState(lr=lr)


def schedule_step(
    state: ScheduleState,
    val_f1: float,
    patience: int = DEFAULT_PATIENCE,
    floor: float = LR_FLOOR,
) -> ScheduleState:
    """One epoch's decision: reset on improvement, halve the lr after
    ``patience`` stale epochs, stop once the lr falls below ``floor``."""
    if state.stopped:
        raise ScheduleStoppedError("schedule_step called after the schedule stopped")
    if val_f1 > state.best_val_f1:
        return replace(state, best_val_f1=val_f1, epochs_since_improvement=0)
    counter = state.epochs_since_improvement + 1
    if counter < patience:
        return replace(state, epochs_since_improvement=counter)
    lr = state.lr / 2
    return replace(
        state,
        lr=lr,
        epochs_since_improvement=0,
        halvings=state.halvings + 1,
        stopped=lr < floor,
    )


def run_schedule(
    val_f1_sequence: Sequence[float],
    lr: float = INITIAL_LR,
    patience: int = DEFAULT_PATIENCE,
    floor: float = LR_FLOOR,
) -> list[ScheduleState]:
    """Trace of states after each epoch, stopping early if the schedule does."""
    state = initial_schedule_state(lr)
    trace = []
    for f1 in val_f1_sequence:
        state = schedule_step(state, f1, patience, floor)
        trace.append(state)
        if state.stopped:
            break
    return trace


# --- configuration --------------------------------------------------------------


@dataclass(frozen=True)
class ScorerSpec:
    """How each cell builds its scorer.

    For the noisy oracle, ``drop`` defaults to 1 - cell ratio and ``seed`` to
    the cell seed, which mimics a model trained on that cell's degraded data.
    """

    kind: str  # gold_oracle | noisy_oracle | constant | stdio | http
    drop: float | None = None
    seed: int | None = None
    value: float = -1.0
    command: str = ""
    url: str = ""

    def __post_init__(self) -> None:
        if self.kind not in ("gold_oracle", "noisy_oracle", "constant", "stdio", "http"):
            raise ValueError(f"unknown scorer kind {self.kind!r}")


def parse_scorer_spec(spec: str) -> ScorerSpec:
    """Parse an endpoint string: gold | noisy[:drop[:seed]] | constant:<v> |
    stdio:<command> | http://<url>."""
    if spec in ("gold", "gold_oracle"):
        return ScorerSpec("gold_oracle")
    if spec.startswith("noisy"):
        parts = spec.split(":")
        drop = float(parts[1]) if len(parts) > 1 and parts[1] else None
        seed = int(parts[2]) if len(parts) > 2 else None
        return ScorerSpec("noisy_oracle", drop=drop, seed=seed)
    if spec.startswith("constant:"):
        return ScorerSpec("constant", value=float(spec.split(":", 1)[1]))
    if spec.startswith("stdio:"):
        return ScorerSpec("stdio", command=spec.split(":", 1)[1])
    if spec.startswith("http://") or spec.startswith("https://"):
        return ScorerSpec("http", url=spec)
    raise ValueError(f"cannot parse scorer endpoint {spec!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dataset_path: str = ""
    dataset_format: str = "canonical"
    mode: str = MODE_TC
    setting: str = "vanilla"
    ratios: tuple[float, ...] = DEFAULT_RATIOS
    seeds: tuple[int, ...] = DEFAULT_SEEDS
    scorer: ScorerSpec = field(default_factory=lambda: ScorerSpec("gold_oracle"))
    window: int = 512
    overlap: int | None = None
    k: int = 10
    max_answer_len: int = 100
    answerability: str = "raw_positive"
    allow_overlap: bool = False
    iob_policy: str = "begin_on_orphan"
    bridge_gap: int = 0
    match_mode: str | None = None  # None -> span for tc, text for qa
    template: str = qa.DEFAULT_TEMPLATE
    zero_shot_labels: tuple[str, ...] = ()
    subsample_exact: bool = False
    eval_split: str = "test"
    jobs: int = 1
    # training hyperparameters: carried opaquely to a training server
    batch_size: int | None = None
    grad_accumulation: int = 2
    lr: float = INITIAL_LR
    patience: int = DEFAULT_PATIENCE
    lr_floor: float = LR_FLOOR

    def __post_init__(self) -> None:
        if self.mode not in (MODE_QA, MODE_TC):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.setting not in SETTINGS:
            raise ValueError(f"unknown setting {self.setting!r}")
        if not self.seeds:
            raise ValueError("seeds must be non-empty")
        if not all(0.0 < r <= 1.0 for r in self.ratios):
            raise ValueError("ratios must lie in (0, 1]")
        if self.setting == "zero_shot":
            if self.mode != MODE_QA:
                raise ValueError("the zero_shot setting requires qa mode; tags cannot name unseen classes")
            if not self.zero_shot_labels:
                raise ValueError("zero_shot requires zero_shot_labels")

    @property
    def resolved_match_mode(self) -> str:
        if self.match_mode is not None:
            return self.match_mode
        return SPAN if self.mode == MODE_TC else TEXT

    @property
    def resolved_overlap(self) -> int:
        return self.overlap if self.overlap is not None else default_overlap(self.window)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            mode=self.mode,
            chunk_spec=ChunkSpec(self.window, self.resolved_overlap),
            extract=ExtractConfig(self.k, self.max_answer_len, self.answerability, self.allow_overlap),
            policy=iob.parse_policy(self.iob_policy, self.bridge_gap),
            template=self.template,
        )


def config_to_dict(config: ExperimentConfig) -> dict:
    payload = {
        "dataset_path": config.dataset_path,
        "dataset_format": config.dataset_format,
        "mode": config.mode,
        "setting": config.setting,
        "ratios": list(config.ratios),
        "seeds": list(config.seeds),
        "scorer": {
            "kind": config.scorer.kind,
            "drop": config.scorer.drop,
            "seed": config.scorer.seed,
            "value": config.scorer.value,
            "command": config.scorer.command,
            "url": config.scorer.url,
        },
        "window": config.window,
        "overlap": config.overlap,
        "k": config.k,
        "max_answer_len": config.max_answer_len,
        "answerability": config.answerability,
        "allow_overlap": config.allow_overlap,
        "iob_policy": config.iob_policy,
        "bridge_gap": config.bridge_gap,
        "match_mode": config.match_mode,
        "template": config.template,
        "zero_shot_labels": list(config.zero_shot_labels),
        "subsample_exact": config.subsample_exact,
        "eval_split": config.eval_split,
        "jobs": config.jobs,
        "batch_size": config.batch_size,
        "grad_accumulation": config.grad_accumulation,
        "lr": config.lr,
        "patience": config.patience,
        "lr_floor": config.lr_floor,
    }
    return payload


def config_from_dict(payload: dict) -> ExperimentConfig:
    data = dict(payload)
    scorer_data = data.pop("scorer", {"kind": "gold_oracle"})
    scorer = scorer_data if isinstance(scorer_data, ScorerSpec) else ScorerSpec(**scorer_data)
    for key in ("ratios", "seeds", "zero_shot_labels"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    return ExperimentConfig(scorer=scorer, **data)


def load_config(path: str | Path) -> ExperimentConfig:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return config_from_dict(payload)


# --- grid execution --------------------------------------------------------------


@dataclass(frozen=True)
class CellResult:
    ratio: float
    seed: int
    report: Report | None
    train_documents: int
    train_entities: int
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.report is None


@dataclass(frozen=True)
class RatioSummary:
    ratio: float
    cells: int
    mean_f1: float
    std_f1: float
    mean_precision: float
    mean_recall: float
    std_recall: float


@dataclass(frozen=True)
class GridReport:
    config: ExperimentConfig
    cells: tuple[CellResult, ...]
    summaries: tuple[RatioSummary, ...]

    @property
    def any_failed(self) -> bool:
        return any(c.failed for c in self.cells)


def _build_scorer(config: ExperimentConfig, dataset: Dataset, ratio: float, seed: int) -> Scorer:
    override = os.environ.get(SCORER_ENV_VAR)
    spec = parse_scorer_spec(override) if override else config.scorer
    if spec.kind == "gold_oracle":
        return gold_oracle(dataset)
    if spec.kind == "noisy_oracle":
        drop = spec.drop if spec.drop is not None else 1.0 - ratio
        return noisy_oracle(dataset, drop, spec.seed if spec.seed is not None else seed)
    if spec.kind == "constant":
        return constant(spec.value)
    if spec.kind == "stdio":
        return StdioScorerClient(shlex.split(spec.command))
    return HttpScorerClient(spec.url)


def _cell_grid(config: ExperimentConfig) -> list[tuple[float, int]]:
    if config.setting in ("vanilla", "zero_shot"):
        return [(1.0, config.seeds[0])]
    return [(ratio, seed) for ratio in config.ratios for seed in config.seeds]


def _run_cell(config: ExperimentConfig, dataset: Dataset, ratio: float, seed: int) -> CellResult:
    if config.setting == "noisy_tags":
        degraded = degrade_dataset(dataset, "tags", ratio, seed, exact=config.subsample_exact)
    elif config.setting == "few_shot_docs":
        degraded = degrade_dataset(dataset, "documents", ratio, seed)
    else:
        degraded = dataset
    train = degraded.splits.get("train", ())
    train_docs = len(train)
    train_entities = sum(len(d.entities) for d in train)
    labels: Sequence[str] = (
        config.zero_shot_labels if config.setting == "zero_shot" else dataset.label_set
    )
    test_docs = dataset.splits[config.eval_split]  # reference-identical in every cell
    scorer = None
    try:
        scorer = _build_scorer(config, dataset, ratio, seed)
        report = evaluate_split(
            test_docs, labels, scorer, config.pipeline_config(), config.resolved_match_mode
        )
        return CellResult(ratio, seed, report, train_docs, train_entities)
    except ScorerError as exc:
        return CellResult(ratio, seed, None, train_docs, train_entities, error=str(exc))
    finally:
        if scorer is not None and hasattr(scorer, "close"):
            scorer.close()


def _summarize(cells: Sequence[CellResult]) -> list[RatioSummary]:
    by_ratio: dict[float, list[CellResult]] = {}
    for cell in cells:
        by_ratio.setdefault(cell.ratio, []).append(cell)
    out = []
    for ratio in sorted(by_ratio):
        ok = [c.report for c in by_ratio[ratio] if c.report is not None]
        f1s = [r.weighted_f1 for r in ok]
        recalls = [r.weighted_recall for r in ok]
        precisions = [r.weighted_precision for r in ok]
        out.append(
            RatioSummary(
                ratio=ratio,
                cells=len(by_ratio[ratio]),
                mean_f1=statistics.fmean(f1s) if f1s else 0.0,
                std_f1=statistics.stdev(f1s) if len(f1s) > 1 else 0.0,
                mean_precision=statistics.fmean(precisions) if precisions else 0.0,
                mean_recall=statistics.fmean(recalls) if recalls else 0.0,
                std_recall=statistics.stdev(recalls) if len(recalls) > 1 else 0.0,
            )
        )
    return out


def run(config: ExperimentConfig, dataset: Dataset | None = None) -> GridReport:
    """Run every grid cell and aggregate. A scorer failure marks its cell
    failed and the run continues."""
    if dataset is None:
        dataset = load(config.dataset_path, config.dataset_format)
    if config.eval_split not in dataset.splits:
        raise ValueError(f"dataset has no {config.eval_split!r} split to evaluate")
    grid = _cell_grid(config)
    if config.jobs > 1:
        with ThreadPoolExecutor(max_workers=config.jobs) as pool:
            cells = list(pool.map(lambda rs: _run_cell(config, dataset, *rs), grid))
    else:
        cells = [_run_cell(config, dataset, ratio, seed) for ratio, seed in grid]
    return GridReport(config, tuple(cells), tuple(_summarize(cells)))


# --- report emission --------------------------------------------------------------


def cells_csv(report: GridReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ratio", "seed", "status", "weighted_precision", "weighted_recall",
                     "weighted_f1", "train_documents", "train_entities"])
    for cell in report.cells:
        if cell.report is None:
            writer.writerow([cell.ratio, cell.seed, "failed", "", "", "",
                             cell.train_documents, cell.train_entities])
        else:
            writer.writerow([
                cell.ratio, cell.seed, "ok",
                f"{cell.report.weighted_precision:.6f}",
                f"{cell.report.weighted_recall:.6f}",
                f"{cell.report.weighted_f1:.6f}",
                cell.train_documents, cell.train_entities,
            ])
    return buf.getvalue()


def plot_csv(report: GridReport) -> str:
    """Error-bar plot data: one row per ratio."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ratio", "mean_f1", "std"])
    for s in report.summaries:
        writer.writerow([s.ratio, f"{s.mean_f1:.6f}", f"{s.std_f1:.6f}"])
    return buf.getvalue()


def summary_markdown(report: GridReport) -> str:
    cfg = report.config
    lines = [
        f"# Experiment: {cfg.setting} / {cfg.mode}",
        "",
        f"- dataset: `{cfg.dataset_path or '(in-memory)'}`",
        f"- scorer: {cfg.scorer.kind}",
        f"- match mode: {cfg.resolved_match_mode}",
        f"- chunk window/overlap: {cfg.window}/{cfg.resolved_overlap}",
        f"- iob policy: {cfg.iob_policy}",
        f"- answerability: {cfg.answerability}, k: {cfg.k}, max answer len: {cfg.max_answer_len}",
        "",
        "| Ratio | Cells | Mean F1 | Std F1 | Mean Precision | Mean Recall |",
        "|---|---|---|---|---|---|",
    ]
    for s in report.summaries:
        lines.append(
            f"| {s.ratio} | {s.cells} | {s.mean_f1:.4f} | {s.std_f1:.4f} "
            f"| {s.mean_precision:.4f} | {s.mean_recall:.4f} |"
        )
    single = [c for c in report.cells if c.report is not None]
    if len(single) == 1:
        lines += ["", "## Per-label metrics", "", to_markdown(single[0].report).rstrip()]
    failed = [c for c in report.cells if c.failed]
    if failed:
        lines += ["", "## Failed cells", ""]
        lines += [f"- ratio {c.ratio}, seed {c.seed}: {c.error}" for c in failed]
    return "\n".join(lines) + "\n"


def grid_report_to_dict(report: GridReport) -> dict:
    def report_dict(r: Report | None) -> dict | None:
        if r is None:
            return None
        return {
            "per_label": [
                {
                    "label": m.label, "tp": m.true_positives, "fp": m.false_positives,
                    "fn": m.false_negatives, "precision": m.precision, "recall": m.recall,
                    "f1": m.f1, "support": m.support,
                }
                for m in r.per_label
            ],
            "weighted_precision": r.weighted_precision,
            "weighted_recall": r.weighted_recall,
            "weighted_f1": r.weighted_f1,
        }

    return {
        "config": config_to_dict(report.config),
        "cells": [
            {
                "ratio": c.ratio, "seed": c.seed, "error": c.error,
                "train_documents": c.train_documents, "train_entities": c.train_entities,
                "report": report_dict(c.report),
            }
            for c in report.cells
        ],
    }


def grid_report_from_dict(payload: dict) -> GridReport:
    from .metrics import LabelMetrics

    config = config_from_dict(payload["config"])
    cells = []
    for c in payload["cells"]:
        r = c["report"]
        report = None
        if r is not None:
            report = Report(
                tuple(
                    LabelMetrics(m["label"], m["tp"], m["fp"], m["fn"], m["precision"],
                                 m["recall"], m["f1"], m["support"])
                    for m in r["per_label"]
                ),
                r["weighted_precision"], r["weighted_recall"], r["weighted_f1"],
            )
        cells.append(
            CellResult(c["ratio"], c["seed"], report, c["train_documents"], c["train_entities"], c["error"])
        )
    return GridReport(config, tuple(cells), tuple(_summarize(cells)))


def emit(report: GridReport, out_dir: str | Path) -> list[Path]:
    """Write cells.csv, plot.csv, summary.md, and grid.json; re-emitting the
    same report produces byte-identical files."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "cells.csv": cells_csv(report),
        "plot.csv": plot_csv(report),
        "summary.md": summary_markdown(report),
        "grid.json": json.dumps(grid_report_to_dict(report), indent=2, sort_keys=True) + "\n",
    }
    written = []
    for name, content in files.items():
        path = out / name
        path.write_text(content, encoding="utf-8")
        written.append(path)
    return written
