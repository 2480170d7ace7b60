"""Document information extraction harness.

Compares two task framings over the same datasets: labeling every token with
an IOB tag, and answering label-derived questions with context spans.  All
neural scoring sits behind a small wire protocol, so the pipeline runs and
tests end to end against built-in oracle scorers.
"""

from .chunking import Chunk, ChunkSpec, LocalSpan, chunk, remap
from .dataset_io import LabelLengthStat, load, rank_labels_by_length, save
from .decoding import ExtractConfig, QALogits, ScoredSpan, aggregate, decode_tc, extract_spans
from .experiment import ExperimentConfig, GridReport, ScheduleState, run, schedule_step
from .iob import BEGIN_ON_ORPHAN, STRICT, RepairPolicy, TagSequence, bridge, decode, encode
from .metrics import LabelMetrics, Report, score
from .model import Box, Dataset, Document, Entity, Token, Violation, validate
from .qa import QADataset, QASample, label_to_question, qa_stats, to_qa
from .subsample import SubsampleSpec, subsample_documents, subsample_tags

__version__ = "0.1.0"

__all__ = [
    "BEGIN_ON_ORPHAN",
    "Box",
    "Chunk",
    "ChunkSpec",
    "Dataset",
    "Document",
    "Entity",
    "ExperimentConfig",
    "ExtractConfig",
    "GridReport",
    "LabelLengthStat",
    "LabelMetrics",
    "LocalSpan",
    "QADataset",
    "QALogits",
    "QASample",
    "RepairPolicy",
    "Report",
    "STRICT",
    "ScheduleState",
    "ScoredSpan",
    "SubsampleSpec",
    "TagSequence",
    "Token",
    "Violation",
    "aggregate",
    "bridge",
    "chunk",
    "decode",
    "decode_tc",
    "encode",
    "extract_spans",
    "label_to_question",
    "load",
    "qa_stats",
    "rank_labels_by_length",
    "remap",
    "run",
    "save",
    "schedule_step",
    "score",
    "subsample_documents",
    "subsample_tags",
    "to_qa",
    "validate",
]
