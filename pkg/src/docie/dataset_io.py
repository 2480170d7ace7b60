"""Load/store the canonical dataset format and adapt public dataset layouts.

The canonical format is a directory holding ``dataset.json`` (name, label
set, split order) plus one UTF-8 JSON file per split containing a document
array that mirrors the in-memory model field for field.  Adapters map native
annotation layouts (FUNSD-style form blocks, SROIE-style quad boxes plus key
files, Kleister-style TSV pairs, CUAD-style SQuAD JSON) onto that model,
normalizing raw text to the canonical single-space join at ingestion.
"""

from __future__ import annotations

import json
import re
import statistics
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

from .model import (
    BOX_MAX,
    Box,
    Dataset,
    Document,
    Entity,
    Token,
    ensure_valid,
)
from .seeding import round_half_up

ADAPTERS = ("canonical", "funsd-style", "sroie-style", "kleister-style", "cuad-style")

DATASET_META = "dataset.json"


class ParseError(ValueError):
    """A native or canonical file could not be parsed; names file and location."""

    def __init__(self, path: str | Path, detail: str):
        self.path = str(path)
        super().__init__(f"{path}: {detail}")


@dataclass(frozen=True)
class LabelLengthStat:
    label: str
    count: int
    mean_chars: float
    median_chars: float


def _read_json(path: Path) -> object:
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(path, f"cannot read: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        byte_offset = len(text[: exc.pos].encode("utf-8"))
        raise ParseError(path, f"invalid JSON at byte offset {byte_offset}: {exc.msg}") from exc


def _token_from_dict(obj: dict, path: Path) -> Token:
    try:
        return Token(
            text=obj["text"],
            page=obj["page"],
            box=tuple(obj["box"]),
            char_start=obj["char_start"],
            char_len=obj["char_len"],
        )
    except (KeyError, TypeError) as exc:
        raise ParseError(path, f"malformed token record: {exc}") from exc


def _document_from_dict(obj: dict, path: Path) -> Document:
    try:
        tokens = tuple(_token_from_dict(t, path) for t in obj["tokens"])
        entities = tuple(
            Entity(e["label"], e["token_start"], e["token_len"], e["text"]) for e in obj["entities"]
        )
        return Document(id=obj["id"], tokens=tokens, text=obj["text"], entities=entities)
    except (KeyError, TypeError) as exc:
        raise ParseError(path, f"malformed document record: {exc}") from exc


def _document_to_dict(doc: Document) -> dict:
    return {
        "id": doc.id,
        "text": doc.text,
        "tokens": [
            {
                "text": t.text,
                "page": t.page,
                "box": list(t.box),
                "char_start": t.char_start,
                "char_len": t.char_len,
            }
            for t in doc.tokens
        ],
        "entities": [
            {"label": e.label, "token_start": e.token_start, "token_len": e.token_len, "text": e.text}
            for e in doc.entities
        ],
    }


def load_canonical(path: str | Path, validate: bool = True) -> Dataset:
    root = Path(path)
    meta_path = root / DATASET_META
    meta = _read_json(meta_path)
    if not isinstance(meta, dict):
        raise ParseError(meta_path, "dataset metadata must be a JSON object")
    try:
        name = meta["name"]
        label_set = tuple(meta["label_set"])
        split_names = list(meta["splits"])
    except (KeyError, TypeError) as exc:
        raise ParseError(meta_path, f"malformed dataset metadata: {exc}") from exc
    if len(set(split_names)) != len(split_names):
        raise ParseError(meta_path, "split names must be unique")
    splits: dict[str, tuple[Document, ...]] = {}
    for split in split_names:
        split_path = root / f"{split}.json"
        docs = _read_json(split_path)
        if not isinstance(docs, list):
            raise ParseError(split_path, "split file must hold a document array")
        splits[split] = tuple(_document_from_dict(d, split_path) for d in docs)
    dataset = Dataset(name=name, label_set=label_set, splits=splits)
    return ensure_valid(dataset) if validate else dataset


def save(dataset: Dataset, path: str | Path) -> Path:
    """Write the canonical directory layout; ``load`` restores an equal dataset."""
    ensure_valid(dataset)
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    meta = {"name": dataset.name, "label_set": list(dataset.label_set), "splits": list(dataset.splits)}
    (root / DATASET_META).write_text(json.dumps(meta, indent=2, ensure_ascii=False) + "\n", encoding="utf-8")
    for split, docs in dataset.splits.items():
        payload = json.dumps([_document_to_dict(d) for d in docs], indent=2, ensure_ascii=False)
        (root / f"{split}.json").write_text(payload + "\n", encoding="utf-8")
    return root


# --- adapters for native layouts ---------------------------------------------


def _scale_box(raw: Sequence[float], width: float, height: float) -> Box:
    x0, y0, x1, y1 = raw
    x0, x1 = sorted((x0, x1))
    y0, y1 = sorted((y0, y1))
    box = (
        int(round(x0 * BOX_MAX / width)),
        int(round(y0 * BOX_MAX / height)),
        int(round(x1 * BOX_MAX / width)),
        int(round(y1 * BOX_MAX / height)),
    )
    return tuple(min(max(c, 0), BOX_MAX) for c in box)  # type: ignore[return-value]


def _build_document(
    doc_id: str,
    words: list[str],
    boxes: list[Box],
    pages: list[int],
    spans: list[tuple[str, int, int]],
) -> Document:
    return Document.from_words(doc_id, words, spans, boxes, pages)


def load_funsd_style(path: str | Path, name: str = "funsd-style") -> Dataset:
    """Directory of per-document form-annotation JSON files.

    Layout: either ``<root>/<split>/annotations/*.json`` (``training_data`` and
    ``testing_data`` map to train/test) or a flat directory of ``*.json``
    treated as one train split.  Each file holds ``{"form": [block, ...]}``;
    block labels other than ``other`` become entities, one entity per block.
    Pixel boxes are normalized by the page size when the file carries
    ``width``/``height`` keys, otherwise by the maximum observed coordinate.
    """
    root = Path(path)
    split_dirs: dict[str, Path] = {}
    for native, split in (("training_data", "train"), ("testing_data", "test")):
        candidate = root / native / "annotations"
        if candidate.is_dir():
            split_dirs[split] = candidate
    if not split_dirs:
        split_dirs["train"] = root
    labels: set[str] = set()
    splits: dict[str, tuple[Document, ...]] = {}
    for split, directory in split_dirs.items():
        docs = []
        for file in sorted(directory.glob("*.json")):
            payload = _read_json(file)
            if not isinstance(payload, dict) or "form" not in payload:
                raise ParseError(file, "expected an object with a 'form' key")
            blocks = payload["form"]
            width = payload.get("width")
            height = payload.get("height")
            if width is None or height is None:
                max_coord = 1
                for block in blocks:
                    for word in block.get("words", []):
                        max_coord = max(max_coord, *word["box"][2:])
                width = height = max_coord
            words: list[str] = []
            boxes: list[Box] = []
            spans: list[tuple[str, int, int]] = []
            for block in blocks:
                block_words = [w for w in block.get("words", []) if w.get("text", "").strip()]
                if not block_words:
                    continue
                start = len(words)
                for w in block_words:
                    words.append(w["text"].strip())
                    boxes.append(_scale_box(w["box"], width, height))
                label = block.get("label", "other")
                if label not in ("other", "O", ""):
                    labels.add(label)
                    spans.append((label, start, len(words) - start))
            docs.append(_build_document(file.stem, words, boxes, [0] * len(words), spans))
        splits[split] = tuple(docs)
    dataset = Dataset(name=name, label_set=tuple(sorted(labels)), splits=splits)
    return ensure_valid(dataset)


def _find_value_span(words: Sequence[str], value: str) -> tuple[int, int] | None:
    """First token subsequence whose normalized join equals the value."""
    target = " ".join(value.split()).casefold()
    if not target:
        return None
    lowered = [w.casefold() for w in words]
    target_words = target.split(" ")
    n, m = len(lowered), len(target_words)
    for start in range(n - m + 1):
        if lowered[start : start + m] == target_words:
            return start, m
    # fall back to a character-level scan for values that split across tokens
    for start in range(n):
        joined = ""
        for end in range(start, n):
            joined = lowered[end] if end == start else f"{joined} {lowered[end]}"
            if joined == target:
                return start, end - start + 1
            if len(joined) > len(target):
                break
    return None


def load_sroie_style(path: str | Path, name: str = "sroie-style") -> Dataset:
    """Receipt OCR lines plus per-document key files.

    Layout: ``<root>/<split>/<doc>.txt`` with one OCR line per row
    (``x1,y1,x2,y2,x3,y3,x4,y4,transcript``) and ``<root>/<split>/<doc>.key.json``
    holding the labeled field values.  Values are located in the token stream
    by normalized subsequence match; unlocatable values are skipped.
    """
    root = Path(path)
    split_dirs = {d.name: d for d in sorted(root.iterdir()) if d.is_dir()} or {"train": root}
    labels: set[str] = set()
    splits: dict[str, tuple[Document, ...]] = {}
    for split, directory in split_dirs.items():
        docs = []
        for ocr_file in sorted(directory.glob("*.txt")):
            key_file = ocr_file.with_name(ocr_file.stem + ".key.json")
            words: list[str] = []
            raw_boxes: list[tuple[float, float, float, float]] = []
            for lineno, line in enumerate(ocr_file.read_text(encoding="utf-8").splitlines(), 1):
                if not line.strip():
                    continue
                parts = line.split(",", 8)
                if len(parts) < 9:
                    raise ParseError(ocr_file, f"line {lineno}: expected 8 coordinates and a transcript")
                try:
                    coords = [float(c) for c in parts[:8]]
                except ValueError as exc:
                    raise ParseError(ocr_file, f"line {lineno}: non-numeric coordinate") from exc
                xs, ys = coords[0::2], coords[1::2]
                rect = (min(xs), min(ys), max(xs), max(ys))
                for word in parts[8].split():
                    words.append(word)
                    raw_boxes.append(rect)
            max_x = max((b[2] for b in raw_boxes), default=1) or 1
            max_y = max((b[3] for b in raw_boxes), default=1) or 1
            boxes = [_scale_box(b, max_x, max_y) for b in raw_boxes]
            spans: list[tuple[str, int, int]] = []
            if key_file.exists():
                keys = _read_json(key_file)
                if not isinstance(keys, dict):
                    raise ParseError(key_file, "key file must hold a JSON object")
                used: list[tuple[int, int]] = []
                for label in sorted(keys):
                    labels.add(label)
                    found = _find_value_span(words, str(keys[label]))
                    if found is None:
                        continue
                    start, length = found
                    if any(start < u_start + u_len and u_start < start + length for u_start, u_len in used):
                        continue  # keep entities non-overlapping
                    used.append((start, length))
                    spans.append((label, start, length))
            docs.append(_build_document(ocr_file.stem, words, boxes, [0] * len(words), spans))
        splits[split] = tuple(docs)
    dataset = Dataset(name=name, label_set=tuple(sorted(labels)), splits=splits)
    return ensure_valid(dataset)


_KLEISTER_SPLIT_ALIASES = {"dev-0": "validation", "test-A": "test"}


def load_kleister_style(path: str | Path, name: str = "kleister-style") -> Dataset:
    """Long-document TSV layout: per split an ``in.tsv`` (filename TAB text)
    and an ``expected.tsv`` of space-separated ``key=value`` pairs, values
    using underscores for internal spaces.  Documents carry no geometry, so
    every token gets a zero box.
    """
    root = Path(path)
    split_dirs = {d.name: d for d in sorted(root.iterdir()) if d.is_dir() and (d / "in.tsv").exists()}
    if not split_dirs and (root / "in.tsv").exists():
        split_dirs = {"train": root}
    if not split_dirs:
        raise ParseError(root, "no split directories with in.tsv found")
    labels: set[str] = set()
    splits: dict[str, tuple[Document, ...]] = {}
    for native_split, directory in split_dirs.items():
        split = _KLEISTER_SPLIT_ALIASES.get(native_split, native_split)
        in_lines = (directory / "in.tsv").read_text(encoding="utf-8").splitlines()
        expected_path = directory / "expected.tsv"
        expected_lines = (
            expected_path.read_text(encoding="utf-8").splitlines() if expected_path.exists() else []
        )
        docs = []
        for i, line in enumerate(in_lines):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) < 2:
                raise ParseError(directory / "in.tsv", f"line {i + 1}: expected at least 2 tab-separated fields")
            doc_id, text = fields[0], fields[-1]
            words = text.split()
            spans: list[tuple[str, int, int]] = []
            if i < len(expected_lines) and expected_lines[i].strip():
                used: list[tuple[int, int]] = []
                for pair in expected_lines[i].split():
                    if "=" not in pair:
                        raise ParseError(expected_path, f"line {i + 1}: expected key=value pairs")
                    label, raw_value = pair.split("=", 1)
                    labels.add(label)
                    found = _find_value_span(words, raw_value.replace("_", " "))
                    if found is None:
                        continue
                    start, length = found
                    if any(start < s + l and s < start + length for s, l in used):
                        continue
                    used.append((start, length))
                    spans.append((label, start, length))
            boxes: list[Box] = [(0, 0, 0, 0)] * len(words)
            docs.append(_build_document(doc_id, words, boxes, [0] * len(words), spans))
        splits[split] = tuple(docs)
    dataset = Dataset(name=name, label_set=tuple(sorted(labels)), splits=splits)
    return ensure_valid(dataset)


_QUOTED = re.compile(r'"([^"]+)"')


def _label_from_question(question: str) -> str:
    match = _QUOTED.search(question)
    return match.group(1) if match else question.strip()


def _char_span_to_tokens(
    offsets: Sequence[tuple[int, int]], char_start: int, char_end: int
) -> tuple[int, int] | None:
    first = last = None
    for i, (tok_start, tok_end) in enumerate(offsets):
        if tok_end > char_start and first is None:
            first = i
        if tok_start < char_end:
            last = i
        if tok_start >= char_end:
            break
    if first is None or last is None or last < first:
        return None
    return first, last - first + 1


def load_cuad_style(path: str | Path, name: str = "cuad-style") -> Dataset:
    """SQuAD-form contract annotations: one JSON file per split, or a single
    file treated as one train split.  The entity label is the quoted phrase
    inside each question.  Raw char spans are remapped onto whitespace tokens
    and overlapping annotations are dropped deterministically (first by
    position wins), since the model requires non-overlapping entities.
    """
    root = Path(path)
    files = {f.stem: f for f in sorted(root.glob("*.json"))} if root.is_dir() else {"train": root}
    if not files:
        raise ParseError(root, "no SQuAD-style JSON files found")
    labels: set[str] = set()
    splits: dict[str, tuple[Document, ...]] = {}
    for split, file in files.items():
        payload = _read_json(file)
        if not isinstance(payload, dict) or "data" not in payload:
            raise ParseError(file, "expected an object with a 'data' key")
        docs = []
        for article in payload["data"]:
            title = article.get("title", f"doc{len(docs)}")
            for p_idx, paragraph in enumerate(article.get("paragraphs", [])):
                context = paragraph.get("context", "")
                words: list[str] = []
                offsets: list[tuple[int, int]] = []
                for match in re.finditer(r"\S+", context):
                    words.append(match.group(0))
                    offsets.append((match.start(), match.end()))
                raw_spans: list[tuple[int, int, str]] = []
                for qa in paragraph.get("qas", []):
                    label = _label_from_question(qa.get("question", ""))
                    if not label:
                        continue
                    labels.add(label)
                    for answer in qa.get("answers", []):
                        char_start = answer["answer_start"]
                        char_end = char_start + len(answer["text"])
                        span = _char_span_to_tokens(offsets, char_start, char_end)
                        if span is not None:
                            raw_spans.append((span[0], span[1], label))
                spans: list[tuple[str, int, int]] = []
                used: list[tuple[int, int]] = []
                for start, length, label in sorted(raw_spans):
                    if any(start < s + l and s < start + length for s, l in used):
                        continue
                    used.append((start, length))
                    spans.append((label, start, length))
                doc_id = title if p_idx == 0 else f"{title}#{p_idx}"
                boxes: list[Box] = [(0, 0, 0, 0)] * len(words)
                docs.append(_build_document(doc_id, words, boxes, [0] * len(words), spans))
        splits[split] = tuple(docs)
    dataset = Dataset(name=name, label_set=tuple(sorted(labels)), splits=splits)
    return ensure_valid(dataset)


_LOADERS: dict[str, Callable[..., Dataset]] = {
    "canonical": load_canonical,
    "funsd-style": load_funsd_style,
    "sroie-style": load_sroie_style,
    "kleister-style": load_kleister_style,
    "cuad-style": load_cuad_style,
}


def load(path: str | Path, format_adapter: str = "canonical", validate: bool = True) -> Dataset:
    """Load a dataset through the named adapter; the result always validates."""
    if format_adapter not in _LOADERS:
        raise ValueError(f"unknown format adapter {format_adapter!r}; choose from {ADAPTERS}")
    if format_adapter == "canonical":
        return load_canonical(path, validate=validate)
    return _LOADERS[format_adapter](path)


# --- statistics ---------------------------------------------------------------


def rank_labels_by_length(
    dataset: Dataset, n: int, split_names: Sequence[str] = ("train", "validation")
) -> list[LabelLengthStat]:
    """Top-n labels by mean entity text length over the train and validation splits.

    Character length is measured on the canonical entity text.  Labels without
    entities are omitted; an even count's median is the mean of the two middle
    values.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    lengths: dict[str, list[int]] = {}
    for split in split_names:
        for doc in dataset.splits.get(split, ()):
            for ent in doc.entities:
                lengths.setdefault(ent.label, []).append(len(ent.text))
    stats = [
        LabelLengthStat(
            label=label,
            count=len(values),
            mean_chars=statistics.fmean(values),
            median_chars=float(statistics.median(values)),
        )
        for label, values in lengths.items()
    ]
    stats.sort(key=lambda s: (-s.mean_chars, s.label))
    return stats[:n]


def deterministic_split(
    dataset: Dataset,
    source_split: str = "train",
    train_fraction: float = 0.8,
    names: tuple[str, str] = ("train", "test"),
) -> Dataset:
    """Split one split into two by sorted document id; reproducible everywhere."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must be in (0, 1)")
    docs = sorted(dataset.splits[source_split], key=lambda d: d.id)
    n_train = round_half_up(train_fraction * len(docs))
    splits = {k: v for k, v in dataset.splits.items() if k != source_split}
    splits[names[0]] = tuple(docs[:n_train])
    splits[names[1]] = tuple(docs[n_train:])
    return Dataset(dataset.name, dataset.label_set, splits)
