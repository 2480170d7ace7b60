"""Deterministic degradation of training/validation splits.

Two flavors: dropping entity annotations (partially tagged data) and dropping
whole documents (reduced supervision).  Every decision derives from a stable
per-document random stream, so outcomes do not depend on iteration order and
the same seed always reproduces the same split.  Test splits must never pass
through here; the experiment orchestrator enforces that.

Deliberately absent: wrong-text and partial-span corruption modes.  Missing
annotations are the only degradation currently exercised; the other noise
shapes stay future flags.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

from .model import Dataset, Document
from .seeding import round_half_up, stable_rng


@dataclass(frozen=True)
class SubsampleSpec:
    kind: str  # "tags" | "documents"
    ratio: float
    seed: int

    def __post_init__(self) -> None:
        if self.kind not in ("tags", "documents"):
            raise ValueError(f"unknown subsample kind {self.kind!r}")
        _check_ratio(self.ratio)


def _check_ratio(ratio: float) -> None:
    if not 0.0 < ratio <= 1.0:
        raise ValueError(f"ratio must be in (0, 1], got {ratio}")


def subsample_tags(
    split: Sequence[Document],
    ratio: float,
    seed: int,
    exact: bool = False,
) -> list[Document]:
    """Keep each entity independently with probability ``ratio``.

    Documents whose entities are all dropped are discarded; documents that
    never had entities pass through untouched, so ratio 1.0 is the identity.
    ``exact`` switches to keeping exactly round(ratio * n) entities per
    document instead of Bernoulli draws.
    """
    _check_ratio(ratio)
    out: list[Document] = []
    for doc in split:
        if not doc.entities:
            out.append(doc)
            continue
        rng = stable_rng(seed, "tags", doc.id)
        if exact:
            keep_n = round_half_up(ratio * len(doc.entities))
            keep_idx = set(rng.sample(range(len(doc.entities)), keep_n))
            kept = tuple(e for i, e in enumerate(doc.entities) if i in keep_idx)
        else:
            kept = tuple(e for e in doc.entities if rng.random() < ratio)
        if kept:
            out.append(replace(doc, entities=kept))
    return out


def subsample_documents(split: Sequence[Document], ratio: float, seed: int) -> list[Document]:
    """Keep exactly round(ratio * n) documents, chosen by a seeded shuffle.

    Selected documents keep their annotations untouched and their original
    relative order.
    """
    _check_ratio(ratio)
    n = len(split)
    keep_n = round_half_up(ratio * n)
    order = list(range(n))
    stable_rng(seed, "documents").shuffle(order)
    keep = sorted(order[:keep_n])
    return [split[i] for i in keep]


def degrade_dataset(
    dataset: Dataset,
    kind: str,
    ratio: float,
    seed: int,
    split_names: Sequence[str] = ("train", "validation"),
    exact: bool = False,
) -> Dataset:
    """Apply one subsampling spec to the named splits, leaving the rest alone."""
    splits = dict(dataset.splits)
    for name in split_names:
        if name not in splits:
            continue
        if kind == "tags":
            splits[name] = tuple(subsample_tags(splits[name], ratio, seed, exact=exact))
        elif kind == "documents":
            splits[name] = tuple(subsample_documents(splits[name], ratio, seed))
        else:
            raise ValueError(f"unknown subsample kind {kind!r}")
    return replace(dataset, splits=splits)
