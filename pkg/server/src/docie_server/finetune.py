"""Fine-tuning entrypoint.

Trains the QA or tagging head on the harness's published file formats and
logs one line per epoch with the validation F1.  Learning-rate control
follows reduce-on-plateau rules (improvement resets patience, a stale streak
halves the lr, training stops below the floor); when a control engine is
attached, decisions arriving as `schedule` messages take precedence over the
local rules.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import torch
from torch import nn

from .data import QAExample, TaggedDoc, doc_tag_ids, load_canonical, load_squad
from .engine import Encoded, Engine
from .model import ModelConfig, ScoringModel

IGNORE = -100


@dataclass
class TrainConfig:
    mode: str  # "qa" | "tc"
    epochs: int = 2
    lr: float = 2e-5
    batch_size: int | None = None  # defaults: tc 2, qa 4
    grad_accumulation: int = 2
    patience: int = 10
    lr_floor: float = 1e-7
    max_len: int = 512
    seed: int = 0
    max_answer_len: int = 50
    device: str = "cpu"

    @property
    def resolved_batch_size(self) -> int:
        if self.batch_size is not None:
            return self.batch_size
        return 2 if self.mode == "tc" else 4


def _pad_batch(encodings: list[Encoded]):
    length = max(len(e.ids) for e in encodings)
    ids = torch.zeros((len(encodings), length), dtype=torch.long)
    boxes = torch.zeros((len(encodings), length, 4), dtype=torch.long)
    segments = torch.zeros((len(encodings), length), dtype=torch.long)
    for i, e in enumerate(encodings):
        n = len(e.ids)
        ids[i, :n] = torch.tensor(e.ids)
        boxes[i, :n] = torch.tensor(e.boxes)
        segments[i, :n] = torch.tensor(e.segments)
    return ids, boxes, segments


def _truncate_doc(doc: TaggedDoc, budget: int) -> TaggedDoc:
    if len(doc.words) <= budget:
        return doc
    spans = [s for s in doc.spans if s[1] + s[2] <= budget]
    return TaggedDoc(doc.doc_id, doc.words[:budget], doc.boxes[:budget], spans)


def _truncate_example(ex: QAExample, budget: int) -> QAExample:
    if len(ex.words) <= budget:
        return ex
    answers = [a for a in ex.answers if a[0] + a[1] <= budget]
    return QAExample(ex.doc_id, ex.question, ex.words[:budget], ex.boxes[:budget], answers)


class Trainer:
    def __init__(self, engine: Engine, cfg: TrainConfig, log=print):
        self.engine = engine
        self.cfg = cfg
        self.log = log
        self.optimizer = torch.optim.Adam(engine.model.parameters(), lr=cfg.lr)
        self.loss_fn = nn.CrossEntropyLoss(ignore_index=IGNORE)

    def _set_lr(self, lr: float) -> None:
        for group in self.optimizer.param_groups:
            group["lr"] = lr

    # --- tc -------------------------------------------------------------------

    def _tc_batch(self, docs: list[TaggedDoc], label_set: list[str]):
        encodings = []
        targets = []
        for doc in docs:
            enc = self.engine.encode(doc.words, doc.boxes)
            tag_ids = doc_tag_ids(doc, label_set)
            # targets sit at each word's first piece; padding and continuations ignored
            t = [IGNORE] * len(enc.ids)
            for word_i, pos in enumerate(enc.word_heads):
                t[pos] = tag_ids[word_i]
            encodings.append(enc)
            targets.append(t)
        ids, boxes, segments = _pad_batch(encodings)
        length = ids.shape[1]
        target = torch.full((len(docs), length), IGNORE, dtype=torch.long)
        for i, t in enumerate(targets):
            target[i, : len(t)] = torch.tensor(t)
        return ids, boxes, segments, target

    def _tc_epoch(self, docs: list[TaggedDoc], label_set: list[str]) -> float:
        self.engine.model.train()
        batch = self.cfg.resolved_batch_size
        total = 0.0
        self.optimizer.zero_grad()
        for step, start in enumerate(range(0, len(docs), batch)):
            ids, boxes, segments, target = (
                t.to(self.engine.device)
                for t in self._tc_batch(docs[start : start + batch], label_set)
            )
            logits = self.engine.model.tag_logits(ids, boxes, segments)
            loss = self.loss_fn(logits.reshape(-1, logits.shape[-1]), target.reshape(-1))
            (loss / self.cfg.grad_accumulation).backward()
            total += float(loss.detach())
            if (step + 1) % self.cfg.grad_accumulation == 0:
                self.optimizer.step()
                self.optimizer.zero_grad()
        self.optimizer.step()
        self.optimizer.zero_grad()
        return total

    def _tc_predict_spans(self, doc: TaggedDoc, label_set: list[str]) -> set[tuple[str, int, int]]:
        from .data import iob_tags
        from .protocol import ScoreRequest

        request = ScoreRequest("eval", "tc", doc.doc_id, 0, doc.words, doc.boxes,
                               [0] * len(doc.words), label_set=label_set)
        rows = self.engine.score_tc(request)
        tags = [iob_tags(label_set)[max(range(len(r)), key=lambda i: (r[i], -i))] for r in rows]
        spans: set[tuple[str, int, int]] = set()
        open_label, open_start = None, 0
        for i, tag in enumerate(tags + ["O"]):
            kind, label = (tag[0], tag[2:]) if tag != "O" else ("O", None)
            if open_label is not None and (kind == "O" or kind == "B" or label != open_label):
                spans.add((open_label, open_start, i - open_start))
                open_label = None
            if kind == "B" or (kind == "I" and open_label is None):
                open_label, open_start = label, i
        return spans

    def _tc_val_f1(self, docs: list[TaggedDoc], label_set: list[str]) -> float:
        tp = fp = fn = 0
        for doc in docs:
            truncated = _truncate_doc(doc, self._context_budget())
            gold = {(label, start, length) for label, start, length in truncated.spans}
            pred = self._tc_predict_spans(truncated, label_set)
            tp += len(gold & pred)
            fp += len(pred - gold)
            fn += len(gold - pred)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    # --- qa -------------------------------------------------------------------

    def _qa_batch(self, examples: list[QAExample]):
        encodings = []
        starts = []
        ends = []
        for ex in examples:
            enc = self.engine.encode(ex.words, ex.boxes, question=ex.question)
            if ex.answers:
                word_start, word_len = ex.answers[0]
                starts.append(enc.word_heads[word_start])
                ends.append(enc.word_heads[word_start + word_len - 1])
            else:
                starts.append(0)  # null slot
                ends.append(0)
            encodings.append(enc)
        ids, boxes, segments = _pad_batch(encodings)
        return ids, boxes, segments, torch.tensor(starts), torch.tensor(ends)

    def _qa_epoch(self, examples: list[QAExample]) -> float:
        self.engine.model.train()
        batch = self.cfg.resolved_batch_size
        total = 0.0
        self.optimizer.zero_grad()
        for step, start in enumerate(range(0, len(examples), batch)):
            ids, boxes, segments, t_start, t_end = (
                t.to(self.engine.device)
                for t in self._qa_batch(examples[start : start + batch])
            )
            s_logits, e_logits = self.engine.model.qa_logits(ids, boxes, segments)
            loss = self.loss_fn(s_logits, t_start) + self.loss_fn(e_logits, t_end)
            (loss / self.cfg.grad_accumulation).backward()
            total += float(loss.detach())
            if (step + 1) % self.cfg.grad_accumulation == 0:
                self.optimizer.step()
                self.optimizer.zero_grad()
        self.optimizer.step()
        self.optimizer.zero_grad()
        return total

    def _qa_best_span(self, ex: QAExample) -> tuple[int, int] | None:
        from .protocol import ScoreRequest

        request = ScoreRequest("eval", "qa", ex.doc_id, 0, ex.words, ex.boxes,
                               [0] * len(ex.words), question=ex.question, label=None)
        null_slot, starts, ends = self.engine.score_qa(request)
        best: tuple[float, int, int] | None = None
        for s in range(len(starts)):
            for e in range(s, min(s + self.cfg.max_answer_len, len(ends))):
                score = starts[s] + ends[e]
                if best is None or score > best[0]:
                    best = (score, s, e)
        if best is None or best[0] <= null_slot[0] + null_slot[1]:
            return None
        return best[1], best[2] - best[1] + 1

    def _qa_val_f1(self, examples: list[QAExample]) -> float:
        tp = fp = fn = 0
        for ex in examples:
            truncated = _truncate_example(ex, self._context_budget(ex.question))
            pred = self._qa_best_span(truncated)
            gold = set(truncated.answers)
            if pred is None:
                fn += len(gold)
            elif pred in gold:
                tp += 1
                fn += len(gold) - 1
            else:
                fp += 1
                fn += len(gold)
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        return 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    # --- loop -------------------------------------------------------------------

    def _context_budget(self, question: str = "") -> int:
        question_pieces = sum(
            len(self.engine.tokenizer.word_ids(w)) for w in question.split()
        )
        overhead = 2 + (1 if question else 0) + question_pieces
        # conservative: assume the longest realistic word costs 8 pieces
        return max(1, (self.cfg.max_len - overhead) // 8)

    def fit(self, train, validation, label_set: list[str] | None = None, control=None) -> list[float]:
        """Run up to ``epochs`` epochs; returns the per-epoch validation F1s."""
        lr = self.cfg.lr
        best = 0.0
        stale = 0
        history: list[float] = []
        for epoch in range(1, self.cfg.epochs + 1):
            if control is not None and control.stopped:
                self.log(f"epoch {epoch}: stopped by schedule control")
                break
            if control is not None:
                lr = control.lr
            self._set_lr(lr)
            if self.cfg.mode == "tc":
                loss = self._tc_epoch(train, label_set or [])
                val_f1 = self._tc_val_f1(validation, label_set or [])
            else:
                loss = self._qa_epoch(train)
                val_f1 = self._qa_val_f1(validation)
            history.append(val_f1)
            self.log(f"epoch {epoch}: val_f1 {val_f1:.4f} loss {loss:.4f} lr {lr:.2e}")
            if control is None:
                if val_f1 > best:
                    best = val_f1
                    stale = 0
                else:
                    stale += 1
                    if stale >= self.cfg.patience:
                        lr /= 2
                        stale = 0
                        if lr < self.cfg.lr_floor:
                            self.log(f"epoch {epoch}: lr {lr:.2e} below floor, stopping")
                            break
        return history


def finetune(
    dataset_path: str,
    cfg: TrainConfig,
    save_path: str | None = None,
    log=print,
    control: Engine | None = None,
) -> list[float]:
    torch.manual_seed(cfg.seed)
    budget = max(1, (cfg.max_len - 16) // 8)
    if cfg.mode == "tc":
        label_set, splits = load_canonical(dataset_path)
        train = [_truncate_doc(d, budget) for d in splits.get("train", [])]
        validation = splits.get("validation") or splits.get("test") or train
        n_tags = 2 * len(label_set) + 1
        engine = control if control is not None else Engine(
            ScoringModel(ModelConfig(max_len=cfg.max_len, n_tags=n_tags, seed=cfg.seed)), label_set, cfg.device
        )
        trainer = Trainer(engine, cfg, log=log)
        history = trainer.fit(train, validation, label_set, control=control)
    else:
        root = Path(dataset_path)
        train = [_truncate_example(e, budget) for e in load_squad(root / "train.json")]
        val_file = root / "validation.json"
        validation = load_squad(val_file) if val_file.exists() else train
        engine = control if control is not None else Engine(
            ScoringModel(ModelConfig(max_len=cfg.max_len, seed=cfg.seed)), device=cfg.device
        )
        trainer = Trainer(engine, cfg, log=log)
        history = trainer.fit(train, validation, control=control)
    if save_path:
        from .model import save_model

        save_model(engine.model, save_path)
        log(f"saved checkpoint to {save_path}")
    return history
