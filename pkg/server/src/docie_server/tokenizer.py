"""Self-contained sub-word tokenizer: no vocab files, fully deterministic.

Words are cut into fixed-width pieces and each piece is hashed into a bucket
of the embedding table.  That keeps the server runnable offline with a
randomly initialized model while preserving the property the wire protocol
cares about: a stable word -> sub-token mapping whose first piece represents
the word when pooling logits back to word level.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

PAD_ID = 0
CLS_ID = 1
SEP_ID = 2
N_SPECIAL = 3

PIECE_WIDTH = 4


@dataclass(frozen=True)
class Encoding:
    ids: list[int]
    # index of the first sub-token of every word, in word order
    word_heads: list[int]


class HashTokenizer:
    def __init__(self, vocab_size: int = 1024):
        if vocab_size <= N_SPECIAL:
            raise ValueError("vocab_size must exceed the special token count")
        self.vocab_size = vocab_size

    def piece_id(self, piece: str) -> int:
        digest = hashlib.sha1(piece.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:4], "big") % (self.vocab_size - N_SPECIAL)
        return N_SPECIAL + bucket

    def word_ids(self, word: str) -> list[int]:
        pieces = [word[i : i + PIECE_WIDTH] for i in range(0, len(word), PIECE_WIDTH)] or [""]
        return [self.piece_id(p) for p in pieces]

    def encode_words(self, words: list[str]) -> Encoding:
        ids: list[int] = []
        heads: list[int] = []
        for word in words:
            heads.append(len(ids))
            ids.extend(self.word_ids(word))
        return Encoding(ids, heads)
