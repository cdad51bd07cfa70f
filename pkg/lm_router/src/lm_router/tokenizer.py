"""Character-level tokenizer.

Prompts and targets are short ASCII-ish strings, and the targets are single
digits, so characters are a complete and dependency-free vocabulary. Ids 0,
1 and 2 are pad, end-of-sequence and unknown.
"""

from __future__ import annotations

import json
import string
from pathlib import Path

PAD_ID = 0
EOS_ID = 1
UNK_ID = 2

DEFAULT_ALPHABET = string.printable


class CharTokenizer:
    def __init__(self, alphabet: str = DEFAULT_ALPHABET):
        self.alphabet = alphabet
        self._char_to_id = {ch: i + 3 for i, ch in enumerate(alphabet)}
        self._id_to_char = {i: ch for ch, i in self._char_to_id.items()}

    @property
    def vocab_size(self) -> int:
        return len(self.alphabet) + 3

    def encode(self, text: str, add_eos: bool = True) -> list[int]:
        ids = [self._char_to_id.get(ch, UNK_ID) for ch in text]
        if add_eos:
            ids.append(EOS_ID)
        return ids

    def decode(self, ids: list[int]) -> str:
        chars = []
        for token_id in ids:
            if token_id == EOS_ID:
                break
            if token_id in (PAD_ID, UNK_ID):
                continue
            chars.append(self._id_to_char.get(token_id, ""))
        return "".join(chars)

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps({"alphabet": self.alphabet}), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "CharTokenizer":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(alphabet=payload["alphabet"])
