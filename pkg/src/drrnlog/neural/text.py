from __future__ import annotations

import re

from ..hashrep import str_hash

PAD = "<pad>"
UNK = "<unk>"

_TOKEN = re.compile(r"[a-z0-9]+")


def words(text: str) -> list[str]:
    """Lower-cased word tokens; punctuation and whitespace both separate."""
    return _TOKEN.findall(text.lower())


class Vocab:
    """Token to index map.  Index 0 is padding, index 1 is the unknown token."""

    def __init__(self, tokens=()):
        self.itos = [PAD, UNK]
        self.stoi = {PAD: 0, UNK: 1}
        for tok in tokens:
            self.add(tok)

    @classmethod
    def from_corpus(cls, texts) -> "Vocab":
        found = set()
        for t in texts:
            found.update(words(t))
        return cls(sorted(found))

    def add(self, tok: str) -> int:
        if tok not in self.stoi:
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)
        return self.stoi[tok]

    def __len__(self):
        return len(self.itos)

    def __eq__(self, other):
        return isinstance(other, Vocab) and self.itos == other.itos

    @property
    def pad_index(self) -> int:
        return 0

    @property
    def unk_index(self) -> int:
        return 1

    def fingerprint(self) -> int:
        return str_hash("\n".join(self.itos))


def tokenize(text: str, vocab: Vocab) -> list[int]:
    return [vocab.stoi.get(w, 1) for w in words(text)]
