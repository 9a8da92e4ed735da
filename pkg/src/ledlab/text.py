"""Tokenisation, vocabulary, dialog encoding variants and BLEU."""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError

PAD, UNK, SOM, EOM = 0, 1, 2, 3
RESERVED = ("<pad>", "<unk>", "<som>", "<eom>")

_TOKEN_RE = re.compile(r"'\w+|\w+|[^\w\s]")

VARIANTS = ("full", "first_half", "second_half", "observer_only", "locator_only", "shuffled")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace and detach punctuation.

    >>> tokenize("I'm in a kitchen.")
    ['i', "'m", 'in', 'a', 'kitchen', '.']
    """
    return _TOKEN_RE.findall(text.lower())


class Vocabulary:
    def __init__(self, tokens=()):
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for t in tokens:
            self.add(t)

    def add(self, token: str) -> int:
        if token not in self.stoi:
            self.stoi[token] = len(self.itos)
            self.itos.append(token)
        return self.stoi[token]

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def encode(self, tokens) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids) -> list[str]:
        return [self.itos[i] for i in ids]

    @classmethod
    def build(cls, texts, min_freq: int = 1) -> "Vocabulary":
        """Vocabulary over ``texts`` in order of first appearance."""
        counts: Counter = Counter()
        order: list[str] = []
        for text in texts:
            for t in tokenize(text):
                if t not in counts:
                    order.append(t)
                counts[t] += 1
        return cls(t for t in order if counts[t] >= min_freq and t not in RESERVED)

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.itos[len(RESERVED):]))

    @classmethod
    def load(cls, path) -> "Vocabulary":
        return cls(line for line in Path(path).read_text().splitlines() if line)


@dataclass
class TokenSeq:
    ids: list[int]
    spans: list[tuple[str, int, int]]  # (role, start, end) per message, end exclusive

    def __len__(self) -> int:
        return len(self.ids)


def _rounds(dialog) -> list[list]:
    """Group messages into Locator-Observer rounds (a trailing lone message forms its own round)."""
    rounds, cur = [], []
    for m in dialog:
        if m.role == "Locator" and cur:
            rounds.append(cur)
            cur = []
        cur.append(m)
    if cur:
        rounds.append(cur)
    return rounds


def select_messages(dialog, variant: str = "full", seed: int | None = None) -> list:
    """Messages kept by a dialog ablation, in the order they will be encoded."""
    if variant not in VARIANTS:
        raise ConfigError(f"unknown dialog variant {variant!r}; expected one of {VARIANTS}")
    rounds = _rounds(dialog)
    half = math.ceil(len(rounds) / 2)
    if variant == "first_half":
        rounds = rounds[:half]
    elif variant == "second_half":
        rounds = rounds[half:]
    elif variant == "shuffled":
        perm = np.random.default_rng(seed).permutation(len(rounds))
        rounds = [rounds[i] for i in perm]
    msgs = [m for r in rounds for m in r]
    if variant == "observer_only":
        msgs = [m for m in msgs if m.role == "Observer"]
    elif variant == "locator_only":
        msgs = [m for m in msgs if m.role == "Locator"]
    return msgs


def encode_dialog(dialog, vocab: Vocabulary, variant: str = "full", seed: int | None = None) -> TokenSeq:
    """Concatenate the selected messages, each wrapped in SOM ... EOM.

    When an ablation removes every message the result is a lone SOM EOM pair.
    """
    msgs = select_messages(dialog, variant, seed)
    ids: list[int] = []
    spans = []
    for m in msgs:
        start = len(ids)
        ids += [SOM, *vocab.encode(tokenize(m.text)), EOM]
        spans.append((m.role, start, len(ids)))
    if not ids:
        ids = [SOM, EOM]
        spans = [("", 0, 2)]
    return TokenSeq(ids, spans)


# compass words exchanged when a map is turned by 180 degrees
ROTATION_SWAPS = {"north": "south", "south": "north", "east": "west", "west": "east"}


def rotate_compass(seq: TokenSeq, vocab: Vocabulary) -> TokenSeq:
    """Token sequence describing the same scene on a map rotated by 180 degrees."""
    table = {vocab.stoi[a]: vocab.stoi[b] for a, b in ROTATION_SWAPS.items() if a in vocab and b in vocab}
    if not table:
        return seq
    return TokenSeq([table.get(i, i) for i in seq.ids], list(seq.spans))


def dialog_tokens(dialog) -> list[str]:
    return [t for m in dialog for t in tokenize(m.text)]


def _ngrams(tokens, n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def bleu(candidate, reference, max_n: int = 4) -> float:
    """Sentence BLEU with add-one smoothing for n >= 2 and the usual brevity penalty."""
    if not reference:
        raise ValueError("bleu needs a non-empty reference")
    if not candidate:
        return 0.0
    log_p = 0.0
    for n in range(1, max_n + 1):
        cand, ref = _ngrams(candidate, n), _ngrams(reference, n)
        matched = sum(min(c, ref[g]) for g, c in cand.items())
        total = sum(cand.values())
        if n > 1:
            matched, total = matched + 1, total + 1
        if matched == 0:
            return 0.0
        log_p += math.log(matched / total) / max_n
    c, r = len(candidate), len(reference)
    bp = 1.0 if c > r else math.exp(1.0 - r / c)
    return math.exp(log_p) * bp
