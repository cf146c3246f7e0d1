"""Byte-level BPE token counting with a pluggable vocabulary registry.

Token counts drive sentence-filter budgets, output allocation, and cost
accounting, so they must be deterministic and offline. The package ships
a frozen merge table (data/vocab_default.txt) trained on a mixed corpus
of materials-science prose, unit spellings, and JSON payloads; see
tools/train_bpe_vocab.py for the trainer. Additional vocabularies can be
registered per model in data/models.json.

The pre-tokenizer splits on whitespace and punctuation before any
merges run, so joining whole sentences with whitespace never merges
symbols across the seam: counting filtered text stays consistent with
counting its sentences.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

from .errors import UnknownModel

log = logging.getLogger(__name__)

# Letters, digits, other-symbol runs (underscore included), then
# whitespace; a single leading space sticks to the following piece, and
# trailing space runs before a non-space leave the last space for it.
_PRETOKEN_RE = re.compile(r" ?[^\W\d_]+| ?\d+| ?(?:[^\w\s]|_)+|\s+(?!\S)|\s+")

_INF = float("inf")


def _bytes_to_unicode() -> dict[int, str]:
    """Reversible byte -> printable-unicode map used by the merge table."""
    keep = (
        list(range(ord("!"), ord("~") + 1))
        + list(range(ord("¡"), ord("¬") + 1))
        + list(range(ord("®"), ord("ÿ") + 1))
    )
    mapped = keep[:]
    bump = 0
    for b in range(256):
        if b not in keep:
            keep.append(b)
            mapped.append(256 + bump)
            bump += 1
    return {b: chr(c) for b, c in zip(keep, mapped)}


_BYTE_MAP = _bytes_to_unicode()


def pretokenize(text: str) -> list[str]:
    return _PRETOKEN_RE.findall(text)


def piece_to_symbols(piece: str) -> tuple[str, ...]:
    """UTF-8 bytes of a piece, each mapped to its printable stand-in."""
    return tuple(_BYTE_MAP[b] for b in piece.encode("utf-8"))


class Tokenizer:
    """BPE over byte symbols with a fixed merge-rank table."""

    def __init__(self, name: str, merges: list[tuple[str, str]]):
        self.name = name
        self.ranks = {pair: rank for rank, pair in enumerate(merges)}
        self._encode_piece = lru_cache(maxsize=65536)(self._encode_piece_uncached)

    def _encode_piece_uncached(self, piece: str) -> tuple[str, ...]:
        word = piece_to_symbols(piece)
        while len(word) > 1:
            pairs = set(zip(word, word[1:]))
            best = min(pairs, key=lambda p: self.ranks.get(p, _INF))
            if best not in self.ranks:
                break
            merged: list[str] = []
            i = 0
            while i < len(word):
                if i + 1 < len(word) and (word[i], word[i + 1]) == best:
                    merged.append(word[i] + word[i + 1])
                    i += 2
                else:
                    merged.append(word[i])
                    i += 1
            word = tuple(merged)
        return word

    def encode(self, text: str) -> list[str]:
        tokens: list[str] = []
        for piece in pretokenize(text):
            tokens.extend(self._encode_piece(piece))
        return tokens

    def count(self, text: str) -> int:
        return sum(len(self._encode_piece(piece)) for piece in pretokenize(text))


def parse_vocab_file(text: str) -> tuple[str, list[tuple[str, str]]]:
    """Read a merge table: comment header then one 'left right' pair per line."""
    name = "unnamed"
    merges: list[tuple[str, str]] = []
    for line in text.splitlines():
        if not line.strip():
            continue
        if line.startswith("#"):
            if line.startswith("#name:"):
                name = line.split(":", 1)[1].strip()
            continue
        left, _, right = line.partition(" ")
        if not right:
            raise ValueError(f"malformed merge line: {line!r}")
        merges.append((left, right))
    return name, merges


@dataclass(frozen=True)
class ModelInfo:
    name: str
    context_limit: int
    vocabulary: str


class Registry:
    """Model metadata plus lazily-loaded tokenizers, from data/models.json."""

    def __init__(self, config: dict):
        self.default_vocabulary: str = config["default_vocabulary"]
        self._vocab_files: dict[str, str] = dict(config["vocabularies"])
        self.models: dict[str, ModelInfo] = {}
        for name, spec in config.get("models", {}).items():
            self.models[name] = ModelInfo(
                name=name,
                context_limit=int(spec["context_limit"]),
                vocabulary=spec.get("vocabulary", self.default_vocabulary),
            )
        self._tokenizers: dict[str, Tokenizer] = {}
        self._warned: set[str] = set()

    def model_info(self, model: str) -> ModelInfo:
        try:
            return self.models[model]
        except KeyError:
            raise UnknownModel(f"model {model!r} not in registry") from None

    def tokenizer_for(self, model: str | None) -> Tokenizer:
        if model is None:
            vocab = self.default_vocabulary
        elif model in self.models:
            vocab = self.models[model].vocabulary
        else:
            if model not in self._warned:
                log.warning(
                    "model %r not in registry; using default vocabulary %r",
                    model,
                    self.default_vocabulary,
                )
                self._warned.add(model)
            vocab = self.default_vocabulary
        return self._load_vocab(vocab)

    def _load_vocab(self, vocab: str) -> Tokenizer:
        if vocab not in self._tokenizers:
            try:
                filename = self._vocab_files[vocab]
            except KeyError:
                raise UnknownModel(f"vocabulary {vocab!r} not registered") from None
            text = resources.files("thermoharvest").joinpath(f"data/{filename}").read_text(
                encoding="utf-8"
            )
            _, merges = parse_vocab_file(text)
            self._tokenizers[vocab] = Tokenizer(vocab, merges)
        return self._tokenizers[vocab]


_registry: Registry | None = None


def load_registry() -> Registry:
    global _registry
    if _registry is None:
        text = resources.files("thermoharvest").joinpath("data/models.json").read_text(
            encoding="utf-8"
        )
        _registry = Registry(json.loads(text))
    return _registry


def count_tokens(text: str, model: str | None = None) -> int:
    """Token count of `text` under the vocabulary registered for `model`.

    Unknown models fall back to the default vocabulary with a warning;
    None selects the default directly.
    """
    return load_registry().tokenizer_for(model).count(text)
