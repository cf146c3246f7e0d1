"""Section stripping, sentence segmentation, and pattern-based filtering.

Full articles are far larger than what the finder agent needs, so the
pipeline keeps only sentences that match at least one pattern from the
configured categories (material type, TE property, structural, method).
Retained sentences are joined with newlines; the segmenter treats
newlines as hard boundaries, which makes filtering idempotent: running
the filter on its own output returns the same sentences, categories,
and token count.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .bpe import count_tokens
from .corpus_ingest import ParsedArticle
from .errors import PatternError

DEFAULT_DROP_SECTIONS = (
    "references",
    "bibliography",
    "acknowledgements",
    "acknowledgments",
    "author contributions",
    "conflict of interest",
    "conflicts of interest",
    "competing interests",
    "declaration of competing interest",
    "funding",
    "supplementary",
    "supporting information",
    "data availability",
)

# Tokens that end with a period without ending a sentence.
_ABBREVIATIONS = {
    "fig", "figs", "eq", "eqs", "ref", "refs", "et", "al", "e.g", "i.e",
    "vs", "cf", "ca", "approx", "dr", "prof", "no", "inc", "ltd", "etc",
    "sec", "vol", "ch", "pp", "resp",
}

_BOUNDARY_RE = re.compile(r"[.!?]+[)\]\"”’']*\s+")
_TRAILING_WORD_RE = re.compile(r"([A-Za-z][A-Za-z.]*)$")


@dataclass(frozen=True)
class PatternSet:
    version: str
    categories: dict[str, list[re.Pattern]]
    checksum: str

    def category_names(self) -> tuple[str, ...]:
        return tuple(self.categories)

    def without(self, category: str) -> "PatternSet":
        remaining = {k: v for k, v in self.categories.items() if k != category}
        return PatternSet(version=self.version, categories=remaining, checksum=self.checksum)


def load_patterns(path: str | Path | None = None) -> PatternSet:
    """Load and compile a pattern set; any bad regex fails the whole load."""
    if path is None:
        text = resources.files("thermoharvest").joinpath("data/patterns.json").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PatternError(f"pattern file is not valid JSON: {exc}") from exc
    if "categories" not in payload or not isinstance(payload["categories"], dict):
        raise PatternError("pattern file must contain a 'categories' object")
    categories: dict[str, list[re.Pattern]] = {}
    for name, patterns in payload["categories"].items():
        compiled = []
        for raw in patterns:
            try:
                compiled.append(re.compile(raw))
            except re.error as exc:
                raise PatternError(f"bad pattern in {name!r}: {raw!r} ({exc})") from exc
        categories[name] = compiled
    checksum = hashlib.sha256(
        json.dumps(payload, sort_keys=True).encode("utf-8")
    ).hexdigest()[:16]
    return PatternSet(
        version=str(payload.get("version", "0")), categories=categories, checksum=checksum
    )


def strip_sections(
    article: ParsedArticle,
    drop_titles: tuple[str, ...] = DEFAULT_DROP_SECTIONS,
    include_figure_captions: bool = False,
) -> list[str]:
    """Paragraphs that survive boilerplate-section removal, in order."""
    dropped = tuple(t.lower() for t in drop_titles)
    paragraphs: list[str] = []
    for section in article.sections:
        title = _normalize_title(section.title)
        if any(title == d or title.startswith(d) for d in dropped):
            continue
        paragraphs.extend(section.paragraphs)
    if include_figure_captions:
        paragraphs.extend(article.metadata.get("figure_captions", ()))
    return paragraphs


def _normalize_title(title: str) -> str:
    return re.sub(r"^[\d.\s:]+", "", title.strip().lower())


def segment_sentences(text: str) -> list[str]:
    """Split on sentence boundaries; newlines always terminate a sentence.

    A period ends a sentence only when followed by whitespace and an
    uppercase letter, digit, or opening quote/paren, and only when the
    preceding word is not a known abbreviation or single initial.
    """
    sentences: list[str] = []
    for line in text.split("\n"):
        line = line.strip()
        if not line:
            continue
        start = 0
        for match in _BOUNDARY_RE.finditer(line):
            end = match.end()
            if end >= len(line):
                break
            nxt = line[end]
            if not (nxt.isupper() or nxt.isdigit() or nxt in "\"'(“"):
                continue
            before = line[: match.start()]
            word = _TRAILING_WORD_RE.search(before)
            if word:
                token = word.group(1).rstrip(".").lower()
                if token in _ABBREVIATIONS:
                    continue
                if len(token) == 1 and word.group(1)[0].isupper():
                    # Personal initials ("J. Smith") do not end sentences,
                    # but a single capital after a number is a unit
                    # ("700 K.") and does.
                    prefix = before[: word.start(1)].rstrip()
                    if not (prefix and prefix[-1].isdigit()):
                        continue
            candidate = line[start : match.end()].strip()
            if candidate:
                sentences.append(candidate)
            start = match.end()
        tail = line[start:].strip()
        if tail:
            sentences.append(tail)
    return sentences


@dataclass(frozen=True)
class FilteredSentence:
    text: str
    categories: tuple[str, ...]


@dataclass
class FilteredText:
    doi: str
    sentences: list[FilteredSentence] = field(default_factory=list)
    token_count: int = 0
    total_sentences: int = 0
    pattern_version: str = ""
    pattern_checksum: str = ""

    @property
    def sentence_count(self) -> int:
        return len(self.sentences)

    @property
    def dropped_count(self) -> int:
        return self.total_sentences - len(self.sentences)

    def text(self) -> str:
        return "\n".join(s.text for s in self.sentences)

    def category_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for sentence in self.sentences:
            for cat in sentence.categories:
                counts[cat] = counts.get(cat, 0) + 1
        return counts


def filter_sentences(
    article: ParsedArticle | str,
    patterns: PatternSet,
    doi: str = "",
    include_figure_captions: bool = False,
    drop_titles: tuple[str, ...] = DEFAULT_DROP_SECTIONS,
    model: str | None = None,
) -> FilteredText:
    """Keep sentences matching at least one pattern from any category.

    Accepts a parsed article (sections are stripped first) or plain
    text. The reported token count is for the newline-joined retained
    sentences, which is exactly the string later embedded in prompts.
    """
    if isinstance(article, ParsedArticle):
        paragraphs = strip_sections(
            article, drop_titles=drop_titles, include_figure_captions=include_figure_captions
        )
        doi = doi or article.doi
    else:
        paragraphs = [article]

    kept: list[FilteredSentence] = []
    total = 0
    for paragraph in paragraphs:
        for sentence in segment_sentences(paragraph):
            total += 1
            matched = tuple(
                sorted(
                    name
                    for name, pats in patterns.categories.items()
                    if any(p.search(sentence) for p in pats)
                )
            )
            if matched:
                kept.append(FilteredSentence(text=sentence, categories=matched))

    joined = "\n".join(s.text for s in kept)
    return FilteredText(
        doi=doi,
        sentences=kept,
        token_count=count_tokens(joined, model=model) if kept else 0,
        total_sentences=total,
        pattern_version=patterns.version,
        pattern_checksum=patterns.checksum,
    )


def truncate_filtered(filtered: FilteredText, max_tokens: int, model: str | None = None) -> FilteredText:
    """Drop trailing sentences until the joined text fits max_tokens."""
    kept = list(filtered.sentences)
    while kept:
        joined = "\n".join(s.text for s in kept)
        tokens = count_tokens(joined, model=model)
        if tokens <= max_tokens:
            return FilteredText(
                doi=filtered.doi,
                sentences=kept,
                token_count=tokens,
                total_sentences=filtered.total_sentences,
                pattern_version=filtered.pattern_version,
                pattern_checksum=filtered.pattern_checksum,
            )
        kept.pop()
    return FilteredText(
        doi=filtered.doi,
        sentences=[],
        token_count=0,
        total_sentences=filtered.total_sentences,
        pattern_version=filtered.pattern_version,
        pattern_checksum=filtered.pattern_checksum,
    )
