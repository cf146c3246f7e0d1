"""Corpus discovery and document parsing.

Corpora are laid out as corpus/<publisher>/<doi-slug>.{xml,html} where
the slug is the DOI with "/" replaced by "_". Since DOI prefixes never
contain underscores, only the first underscore is mapped back.

Parsing is adapter-based: an Elsevier-flavoured adapter (ce: tags), a
JATS-flavoured adapter (sec / table-wrap), and a generic HTML adapter.
All three normalize into the same ParsedArticle shape. Tag matching is
namespace-insensitive because publisher feeds disagree on prefixes.
"""

from __future__ import annotations

import html.parser
import logging
import re
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from pathlib import Path

from .diagnostics import DiagnosticLog
from .errors import CorpusError, ParseError

log = logging.getLogger(__name__)

DOCUMENT_FORMATS = {".xml": "xml", ".html": "html", ".htm": "html"}


def doi_to_slug(doi: str) -> str:
    return doi.replace("/", "_")


def slug_to_doi(slug: str) -> str:
    return slug.replace("_", "/", 1)


@dataclass(frozen=True)
class RawDocument:
    doi: str
    publisher: str
    path: Path
    format: str


@dataclass
class Section:
    title: str
    paragraphs: list[str] = field(default_factory=list)


@dataclass
class TableBlock:
    table_id: str
    caption: str
    headers: list[str]
    rows: list[list[str]]
    flags: tuple[str, ...] = ()

    @property
    def n_rows(self) -> int:
        return len(self.rows)


@dataclass
class ParsedArticle:
    doi: str
    title: str
    sections: list[Section] = field(default_factory=list)
    tables: list[TableBlock] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)


def discover(corpus_dir: str | Path, diagnostics: DiagnosticLog | None = None) -> list[RawDocument]:
    """Walk the corpus tree in sorted order; first occurrence of a DOI wins."""
    root = Path(corpus_dir)
    if not root.is_dir():
        raise CorpusError(f"corpus directory not found: {root}")
    seen: dict[str, RawDocument] = {}
    documents: list[RawDocument] = []
    for pub_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        for path in sorted(pub_dir.iterdir()):
            fmt = DOCUMENT_FORMATS.get(path.suffix.lower())
            if fmt is None:
                continue
            doi = slug_to_doi(path.stem)
            if doi in seen:
                if diagnostics is not None:
                    diagnostics.add(
                        doi,
                        "discover",
                        "warning",
                        f"duplicate document for doi at {path}; keeping {seen[doi].path}",
                    )
                continue
            doc = RawDocument(doi=doi, publisher=pub_dir.name, path=path, format=fmt)
            seen[doi] = doc
            documents.append(doc)
    if not documents:
        raise CorpusError(f"no .xml or .html documents under {root}")
    return documents


def _read_text(raw: RawDocument, diagnostics: DiagnosticLog | None) -> str:
    data = raw.path.read_bytes()
    try:
        return data.decode("utf-8")
    except UnicodeDecodeError:
        text = data.decode("utf-8", errors="replace")
        if diagnostics is not None:
            diagnostics.add(
                raw.doi,
                "parse",
                "warning",
                f"{text.count(chr(0xFFFD))} undecodable byte(s) replaced",
            )
        return text


def _collapse(text: str) -> str:
    return " ".join(text.split())


def _local(tag) -> str:
    """Tag name without namespace URI or prefix."""
    if not isinstance(tag, str):
        return ""
    return tag.rsplit("}", 1)[-1].rsplit(":", 1)[-1].lower()


def _itertext(elem: ET.Element) -> str:
    return _collapse("".join(elem.itertext()))


def _find_local(elem: ET.Element, *names: str) -> ET.Element | None:
    wanted = set(names)
    for child in elem.iter():
        if _local(child.tag) in wanted:
            return child
    return None


def parse_document(
    raw: RawDocument, diagnostics: DiagnosticLog | None = None
) -> ParsedArticle:
    """Parse one raw document into the common article shape.

    The in-document DOI wins over the filename slug when both exist;
    a mismatch is recorded as a diagnostic.
    """
    text = _read_text(raw, diagnostics)
    if raw.format == "xml":
        article = _parse_xml(raw, text, diagnostics)
    else:
        article = _parse_html(raw, text, diagnostics)
    if not article.doi:
        article.doi = raw.doi
    elif article.doi != raw.doi and diagnostics is not None:
        diagnostics.add(
            article.doi,
            "parse",
            "warning",
            f"document doi {article.doi!r} differs from filename slug doi {raw.doi!r}",
        )
    article.metadata.setdefault("publisher", raw.publisher)
    article.metadata.setdefault("format", raw.format)
    return article


# ---------------------------------------------------------------------------
# XML adapters (JATS-flavoured and Elsevier ce:-flavoured)

_SECTION_TAGS = {"sec", "section"}
_TITLE_TAGS = {"title", "section-title", "article-title"}
_PARA_TAGS = {"p", "para", "simple-para"}
_TABLE_WRAP_TAGS = {"table-wrap", "table"}


def _parse_xml(raw: RawDocument, text: str, diagnostics: DiagnosticLog | None) -> ParsedArticle:
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise ParseError(f"{raw.path}: {exc}") from exc

    doi = ""
    for elem in root.iter():
        name = _local(elem.tag)
        if name == "doi" and elem.text:
            doi = elem.text.strip()
            break
        if (
            name == "article-id"
            and elem.get("pub-id-type") == "doi"
            and elem.text
        ):
            doi = elem.text.strip()
            break

    title_elem = _find_local(root, "article-title")
    if title_elem is None:
        title_elem = _find_local(root, "title")
    title = _itertext(title_elem) if title_elem is not None else ""

    article = ParsedArticle(doi=doi, title=title)

    abstract = _find_local(root, "abstract")
    if abstract is not None:
        paragraphs = [
            _itertext(p) for p in abstract.iter() if _local(p.tag) in _PARA_TAGS
        ]
        paragraphs = [p for p in paragraphs if p]
        if not paragraphs:
            joined = _itertext(abstract)
            paragraphs = [joined] if joined else []
        article.sections.append(Section(title="Abstract", paragraphs=paragraphs))

    fig_captions: list[str] = []
    for elem in root.iter():
        name = _local(elem.tag)
        if name in _SECTION_TAGS:
            section = Section(title="")
            for child in list(elem):
                child_name = _local(child.tag)
                if child_name in _TITLE_TAGS and not section.title:
                    section.title = _itertext(child)
                elif child_name in _PARA_TAGS:
                    para = _collapse("".join(_text_skipping_tables(child)))
                    if para:
                        section.paragraphs.append(para)
            if section.title or section.paragraphs:
                article.sections.append(section)
        elif name in ("fig", "figure"):
            cap = _find_local(elem, "caption")
            if cap is not None:
                fig_captions.append(_itertext(cap))

    n = 0
    for elem in root.iter():
        if _local(elem.tag) not in _TABLE_WRAP_TAGS:
            continue
        if _local(elem.tag) == "table" and _wrapped_in(elem, root):
            continue
        n += 1
        block = _xml_table(
            elem, default_id=f"table-{n}", diagnostics=diagnostics, doi=doi or raw.doi
        )
        if block is not None:
            article.tables.append(block)

    if fig_captions:
        article.metadata["figure_captions"] = fig_captions
    return article


def _wrapped_in(table_elem: ET.Element, root: ET.Element) -> bool:
    # A <table> inside a <table-wrap> is handled by the wrap pass.
    for wrap in root.iter():
        if _local(wrap.tag) == "table-wrap":
            for sub in wrap.iter():
                if sub is table_elem:
                    return True
    return False


def _text_skipping_tables(elem: ET.Element):
    # Paragraph text must not swallow embedded table cells; the table
    # itself is still picked up by the table pass.
    if _local(elem.tag) in ("table", "table-wrap"):
        return
    if elem.text:
        yield elem.text
    for child in list(elem):
        yield from _text_skipping_tables(child)
        if child.tail:
            yield child.tail


def _xml_table(
    elem: ET.Element, default_id: str, diagnostics: DiagnosticLog | None, doi: str
) -> TableBlock | None:
    table_id = elem.get("id") or default_id
    caption_elem = _find_local(elem, "caption")
    caption = _itertext(caption_elem) if caption_elem is not None else ""

    header: list[str] = []
    rows: list[list[str]] = []
    for tr in (e for e in elem.iter() if _local(e.tag) == "tr"):
        cells = [
            _itertext(c) for c in tr if _local(c.tag) in ("td", "th")
        ]
        is_header = any(_local(c.tag) == "th" for c in tr) or _in_thead(tr, elem)
        if is_header and not header:
            header = cells
        else:
            rows.append(cells)

    flags: list[str] = []
    width = len(header) if header else max((len(r) for r in rows), default=0)
    for i, row in enumerate(rows):
        if len(row) != width:
            flags.append("ragged")
            if diagnostics is not None:
                diagnostics.add(
                    doi,
                    "parse",
                    "warning",
                    f"{table_id}: row {i} has {len(row)} cells, expected {width}; padded",
                )
            rows[i] = (row + [""] * width)[:width]
    if not header and not rows:
        return None
    return TableBlock(
        table_id=table_id,
        caption=caption,
        headers=header,
        rows=rows,
        flags=tuple(sorted(set(flags))),
    )


def _in_thead(tr: ET.Element, table: ET.Element) -> bool:
    for thead in (e for e in table.iter() if _local(e.tag) == "thead"):
        for sub in thead.iter():
            if sub is tr:
                return True
    return False


# ---------------------------------------------------------------------------
# HTML adapter

_HTML_VOID = {"br", "hr", "img", "meta", "link", "input", "area", "base", "col", "wbr"}


class _Node:
    __slots__ = ("tag", "attrs", "children", "text")

    def __init__(self, tag: str, attrs: dict):
        self.tag = tag
        self.attrs = attrs
        self.children: list["_Node"] = []
        self.text: list[str] = []

    def itertext(self):
        for chunk in self.text:
            yield chunk
        for child in self.children:
            yield from child.itertext()

    def iter(self, *tags: str):
        if not tags or self.tag in tags:
            yield self
        for child in self.children:
            yield from child.iter(*tags)

    def full_text(self) -> str:
        parts: list[str] = []
        self._collect(parts)
        return _collapse(" ".join(parts))

    def _collect(self, parts: list[str]) -> None:
        parts.extend(self.text)
        for child in self.children:
            child._collect(parts)


class _TreeBuilder(html.parser.HTMLParser):
    def __init__(self) -> None:
        super().__init__(convert_charrefs=True)
        self.root = _Node("document", {})
        self.stack = [self.root]

    def handle_starttag(self, tag, attrs):
        if tag in _HTML_VOID:
            node = _Node(tag, dict(attrs))
            self.stack[-1].children.append(node)
            return
        node = _Node(tag, dict(attrs))
        self.stack[-1].children.append(node)
        self.stack.append(node)

    def handle_endtag(self, tag):
        for i in range(len(self.stack) - 1, 0, -1):
            if self.stack[i].tag == tag:
                del self.stack[i:]
                return

    def handle_data(self, data):
        if data.strip():
            self.stack[-1].text.append(data)


_HEADING_RE = re.compile(r"^h[1-6]$")


def _parse_html(raw: RawDocument, text: str, diagnostics: DiagnosticLog | None) -> ParsedArticle:
    builder = _TreeBuilder()
    builder.feed(text)
    root = builder.root

    doi = ""
    for meta in root.iter("meta"):
        if meta.attrs.get("name", "").lower() in ("citation_doi", "dc.identifier"):
            doi = meta.attrs.get("content", "").strip()
            break

    title = ""
    for node in root.iter("title"):
        title = node.full_text()
        break
    if not title:
        for node in root.iter("h1"):
            title = node.full_text()
            break

    article = ParsedArticle(doi=doi, title=title)

    body = next(root.iter("body"), root)
    current = Section(title="")
    fig_captions: list[str] = []

    def flush():
        if current.title or current.paragraphs:
            article.sections.append(current)

    for node in _walk_html(body):
        if _HEADING_RE.match(node.tag):
            flush()
            current = Section(title=node.full_text())
        elif node.tag == "p":
            para = node.full_text()
            if para:
                current.paragraphs.append(para)
        elif node.tag == "figcaption":
            cap = node.full_text()
            if cap:
                fig_captions.append(cap)
    flush()

    n = 0
    for table in body.iter("table"):
        n += 1
        block = _html_table(table, f"table-{n}", diagnostics, doi or raw.doi)
        if block is not None:
            article.tables.append(block)
    if fig_captions:
        article.metadata["figure_captions"] = fig_captions
    return article


def _walk_html(node: _Node):
    """Depth-first, but tables and figures are opaque to the text walk."""
    for child in node.children:
        if child.tag in ("table", "figure"):
            if child.tag == "figure":
                for cap in child.iter("figcaption"):
                    yield cap
            continue
        yield child
        yield from _walk_html(child)


def _html_table(
    table: _Node, default_id: str, diagnostics: DiagnosticLog | None, doi: str
) -> TableBlock | None:
    table_id = table.attrs.get("id") or default_id
    caption = ""
    for cap in table.iter("caption"):
        caption = cap.full_text()
        break

    header: list[str] = []
    rows: list[list[str]] = []
    for tr in table.iter("tr"):
        cells = [c.full_text() for c in tr.children if c.tag in ("td", "th")]
        if not cells:
            continue
        if not header and any(c.tag == "th" for c in tr.children):
            header = cells
        else:
            rows.append(cells)

    flags: list[str] = []
    width = len(header) if header else max((len(r) for r in rows), default=0)
    for i, row in enumerate(rows):
        if len(row) != width:
            flags.append("ragged")
            if diagnostics is not None:
                diagnostics.add(
                    doi,
                    "parse",
                    "warning",
                    f"{table_id}: row {i} has {len(row)} cells, expected {width}; padded",
                )
            rows[i] = (row + [""] * width)[:width]
    if not header and not rows:
        return None
    return TableBlock(
        table_id=table_id,
        caption=caption,
        headers=header,
        rows=rows,
        flags=tuple(sorted(set(flags))),
    )
