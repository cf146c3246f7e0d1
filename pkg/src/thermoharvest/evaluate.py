"""Benchmarking: numeric matching, P/R/F1 aggregation, structural matcher.

Numeric predictions match gold values under a relative-value tolerance
combined with a temperature gate:

    |g - p| / max(|g|, |p|, 1e-6) <= value_tol   (default 0.01)
    |t_p - t_g| <= temp_tol                      (default 1 K)

and the temperature gate is waived when either side has no temperature.
Matching is one-to-one. Candidates are tried in prediction order,
preferring smaller relative difference and then closer temperature, and
an augmenting-path step reassigns earlier predictions when that grows
the matching, so the reported TP count is the maximum achievable.

Structural labels go through a synonym ontology, then an optional
embedding similarity fallback, then an optional trained classifier.
Doping classification is rule-based over a dopant dictionary where
every entry cites a chemical rationale.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .diagnostics import DiagnosticLog
from .records import (
    PROPERTIES,
    StructureRecord,
    canonical_doping_label,
    canonical_property,
    material_key,
)

VALUE_TOLERANCE = 0.01
TEMPERATURE_TOLERANCE_K = 1.0
_VALUE_FLOOR = 1e-6


def relative_difference(gold: float, pred: float) -> float:
    return abs(gold - pred) / max(abs(gold), abs(pred), _VALUE_FLOOR)


def within_value_tolerance(gold: float, pred: float, tol: float = VALUE_TOLERANCE) -> bool:
    return relative_difference(gold, pred) <= tol


def temperatures_compatible(
    t_pred: float | None, t_gold: float | None, tol: float = TEMPERATURE_TOLERANCE_K
) -> bool:
    """Temperature gate; waived when either side lacks a temperature."""
    if t_pred is None or t_gold is None:
        return True
    return abs(t_pred - t_gold) <= tol


def _temperature_distance(t_pred: float | None, t_gold: float | None) -> float:
    if t_pred is None or t_gold is None:
        return math.inf
    return abs(t_pred - t_gold)


@dataclass(frozen=True)
class MatchResult:
    tp: int
    fp: int
    fn: int
    assignment: tuple[tuple[int, int], ...]  # (prediction index, gold index)


def match_numeric(
    predictions,
    gold,
    value_tol: float = VALUE_TOLERANCE,
    temp_tol: float = TEMPERATURE_TOLERANCE_K,
) -> MatchResult:
    """One-to-one matching of (value, temperature) points.

    Deterministic: predictions are processed in order, each preferring
    the gold point with the smallest relative difference (temperature
    distance, then gold index, break ties). When a preferred gold point
    is taken, the previous owner is shifted to its next preference if
    possible, so no valid match is left on the table.
    """
    preds = [(float(v), t if t is None else float(t)) for v, t in predictions]
    golds = [(float(v), t if t is None else float(t)) for v, t in gold]

    adjacency: list[list[int]] = []
    for pv, pt in preds:
        candidates = []
        for j, (gv, gt) in enumerate(golds):
            if not within_value_tolerance(gv, pv, value_tol):
                continue
            if not temperatures_compatible(pt, gt, temp_tol):
                continue
            candidates.append((relative_difference(gv, pv), _temperature_distance(pt, gt), j))
        candidates.sort()
        adjacency.append([j for _, _, j in candidates])

    owner: dict[int, int] = {}

    def assign(i: int, blocked: set[int]) -> bool:
        for j in adjacency[i]:
            if j in blocked:
                continue
            blocked.add(j)
            if j not in owner or assign(owner[j], blocked):
                owner[j] = i
                return True
        return False

    for i in range(len(preds)):
        assign(i, set())

    assignment = tuple(sorted((i, j) for j, i in owner.items()))
    tp = len(assignment)
    return MatchResult(tp=tp, fp=len(preds) - tp, fn=len(golds) - tp, assignment=assignment)


@dataclass(frozen=True)
class Scores:
    precision: float
    recall: float
    f1: float
    empty: bool = False


def score(tp: int, fp: int, fn: int) -> Scores:
    """P/R/F1 with 0/0 defined as 0; fully empty cells carry a flag."""
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Scores(precision=precision, recall=recall, f1=f1, empty=tp + fp + fn == 0)


def aggregate_counts(per_field: dict[str, tuple[int, int, int]]) -> Scores:
    """Micro aggregation: sum counts across fields, then score once."""
    tp = sum(c[0] for c in per_field.values())
    fp = sum(c[1] for c in per_field.values())
    fn = sum(c[2] for c in per_field.values())
    return score(tp, fp, fn)


def macro_scores(per_field: dict[str, Scores]) -> Scores:
    """Macro aggregation: unweighted mean of per-field P, R, F1."""
    if not per_field:
        return Scores(0.0, 0.0, 0.0, empty=True)
    values = list(per_field.values())
    n = len(values)
    return Scores(
        precision=sum(s.precision for s in values) / n,
        recall=sum(s.recall for s in values) / n,
        f1=sum(s.f1 for s in values) / n,
        empty=all(s.empty for s in values),
    )


def aggregate(per_field_counts: dict[str, tuple[int, int, int]], mode: str) -> Scores:
    if mode == "micro":
        return aggregate_counts(per_field_counts)
    if mode == "macro":
        return macro_scores({k: score(*c) for k, c in per_field_counts.items()})
    raise ValueError(f"unknown aggregation mode: {mode!r}")


# ---------------------------------------------------------------------------
# Ontology-based label normalization

_NOISE_WORDS = {"structure", "type", "phase", "lattice", "symmetry"}


def canonical_label_key(raw: str) -> str:
    """Lowercased, dash/underscore-free form with trailing noise words cut."""
    text = str(raw).strip().lower()
    text = re.sub(r"[‐-―−]", "-", text)
    text = text.replace("-", " ").replace("_", " ").replace("/", " ")
    text = re.sub(r"[().,;:]", " ", text)
    words = text.split()
    while words and words[-1] in _NOISE_WORDS:
        words.pop()
    return " ".join(words)


class CharNgramEmbedder:
    """Deterministic character n-gram embedding for label similarity.

    Hash-bucketed trigram counts, L2-normalized. No external model, no
    randomness: md5 keys the buckets.
    """

    def __init__(self, n: int = 3, dim: int = 256):
        self.n = n
        self.dim = dim

    def __call__(self, text: str) -> list[float]:
        padded = f" {canonical_label_key(text)} "
        vec = [0.0] * self.dim
        for i in range(max(len(padded) - self.n + 1, 0)):
            gram = padded[i : i + self.n]
            bucket = int.from_bytes(
                hashlib.md5(gram.encode("utf-8")).digest()[:4], "big"
            ) % self.dim
            vec[bucket] += 1.0
        norm = math.sqrt(sum(v * v for v in vec))
        if norm:
            vec = [v / norm for v in vec]
        return vec


def cosine(a: list[float], b: list[float]) -> float:
    return sum(x * y for x, y in zip(a, b))


@dataclass
class Ontology:
    version: str
    similarity_threshold: float
    fields: dict[str, dict[str, list[str]]]  # field -> class -> synonyms
    _index: dict[str, dict[str, str]] = field(default_factory=dict, repr=False)

    def __post_init__(self) -> None:
        for fname, classes in self.fields.items():
            index: dict[str, str] = {}
            for cls, synonyms in classes.items():
                for spelling in [cls, *synonyms]:
                    key = canonical_label_key(spelling)
                    index.setdefault(key, cls)
                    index.setdefault(key.replace(" ", ""), cls)
            self._index[fname] = index

    def lookup(self, field_name: str, raw: str) -> str | None:
        index = self._index.get(field_name)
        if index is None:
            return None
        key = canonical_label_key(raw)
        return index.get(key) or index.get(key.replace(" ", ""))

    def prototypes(self, field_name: str) -> dict[str, list[str]]:
        return self.fields.get(field_name, {})


def load_ontology(path: str | Path | None = None) -> Ontology:
    if path is None:
        text = resources.files("thermoharvest").joinpath("data/ontology.json").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    payload = json.loads(text)
    return Ontology(
        version=str(payload.get("version", "0")),
        similarity_threshold=float(payload.get("similarity_threshold", 0.75)),
        fields={
            fname: {cls: list(syns) for cls, syns in spec["classes"].items()}
            for fname, spec in payload["fields"].items()
        },
    )


@dataclass(frozen=True)
class NormalizedLabel:
    label: str | None
    method: str | None  # synonym | embedding | classifier | None
    confidence: float | None = None


def normalize_label(
    field_name: str,
    raw: str,
    ontology: Ontology,
    embedder=None,
    classifier=None,
    classifier_margin: float = 0.85,
) -> NormalizedLabel:
    """Synonym lookup first; embeddings and classifier only as fallbacks.

    Synonym-only operation (embedder=None, classifier=None) is the
    supported baseline; the fallbacks refine coverage but never override
    an exact synonym hit.
    """
    hit = ontology.lookup(field_name, raw)
    if hit is not None:
        return NormalizedLabel(label=hit, method="synonym", confidence=1.0)

    embedded: NormalizedLabel | None = None
    if embedder is not None:
        query = embedder(raw)
        best_cls, best_sim = None, 0.0
        for cls, synonyms in sorted(ontology.prototypes(field_name).items()):
            for spelling in [cls, *synonyms]:
                sim = cosine(query, embedder(spelling))
                if sim > best_sim:
                    best_cls, best_sim = cls, sim
        if best_cls is not None and best_sim >= ontology.similarity_threshold:
            embedded = NormalizedLabel(label=best_cls, method="embedding", confidence=best_sim)

    if classifier is not None:
        predicted = classifier.predict(field_name, raw)
        if predicted is not None and predicted[1] >= classifier_margin:
            return NormalizedLabel(
                label=predicted[0], method="classifier", confidence=predicted[1]
            )

    if embedded is not None:
        return embedded
    return NormalizedLabel(label=None, method=None)


class SynonymClassifier:
    """Optional logistic-regression fallback trained on ontology synonyms.

    Requires scikit-learn; construction raises ImportError without it.
    Character n-gram features make it robust to spelling variation the
    synonym table misses.
    """

    def __init__(self, ontology: Ontology):
        from sklearn.feature_extraction.text import HashingVectorizer
        from sklearn.linear_model import LogisticRegression

        self._models: dict[str, tuple] = {}
        for fname, classes in ontology.fields.items():
            texts, labels = [], []
            for cls, synonyms in sorted(classes.items()):
                for spelling in [cls, *synonyms]:
                    texts.append(canonical_label_key(spelling))
                    labels.append(cls)
            if len(set(labels)) < 2:
                continue
            vectorizer = HashingVectorizer(
                analyzer="char_wb", ngram_range=(2, 4), n_features=2**12,
                alternate_sign=False,
            )
            model = LogisticRegression(max_iter=1000)
            model.fit(vectorizer.transform(texts), labels)
            self._models[fname] = (vectorizer, model)

    def predict(self, field_name: str, raw: str) -> tuple[str, float] | None:
        pair = self._models.get(field_name)
        if pair is None:
            return None
        vectorizer, model = pair
        probabilities = model.predict_proba(vectorizer.transform([canonical_label_key(raw)]))[0]
        best = int(probabilities.argmax())
        return (model.classes_[best], float(probabilities[best]))


# ---------------------------------------------------------------------------
# Dopant dictionary and doping classification

ELEMENTS = frozenset(
    "H He Li Be B C N O F Ne Na Mg Al Si P S Cl Ar K Ca Sc Ti V Cr Mn Fe Co Ni "
    "Cu Zn Ga Ge As Se Br Kr Rb Sr Y Zr Nb Mo Tc Ru Rh Pd Ag Cd In Sn Sb Te I "
    "Xe Cs Ba La Ce Pr Nd Pm Sm Eu Gd Tb Dy Ho Er Tm Yb Lu Hf Ta W Re Os Ir Pt "
    "Au Hg Tl Pb Bi Po At Rn Fr Ra Ac Th Pa U Np Pu Am Cm Bk Cf Es Fm Md No Lr "
    "Rf Db Sg Bh Hs Mt Ds Rg Cn Nh Fl Mc Lv Ts Og".split()
)

DOPANT_ROLES = ("donor", "acceptor", "neutral")


@dataclass
class DopantDictionary:
    version: str
    entries: dict[str, dict]

    def role_of(self, species: str, host: str | None = None) -> str | None:
        entry = self.entries.get(_canonical_element(species) or species)
        if entry is None:
            return None
        if host:
            for host_pattern, role in entry.get("hosts", {}).items():
                if host_pattern.lower() in host.lower():
                    return role
        return entry["role"]


def _canonical_element(token: str) -> str | None:
    token = token.strip()
    for candidate in (token.capitalize(), token.upper(), token):
        if candidate in ELEMENTS:
            return candidate
    return None


def load_dopants(path: str | Path | None = None) -> DopantDictionary:
    if path is None:
        text = resources.files("thermoharvest").joinpath("data/dopants.json").read_text(
            encoding="utf-8"
        )
    else:
        text = Path(path).read_text(encoding="utf-8")
    payload = json.loads(text)
    entries = payload["entries"]
    for species, entry in entries.items():
        if _canonical_element(species) is None:
            raise ValueError(f"dopant dictionary species {species!r} is not an element")
        if entry.get("role") not in DOPANT_ROLES:
            raise ValueError(f"dopant {species!r} has invalid role {entry.get('role')!r}")
        if not str(entry.get("rationale", "")).strip():
            raise ValueError(f"dopant {species!r} is missing its rationale")
        for host_role in entry.get("hosts", {}).values():
            if host_role not in DOPANT_ROLES:
                raise ValueError(f"dopant {species!r} has invalid host role {host_role!r}")
    return DopantDictionary(version=str(payload.get("version", "0")), entries=entries)


_ELEMENT_LIST_RE = r"[A-Z][a-z]?(?:\s*(?:,|and|&|\+)\s*[A-Z][a-z]?)*"
_DOPED_PREFIX_RE = re.compile(rf"({_ELEMENT_LIST_RE})\s*[-–\s]?\s*(?:co[- ]?)?doped")
_DOPED_WITH_RE = re.compile(
    rf"(?:co[- ]?)?dop(?:ed|ing)\s+(?:with|by)\s+({_ELEMENT_LIST_RE})"
)
_EXPLICIT_LABEL_RE = re.compile(r"(?i)\b([pn])[\s-]?type\b")


def extract_dopant_species(text: str) -> list[str]:
    """Element symbols named as dopants in a free-text description."""
    species: list[str] = []
    for pattern in (_DOPED_PREFIX_RE, _DOPED_WITH_RE):
        for match in pattern.finditer(text):
            for token in re.split(r"\s*(?:,|and|&|\+)\s*", match.group(1)):
                element = _canonical_element(token)
                if element and element not in species:
                    species.append(element)
    return species


def classify_doping(
    subject,
    dictionary: DopantDictionary,
    host: str | None = None,
    diagnostics: DiagnosticLog | None = None,
    doi: str = "",
) -> str:
    """Doping class (p, n, undoped, mixed, unknown) for a record or text.

    Explicit labels win. Otherwise dopant roles decide: donors give n,
    acceptors give p, both give mixed ("compensated" in the articles),
    only isovalent/neutral species (or none at all) give undoped, and
    any species the dictionary does not know yields unknown.
    """
    label: str | None = None
    dopants: list[str] = []
    if isinstance(subject, StructureRecord):
        label = canonical_doping_label(subject.doping_type)
        dopants = [s for s in subject.dopants]
    elif isinstance(subject, str):
        label = canonical_doping_label(subject)
        if label is None:
            explicit = _EXPLICIT_LABEL_RE.search(subject)
            if explicit:
                label = explicit.group(1).lower()
        if label is None:
            dopants = extract_dopant_species(subject)
    elif subject is None:
        label = None
    else:
        raise TypeError(f"cannot classify {type(subject).__name__}")

    if label is not None:
        return label

    roles: set[str] = set()
    for species in dopants:
        role = dictionary.role_of(species, host=host)
        if role is None:
            if diagnostics is not None:
                diagnostics.add(
                    doi, "doping", "warning",
                    f"unknown dopant species {species!r}; class set to unknown",
                )
            return "unknown"
        roles.add(role)
    roles.discard("neutral")
    if not roles:
        return "undoped"
    if roles == {"donor"}:
        return "n"
    if roles == {"acceptor"}:
        return "p"
    return "mixed"


def doping_labels_equivalent(a: str | None, b: str | None) -> bool:
    """Relaxed comparison: "p" and "p-type" are the same class."""
    return canonical_doping_label(a) == canonical_doping_label(b) != None  # noqa: E711


# ---------------------------------------------------------------------------
# Benchmark runner

_STRUCTURE_BENCH_FIELDS = (
    "compound_type",
    "crystal_structure",
    "lattice_structure",
    "space_group",
    "doping_type",
    "processing_method",
)

_ONTOLOGY_FIELDS = ("compound_type", "crystal_structure", "lattice_structure")


@dataclass
class MatchReport:
    value_tolerance: float
    temperature_tolerance_k: float
    per_property: dict[str, dict]
    te_micro: dict
    te_macro: dict
    per_field: dict[str, dict]
    struct_micro: dict
    struct_macro: dict
    n_pred_records: int
    n_gold_records: int
    schema_errors: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "value_tolerance": self.value_tolerance,
            "temperature_tolerance_k": self.temperature_tolerance_k,
            "te": {"per_property": self.per_property, "micro": self.te_micro,
                   "macro": self.te_macro},
            "structural": {"per_field": self.per_field, "micro": self.struct_micro,
                           "macro": self.struct_macro},
            "n_pred_records": self.n_pred_records,
            "n_gold_records": self.n_gold_records,
            "schema_errors": self.schema_errors,
            "notes": self.notes,
        }

    def render_text(self) -> str:
        lines = []
        lines.append("Thermoelectric properties (tolerance-based numeric matching)")
        lines.append(
            f"  value tolerance {self.value_tolerance:.3g}, "
            f"temperature tolerance {self.temperature_tolerance_k:.3g} K"
        )
        header = f"  {'property':<26}{'TP':>5}{'FP':>5}{'FN':>5}{'P':>8}{'R':>8}{'F1':>8}"
        lines.append(header)
        for prop, cell in self.per_property.items():
            lines.append(
                f"  {prop:<26}{cell['tp']:>5}{cell['fp']:>5}{cell['fn']:>5}"
                f"{cell['precision']:>8.3f}{cell['recall']:>8.3f}{cell['f1']:>8.3f}"
            )
        lines.append(
            f"  {'micro':<26}{'':>15}{self.te_micro['precision']:>8.3f}"
            f"{self.te_micro['recall']:>8.3f}{self.te_micro['f1']:>8.3f}"
        )
        lines.append(
            f"  {'macro':<26}{'':>15}{self.te_macro['precision']:>8.3f}"
            f"{self.te_macro['recall']:>8.3f}{self.te_macro['f1']:>8.3f}"
        )
        lines.append("")
        lines.append("Structural fields")
        lines.append(header)
        for fname, cell in self.per_field.items():
            lines.append(
                f"  {fname:<26}{cell['tp']:>5}{cell['fp']:>5}{cell['fn']:>5}"
                f"{cell['precision']:>8.3f}{cell['recall']:>8.3f}{cell['f1']:>8.3f}"
            )
        lines.append(
            f"  {'micro':<26}{'':>15}{self.struct_micro['precision']:>8.3f}"
            f"{self.struct_micro['recall']:>8.3f}{self.struct_micro['f1']:>8.3f}"
        )
        lines.append(
            f"  {'macro':<26}{'':>15}{self.struct_macro['precision']:>8.3f}"
            f"{self.struct_macro['recall']:>8.3f}{self.struct_macro['f1']:>8.3f}"
        )
        if self.schema_errors:
            lines.append("")
            lines.append(f"Schema errors ({len(self.schema_errors)}):")
            lines.extend(f"  {e}" for e in self.schema_errors)
        if self.notes:
            lines.append("")
            lines.append("Notes:")
            lines.extend(f"  {n}" for n in self.notes)
        return "\n".join(lines) + "\n"


def _scores_dict(tp: int, fp: int, fn: int) -> dict:
    s = score(tp, fp, fn)
    return {
        "tp": tp, "fp": fp, "fn": fn,
        "precision": s.precision, "recall": s.recall, "f1": s.f1, "empty": s.empty,
    }


def _load_bench_records(path: str | Path, side: str, errors: list[str]):
    numeric: dict[tuple, list[tuple[float, float | None]]] = {}
    categorical: dict[tuple, str] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                errors.append(f"{side}:{lineno}: invalid JSON ({exc.msg})")
                continue
            doi = rec.get("doi")
            material = rec.get("material")
            if not doi or not material:
                errors.append(f"{side}:{lineno}: missing doi or material")
                continue
            if "property" in rec:
                prop = canonical_property(rec["property"])
                if prop is None:
                    errors.append(
                        f"{side}:{lineno}: unknown property {rec['property']!r}"
                    )
                    continue
                try:
                    value = float(rec["value"])
                except (KeyError, TypeError, ValueError):
                    errors.append(f"{side}:{lineno}: missing or non-numeric value")
                    continue
                temperature = rec.get("temperature_k")
                if temperature is not None:
                    try:
                        temperature = float(temperature)
                    except (TypeError, ValueError):
                        errors.append(f"{side}:{lineno}: non-numeric temperature_k")
                        continue
                key = (doi, material_key(material), prop)
                numeric.setdefault(key, []).append((value, temperature))
            elif "field" in rec:
                fname = rec["field"]
                if fname not in _STRUCTURE_BENCH_FIELDS:
                    errors.append(f"{side}:{lineno}: unknown field {fname!r}")
                    continue
                label = rec.get("label")
                if label is None or not str(label).strip():
                    errors.append(f"{side}:{lineno}: missing label")
                    continue
                key = (doi, material_key(material), fname)
                if key in categorical:
                    errors.append(
                        f"{side}:{lineno}: duplicate label for {key}; first kept"
                    )
                    continue
                categorical[key] = str(label)
            else:
                errors.append(f"{side}:{lineno}: neither numeric nor categorical")
    return numeric, categorical


def _normalize_for_field(
    fname: str,
    raw: str,
    ontology: Ontology,
    dopants: DopantDictionary,
    embedder,
    classifier,
) -> str:
    if fname == "doping_type":
        return classify_doping(raw, dopants)
    if fname in _ONTOLOGY_FIELDS:
        normalized = normalize_label(fname, raw, ontology, embedder=embedder,
                                     classifier=classifier)
        if normalized.label is not None:
            return normalized.label
        return "?" + canonical_label_key(raw)
    # free-form fields: canonical string comparison only
    return canonical_label_key(raw).replace(" ", "")


def benchmark_run(
    pred_path: str | Path,
    gold_path: str | Path,
    ontology: Ontology | None = None,
    dopants: DopantDictionary | None = None,
    value_tol: float = VALUE_TOLERANCE,
    temp_tol: float = TEMPERATURE_TOLERANCE_K,
    embedder=None,
    classifier=None,
) -> MatchReport:
    """Score a prediction JSONL file against a gold JSONL file.

    Records carry either numeric measurements (doi, material, property,
    value, optional temperature_k) or categorical labels (doi, material,
    field, label). Matching never crosses (doi, material) boundaries.
    Malformed records are reported, not silently skipped.
    """
    ontology = ontology or load_ontology()
    dopants = dopants or load_dopants()
    errors: list[str] = []
    pred_numeric, pred_cat = _load_bench_records(pred_path, "pred", errors)
    gold_numeric, gold_cat = _load_bench_records(gold_path, "gold", errors)

    property_counts: dict[str, list[int]] = {p: [0, 0, 0] for p in PROPERTIES}
    for key in sorted(set(pred_numeric) | set(gold_numeric)):
        prop = key[2]
        result = match_numeric(
            pred_numeric.get(key, []), gold_numeric.get(key, []),
            value_tol=value_tol, temp_tol=temp_tol,
        )
        property_counts[prop][0] += result.tp
        property_counts[prop][1] += result.fp
        property_counts[prop][2] += result.fn

    per_property = {
        p: _scores_dict(*property_counts[p])
        for p in PROPERTIES
        if sum(property_counts[p]) > 0
    }
    te_counts = {p: tuple(c) for p, c in property_counts.items() if sum(c) > 0}
    te_micro = _scores_dict(
        sum(c[0] for c in te_counts.values()),
        sum(c[1] for c in te_counts.values()),
        sum(c[2] for c in te_counts.values()),
    )
    te_macro_scores = macro_scores({p: score(*c) for p, c in te_counts.items()})
    te_macro = {
        "precision": te_macro_scores.precision,
        "recall": te_macro_scores.recall,
        "f1": te_macro_scores.f1,
        "empty": te_macro_scores.empty,
    }

    field_counts: dict[str, list[int]] = {f: [0, 0, 0] for f in _STRUCTURE_BENCH_FIELDS}
    for key in sorted(set(pred_cat) | set(gold_cat)):
        fname = key[2]
        pred_label = pred_cat.get(key)
        gold_label = gold_cat.get(key)
        if pred_label is None:
            field_counts[fname][2] += 1
            continue
        if gold_label is None:
            field_counts[fname][1] += 1
            continue
        if fname == "doping_type" and doping_labels_equivalent(pred_label, gold_label):
            field_counts[fname][0] += 1
            continue
        pred_norm = _normalize_for_field(fname, pred_label, ontology, dopants,
                                         embedder, classifier)
        gold_norm = _normalize_for_field(fname, gold_label, ontology, dopants,
                                         embedder, classifier)
        if pred_norm == gold_norm:
            field_counts[fname][0] += 1
        else:
            field_counts[fname][1] += 1
            field_counts[fname][2] += 1

    struct_counts = {f: tuple(c) for f, c in field_counts.items() if sum(c) > 0}
    per_field = {f: _scores_dict(*c) for f, c in struct_counts.items()}
    struct_micro = _scores_dict(
        sum(c[0] for c in struct_counts.values()),
        sum(c[1] for c in struct_counts.values()),
        sum(c[2] for c in struct_counts.values()),
    )
    struct_macro_scores = macro_scores({f: score(*c) for f, c in struct_counts.items()})
    struct_macro = {
        "precision": struct_macro_scores.precision,
        "recall": struct_macro_scores.recall,
        "f1": struct_macro_scores.f1,
        "empty": struct_macro_scores.empty,
    }

    n_pred = sum(len(v) for v in pred_numeric.values()) + len(pred_cat)
    n_gold = sum(len(v) for v in gold_numeric.values()) + len(gold_cat)
    return MatchReport(
        value_tolerance=value_tol,
        temperature_tolerance_k=temp_tol,
        per_property=per_property,
        te_micro=te_micro,
        te_macro=te_macro,
        per_field=per_field,
        struct_micro=struct_micro,
        struct_macro=struct_macro,
        n_pred_records=n_pred,
        n_gold_records=n_gold,
        schema_errors=errors,
    )
