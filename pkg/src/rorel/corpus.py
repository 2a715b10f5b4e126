"""Documents, typed entity mentions, relation matrices, JSONL IO and a
synthetic corpus generator with controllable relation-dependency structure.

A document's annotation is a single M x M matrix of relation labels over its
M entity mentions; the reserved label ``NO_RELATION`` fills every cell that no
annotation claims. Entities are mention-level: each mention is its own row and
column.
"""

from __future__ import annotations

import io
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

NO_RELATION = "NO_RELATION"


class SchemaError(ValueError):
    """The type schema itself is inconsistent."""


class CorpusFormatError(ValueError):
    """A corpus file cannot be parsed or fails structural validation."""


class SchemaViolationError(CorpusFormatError):
    """A document's annotations contradict the schema's type constraints."""


class InfeasibleConfigError(ValueError):
    """A synthesis config asks for more structure than the schema permits."""


@dataclass(frozen=True)
class RelationType:
    name: str
    symmetric: bool
    arg0_types: frozenset[str]
    arg1_types: frozenset[str]


@dataclass(frozen=True)
class TypeSchema:
    """Entity types, relation types and per-argument valid-type sets."""

    entity_types: tuple[str, ...]
    relations: tuple[RelationType, ...]

    def __post_init__(self):
        if len(set(self.entity_types)) != len(self.entity_types):
            raise SchemaError("duplicate entity type names")
        for et in self.entity_types:
            if not et:
                raise SchemaError("empty entity type name")
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise SchemaError("duplicate relation type names")
        etypes = set(self.entity_types)
        for r in self.relations:
            if r.name == NO_RELATION:
                raise SchemaError(f"{NO_RELATION} is reserved and cannot be a relation type")
            if not r.arg0_types or not r.arg1_types:
                raise SchemaError(f"{r.name}: valid-type sets must be nonempty")
            if not r.arg0_types <= etypes or not r.arg1_types <= etypes:
                raise SchemaError(f"{r.name}: valid types must be declared entity types")
            if r.symmetric and r.arg0_types != r.arg1_types:
                raise SchemaError(f"{r.name}: symmetric relations need equal arg type sets")

    def relation(self, name: str) -> RelationType:
        for r in self.relations:
            if r.name == name:
                return r
        raise SchemaError(f"unknown relation type {name!r}")

    def valid_args(self, name: str, arg_pos: int) -> frozenset[str]:
        r = self.relation(name)
        if arg_pos == 0:
            return r.arg0_types
        if arg_pos == 1:
            return r.arg1_types
        raise SchemaError(f"arg_pos must be 0 or 1, got {arg_pos}")

    @property
    def relation_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.relations)


@dataclass(frozen=True)
class Entity:
    """A mention: half-open token span [start, end) with an entity type."""

    id: int
    start: int
    end: int
    etype: str


class RelationMatrix:
    """M x M grid of relation labels; unannotated cells hold NO_RELATION."""

    def __init__(self, m: int, cells: list[list[str]] | None = None):
        self.m = m
        if cells is None:
            cells = [[NO_RELATION] * m for _ in range(m)]
        if len(cells) != m or any(len(row) != m for row in cells):
            raise ValueError(f"relation matrix must be {m}x{m}")
        self.cells = cells

    def get(self, i: int, j: int) -> str:
        return self.cells[i][j]

    def set(self, i: int, j: int, label: str) -> None:
        self.cells[i][j] = label

    def positive_cells(self) -> Iterable[tuple[int, int, str]]:
        for i in range(self.m):
            for j in range(self.m):
                if self.cells[i][j] != NO_RELATION:
                    yield i, j, self.cells[i][j]

    def count(self, label: str) -> int:
        return sum(1 for _, _, lab in self.positive_cells() if lab == label)

    def copy(self) -> "RelationMatrix":
        return RelationMatrix(self.m, [row[:] for row in self.cells])

    def __eq__(self, other) -> bool:
        return isinstance(other, RelationMatrix) and self.cells == other.cells

    def __repr__(self) -> str:
        return f"RelationMatrix(m={self.m}, positives={sum(1 for _ in self.positive_cells())})"


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple[str, ...]
    entities: tuple[Entity, ...]
    gold: RelationMatrix

    @property
    def m(self) -> int:
        return len(self.entities)


@dataclass(frozen=True)
class Corpus:
    schema: TypeSchema
    documents: tuple[Document, ...]
    load_warnings: int = 0

    def __len__(self) -> int:
        return len(self.documents)


# ---------------------------------------------------------------------------
# schema JSON

def load_schema(path) -> TypeSchema:
    with open(path, "r", encoding="utf-8") as fh:
        raw = json.load(fh)
    return schema_from_dict(raw)


def schema_from_dict(raw: dict) -> TypeSchema:
    try:
        relations = tuple(
            RelationType(
                name=r["name"],
                symmetric=bool(r["symmetric"]),
                arg0_types=frozenset(r["arg0_types"]),
                arg1_types=frozenset(r["arg1_types"]),
            )
            for r in raw["relations"]
        )
        return TypeSchema(entity_types=tuple(raw["entity_types"]), relations=relations)
    except KeyError as exc:
        raise SchemaError(f"schema JSON missing field {exc}") from exc


def schema_to_dict(schema: TypeSchema) -> dict:
    return {
        "entity_types": list(schema.entity_types),
        "relations": [
            {
                "name": r.name,
                "symmetric": r.symmetric,
                "arg0_types": sorted(r.arg0_types),
                "arg1_types": sorted(r.arg1_types),
            }
            for r in schema.relations
        ],
    }


def save_schema(schema: TypeSchema, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(schema_to_dict(schema), fh, indent=2)
        fh.write("\n")


def ace05_schema() -> TypeSchema:
    """The six-relation / seven-entity-type schema used throughout the docs.

    Only Per-Soc is flagged symmetric: the incompatibility-rule and
    invalid-combination counts quoted in the analysis docs assume exactly one
    collapsed role pair. (Phys is arguably symmetric too; flip the flag to
    explore that variant.)
    """
    fac_loc_gpe_org = frozenset({"FAC", "LOC", "GPE", "ORG"})
    return TypeSchema(
        entity_types=("PER", "FAC", "LOC", "GPE", "ORG", "VEH", "WEA"),
        relations=(
            RelationType("Per-Soc", True, frozenset({"PER"}), frozenset({"PER"})),
            RelationType("Part-Whole", False, fac_loc_gpe_org, fac_loc_gpe_org),
            RelationType("Phys", False,
                         frozenset({"PER", "FAC", "LOC", "GPE"}),
                         frozenset({"PER", "FAC", "LOC", "GPE"})),
            RelationType("Org-Aff", False,
                         frozenset({"PER", "ORG", "GPE"}), frozenset({"ORG", "GPE"})),
            RelationType("Art", False,
                         frozenset({"PER", "ORG", "GPE"}), frozenset({"FAC"})),
            RelationType("Gen-Aff", False,
                         frozenset({"PER"}), frozenset({"PER", "LOC", "GPE", "ORG"})),
        ),
    )


# ---------------------------------------------------------------------------
# corpus JSONL

def relation_pairs(doc: "Document | int", include_diagonal: bool = False) -> list[tuple[int, int]]:
    """All ordered entity index pairs: M^2 with the diagonal, M(M-1) without."""
    m = doc if isinstance(doc, int) else doc.m
    return [(i, j) for i in range(m) for j in range(m) if include_diagonal or i != j]


def validate_document(doc: Document, schema: TypeSchema) -> list[str]:
    """Return one message per type-constraint violation (empty when clean)."""
    problems = []
    for i, j, label in doc.gold.positive_cells():
        rel = schema.relation(label)
        e_i, e_j = doc.entities[i], doc.entities[j]
        if e_i.etype not in rel.arg0_types:
            problems.append(
                f"{doc.doc_id}: entity {i} ({e_i.etype}) invalid as arg0 of {label}"
            )
        if e_j.etype not in rel.arg1_types:
            problems.append(
                f"{doc.doc_id}: entity {j} ({e_j.etype}) invalid as arg1 of {label}"
            )
    return problems


def _parse_document(raw: dict, schema: TypeSchema, lineno: int) -> Document:
    def fail(msg: str):
        raise CorpusFormatError(f"line {lineno}: {msg}")

    for key in ("doc_id", "tokens", "entities", "relations"):
        if key not in raw:
            fail(f"missing field {key!r}")
    tokens = tuple(str(t) for t in raw["tokens"])
    entities = []
    etypes = set(schema.entity_types)
    for pos, e in enumerate(raw["entities"]):
        if e["id"] != pos:
            fail(f"entity ids must be 0..M-1 in order, got id={e['id']} at position {pos}")
        if e["type"] not in etypes:
            fail(f"unknown entity type {e['type']!r}")
        if not 0 <= e["start"] < e["end"] <= len(tokens):
            fail(f"entity {pos} span [{e['start']}, {e['end']}) outside 0..{len(tokens)}")
        entities.append(Entity(id=pos, start=e["start"], end=e["end"], etype=e["type"]))
    m = len(entities)
    gold = RelationMatrix(m)
    known = set(schema.relation_names)
    for r in raw["relations"]:
        a0, a1, rtype = r["arg0"], r["arg1"], r["type"]
        if rtype not in known:
            fail(f"unknown relation type {rtype!r}")
        if not (0 <= a0 < m and 0 <= a1 < m):
            fail(f"relation argument index out of range: ({a0}, {a1}) with M={m}")
        if gold.get(a0, a1) != NO_RELATION:
            fail(f"duplicate relation annotation for entity pair ({a0}, {a1})")
        gold.set(a0, a1, rtype)
    return Document(doc_id=str(raw["doc_id"]), tokens=tokens,
                    entities=tuple(entities), gold=gold)


def load_corpus(path, schema: TypeSchema, strict: bool = True) -> Corpus:
    """Parse a JSONL corpus. ``strict`` rejects documents whose annotations
    violate the schema's type constraints; lax mode loads them and counts
    warnings on the returned corpus."""
    documents = []
    warnings = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"line {lineno}: malformed JSON ({exc.msg})") from exc
            doc = _parse_document(raw, schema, lineno)
            problems = validate_document(doc, schema)
            if problems:
                if strict:
                    raise SchemaViolationError(f"line {lineno}: " + "; ".join(problems))
                warnings += len(problems)
                log.warning("line %d: %d type-constraint violation(s) in %s",
                            lineno, len(problems), doc.doc_id)
            documents.append(doc)
    return Corpus(schema=schema, documents=tuple(documents), load_warnings=warnings)


def document_to_dict(doc: Document) -> dict:
    return {
        "doc_id": doc.doc_id,
        "tokens": list(doc.tokens),
        "entities": [
            {"id": e.id, "start": e.start, "end": e.end, "type": e.etype}
            for e in doc.entities
        ],
        "relations": [
            {"arg0": i, "arg1": j, "type": label}
            for i, j, label in doc.gold.positive_cells()
        ],
    }


def corpus_to_bytes(corpus: Corpus) -> bytes:
    buf = io.StringIO()
    for doc in corpus.documents:
        buf.write(json.dumps(document_to_dict(doc), sort_keys=True))
        buf.write("\n")
    return buf.getvalue().encode("utf-8")


def save_corpus(corpus: Corpus, path) -> None:
    Path(path).write_bytes(corpus_to_bytes(corpus))


def with_predictions(doc: Document, predicted: RelationMatrix) -> Document:
    """A copy of ``doc`` whose gold matrix is replaced by a prediction."""
    if predicted.m != doc.m:
        raise ValueError(f"prediction size {predicted.m} != entity count {doc.m}")
    return replace(doc, gold=predicted)


# ---------------------------------------------------------------------------
# synthetic generation

@dataclass(frozen=True)
class SynthConfig:
    """Knobs for the synthetic corpus generator.

    ``count_correlations`` lists (type_a, type_b, rho) targets: per-document
    instance counts of the two types are drawn from a bivariate normal with
    Pearson correlation rho, then rounded and clipped at zero.

    ``mode_types`` makes the listed relation types mutually exclusive: each
    document activates exactly one of them (the document's "mode") and plants
    several instances of it, none of the others. This is the strongest form of
    count anti-dependence and the substrate for context-dependent labels.

    ``ambiguous_mentions`` renders repeat instances with a generic connective
    token instead of a type-specific one, so a single cell's surface text
    underdetermines its label; the first instance always names the relation
    explicitly. When ``mode_types`` is set, only those types are rendered
    elliptically, which keeps every elliptical cell resolvable from document
    context (find the one explicit connective anywhere in the document).
    Without ``mode_types`` the elliptical rendering applies to every relation
    type and resolvability is not guaranteed.
    """

    n_docs: int = 100
    entities_min: int = 3
    entities_max: int = 8
    vocab_size: int = 200
    relation_density: float = 0.4
    plant_symmetry: bool = True
    count_correlations: tuple[tuple[str, str, float], ...] = ()
    mode_types: tuple[str, ...] = ()
    ambiguous_mentions: bool = False
    count_mean: float = 3.0
    count_sigma: float = 1.4
    filler_max: int = 2


def _check_feasible(schema: TypeSchema, cfg: SynthConfig) -> None:
    if cfg.entities_max < 2:
        raise InfeasibleConfigError("need entities_max >= 2 to place any relation")
    if cfg.entities_min < 1 or cfg.entities_min > cfg.entities_max:
        raise InfeasibleConfigError("entity count range is empty")
    if not schema.relations:
        raise InfeasibleConfigError("schema declares no relation types")
    if cfg.relation_density < 0:
        raise InfeasibleConfigError("relation_density must be nonnegative")
    names = set(schema.relation_names)
    for t in cfg.mode_types:
        if t not in names:
            raise InfeasibleConfigError(f"mode type {t!r} is not in the schema")
    seen_pairs = set()
    for a, b, rho in cfg.count_correlations:
        if a not in names or b not in names:
            raise InfeasibleConfigError(f"count correlation names unknown relation: {a}, {b}")
        if a == b:
            raise InfeasibleConfigError("count correlation must pair two distinct types")
        if a in cfg.mode_types or b in cfg.mode_types:
            raise InfeasibleConfigError(
                f"{a}/{b}: mode types already have fixed count structure")
        if not -1.0 <= rho <= 1.0:
            raise InfeasibleConfigError(f"correlation target {rho} outside [-1, 1]")
        key = frozenset((a, b))
        if key in seen_pairs:
            raise InfeasibleConfigError(f"duplicate correlation pair {a}, {b}")
        seen_pairs.add(key)
    # crude load check: expected instances must fit the smallest document
    expected = cfg.count_mean * (2 * len(seen_pairs) + bool(cfg.mode_types))
    expected += cfg.relation_density * cfg.entities_min
    if expected > cfg.entities_min * (cfg.entities_min - 1):
        raise InfeasibleConfigError(
            f"about {expected:.1f} relation instances per document cannot fit "
            f"{cfg.entities_min * (cfg.entities_min - 1)} off-diagonal cells; "
            "lower the density/count targets or raise entities_min"
        )


def _sample_counts(schema: TypeSchema, cfg: SynthConfig, m: int,
                   rng: np.random.Generator) -> dict[str, int]:
    """Per-document instance counts: correlated pairs draw from a rounded
    bivariate normal, mode types alternate exclusively, the remaining types
    draw Poisson counts."""
    counts: dict[str, int] = {}
    special: set[str] = set(cfg.mode_types)
    if cfg.mode_types:
        active = cfg.mode_types[int(rng.integers(len(cfg.mode_types)))]
        for t in cfg.mode_types:
            counts[t] = 0
        counts[active] = max(1, int(round(cfg.count_mean + cfg.count_sigma * rng.normal())))
    for a, b, rho in cfg.count_correlations:
        z1 = rng.normal()
        z2 = rho * z1 + np.sqrt(max(0.0, 1.0 - rho * rho)) * rng.normal()
        counts[a] = max(0, int(round(cfg.count_mean + cfg.count_sigma * z1)))
        counts[b] = max(0, int(round(cfg.count_mean + cfg.count_sigma * z2)))
        special.update((a, b))
    rest = [r.name for r in schema.relations if r.name not in special]
    if rest:
        lam = cfg.relation_density * m / len(rest)
        for name in rest:
            counts[name] = int(rng.poisson(lam))
    return counts


def _useful_types(schema: TypeSchema) -> list[str]:
    useful = set()
    for r in schema.relations:
        useful |= r.arg0_types | r.arg1_types
    return sorted(useful) or sorted(schema.entity_types)


def _generate_document(schema: TypeSchema, cfg: SynthConfig, seed: int,
                       doc_idx: int) -> Document:
    rng = np.random.default_rng([seed, doc_idx])
    m = int(rng.integers(cfg.entities_min, cfg.entities_max + 1))
    pool = _useful_types(schema)
    etypes = [str(rng.choice(pool)) for _ in range(m)]

    gold = RelationMatrix(m)
    instances: list[tuple[str, int, int]] = []  # in planting order
    counts = _sample_counts(schema, cfg, m, rng)
    usage = [0] * m
    for rel in schema.relations:
        want = counts.get(rel.name, 0)
        for _ in range(want):
            cand = [
                (i, j)
                for i in range(m)
                for j in range(m)
                if i != j
                and etypes[i] in rel.arg0_types
                and etypes[j] in rel.arg1_types
                and gold.get(i, j) == NO_RELATION
                and not (rel.symmetric and cfg.plant_symmetry and gold.get(j, i) != NO_RELATION)
            ]
            if not cand:
                break  # document saturated for this type; accept the shortfall
            # prefer entities not yet bearing a relation: keeps surface cues
            # unmixed while still allowing overlap once the document fills up
            lightest = min(usage[i] + usage[j] for i, j in cand)
            cand = [(i, j) for i, j in cand if usage[i] + usage[j] == lightest]
            i, j = cand[rng.integers(len(cand))]
            gold.set(i, j, rel.name)
            usage[i] += 1
            usage[j] += 1
            if rel.symmetric and cfg.plant_symmetry:
                gold.set(j, i, rel.name)
            instances.append((rel.name, i, j))

    # Render text. Every mention is a type marker plus an identifier token;
    # a relation instance contributes a connective to its arg0 mention and a
    # target marker to its arg1 mention, both tagged with a shared pair token
    # so the pairing is recoverable from the surface.
    elliptical_pool = set(cfg.mode_types) or set(schema.relation_names)
    span_extra: list[list[str]] = [[] for _ in range(m)]
    seen_types: set[str] = set()
    for k, (rname, i, j) in enumerate(instances):
        explicit = (not cfg.ambiguous_mentions or rname not in elliptical_pool
                    or rname not in seen_types)
        seen_types.add(rname)
        connective = f"c_{rname}" if explicit else "c_also"
        pair_tok = f"p{k}"
        span_extra[i].extend([connective, pair_tok])
        span_extra[j].extend(["tgt", pair_tok])

    tokens: list[str] = []
    entities: list[Entity] = []
    for i in range(m):
        for _ in range(int(rng.integers(0, cfg.filler_max + 1))):
            tokens.append(f"w{int(rng.integers(cfg.vocab_size))}")
        start = len(tokens)
        tokens.append(etypes[i].lower())
        tokens.append(f"w{int(rng.integers(cfg.vocab_size))}")
        tokens.extend(span_extra[i])
        entities.append(Entity(id=i, start=start, end=len(tokens), etype=etypes[i]))

    return Document(doc_id=f"synth-{seed}-{doc_idx}", tokens=tuple(tokens),
                    entities=tuple(entities), gold=gold)


def generate_synthetic(schema: TypeSchema, cfg: SynthConfig, seed: int) -> Corpus:
    """Deterministic synthetic corpus with plantable relation-dependency
    structure: every relation respects the schema's type constraints,
    symmetric types fill both matrix cells, per-document counts of correlated
    type pairs track the configured Pearson targets, and mode types alternate
    exclusively across documents. Document i uses its own RNG stream seeded by
    (seed, i), so generation order never changes content."""
    _check_feasible(schema, cfg)
    docs = tuple(_generate_document(schema, cfg, seed, i) for i in range(cfg.n_docs))
    return Corpus(schema=schema, documents=docs)
