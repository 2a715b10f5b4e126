"""Relation co-occurrence statistics and evaluation metrics.

Covers four diagnostic families over a typed relation schema and corpora:
type-incompatibility rule mining, conditional co-occurrence matrices,
invalid-combination fractions for growing combination sizes, and per-document
count correlations; plus precision/recall/F1 scoring of predicted relation
matrices and Jensen-Shannon comparison of co-occurrence structure.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement
from typing import Iterable, Sequence

import numpy as np

from .corpus import NO_RELATION, Corpus, Document, TypeSchema, relation_pairs

log = logging.getLogger(__name__)


@dataclass(frozen=True, order=True)
class Role:
    """A (relation type, argument position) pair, the unit of type analysis.

    Merged symmetric relations collapse both positions into arg_pos 0: an
    entity in a symmetric relation plays both roles at once, so they carry
    identical type sets and identical co-occurrence behavior.
    """

    relation: str
    arg_pos: int

    def __str__(self) -> str:
        return f"{self.relation} (arg{self.arg_pos})"


def schema_roles(schema: TypeSchema, merge_symmetric: bool = True) -> list[Role]:
    """Roles in deterministic order: schema relation order, arg0 before arg1."""
    roles = []
    for rel in schema.relations:
        roles.append(Role(rel.name, 0))
        if not (merge_symmetric and rel.symmetric):
            roles.append(Role(rel.name, 1))
    return roles


def role_types(schema: TypeSchema, role: Role) -> frozenset[str]:
    return schema.valid_args(role.relation, role.arg_pos)


def derive_incompatibility_rules(
    schema: TypeSchema, merge_symmetric: bool = True
) -> set[frozenset[Role]]:
    """Unordered role pairs that no single entity can ever satisfy together,
    i.e. pairs whose valid entity-type sets are disjoint."""
    roles = schema_roles(schema, merge_symmetric)
    rules = set()
    for a, b in combinations(roles, 2):
        if not role_types(schema, a) & role_types(schema, b):
            rules.add(frozenset((a, b)))
    return rules


def format_rules(rules: set[frozenset[Role]]) -> list[str]:
    lines = []
    for rule in rules:
        a, b = sorted(rule)
        lines.append(f"{a} and {b}")
    return sorted(lines)


# ---------------------------------------------------------------------------
# conditional co-occurrence

@dataclass
class CondMatrix:
    """Square conditional co-occurrence matrix over roles or relation types.

    ``probs[a][b]`` estimates P(an entity also bears b | it bears a) by
    counting entities; rows whose condition never occurs hold NaN and are
    listed in ``empty_rows``. ``display()`` returns a copy with never-co-occur
    cells mapped to -1, the rendering convention for heatmaps.
    """

    labels: list[str]
    cooc: np.ndarray       # raw co-occurrence counts, (n, n)
    bearers: np.ndarray    # entities bearing each label, (n,)

    def __post_init__(self):
        n = len(self.labels)
        assert self.cooc.shape == (n, n) and self.bearers.shape == (n,)

    @property
    def probs(self) -> np.ndarray:
        with np.errstate(invalid="ignore", divide="ignore"):
            return self.cooc / self.bearers[:, None]

    @property
    def empty_rows(self) -> list[str]:
        return [lab for lab, n in zip(self.labels, self.bearers) if n == 0]

    def display(self) -> np.ndarray:
        out = self.probs.copy()
        out[self.cooc == 0] = -1.0
        return out

    def row_distributions(self) -> dict[str, np.ndarray]:
        """Rows renormalized to sum 1, keyed by label; empty rows omitted."""
        out = {}
        for idx, lab in enumerate(self.labels):
            row = self.cooc[idx].astype(float)
            total = row.sum()
            if total > 0:
                out[lab] = row / total
        return out


def _entity_roles(doc: Document, merge_symmetric: bool,
                  schema: TypeSchema) -> list[set[Role]]:
    per_entity: list[set[Role]] = [set() for _ in range(doc.m)]
    for i, j, label in doc.gold.positive_cells():
        merged = merge_symmetric and schema.relation(label).symmetric
        per_entity[i].add(Role(label, 0))
        per_entity[j].add(Role(label, 0 if merged else 1))
    return per_entity


def conditional_matrix(corpus: Corpus, granularity: str = "role",
                       merge_symmetric: bool = True) -> CondMatrix:
    """Estimate P(entity bears b | entity bears a) over all corpus entities.

    ``granularity="role"`` distinguishes argument positions;
    ``granularity="relation"`` collapses both positions of each type.
    Rows hold raw conditionals in [0, 1]; they do not sum to 1.
    """
    if granularity not in ("role", "relation"):
        raise ValueError(f"granularity must be 'role' or 'relation', got {granularity!r}")
    schema = corpus.schema
    if granularity == "role":
        labels = [str(r) for r in schema_roles(schema, merge_symmetric)]
        keys = schema_roles(schema, merge_symmetric)
    else:
        labels = list(schema.relation_names)
        keys = labels
    index = {k: n for n, k in enumerate(keys)}
    n = len(keys)
    cooc = np.zeros((n, n), dtype=np.int64)
    bearers = np.zeros(n, dtype=np.int64)
    for doc in corpus.documents:
        for held in _entity_roles(doc, merge_symmetric, schema):
            if granularity == "relation":
                held = {r.relation for r in held}
            ids = sorted(index[h] for h in held)
            for a in ids:
                bearers[a] += 1
                for b in ids:
                    cooc[a, b] += 1
    return CondMatrix(labels=labels, cooc=cooc, bearers=bearers)


# ---------------------------------------------------------------------------
# invalid combinations of k roles

CONVENTIONS = ("distinct_roles_merged", "multiset_all_roles")


def invalid_fraction(schema: TypeSchema, k: int,
                     convention: str = "distinct_roles_merged") -> float:
    """Percentage of size-k role combinations no single entity can satisfy.

    A combination is invalid when the intersection of its roles' valid
    entity-type sets is empty. ``distinct_roles_merged`` draws k distinct
    roles with symmetric relations collapsed; ``multiset_all_roles`` draws
    with repetition from all uncollapsed roles.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if convention == "distinct_roles_merged":
        roles = schema_roles(schema, merge_symmetric=True)
        if k > len(roles):
            raise ValueError(f"k={k} exceeds the {len(roles)} distinct roles")
        combos: Iterable = combinations(roles, k)
    elif convention == "multiset_all_roles":
        roles = schema_roles(schema, merge_symmetric=False)
        combos = combinations_with_replacement(roles, k)
    else:
        raise ValueError(f"unknown convention {convention!r}")
    total = invalid = 0
    for combo in combos:
        total += 1
        shared = frozenset(schema.entity_types)
        for role in combo:
            shared &= role_types(schema, role)
            if not shared:
                invalid += 1
                break
    return 100.0 * invalid / total


def invalid_curve(schema: TypeSchema, k_max: int,
                  convention: str = "distinct_roles_merged") -> list[float]:
    return [invalid_fraction(schema, k, convention) for k in range(1, k_max + 1)]


# ---------------------------------------------------------------------------
# count correlations

def count_correlation(corpus: Corpus) -> tuple[list[str], np.ndarray, np.ndarray]:
    """Pearson correlation of per-document relation-type counts.

    Returns (type names, K x K correlation matrix, defined mask). Cells
    involving a type whose count never varies are undefined: NaN in the
    matrix, False in the mask.
    """
    if len(corpus) < 2:
        raise ValueError("count correlation needs at least 2 documents")
    names = list(corpus.schema.relation_names)
    counts = np.array(
        [[doc.gold.count(name) for doc in corpus.documents] for name in names],
        dtype=float,
    )
    varying = counts.std(axis=1) > 0
    k = len(names)
    corr = np.full((k, k), np.nan)
    defined = np.outer(varying, varying)
    if varying.any():
        sub = np.corrcoef(counts[varying])
        corr[np.ix_(varying, varying)] = np.atleast_2d(sub)
    np.fill_diagonal(corr, np.where(varying, 1.0, np.nan))
    np.fill_diagonal(defined, varying)
    return names, corr, defined


# ---------------------------------------------------------------------------
# Jensen-Shannon comparison of co-occurrence structure

def js_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """Jensen-Shannon divergence, log base 2, of two distributions."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if p.shape != q.shape:
        raise ValueError(f"distribution shapes differ: {p.shape} vs {q.shape}")
    for name, d in (("p", p), ("q", q)):
        if (d < 0).any() or not np.isclose(d.sum(), 1.0, atol=1e-9):
            raise ValueError(f"{name} is not a probability distribution")
    m = 0.5 * (p + q)

    def kl(a, b):
        mask = a > 0
        return float(np.sum(a[mask] * np.log2(a[mask] / b[mask])))

    return 0.5 * kl(p, m) + 0.5 * kl(q, m)


def js_distance(pred: CondMatrix, gold: CondMatrix) -> float:
    """Average root-JS divergence between matching normalized rows.

    Row pairs where either side has no observations are skipped with a
    warning. Range [0, 1]: 0 for identical structure, 1 for disjoint.
    """
    if pred.labels != gold.labels:
        raise ValueError("matrices index different roles")
    rows_p = pred.row_distributions()
    rows_g = gold.row_distributions()
    dists = []
    for lab in pred.labels:
        if lab not in rows_p or lab not in rows_g:
            log.warning("row %r empty on one side, skipped", lab)
            continue
        dists.append(np.sqrt(js_divergence(rows_p[lab], rows_g[lab])))
    if not dists:
        raise ValueError("no comparable rows")
    return float(np.mean(dists))


# ---------------------------------------------------------------------------
# scoring

@dataclass(frozen=True)
class ClassScore:
    precision: float
    recall: float
    f1: float
    gold_count: int
    pred_count: int


@dataclass(frozen=True)
class MetricReport:
    """Percent-scale relation-classification scores.

    Macro F1 is the unweighted mean over positive classes (any class with
    gold or predicted support); the all-negative label is never a class.
    Micro scores pool positive decisions across classes. ``empty`` marks
    reports over zero scoreable cells.
    """

    per_class: dict[str, ClassScore]
    macro_f1: float
    micro_f1: float
    precision: float
    recall: float
    n_cells: int
    empty: bool = False

    def to_dict(self) -> dict:
        return {
            "macro_f1": self.macro_f1,
            "micro_f1": self.micro_f1,
            "precision": self.precision,
            "recall": self.recall,
            "n_cells": self.n_cells,
            "empty": self.empty,
            "per_class": {
                name: {
                    "precision": c.precision,
                    "recall": c.recall,
                    "f1": c.f1,
                    "gold_count": c.gold_count,
                    "pred_count": c.pred_count,
                }
                for name, c in self.per_class.items()
            },
        }


def _f1(tp: int, fp: int, fn: int) -> tuple[float, float, float]:
    # 0/0 := 0 throughout
    p = tp / (tp + fp) if tp + fp else 0.0
    r = tp / (tp + fn) if tp + fn else 0.0
    f = 2 * p * r / (p + r) if p + r else 0.0
    return 100 * p, 100 * r, 100 * f


def _check_aligned(pred_docs: Sequence[Document], gold_docs: Sequence[Document]):
    if len(pred_docs) != len(gold_docs):
        raise ValueError(
            f"corpora differ in size: {len(pred_docs)} vs {len(gold_docs)}")
    for p, g in zip(pred_docs, gold_docs):
        if p.doc_id != g.doc_id:
            raise ValueError(f"document order mismatch: {p.doc_id} vs {g.doc_id}")
        if p.m != g.m:
            raise ValueError(f"{p.doc_id}: entity counts differ ({p.m} vs {g.m})")


def _score_cells(cells: Iterable[tuple[str, str]]) -> MetricReport:
    tp: dict[str, int] = {}
    fp: dict[str, int] = {}
    fn: dict[str, int] = {}
    n_cells = 0
    for pred_label, gold_label in cells:
        n_cells += 1
        if pred_label == gold_label:
            if pred_label != NO_RELATION:
                tp[pred_label] = tp.get(pred_label, 0) + 1
        else:
            if pred_label != NO_RELATION:
                fp[pred_label] = fp.get(pred_label, 0) + 1
            if gold_label != NO_RELATION:
                fn[gold_label] = fn.get(gold_label, 0) + 1
    classes = sorted(set(tp) | set(fp) | set(fn))
    per_class = {}
    for c in classes:
        p, r, f = _f1(tp.get(c, 0), fp.get(c, 0), fn.get(c, 0))
        per_class[c] = ClassScore(
            precision=p, recall=r, f1=f,
            gold_count=tp.get(c, 0) + fn.get(c, 0),
            pred_count=tp.get(c, 0) + fp.get(c, 0),
        )
    macro = float(np.mean([c.f1 for c in per_class.values()])) if per_class else 0.0
    mp, mr, mf = _f1(sum(tp.values()), sum(fp.values()), sum(fn.values()))
    return MetricReport(per_class=per_class, macro_f1=macro, micro_f1=mf,
                        precision=mp, recall=mr, n_cells=n_cells,
                        empty=n_cells == 0)


def score(pred_docs: Sequence[Document], gold_docs: Sequence[Document],
          include_diagonal: bool = False) -> MetricReport:
    """Compare predicted and gold relation matrices cell by cell.

    Every off-diagonal ordered pair is one classification decision; a
    positive prediction on a cell with a different gold label is both a
    false positive for the predicted class and a false negative for the
    gold one.
    """
    _check_aligned(pred_docs, gold_docs)

    def cells():
        for p, g in zip(pred_docs, gold_docs):
            for i, j in relation_pairs(g, include_diagonal):
                yield p.gold.get(i, j), g.gold.get(i, j)

    return _score_cells(cells())


def subset_f1(pred_docs: Sequence[Document], gold_docs: Sequence[Document],
              min_relations: int = 2) -> MetricReport:
    """Score only cells touching an entity that bears >= min_relations gold
    positive cells: the crowded-entity slice where relation interdependence
    actually matters."""
    if min_relations < 1:
        raise ValueError(f"min_relations must be >= 1, got {min_relations}")
    _check_aligned(pred_docs, gold_docs)

    def cells():
        for p, g in zip(pred_docs, gold_docs):
            degree = [0] * g.m
            for i, j, _ in g.gold.positive_cells():
                degree[i] += 1
                degree[j] += 1
            for i, j in relation_pairs(g, include_diagonal=False):
                if degree[i] >= min_relations or degree[j] >= min_relations:
                    yield p.gold.get(i, j), g.gold.get(i, j)

    report = _score_cells(cells())
    if report.empty:
        log.warning("subset_f1: no cells pass the min_relations=%d filter", min_relations)
    return report


# ---------------------------------------------------------------------------
# matrix export

def export_matrix_csv(labels: Sequence[str], matrix: np.ndarray, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([""] + list(labels))
        for lab, row in zip(labels, np.asarray(matrix)):
            writer.writerow([lab] + [f"{v:.6f}" if np.isfinite(v) else "nan" for v in row])


def _cell_color(v: float) -> str:
    """Diverging scale: -1 saturated red, 0 white, +1 saturated blue."""
    if not np.isfinite(v):
        return "#bbbbbb"
    v = float(np.clip(v, -1.0, 1.0))
    if v < 0:
        t = -v
        r, g, b = 255, round(255 * (1 - t) + 64 * t), round(255 * (1 - t) + 64 * t)
    else:
        r, g, b = round(255 * (1 - v) + 64 * v), round(255 * (1 - v) + 64 * v), 255
    return f"#{r:02x}{g:02x}{b:02x}"


def export_heatmap_svg(labels: Sequence[str], matrix: np.ndarray, path,
                       cell: int = 40, margin: int = 140) -> None:
    """Standalone SVG heatmap; -1 cells render at the negative extreme."""
    mat = np.asarray(matrix, dtype=float)
    n = len(labels)
    width = margin + n * cell + 10
    height = margin + n * cell + 10
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        '<style>text{font-family:monospace;font-size:10px}</style>',
    ]
    for i, lab in enumerate(labels):
        y = margin + i * cell
        parts.append(f'<text x="4" y="{y + cell // 2 + 3}">{lab}</text>')
        parts.append(
            f'<text x="{margin + i * cell + 2}" y="{margin - 6}" '
            f'transform="rotate(-60 {margin + i * cell + 2} {margin - 6})">{lab}</text>')
        for j in range(n):
            v = mat[i, j]
            x = margin + j * cell
            parts.append(
                f'<rect x="{x}" y="{y}" width="{cell}" height="{cell}" '
                f'fill="{_cell_color(v)}" stroke="#888"/>')
            text = "-1" if v == -1.0 else (f"{v:.2f}" if np.isfinite(v) else "?")
            parts.append(f'<text x="{x + 4}" y="{y + cell // 2 + 3}">{text}</text>')
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(parts) + "\n")
