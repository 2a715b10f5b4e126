"""Corpus data model, JSONL round-trips, schema validation, synthesis."""

import json

import numpy as np
import pytest

from rorel.corpus import (
    NO_RELATION,
    Corpus,
    CorpusFormatError,
    Document,
    Entity,
    InfeasibleConfigError,
    RelationMatrix,
    RelationType,
    SchemaError,
    SchemaViolationError,
    SynthConfig,
    TypeSchema,
    ace05_schema,
    corpus_to_bytes,
    generate_synthetic,
    load_corpus,
    load_schema,
    relation_pairs,
    save_corpus,
    save_schema,
    validate_document,
)


def write_jsonl(path, docs):
    with open(path, "w") as fh:
        for d in docs:
            fh.write(json.dumps(d) + "\n")
    return path


MINIMAL_DOC = {
    "doc_id": "d0",
    "tokens": ["alice", "met", "bob"],
    "entities": [
        {"id": 0, "start": 0, "end": 1, "type": "PER"},
        {"id": 1, "start": 2, "end": 3, "type": "PER"},
    ],
    "relations": [{"arg0": 0, "arg1": 1, "type": "Per-Soc"}],
}


class TestSchema:
    def test_ace05_shape(self):
        schema = ace05_schema()
        assert len(schema.entity_types) == 7
        assert len(schema.relations) == 6
        assert schema.relation("Per-Soc").symmetric
        assert not schema.relation("Part-Whole").symmetric
        assert schema.valid_args("Part-Whole", 0) == frozenset({"FAC", "LOC", "GPE", "ORG"})
        assert schema.valid_args("Art", 1) == frozenset({"FAC"})
        assert schema.valid_args("Gen-Aff", 0) == frozenset({"PER"})

    def test_round_trip(self, tmp_path):
        schema = ace05_schema()
        p = tmp_path / "schema.json"
        save_schema(schema, p)
        assert load_schema(p) == schema

    def test_reserved_label_rejected(self):
        with pytest.raises(SchemaError):
            TypeSchema(("A",), (RelationType(NO_RELATION, False,
                                             frozenset({"A"}), frozenset({"A"})),))

    def test_symmetric_needs_equal_arg_sets(self):
        with pytest.raises(SchemaError):
            TypeSchema(("A", "B"), (RelationType("r", True,
                                                 frozenset({"A"}), frozenset({"B"})),))

    def test_unknown_arg_type_rejected(self):
        with pytest.raises(SchemaError):
            TypeSchema(("A",), (RelationType("r", False,
                                             frozenset({"A"}), frozenset({"Z"})),))

    def test_duplicate_names_rejected(self):
        with pytest.raises(SchemaError):
            TypeSchema(("A", "A"), ())
        r = RelationType("r", False, frozenset({"A"}), frozenset({"A"}))
        with pytest.raises(SchemaError):
            TypeSchema(("A",), (r, r))


class TestLoad:
    def test_minimal_parse(self, tmp_path):
        p = write_jsonl(tmp_path / "c.jsonl", [MINIMAL_DOC])
        corpus = load_corpus(p, ace05_schema(), strict=True)
        assert len(corpus) == 1
        doc = corpus.documents[0]
        assert doc.gold.get(0, 1) == "Per-Soc"
        # the loader stores what the file says; it does not complete symmetry
        assert doc.gold.get(1, 0) == NO_RELATION

    def test_empty_relations_all_negative(self, tmp_path):
        raw = dict(MINIMAL_DOC, relations=[])
        p = write_jsonl(tmp_path / "c.jsonl", [raw])
        doc = load_corpus(p, ace05_schema(), strict=True).documents[0]
        assert all(lab == NO_RELATION for row in doc.gold.cells for lab in row)

    def test_strict_rejects_type_violation(self, tmp_path):
        # PER is not a valid arg0 of Part-Whole
        raw = dict(MINIMAL_DOC,
                   relations=[{"arg0": 0, "arg1": 1, "type": "Part-Whole"}])
        p = write_jsonl(tmp_path / "c.jsonl", [raw])
        with pytest.raises(SchemaViolationError):
            load_corpus(p, ace05_schema(), strict=True)

    def test_lax_counts_warnings(self, tmp_path):
        raw = dict(MINIMAL_DOC,
                   relations=[{"arg0": 0, "arg1": 1, "type": "Part-Whole"}])
        p = write_jsonl(tmp_path / "c.jsonl", [raw])
        corpus = load_corpus(p, ace05_schema(), strict=False)
        assert len(corpus) == 1
        assert corpus.load_warnings == 2  # both args are PER, both invalid

    def test_malformed_json_reports_line(self, tmp_path):
        p = tmp_path / "c.jsonl"
        p.write_text(json.dumps(MINIMAL_DOC) + "\n{oops\n")
        with pytest.raises(CorpusFormatError, match="line 2"):
            load_corpus(p, ace05_schema(), strict=True)

    def test_entity_index_out_of_range(self, tmp_path):
        raw = dict(MINIMAL_DOC, relations=[{"arg0": 0, "arg1": 5, "type": "Per-Soc"}])
        p = write_jsonl(tmp_path / "c.jsonl", [raw])
        with pytest.raises(CorpusFormatError, match="out of range"):
            load_corpus(p, ace05_schema(), strict=True)

    def test_unknown_relation_type(self, tmp_path):
        raw = dict(MINIMAL_DOC, relations=[{"arg0": 0, "arg1": 1, "type": "Nope"}])
        p = write_jsonl(tmp_path / "c.jsonl", [raw])
        with pytest.raises(CorpusFormatError, match="Nope"):
            load_corpus(p, ace05_schema(), strict=True)

    def test_duplicate_cell_rejected(self, tmp_path):
        raw = dict(MINIMAL_DOC, relations=[
            {"arg0": 0, "arg1": 1, "type": "Per-Soc"},
            {"arg0": 0, "arg1": 1, "type": "Phys"},
        ])
        p = write_jsonl(tmp_path / "c.jsonl", [raw])
        with pytest.raises(CorpusFormatError, match="duplicate"):
            load_corpus(p, ace05_schema(), strict=True)

    def test_ids_must_be_ordered(self, tmp_path):
        raw = dict(MINIMAL_DOC, entities=[
            {"id": 1, "start": 0, "end": 1, "type": "PER"},
            {"id": 0, "start": 2, "end": 3, "type": "PER"},
        ])
        p = write_jsonl(tmp_path / "c.jsonl", [raw])
        with pytest.raises(CorpusFormatError, match="0..M-1"):
            load_corpus(p, ace05_schema(), strict=True)

    def test_span_bounds_checked(self, tmp_path):
        raw = dict(MINIMAL_DOC, entities=[
            {"id": 0, "start": 0, "end": 9, "type": "PER"},
            {"id": 1, "start": 2, "end": 3, "type": "PER"},
        ])
        p = write_jsonl(tmp_path / "c.jsonl", [raw])
        with pytest.raises(CorpusFormatError, match="span"):
            load_corpus(p, ace05_schema(), strict=True)

    def test_save_load_round_trip(self, tmp_path):
        p = write_jsonl(tmp_path / "c.jsonl", [MINIMAL_DOC])
        schema = ace05_schema()
        corpus = load_corpus(p, schema, strict=True)
        q = tmp_path / "copy.jsonl"
        save_corpus(corpus, q)
        again = load_corpus(q, schema, strict=True)
        assert [d.tokens for d in again.documents] == [d.tokens for d in corpus.documents]
        assert [d.gold.cells for d in again.documents] == [d.gold.cells for d in corpus.documents]
        assert [d.entities for d in again.documents] == [d.entities for d in corpus.documents]


class TestRelationPairs:
    def test_m7_with_diagonal_is_49(self):
        assert len(relation_pairs(7, include_diagonal=True)) == 49

    def test_m1_without_diagonal_empty(self):
        assert relation_pairs(1, include_diagonal=False) == []

    def test_m3_without_diagonal(self):
        pairs = relation_pairs(3, include_diagonal=False)
        assert len(pairs) == 6
        assert all(i != j for i, j in pairs)

    def test_counts_match_closed_form(self):
        for m in range(1, 9):
            assert len(relation_pairs(m, True)) == m * m
            assert len(relation_pairs(m, False)) == m * (m - 1)

    def test_accepts_document(self):
        doc = Document("d", ("a",), (Entity(0, 0, 1, "PER"),), RelationMatrix(1))
        assert relation_pairs(doc, include_diagonal=True) == [(0, 0)]


def two_type_schema():
    """One entity type, three unconstrained relations: saturation-free."""
    e = frozenset({"E"})
    return TypeSchema(("E",), (
        RelationType("A", False, e, e),
        RelationType("B", False, e, e),
        RelationType("C", False, e, e),
    ))


class TestSynthesis:
    def test_deterministic(self):
        cfg = SynthConfig(n_docs=20)
        a = generate_synthetic(ace05_schema(), cfg, seed=1)
        b = generate_synthetic(ace05_schema(), cfg, seed=1)
        assert corpus_to_bytes(a) == corpus_to_bytes(b)
        c = generate_synthetic(ace05_schema(), cfg, seed=2)
        assert corpus_to_bytes(a) != corpus_to_bytes(c)

    def test_symmetry_planted_everywhere(self):
        cfg = SynthConfig(n_docs=60, relation_density=0.8)
        corpus = generate_synthetic(ace05_schema(), cfg, seed=3)
        seen = 0
        for doc in corpus.documents:
            for i, j, lab in doc.gold.positive_cells():
                if corpus.schema.relation(lab).symmetric:
                    seen += 1
                    assert doc.gold.get(j, i) == lab
        assert seen > 0

    def test_generated_passes_strict_load(self, tmp_path):
        cfg = SynthConfig(n_docs=40, relation_density=0.8)
        corpus = generate_synthetic(ace05_schema(), cfg, seed=4)
        assert all(not validate_document(d, corpus.schema) for d in corpus.documents)
        p = tmp_path / "synth.jsonl"
        save_corpus(corpus, p)
        again = load_corpus(p, corpus.schema, strict=True)
        assert len(again) == len(corpus)
        assert corpus_to_bytes(again) == corpus_to_bytes(corpus)

    def test_type_markers_in_spans(self):
        corpus = generate_synthetic(ace05_schema(), SynthConfig(n_docs=5), seed=5)
        for doc in corpus.documents:
            for e in doc.entities:
                assert doc.tokens[e.start] == e.etype.lower()

    def test_planted_count_correlation(self):
        cfg = SynthConfig(
            n_docs=600, entities_min=8, entities_max=12, relation_density=0.0,
            count_correlations=(("A", "B", 0.8),),
        )
        corpus = generate_synthetic(two_type_schema(), cfg, seed=6)
        a = np.array([d.gold.count("A") for d in corpus.documents], dtype=float)
        b = np.array([d.gold.count("B") for d in corpus.documents], dtype=float)
        r = np.corrcoef(a, b)[0, 1]
        assert abs(r - 0.8) < 0.1

    def test_uncorrelated_by_default(self):
        # fixed document size, else length acts as a shared latent and
        # induces a real (not spurious) positive count correlation
        cfg = SynthConfig(n_docs=600, entities_min=10, entities_max=10,
                          relation_density=3.0)
        corpus = generate_synthetic(two_type_schema(), cfg, seed=7)
        a = np.array([d.gold.count("A") for d in corpus.documents], dtype=float)
        b = np.array([d.gold.count("B") for d in corpus.documents], dtype=float)
        assert abs(np.corrcoef(a, b)[0, 1]) < 0.1

    def test_mode_types_exclusive(self):
        cfg = SynthConfig(n_docs=80, entities_min=6, entities_max=9,
                          relation_density=0.3, mode_types=("A", "B"))
        corpus = generate_synthetic(two_type_schema(), cfg, seed=8)
        with_a = with_b = 0
        for doc in corpus.documents:
            na, nb = doc.gold.count("A"), doc.gold.count("B")
            assert na == 0 or nb == 0
            with_a += na > 0
            with_b += nb > 0
        assert with_a > 10 and with_b > 10

    def test_elliptical_rendering(self):
        cfg = SynthConfig(n_docs=80, entities_min=6, entities_max=9,
                          relation_density=0.3, mode_types=("A", "B"),
                          ambiguous_mentions=True, count_mean=3.0)
        corpus = generate_synthetic(two_type_schema(), cfg, seed=9)
        total_also = 0
        for doc in corpus.documents:
            toks = list(doc.tokens)
            n_mode = doc.gold.count("A") + doc.gold.count("B")
            explicit = toks.count("c_A") + toks.count("c_B")
            if n_mode:
                # exactly one anchor names the mode; repeats are elliptical
                assert explicit == 1
                assert toks.count("c_also") == n_mode - 1
            total_also += toks.count("c_also")
        assert total_also > 40

    def test_explicit_rendering_without_flag(self):
        cfg = SynthConfig(n_docs=30, entities_min=6, entities_max=9,
                          mode_types=("A", "B"), ambiguous_mentions=False)
        corpus = generate_synthetic(two_type_schema(), cfg, seed=10)
        for doc in corpus.documents:
            assert "c_also" not in doc.tokens

    def test_infeasible_configs(self):
        schema = two_type_schema()
        with pytest.raises(InfeasibleConfigError):
            generate_synthetic(schema, SynthConfig(entities_max=1), seed=0)
        with pytest.raises(InfeasibleConfigError):
            generate_synthetic(schema, SynthConfig(entities_min=9, entities_max=4), seed=0)
        with pytest.raises(InfeasibleConfigError):
            generate_synthetic(schema, SynthConfig(mode_types=("Nope",)), seed=0)
        with pytest.raises(InfeasibleConfigError):
            generate_synthetic(
                schema, SynthConfig(count_correlations=(("A", "A", 0.5),)), seed=0)
        with pytest.raises(InfeasibleConfigError):
            generate_synthetic(
                schema, SynthConfig(count_correlations=(("A", "B", 1.5),)), seed=0)
        with pytest.raises(InfeasibleConfigError):
            generate_synthetic(
                schema,
                SynthConfig(mode_types=("A",),
                            count_correlations=(("A", "B", 0.5),)),
                seed=0)
        with pytest.raises(InfeasibleConfigError):
            # dozens of planted instances cannot fit a 2-entity document
            generate_synthetic(
                schema,
                SynthConfig(entities_min=2, entities_max=3, count_mean=30.0,
                            count_correlations=(("A", "B", 0.5),)),
                seed=0)


class TestRelationMatrix:
    def test_defaults_to_negative(self):
        m = RelationMatrix(3)
        assert list(m.positive_cells()) == []

    def test_rejects_ragged(self):
        with pytest.raises(ValueError):
            RelationMatrix(2, [["NO_RELATION"]])

    def test_copy_is_independent(self):
        m = RelationMatrix(2)
        c = m.copy()
        c.set(0, 1, "Phys")
        assert m.get(0, 1) == NO_RELATION
        assert m != c
