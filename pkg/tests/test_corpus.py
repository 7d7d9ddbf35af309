"""
Tests for JSONL corpus loading, validation and training sequence extraction.
"""

import json
import sys
from pathlib import Path

import pytest

sys.path.append(str(Path(__file__).parent.parent))

from core.corpus import candidate_sequences, load_corpus, target_sequences, training_pairs, write_corpus
from core.errors import CorpusValidationError
from core.schema_validator import SchemaValidator


def write_lines(path: Path, records) -> Path:
    with open(path, "w", encoding="utf-8") as f:
        for record in records:
            f.write((record if isinstance(record, str) else json.dumps(record)) + "\n")
    return path


class TestLoadCorpus:
    """Loading and validation errors."""

    def test_load(self, tmp_path, toy_corpus_records):
        corpus = load_corpus(write_lines(tmp_path / "c.jsonl", toy_corpus_records))
        assert [inst.da_id for inst in corpus] == ["da-1", "da-2"]
        assert corpus[0].lex == {"X-name": "Loch Fyne"}
        assert len(corpus[1].refs) == 2
        assert not corpus[0].has_trees()

    def test_id_defaults_to_da(self, tmp_path):
        corpus = load_corpus(write_lines(tmp_path / "c.jsonl", [{"da": "inform(food=French)", "refs": ["French."]}]))
        assert corpus[0].da_id == "inform(food=French)"

    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_corpus(tmp_path / "absent.jsonl")

    def test_bad_json_line_number(self, tmp_path, toy_corpus_records):
        path = write_lines(tmp_path / "c.jsonl", [toy_corpus_records[0], "{not json"])
        with pytest.raises(CorpusValidationError) as exc_info:
            load_corpus(path)
        assert exc_info.value.line == 2
        assert "Line: 2" in str(exc_info.value)

    def test_schema_violation(self, tmp_path):
        path = write_lines(tmp_path / "c.jsonl", [{"da": "inform(food=French)", "refs": [], "extra": 1}])
        with pytest.raises(CorpusValidationError) as exc_info:
            load_corpus(path)
        assert len(exc_info.value.actual) == 2

    def test_bad_da(self, tmp_path):
        path = write_lines(tmp_path / "c.jsonl", [{"da": "inform(food=", "refs": ["x"]}])
        with pytest.raises(CorpusValidationError) as exc_info:
            load_corpus(path)
        assert exc_info.value.field == "da"

    def test_duplicate_ids(self, tmp_path, toy_corpus_records):
        path = write_lines(tmp_path / "c.jsonl", [toy_corpus_records[0], toy_corpus_records[0]])
        with pytest.raises(CorpusValidationError) as exc_info:
            load_corpus(path)
        assert exc_info.value.line == 2

    def test_tree_count_must_match_refs(self, tmp_path):
        record = {"da": "inform(food=French)", "refs": ["a", "b"], "tree": ["( be v:fin )"]}
        with pytest.raises(CorpusValidationError):
            load_corpus(write_lines(tmp_path / "c.jsonl", [record]))

    def test_malformed_tree_rejected(self, tmp_path):
        record = {"da": "inform(food=French)", "refs": ["a"], "tree": "( be v:fin"}
        with pytest.raises(CorpusValidationError) as exc_info:
            load_corpus(write_lines(tmp_path / "c.jsonl", [record]))
        assert "not well formed" in str(exc_info.value)

    def test_empty_corpus(self, tmp_path):
        with pytest.raises(CorpusValidationError):
            load_corpus(write_lines(tmp_path / "c.jsonl", []))


class TestSequences:
    """Targets and training pairs per mode."""

    RECORD = {"id": "da-1", "da": "inform(name=X-name, eattype=restaurant)",
              "refs": ["X is a restaurant.", "There are restaurants."],
              "tree": ["( be v:fin ( x-name n:subj ) ( restaurant n:obj ) )",
                       "( be v:fin ( there n:subj ) ( restaurant n:obj ) )"]}

    @pytest.fixture
    def instance(self, tmp_path):
        return load_corpus(write_lines(tmp_path / "c.jsonl", [self.RECORD]))[0]

    def test_string_targets(self, instance):
        targets = target_sequences(instance, "string", ["restaurant"])
        assert targets[1] == ["there", "are", "restaurant", "-s", "."]

    def test_tree_targets(self, instance):
        assert target_sequences(instance, "tree")[0][:6] == ["(", "be", "v:fin", "(", "x-name", "n:subj"]
        assert candidate_sequences(instance, "tree")[1] == ["be", "v:fin", "there", "n:subj", "restaurant", "n:obj"]

    def test_tree_mode_without_trees(self, tmp_path, toy_corpus_records):
        instance = load_corpus(write_lines(tmp_path / "c.jsonl", toy_corpus_records))[0]
        with pytest.raises(CorpusValidationError):
            target_sequences(instance, "tree")

    def test_unknown_mode(self, instance):
        with pytest.raises(ValueError):
            target_sequences(instance, "audio")

    def test_pairs_per_reference(self, instance):
        pairs = training_pairs([instance], "string")
        assert len(pairs) == 2
        assert pairs[0].source[:3] == ["act:inform", "slot:name", "val:X-name"]
        sorted_pairs = training_pairs([instance], "string", sort_triples=True)
        assert sorted_pairs[0].source[:3] == ["act:inform", "slot:eattype", "val:restaurant"]

    def test_write_round_trip(self, tmp_path, instance):
        path = write_corpus(tmp_path / "out" / "c.jsonl", [instance])
        reloaded = load_corpus(path)[0]
        assert reloaded.da == instance.da
        assert reloaded.trees == instance.trees
        assert path.read_bytes() == write_corpus(tmp_path / "again.jsonl", [reloaded]).read_bytes()


class TestSchemaValidator:
    """Direct schema checks."""

    def test_collects_all_errors(self):
        ok, errors = SchemaValidator().validate_corpus_record({"refs": [""], "lex": {"X": 1}})
        assert not ok
        assert len(errors) == 3

    def test_unknown_kind(self):
        with pytest.raises(KeyError):
            SchemaValidator().validate("nothing", {})

    def test_missing_schema_dir(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            SchemaValidator(tmp_path)
