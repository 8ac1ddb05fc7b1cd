import json

import numpy as np
import pytest

from conftest import write_tsv
from tensorlogic.exceptions import (DatasetFormatError, SchemaError, SelfLoopError, UnknownNameError,
                                    VocabularyMismatchError)
from tensorlogic.store import (IS_CAPITAL_OF, IS_LOCATED_IN, TripleStore, Vocabulary, adjacency, load_countries,
                               load_genealogy, load_triples_tsv, read_triples_tsv, save_triples_tsv)


def test_vocabulary_first_appearance_order():
    vocab = Vocabulary("entity")
    assert [vocab.add(name) for name in ("b", "a", "b", "c")] == [0, 1, 0, 2]
    assert vocab.names == ("b", "a", "c")
    assert vocab["c"] == 2 and vocab.name(1) == "a"


def test_frozen_vocabulary_rejects_new_names_with_suggestions():
    vocab = Vocabulary("entity", ["Berlin", "Bern"]).freeze()
    with pytest.raises(UnknownNameError) as info:
        vocab.add("Berlim")
    assert "Berlin" in info.value.suggestions
    with pytest.raises(KeyError):
        vocab["Paris"]


def test_duplicate_vocabulary_names():
    with pytest.raises(DatasetFormatError):
        Vocabulary("entity", ["a", "a"])


def test_triple_store_deduplicates_in_order(chain_store):
    store = TripleStore(chain_store.entities, chain_store.relations, [(1, 0, 2), (0, 0, 1), (1, 0, 2)])
    assert store.triples.tolist() == [[1, 0, 2], [0, 0, 1]]
    assert (0, 0, 1) in store
    with pytest.raises(VocabularyMismatchError):
        TripleStore(chain_store.entities, chain_store.relations, [(0, 5, 1)])


def test_adjacency(chain_store):
    assert adjacency(chain_store, "r0").pairs() == {(0, 1), (1, 2), (3, 4)}
    assert adjacency(chain_store, 1).pairs() == {(1, 2), (2, 5), (4, 5)}


def test_without_shares_vocabularies(chain_store):
    reduced = chain_store.without([(0, 0, 1)])
    assert len(reduced) == len(chain_store) - 1
    assert reduced.entities is chain_store.entities


def test_load_genealogy(genealogy_files):
    genealogy = load_genealogy(*genealogy_files)
    people = genealogy.people
    assert people.names == ("abe_1", "bob_1", "cal_1", "dan_1", "eve_1", "fay_1")
    expected = {("abe_1", "bob_1"), ("bob_1", "cal_1"), ("cal_1", "dan_1"), ("abe_1", "eve_1"), ("eve_1", "fay_1")}
    assert {(people.name(i), people.name(j)) for i, j in genealogy.parents.pairs()} == expected
    assert genealogy.stats() == {"nodes": 6, "edges": 5}
    assert genealogy.display(people["eve_1"]) == "Eve"


def test_load_genealogy_missing_column(tmp_path, genealogy_files):
    person_csv, _ = genealogy_files
    broken = tmp_path / "broken.csv"
    broken.write_text("person_id_1,kind,person_id_2\nabe_1,father,bob_1\n", encoding="utf-8")
    with pytest.raises(SchemaError, match="relationship_type"):
        load_genealogy(person_csv, broken)


def test_load_genealogy_unknown_person(tmp_path, genealogy_files):
    person_csv, _ = genealogy_files
    relationships = tmp_path / "rel.csv"
    relationships.write_text("person_id_1,relationship_type,person_id_2\nabe_1,father,zed_1\n", encoding="utf-8")
    with pytest.raises(DatasetFormatError, match="zed_1"):
        load_genealogy(person_csv, relationships)


def test_load_genealogy_self_loop(tmp_path, genealogy_files):
    person_csv, _ = genealogy_files
    relationships = tmp_path / "rel.csv"
    relationships.write_text("person_id_1,relationship_type,person_id_2\nabe_1,father,abe_1\n", encoding="utf-8")
    with pytest.raises(SelfLoopError):
        load_genealogy(person_csv, relationships)


def test_load_countries(countries_file):
    store = load_countries(countries_file)
    assert store.relations.names == (IS_CAPITAL_OF, IS_LOCATED_IN)
    names = {store.names(triple) for triple in store}
    assert ("Tokyo", IS_CAPITAL_OF, "Japan") in names
    assert ("Japan", IS_LOCATED_IN, "Asia") in names
    assert ("Cape Town", IS_CAPITAL_OF, "South Africa") in names
    assert ("Antarctica", IS_LOCATED_IN, "Antarctic") in names
    assert len(store.facts_of(IS_CAPITAL_OF)) == 7
    assert len(store.facts_of(IS_LOCATED_IN)) == 6


def test_load_countries_errors(tmp_path):
    bad_json = tmp_path / "bad.json"
    bad_json.write_text("{not json", encoding="utf-8")
    with pytest.raises(DatasetFormatError):
        load_countries(bad_json)
    no_name = tmp_path / "noname.json"
    no_name.write_text(json.dumps([{"capital": ["X"]}]), encoding="utf-8")
    with pytest.raises(DatasetFormatError, match="record 0"):
        load_countries(no_name)


def test_load_triples_tsv_shares_vocabulary_and_drops_cross_split_duplicates(tmp_path):
    train = write_tsv(tmp_path / "train.txt", [("a", "r", "b"), ("b", "r", "c")])
    valid = write_tsv(tmp_path / "valid.txt", [("a", "r", "b"), ("c", "s", "d")])
    test = write_tsv(tmp_path / "test.txt", [("d", "r", "a")])
    split = load_triples_tsv(train, valid, test)
    assert split.entities.names == ("a", "b", "c", "d")
    assert split.relations.names == ("r", "s")
    assert split.stats() == {"entities": 4, "relations": 2, "train": 2, "valid": 1, "test": 1}
    assert split.valid.entities is split.train.entities


def test_load_triples_tsv_field_count(tmp_path):
    train = tmp_path / "train.txt"
    train.write_text("a\tr\n", encoding="utf-8")
    with pytest.raises(DatasetFormatError, match="3 tab-separated fields"):
        load_triples_tsv(train)


def test_load_triples_tsv_invalid_utf8_names_the_line(tmp_path):
    train = tmp_path / "train.txt"
    train.write_bytes(b"a\tr\tb\n\xff\xfe\tr\tc\n")
    with pytest.raises(DatasetFormatError, match=r"train\.txt:2: invalid UTF-8"):
        load_triples_tsv(train)


@pytest.mark.parametrize("content", [
    b"person_id,person_name\nabe_1,\"Abe\nbob_1,Bob\n",
    b"person_id,person_name\nabe_1,\xff\xfe\n",
    b"",
])
def test_load_genealogy_unreadable_person_table(tmp_path, genealogy_files, content):
    _, relationship_csv = genealogy_files
    persons = tmp_path / "persons.csv"
    persons.write_bytes(content)
    with pytest.raises(DatasetFormatError, match="persons.csv"):
        load_genealogy(persons, relationship_csv)


def test_load_genealogy_malformed_relationship_table(tmp_path, genealogy_files):
    person_csv, _ = genealogy_files
    relationships = tmp_path / "rel.csv"
    relationships.write_bytes(b"person_id_1,relationship_type,person_id_2\nabe_1,\"father,bob_1\n")
    with pytest.raises(DatasetFormatError, match="malformed CSV"):
        load_genealogy(person_csv, relationships)


def test_load_countries_invalid_utf8(tmp_path):
    countries = tmp_path / "countries.json"
    countries.write_bytes(b'[{"name": {"common": "\xff"}}]')
    with pytest.raises(DatasetFormatError, match="invalid UTF-8"):
        load_countries(countries)


def test_read_triples_tsv_against_frozen_vocabulary(tmp_path, chain_store):
    good = write_tsv(tmp_path / "good.txt", [("a", "r1", "f")])
    assert read_triples_tsv(good, chain_store.entities, chain_store.relations).triples.tolist() == [[0, 1, 5]]
    bad = write_tsv(tmp_path / "bad.txt", [("a", "r1", "zz")])
    with pytest.raises(VocabularyMismatchError):
        read_triples_tsv(bad, chain_store.entities, chain_store.relations)


def test_save_triples_tsv(tmp_path, chain_store):
    path = tmp_path / "out" / "train.txt"
    save_triples_tsv(chain_store, path)
    reloaded = read_triples_tsv(path, chain_store.entities, chain_store.relations)
    np.testing.assert_array_equal(reloaded.triples, chain_store.triples)
