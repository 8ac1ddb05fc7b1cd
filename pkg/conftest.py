"""
Shared fixtures: tiny genealogy/countries/triple files written to tmp_path, and
the real datasets located through TENSORLOGIC_DATA.
"""

import json
import os
from pathlib import Path
from typing import List, Tuple

import numpy as np
import pytest
from loguru import logger

from tensorlogic.store import TripleStore, Vocabulary

DATA_ENV = "TENSORLOGIC_DATA"

# parent -> child over six people: abe -> bob -> cal -> dan, abe -> eve, eve -> fay
GENEALOGY_PERSONS = [
    ("abe_1", "Abe"),
    ("bob_1", "Bob"),
    ("cal_1", "Cal"),
    ("dan_1", "Dan"),
    ("eve_1", "Eve"),
    ("fay_1", "Fay"),
    ("gus_1", "Gus"),
]
GENEALOGY_RELATIONSHIPS = [
    ("abe_1", "father", "bob_1"),
    ("cal_1", "son", "bob_1"),
    ("dan_1", "daughter", "cal_1"),
    ("abe_1", "father", "eve_1"),
    ("eve_1", "mother", "fay_1"),
    ("abe_1", "husband", "gus_1"),
    ("bob_1", "father", "cal_1"),
]

COUNTRIES = [
    {"name": {"common": "Japan"}, "capital": ["Tokyo"], "region": "Asia"},
    {"name": {"common": "Germany"}, "capital": ["Berlin"], "region": "Europe"},
    {"name": {"common": "Egypt"}, "capital": ["Cairo"], "region": "Africa"},
    {"name": {"common": "Peru"}, "capital": ["Lima"], "region": "Americas"},
    {"name": {"common": "South Africa"}, "capital": ["Pretoria", "Bloemfontein", "Cape Town"], "region": "Africa"},
    {"name": {"common": "Antarctica"}, "capital": [], "region": "Antarctic"},
]


@pytest.fixture(autouse=True)
def _quiet_logs():
    logger.remove()
    yield


def write_tsv(path: Path, rows: List[Tuple[str, str, str]]) -> Path:
    path.write_text("".join("\t".join(row) + "\n" for row in rows), encoding="utf-8")
    return path


@pytest.fixture
def genealogy_files(tmp_path):
    person_csv = tmp_path / "persons.csv"
    relationship_csv = tmp_path / "relationships.csv"
    person_csv.write_text("person_id,person_name\n" + "".join(f"{pid},{name}\n" for pid, name in GENEALOGY_PERSONS),
                          encoding="utf-8")
    relationship_csv.write_text(
        "person_relationship_id,person_id_1,relationship_type,person_id_2\n"
        + "".join(f"{i},{a},{label},{b}\n" for i, (a, label, b) in enumerate(GENEALOGY_RELATIONSHIPS)),
        encoding="utf-8")
    return person_csv, relationship_csv


@pytest.fixture
def countries_file(tmp_path):
    path = tmp_path / "countries.json"
    path.write_text(json.dumps(COUNTRIES), encoding="utf-8")
    return path


@pytest.fixture
def chain_store():
    """Entities a..f with r0: a->b, b->c, d->e and r1: b->c, c->f, e->f"""
    entities = Vocabulary("entity", list("abcdef")).freeze()
    relations = Vocabulary("relation", ["r0", "r1"]).freeze()
    triples = [(0, 0, 1), (1, 0, 2), (3, 0, 4), (1, 1, 2), (2, 1, 5), (4, 1, 5)]
    return TripleStore(entities, relations, triples)


def composition_rows() -> List[Tuple[str, str, str]]:
    """
    Twelve disjoint a -born_in-> b -city_of-> c paths, each shortcut by a
    direct a -nationality-> c edge, plus unrelated filler facts.
    """
    rows = []
    for i in range(12):
        a, b, c = f"person{i}", f"city{i}", f"country{i}"
        rows += [(a, "born_in", b), (b, "city_of", c), (a, "nationality", c)]
    rows += [(f"country{i}", "borders", f"country{i + 1}") for i in range(11)]
    return rows


@pytest.fixture
def composition_split_files(tmp_path):
    train = write_tsv(tmp_path / "train.txt", composition_rows())
    valid = write_tsv(tmp_path / "valid.txt", [("country0", "borders", "country2"), ("person0", "born_in", "city1")])
    test = write_tsv(tmp_path / "test.txt", [("country3", "borders", "country5"), ("person2", "born_in", "city3")])
    return train, valid, test


def random_store(num_entities: int, num_relations: int, num_facts: int, seed: int) -> TripleStore:
    rng = np.random.default_rng(seed)
    entities = Vocabulary("entity", [f"e{i}" for i in range(num_entities)]).freeze()
    relations = Vocabulary("relation", [f"r{i}" for i in range(num_relations)]).freeze()
    triples = np.stack([rng.integers(0, num_entities, num_facts), rng.integers(0, num_relations, num_facts),
                        rng.integers(0, num_entities, num_facts)], axis=1)
    return TripleStore(entities, relations, triples)


@pytest.fixture(scope="session")
def data_dir():
    location = os.environ.get(DATA_ENV)
    if not location:
        pytest.skip(f"{DATA_ENV} is not set")
    return Path(location)


def require(path: Path) -> Path:
    if not path.exists():
        pytest.skip(f"{path} not available")
    return path
