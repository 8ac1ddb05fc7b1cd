"""
Entity/relation vocabularies, triple storage and dataset ingestion.

Vocabularies are ordered by first appearance in file-read order, so every
downstream index is reproducible from the input files alone.
"""

import difflib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from loguru import logger

from .exceptions import DatasetFormatError, SchemaError, SelfLoopError, UnknownNameError, VocabularyMismatchError
from .logging import Level, log
from .reports import atomic_write_text
from .tensor import SparseBoolMatrix

PathLike = Union[str, Path]
Triple = Tuple[int, int, int]

PARENT_LABELS = ("father", "mother")
CHILD_LABELS = ("son", "daughter")

IS_CAPITAL_OF = "is_capital_of"
IS_LOCATED_IN = "is_located_in"


class Vocabulary:
    """Bijection between unique names and ordinals [0, size)"""

    def __init__(self, kind: str = "name", names: Iterable[str] = ()):
        self.kind = kind
        self._names: List[str] = []
        self._index: Dict[str, int] = {}
        self._frozen = False
        for name in names:
            if name in self._index:
                raise DatasetFormatError(f"Duplicate {kind} '{name}' in vocabulary")
            self.add(name)

    def add(self, name: str) -> int:
        """Intern ``name``, returning its ordinal"""
        ordinal = self._index.get(name)
        if ordinal is not None:
            return ordinal
        if self._frozen:
            raise UnknownNameError(self.kind, name, self.suggest(name))
        ordinal = len(self._names)
        self._names.append(name)
        self._index[name] = ordinal
        return ordinal

    def freeze(self) -> "Vocabulary":
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(self._names)

    def name(self, ordinal: int) -> str:
        return self._names[ordinal]

    def get(self, name: str, default: Optional[int] = None) -> Optional[int]:
        return self._index.get(name, default)

    def suggest(self, name: str, limit: int = 5) -> List[str]:
        return difflib.get_close_matches(name, self._names, n=limit, cutoff=0.6)

    def __getitem__(self, name: str) -> int:
        try:
            return self._index[name]
        except KeyError:
            raise UnknownNameError(self.kind, name, self.suggest(name)) from None

    def __contains__(self, name: object) -> bool:
        return name in self._index

    def __len__(self) -> int:
        return len(self._names)

    def __iter__(self) -> Iterator[str]:
        return iter(self._names)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Vocabulary):
            return NotImplemented
        return self._names == other._names

    def __repr__(self) -> str:
        return f"Vocabulary({self.kind}, size={len(self)})"


class TripleStore:
    """
    Deduplicated (head, relation, tail) facts over shared vocabularies.

    Triples keep first-appearance order; the store never changes after
    construction, so it is safe to share between threads.
    """

    def __init__(self, entities: Vocabulary, relations: Vocabulary, triples: Union[np.ndarray, Sequence[Triple]] = ()):
        self.entities = entities
        self.relations = relations
        array = np.array(triples, dtype=np.int64).reshape(-1, 3)
        if len(array):
            if array[:, [0, 2]].min() < 0 or array[:, [0, 2]].max() >= len(entities):
                raise VocabularyMismatchError("Triple references an entity id outside the vocabulary")
            if array[:, 1].min() < 0 or array[:, 1].max() >= len(relations):
                raise VocabularyMismatchError("Triple references a relation id outside the vocabulary")
            _, first = np.unique(array, axis=0, return_index=True)
            array = array[np.sort(first)]
        array.setflags(write=False)
        self._triples = array
        self._set: Optional[FrozenSet[Triple]] = None

    @property
    def triples(self) -> np.ndarray:
        return self._triples

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def triple_set(self) -> FrozenSet[Triple]:
        if self._set is None:
            self._set = frozenset(map(tuple, self._triples.tolist()))
        return self._set

    def __len__(self) -> int:
        return len(self._triples)

    def __iter__(self) -> Iterator[Triple]:
        for h, r, t in self._triples.tolist():
            yield h, r, t

    def __contains__(self, triple: object) -> bool:
        return triple in self.triple_set()

    def relation_id(self, relation: Union[int, str]) -> int:
        if isinstance(relation, str):
            return self.relations[relation]
        if not 0 <= relation < len(self.relations):
            raise UnknownNameError(self.relations.kind, str(relation))
        return int(relation)

    def facts_of(self, relation: Union[int, str]) -> np.ndarray:
        r = self.relation_id(relation)
        return self._triples[self._triples[:, 1] == r]

    def without(self, removed: Iterable[Triple]) -> "TripleStore":
        """Copy of the store minus ``removed``, sharing both vocabularies"""
        drop = set(map(tuple, removed))
        keep = [i for i, triple in enumerate(self._triples.tolist()) if tuple(triple) not in drop]
        return TripleStore(self.entities, self.relations, self._triples[keep])

    def names(self, triple: Triple) -> Tuple[str, str, str]:
        h, r, t = triple
        return self.entities.name(h), self.relations.name(r), self.entities.name(t)

    def stats(self) -> Dict[str, int]:
        return {"entities": self.num_entities, "relations": self.num_relations, "triples": len(self)}

    def __repr__(self) -> str:
        return f"TripleStore(entities={self.num_entities}, relations={self.num_relations}, triples={len(self)})"


@dataclass
class DatasetSplit:
    """Train/valid/test views over one entity and one relation vocabulary"""
    train: TripleStore
    valid: TripleStore
    test: TripleStore
    sources: Dict[str, Path] = field(default_factory=dict)

    @property
    def entities(self) -> Vocabulary:
        return self.train.entities

    @property
    def relations(self) -> Vocabulary:
        return self.train.relations

    def stores(self) -> Dict[str, TripleStore]:
        return {"train": self.train, "valid": self.valid, "test": self.test}

    def stats(self) -> Dict[str, int]:
        return {
            "entities": len(self.entities),
            "relations": len(self.relations),
            "train": len(self.train),
            "valid": len(self.valid),
            "test": len(self.test),
        }


def adjacency(store: TripleStore, relation: Union[int, str]) -> SparseBoolMatrix:
    """N x N Boolean matrix with (h, t) present iff (h, relation, t) is a fact"""
    facts = store.facts_of(relation)
    n = store.num_entities
    return SparseBoolMatrix.from_coords((n, n), facts[:, 0], facts[:, 2])


def adjacencies(store: TripleStore) -> List[SparseBoolMatrix]:
    """One adjacency per relation id, in relation order"""
    return [adjacency(store, r) for r in range(store.num_relations)]


def _read_tsv_lines(path: Path) -> Iterator[Tuple[int, Tuple[str, str, str]]]:
    with open(path, "rb") as f:
        for lineno, raw_bytes in enumerate(f, start=1):
            try:
                raw = raw_bytes.decode("utf-8")
            except UnicodeDecodeError as e:
                raise DatasetFormatError(f"{path}:{lineno}: invalid UTF-8 ({e.reason} at byte {e.start})") from e
            line = raw.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != 3:
                raise DatasetFormatError(f"{path}:{lineno}: expected 3 tab-separated fields, found {len(fields)}")
            yield lineno, (fields[0], fields[1], fields[2])


@log("Loading triple splits", "Triple splits loaded in {elapsed}s", level=Level.DEBUG)
def load_triples_tsv(train: Optional[PathLike] = None,
                     valid: Optional[PathLike] = None,
                     test: Optional[PathLike] = None) -> DatasetSplit:
    """
    Load head<TAB>relation<TAB>tail splits into one DatasetSplit.

    Vocabularies cover the union of all splits in train, valid, test read
    order. A triple already seen in an earlier split is dropped from the later
    one so that no triple belongs to two splits.
    """
    paths = {name: Path(p) for name, p in (("train", train), ("valid", valid), ("test", test)) if p is not None}
    if not paths:
        raise DatasetFormatError("No triple files given")

    entities = Vocabulary("entity")
    relations = Vocabulary("relation")
    seen: Dict[Triple, str] = {}
    collected: Dict[str, List[Triple]] = {"train": [], "valid": [], "test": []}
    for split_name, path in paths.items():
        duplicates = 0
        for _, (h, r, t) in _read_tsv_lines(path):
            triple = (entities.add(h), relations.add(r), entities.add(t))
            owner = seen.get(triple)
            if owner is None:
                seen[triple] = split_name
                collected[split_name].append(triple)
            elif owner != split_name:
                duplicates += 1
        if duplicates:
            logger.warning(f"Dropped {duplicates} triples of {path} already present in an earlier split")
        logger.debug(f"Read {len(collected[split_name])} triples from {path}")

    entities.freeze()
    relations.freeze()
    stores = {name: TripleStore(entities, relations, triples) for name, triples in collected.items()}
    split = DatasetSplit(stores["train"], stores["valid"], stores["test"], sources=paths)
    logger.info(f"Loaded {len(entities)} entities, {len(relations)} relations, "
                f"{len(split.train)}/{len(split.valid)}/{len(split.test)} train/valid/test triples")
    return split


def read_triples_tsv(path: PathLike, entities: Vocabulary, relations: Vocabulary) -> TripleStore:
    """Load a triple file against existing vocabularies; unknown names are an error"""
    path = Path(path)
    triples: List[Triple] = []
    unknown: List[str] = []
    for lineno, (h, r, t) in _read_tsv_lines(path):
        ids = (entities.get(h), relations.get(r), entities.get(t))
        if None in ids:
            unknown.append(f"line {lineno}: {h}\t{r}\t{t}")
            continue
        triples.append((int(ids[0]), int(ids[1]), int(ids[2])))  # type: ignore[arg-type]
    if unknown:
        shown = "; ".join(unknown[:5])
        raise VocabularyMismatchError(f"{path}: {len(unknown)} triples use names outside the model vocabulary ({shown})")
    return TripleStore(entities, relations, triples)


def save_triples_tsv(store: TripleStore, path: PathLike) -> None:
    atomic_write_text(path, "".join("\t".join(store.names(triple)) + "\n" for triple in store))


@dataclass(frozen=True)
class Genealogy:
    """Parent -> child adjacency over the persons incident to a parent edge"""
    parents: SparseBoolMatrix
    people: Vocabulary
    display_names: Mapping[str, str]

    def display(self, ordinal: int) -> str:
        person_id = self.people.name(ordinal)
        return self.display_names.get(person_id, person_id)

    def stats(self) -> Dict[str, int]:
        return {"nodes": len(self.people), "edges": self.parents.nnz}


def _read_csv(path: Path) -> pd.DataFrame:
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except UnicodeDecodeError as e:
        raise DatasetFormatError(f"{path}: invalid UTF-8 ({e.reason} at byte {e.start})") from e
    except pd.errors.EmptyDataError as e:
        raise DatasetFormatError(f"{path}: file is empty") from e
    except pd.errors.ParserError as e:
        raise DatasetFormatError(f"{path}: malformed CSV: {e}") from e


def _require_columns(frame: pd.DataFrame, columns: Sequence[str], path: Path) -> None:
    missing = [c for c in columns if c not in frame.columns]
    if missing:
        raise SchemaError(f"{path}: missing column(s) {', '.join(missing)} (found: {', '.join(map(str, frame.columns))})")


@log("Loading genealogy from {} and {}", "Genealogy loaded in {elapsed}s", format=(0, 1))
def load_genealogy(person_csv: PathLike,
                   relationship_csv: PathLike,
                   person_id_column: str = "person_id",
                   person_name_column: str = "person_name",
                   subject_column: str = "person_id_1",
                   type_column: str = "relationship_type",
                   object_column: str = "person_id_2") -> Genealogy:
    """
    Build the Parent matrix from BibleData person / relationship tables.

    A row (X, label, Y) with label father or mother makes X the parent of Y;
    son or daughter makes Y the parent of X. Other labels are ignored.
    """
    person_csv, relationship_csv = Path(person_csv), Path(relationship_csv)
    persons = _read_csv(person_csv)
    relationships = _read_csv(relationship_csv)
    _require_columns(persons, [person_id_column], person_csv)
    _require_columns(relationships, [subject_column, type_column, object_column], relationship_csv)

    known = set(persons[person_id_column].str.strip())
    if person_name_column in persons.columns:
        names = dict(zip(persons[person_id_column].str.strip(), persons[person_name_column].str.strip()))
    else:
        names = {}

    labels = relationships[type_column].str.strip().str.lower()
    retained = relationships[labels.isin(PARENT_LABELS + CHILD_LABELS)]
    retained_labels = labels[retained.index]
    logger.debug(f"Retained {len(retained)} of {len(relationships)} relationship rows")

    people = Vocabulary("person")
    edges: Dict[Tuple[int, int], None] = {}
    unknown: Dict[str, None] = {}
    loops: List[str] = []
    for subject, label, obj in zip(retained[subject_column].str.strip(), retained_labels, retained[object_column].str.strip()):
        for person in (subject, obj):
            if person not in known:
                unknown[person] = None
        if unknown:
            continue
        if subject == obj:
            loops.append(subject)
            continue
        s, o = people.add(subject), people.add(obj)
        edge = (s, o) if label in PARENT_LABELS else (o, s)
        edges[edge] = None

    if unknown:
        offenders = list(unknown)
        shown = ", ".join(repr(p) for p in offenders[:20])
        raise DatasetFormatError(f"{relationship_csv}: {len(offenders)} unknown person id(s) referenced: {shown}")
    if loops:
        raise SelfLoopError(f"{relationship_csv}: parent edge from a person to themselves: {', '.join(loops[:20])}")

    people.freeze()
    n = len(people)
    parents = SparseBoolMatrix.from_pairs((n, n), list(edges))
    logger.info(f"Genealogy: {n} persons, {parents.nnz} parent edges")
    return Genealogy(parents=parents, people=people, display_names=names)


@log("Loading countries from {}", "Countries loaded in {elapsed}s", format=(0,))
def load_countries(json_path: PathLike) -> TripleStore:
    """
    Extract (capital, is_capital_of, country) and (country, is_located_in,
    region) facts from an mledoze-style countries file.
    """
    json_path = Path(json_path)
    try:
        with open(json_path, "r", encoding="utf-8") as f:
            records = json.load(f)
    except json.JSONDecodeError as e:
        raise DatasetFormatError(f"{json_path}: invalid JSON: {e}") from e
    except UnicodeDecodeError as e:
        raise DatasetFormatError(f"{json_path}: invalid UTF-8 ({e.reason} at byte {e.start})") from e
    if not isinstance(records, list):
        raise DatasetFormatError(f"{json_path}: expected a JSON array of country records")

    entities = Vocabulary("entity")
    relations = Vocabulary("relation", [IS_CAPITAL_OF, IS_LOCATED_IN])
    capital_of, located_in = relations[IS_CAPITAL_OF], relations[IS_LOCATED_IN]
    triples: List[Triple] = []
    for index, record in enumerate(records):
        try:
            country = record["name"]["common"]
        except (KeyError, TypeError):
            raise DatasetFormatError(f"{json_path}: record {index} has no name.common field") from None
        capitals = record.get("capital") or []
        if isinstance(capitals, str):
            capitals = [capitals]
        for capital in capitals:
            if capital:
                triples.append((entities.add(capital), capital_of, entities.add(country)))
        region = record.get("region")
        if region:
            triples.append((entities.add(country), located_in, entities.add(region)))

    entities.freeze()
    relations.freeze()
    store = TripleStore(entities, relations, triples)
    logger.info(f"Countries: {len(entities)} entities, {len(store)} facts "
                f"({len(store.facts_of(capital_of))} capital, {len(store.facts_of(located_in))} region)")
    return store
