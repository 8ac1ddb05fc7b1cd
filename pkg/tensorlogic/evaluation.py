"""
Filtered ranking metrics and the two-hop composition benchmark.

Ranks are pessimistic: every unmasked entity scoring at least as high as the
target counts against it, the target included.
"""

import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Protocol, Sequence, Set, Tuple, Union

import numpy as np
from loguru import logger
from tqdm import tqdm

from .exceptions import DatasetFormatError, InsufficientPathsError, ParameterValidationError, ShapeError, \
    UnknownNameError, VocabularyMismatchError
from .logging import log
from .reports import atomic_write_text
from .store import DatasetSplit, TripleStore, Vocabulary
from .tensor import make_rng

BENCH_FORMAT = "tensorlogic-comp-bench"
BENCH_VERSION = 1
DEDUP_RULE = "a,r_direct,c"
HITS_AT = (1, 3, 10)

Triples = Union[TripleStore, np.ndarray]


class LinkPredictor(Protocol):
    @property
    def num_entities(self) -> int: ...

    def score_tails(self, heads: np.ndarray, rels: np.ndarray) -> np.ndarray: ...

    def score_heads(self, tails: np.ndarray, rels: np.ndarray) -> np.ndarray: ...


class CompositionPredictor(Protocol):
    @property
    def num_entities(self) -> int: ...

    def score_compositions(self, heads: np.ndarray, first: np.ndarray, second: np.ndarray) -> np.ndarray: ...


_EMPTY = np.zeros(0, dtype=np.int64)


class FilterIndex:
    """Known-true tails per (h, r) and heads per (r, t), over every indexed triple"""

    def __init__(self, triples: Iterable[Tuple[int, int, int]]):
        tails: Dict[Tuple[int, int], Set[int]] = defaultdict(set)
        heads: Dict[Tuple[int, int], Set[int]] = defaultdict(set)
        for h, r, t in triples:
            tails[(h, r)].add(t)
            heads[(r, t)].add(h)
        self._tails = {key: np.array(sorted(values), dtype=np.int64) for key, values in tails.items()}
        self._heads = {key: np.array(sorted(values), dtype=np.int64) for key, values in heads.items()}

    @classmethod
    def from_stores(cls, *stores: TripleStore, extra: Iterable[Tuple[int, int, int]] = ()) -> "FilterIndex":
        triples: List[Tuple[int, int, int]] = [triple for store in stores for triple in store]
        triples.extend(tuple(triple) for triple in extra)  # type: ignore[misc]
        return cls(triples)

    @classmethod
    def from_split(cls, split: DatasetSplit, extra: Iterable[Tuple[int, int, int]] = ()) -> "FilterIndex":
        return cls.from_stores(split.train, split.valid, split.test, extra=extra)

    def tails_of(self, h: int, r: int) -> np.ndarray:
        return self._tails.get((int(h), int(r)), _EMPTY)

    def heads_of(self, r: int, t: int) -> np.ndarray:
        return self._heads.get((int(r), int(t)), _EMPTY)

    def __len__(self) -> int:
        return sum(len(values) for values in self._tails.values())


@dataclass(frozen=True)
class Metrics:
    mrr: float
    hits1: float
    hits3: float
    hits10: float
    count: int

    @classmethod
    def from_ranks(cls, ranks: Sequence[int]) -> "Metrics":
        array = np.asarray(ranks, dtype=np.float64)
        if not len(array):
            raise ParameterValidationError("Cannot compute metrics over zero queries")
        hits = [float(np.mean(array <= k)) for k in HITS_AT]
        return cls(float(np.mean(1.0 / array)), hits[0], hits[1], hits[2], len(array))

    def to_dict(self) -> Dict[str, float]:
        return {"mrr": self.mrr, "hits@1": self.hits1, "hits@3": self.hits3, "hits@10": self.hits10,
                "count": self.count}


def filtered_rank(scores: np.ndarray, target: int, known: Iterable[int] = ()) -> int:
    """1 + unmasked entities scoring at least the target's score, excluding the target itself"""
    scores = np.asarray(scores)
    if not 0 <= target < len(scores):
        raise ShapeError(f"Target id {target} out of range [0, {len(scores)})")
    candidates = scores >= scores[target]
    known = np.asarray(list(known) if not isinstance(known, np.ndarray) else known, dtype=np.int64)
    if len(known):
        candidates[known] = False
    candidates[target] = True
    return int(np.count_nonzero(candidates))


def random_baseline_mrr(num_entities: int) -> float:
    """Expected MRR of a uniformly random ranking: H_N / N"""
    if num_entities < 1:
        raise ParameterValidationError(f"num_entities must be positive, got {num_entities}")
    return float(np.sum(1.0 / np.arange(1, num_entities + 1)) / num_entities)


def _as_array(triples: Triples) -> np.ndarray:
    return triples.triples if isinstance(triples, TripleStore) else np.asarray(triples, dtype=np.int64).reshape(-1, 3)


@log("Evaluating link prediction", "Link prediction evaluated in {elapsed}s")
def evaluate_lp(predictor: LinkPredictor, triples: Triples, filters: FilterIndex, batch_size: int = 256,
                progress: bool = False) -> Metrics:
    """Tail and head prediction for every triple, averaged over 2 x len(triples) queries"""
    array = _as_array(triples)
    if len(array) and array[:, [0, 2]].max() >= predictor.num_entities:
        raise VocabularyMismatchError(f"Triples reference entities beyond the model's {predictor.num_entities}")
    ranks: List[int] = []
    for start in tqdm(range(0, len(array), batch_size), desc="evaluate", disable=not progress):
        chunk = array[start:start + batch_size]
        h, r, t = chunk[:, 0], chunk[:, 1], chunk[:, 2]
        tail_scores = predictor.score_tails(h, r)
        head_scores = predictor.score_heads(t, r)
        for i in range(len(chunk)):
            ranks.append(filtered_rank(tail_scores[i], int(t[i]), filters.tails_of(h[i], r[i])))
            ranks.append(filtered_rank(head_scores[i], int(h[i]), filters.heads_of(r[i], t[i])))
    metrics = Metrics.from_ranks(ranks)
    logger.info(f"MRR {metrics.mrr:.4f}, Hits@1 {metrics.hits1:.4f}, Hits@3 {metrics.hits3:.4f}, "
                f"Hits@10 {metrics.hits10:.4f} over {metrics.count} queries")
    return metrics


class BenchPath(NamedTuple):
    a: int
    r1: int
    b: int
    r2: int
    c: int
    r_direct: int

    @property
    def direct_edge(self) -> Tuple[int, int, int]:
        return self.a, self.r_direct, self.c

    @property
    def path_edges(self) -> Tuple[Tuple[int, int, int], Tuple[int, int, int]]:
        return (self.a, self.r1, self.b), (self.b, self.r2, self.c)


@dataclass(frozen=True)
class CompBench:
    """Validation paths first, then test paths"""
    paths: Tuple[BenchPath, ...]
    n_valid: int
    seed: int

    @property
    def valid(self) -> Tuple[BenchPath, ...]:
        return self.paths[:self.n_valid]

    @property
    def test(self) -> Tuple[BenchPath, ...]:
        return self.paths[self.n_valid:]

    @property
    def n_test(self) -> int:
        return len(self.paths) - self.n_valid

    @property
    def removed_edges(self) -> frozenset:
        return frozenset(path.direct_edge for path in self.paths)

    def split(self, name: str) -> Tuple[BenchPath, ...]:
        if name not in ("valid", "test"):
            raise ParameterValidationError(f"Unknown benchmark split '{name}' (choose valid or test)")
        return self.valid if name == "valid" else self.test

    def stats(self) -> Dict[str, int]:
        return {"valid_paths": self.n_valid, "test_paths": self.n_test, "removed_edges": len(self.removed_edges)}


class _PathIndex:
    def __init__(self, store: TripleStore):
        self.outgoing: Dict[int, Dict[int, List[int]]] = defaultdict(lambda: defaultdict(list))
        self.incoming: Dict[int, Dict[int, List[int]]] = defaultdict(lambda: defaultdict(list))
        self.direct: Dict[Tuple[int, int], List[int]] = defaultdict(list)
        for h, r, t in store:
            self.outgoing[h][t].append(r)
            self.incoming[t][h].append(r)
            self.direct[(h, t)].append(r)

    def unique_direct(self) -> List[Tuple[int, int, int]]:
        """(a, r_direct, c) for pairs linked by exactly one relation, sorted"""
        return sorted((a, rels[0], c) for (a, c), rels in self.direct.items() if len(rels) == 1 and a != c)

    def paths(self, a: int, c: int) -> List[Tuple[int, int, int]]:
        """(b, r1, r2) for every two-hop path a -r1-> b -r2-> c with b distinct from a and c"""
        out = self.outgoing.get(a, {})
        into = self.incoming.get(c, {})
        middle = sorted(set(out) & set(into) - {a, c})
        return [(b, r1, r2) for b in middle for r1 in sorted(out[b]) for r2 in sorted(into[b])]


@log("Building composition benchmark", "Composition benchmark built in {elapsed}s")
def build_comp_bench(train: TripleStore, n_valid: int, n_test: int,
                     seed: int = 42) -> Tuple[CompBench, TripleStore]:
    """
    Sample two-hop paths a -r1-> b -r2-> c from ``train`` whose endpoints are
    also joined by exactly one direct edge (a, r_direct, c), then remove those
    direct edges.

    Candidates (one per direct edge) are visited in a seeded uniform order. A
    candidate is accepted when some path of it survives every removal so far
    and its own direct edge is not a path edge of an accepted path; its path is
    the smallest surviving (b, r1, r2).
    """
    if n_valid < 1 or n_test < 0:
        raise ParameterValidationError(f"Need at least one validation path and no negative counts, got {n_valid} + {n_test}")
    wanted = n_valid + n_test
    index = _PathIndex(train)
    candidates = index.unique_direct()
    order = make_rng(seed, 3).permutation(len(candidates))

    accepted: List[BenchPath] = []
    removed: Set[Tuple[int, int, int]] = set()
    used: Set[Tuple[int, int, int]] = set()
    for position in order:
        a, r_direct, c = candidates[position]
        if (a, r_direct, c) in used:
            continue
        for b, r1, r2 in index.paths(a, c):
            path = BenchPath(a, r1, b, r2, c, r_direct)
            if not any(edge in removed for edge in path.path_edges):
                accepted.append(path)
                removed.add(path.direct_edge)
                used.update(path.path_edges)
                break
        if len(accepted) == wanted:
            break
    if len(accepted) < wanted:
        raise InsufficientPathsError(
            f"Only {len(accepted)} qualifying two-hop paths in {len(candidates)} unique direct edges, {wanted} requested")

    bench = CompBench(tuple(accepted), n_valid, seed)
    reduced = train.without(bench.removed_edges)
    logger.info(f"Benchmark: {n_valid} valid + {n_test} test paths; train {len(train)} -> {len(reduced)} triples")
    return bench, reduced


def save_bench(bench: CompBench, path: Union[str, Path], entities: Vocabulary, relations: Vocabulary) -> None:
    header = {"format": BENCH_FORMAT, "version": BENCH_VERSION, "dedup": DEDUP_RULE, "seed": bench.seed,
              "n_valid": bench.n_valid, "n_test": bench.n_test}
    lines = [json.dumps(header, sort_keys=True)]
    for i, p in enumerate(bench.paths):
        record = {"split": "valid" if i < bench.n_valid else "test",
                  "a": entities.name(p.a), "r1": relations.name(p.r1), "b": entities.name(p.b),
                  "r2": relations.name(p.r2), "c": entities.name(p.c), "r_direct": relations.name(p.r_direct)}
        lines.append(json.dumps(record, sort_keys=True, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + "\n")
    logger.info(f"Saved benchmark with {len(bench.paths)} paths to {path}")


def load_bench(path: Union[str, Path], entities: Vocabulary, relations: Vocabulary) -> CompBench:
    path = Path(path)
    try:
        lines = [line for line in path.read_text(encoding="utf-8").splitlines() if line.strip()]
    except UnicodeDecodeError as error:
        raise DatasetFormatError(f"{path}: invalid UTF-8 ({error.reason} at byte {error.start})") from error
    try:
        header = json.loads(lines[0]) if lines else {}
        records = [json.loads(line) for line in lines[1:]]
    except json.JSONDecodeError as error:
        raise DatasetFormatError(f"{path}:{error.lineno}: invalid JSON ({error.msg})") from error
    if header.get("format") != BENCH_FORMAT or header.get("version") != BENCH_VERSION:
        raise DatasetFormatError(f"{path}: not a version {BENCH_VERSION} composition benchmark")

    paths = {"valid": [], "test": []}  # type: Dict[str, List[BenchPath]]
    for lineno, record in enumerate(records, start=2):
        try:
            split = record["split"]
            paths[split].append(BenchPath(entities[record["a"]], relations[record["r1"]], entities[record["b"]],
                                          relations[record["r2"]], entities[record["c"]],
                                          relations[record["r_direct"]]))
        except UnknownNameError:
            raise
        except (KeyError, TypeError) as error:
            raise DatasetFormatError(f"{path}:{lineno}: malformed benchmark record") from error
    if len(paths["valid"]) != header.get("n_valid") or len(paths["test"]) != header.get("n_test"):
        raise DatasetFormatError(f"{path}: path counts do not match the header")
    return CompBench(tuple(paths["valid"] + paths["test"]), len(paths["valid"]), int(header.get("seed", 0)))


@log("Evaluating composition", "Composition evaluated in {elapsed}s")
def evaluate_comp(predictor: CompositionPredictor, bench: CompBench, filters: FilterIndex,
                  split: str = "test") -> Metrics:
    """Rank c for normalize(e_a R_r1 R_r2), filtered by the known tails of (a, r_direct)"""
    paths = bench.split(split)
    if not paths:
        raise ParameterValidationError(f"Benchmark has no {split} paths")
    array = np.array(paths, dtype=np.int64)
    if max(array[:, 0].max(), array[:, 2].max(), array[:, 4].max()) >= predictor.num_entities:
        raise VocabularyMismatchError(f"Benchmark references entities beyond the model's {predictor.num_entities}")
    scores = predictor.score_compositions(array[:, 0], array[:, 1], array[:, 3])
    ranks = [filtered_rank(scores[i], p.c, filters.tails_of(p.a, p.r_direct)) for i, p in enumerate(paths)]
    metrics = Metrics.from_ranks(ranks)
    logger.info(f"Composition MRR {metrics.mrr:.4f}, Hits@1 {metrics.hits1:.4f}, Hits@10 {metrics.hits10:.4f} "
                f"over {metrics.count} paths")
    return metrics
