"""
Learnable entity embeddings with one d x d transformation matrix per relation.

A fact (s, r, o) is scored as softmax over all entities of (E[s] M[r]) E^T,
trained full-batch with Adam. Composing relations chains their matrices, so
``E[s] M[r1] M[r2]`` answers two-hop queries never seen during training.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from loguru import logger
from scipy.special import logsumexp
from tqdm import tqdm

from .exceptions import DivergenceError, NonFiniteError, ParameterValidationError, ShapeError
from .logging import log
from .optim import Adam
from .store import IS_CAPITAL_OF, IS_LOCATED_IN, TripleStore, Vocabulary
from .tensor import DEFAULT_SEED, DenseMatrix, batched_transform, finite_diff_check, make_rng, row_normalize, \
    xavier_uniform

Ranking = List[Tuple[str, float]]
NameOrId = Union[str, int]

COMPOSITION_CHAIN = (IS_CAPITAL_OF, IS_LOCATED_IN)
ZERO_SHOT_QUERIES: Tuple[Tuple[str, str], ...] = (
    ("Tokyo", "Asia"),
    ("Berlin", "Europe"),
    ("Cairo", "Africa"),
    ("Lima", "Americas"),
    ("Canberra", "Oceania"),
    ("New Delhi", "Asia"),
    ("King Edward Point", "Antarctic"),
)


@dataclass
class EmbedModel:
    E: DenseMatrix
    M: np.ndarray
    entities: Vocabulary
    relations: Vocabulary

    def __post_init__(self):
        self.E = np.asarray(self.E, dtype=np.float64)
        self.M = np.asarray(self.M, dtype=np.float64)
        if self.E.ndim != 2 or self.E.shape[0] != len(self.entities):
            raise ShapeError(f"E must be {len(self.entities)} x d, got {self.E.shape}")
        d = self.E.shape[1]
        if self.M.shape != (len(self.relations), d, d):
            raise ShapeError(f"M must be {(len(self.relations), d, d)}, got {self.M.shape}")

    @property
    def dim(self) -> int:
        return self.E.shape[1]

    def entity_id(self, entity: NameOrId) -> int:
        return _resolve(self.entities, entity)

    def relation_id(self, relation: NameOrId) -> int:
        return _resolve(self.relations, relation)


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    epochs: int = 500
    dim: int = 64
    seed: int = DEFAULT_SEED
    normalize_embeddings: bool = True

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ParameterValidationError(f"epochs must be at least 1, got {self.epochs}")
        if self.dim < 1:
            raise ParameterValidationError(f"dim must be at least 1, got {self.dim}")


@dataclass
class LossCurve:
    losses: List[float] = field(default_factory=list)

    @property
    def initial(self) -> float:
        return self.losses[0]

    @property
    def final(self) -> float:
        return self.losses[-1]

    def __len__(self) -> int:
        return len(self.losses)


@dataclass(frozen=True)
class ZeroShotResult:
    subject: str
    expected: str
    predicted: str
    expected_rank: int

    @property
    def correct(self) -> bool:
        return self.predicted == self.expected

    def to_dict(self) -> Dict[str, object]:
        return {"subject": self.subject, "expected": self.expected, "predicted": self.predicted,
                "expected_rank": self.expected_rank, "correct": self.correct}


def _resolve(vocab: Vocabulary, item: NameOrId) -> int:
    if isinstance(item, str):
        return vocab[item]
    if not 0 <= int(item) < len(vocab):
        raise ShapeError(f"{vocab.kind.capitalize()} id {item} out of range [0, {len(vocab)})")
    return int(item)


def _ids(values: Sequence[int], bound: int, what: str) -> np.ndarray:
    array = np.asarray(values, dtype=np.int64).reshape(-1)
    if len(array) and (array.min() < 0 or array.max() >= bound):
        raise ShapeError(f"{what} id out of range [0, {bound})")
    return array


def forward(model: EmbedModel, subj_ids: Sequence[int], rel_ids: Sequence[int]) -> DenseMatrix:
    """Row i is E[subj_ids[i]] @ M[rel_ids[i]]"""
    subjects = _ids(subj_ids, len(model.entities), "Entity")
    relations = _ids(rel_ids, len(model.relations), "Relation")
    if len(subjects) != len(relations):
        raise ShapeError(f"{len(subjects)} subjects but {len(relations)} relations")
    if not len(subjects):
        return np.zeros((0, model.dim))
    return batched_transform(model.E[subjects], model.M[relations])


def score_all(pred: DenseMatrix, model: EmbedModel) -> DenseMatrix:
    pred = np.asarray(pred, dtype=np.float64)
    if pred.ndim != 2 or pred.shape[1] != model.dim:
        raise ShapeError(f"Predictions of shape {pred.shape} do not match embedding width {model.dim}")
    return pred @ model.E.T


def _sorted_facts(facts: Union[TripleStore, np.ndarray]) -> Tuple[np.ndarray, np.ndarray]:
    array = facts.triples if isinstance(facts, TripleStore) else np.asarray(facts, dtype=np.int64).reshape(-1, 3)
    order = np.lexsort((array[:, 2], array[:, 1], array[:, 0]))
    return array[order], order


def ce_loss_and_grads(model: EmbedModel,
                      facts: Union[TripleStore, np.ndarray]) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Mean cross-entropy of predicting o from (s, r), with exact gradients for
    E (both as query and as scoring matrix) and for every M.

    Facts are reduced in sorted order so the loss does not depend on the order
    they were given in.
    """
    triples, order = _sorted_facts(facts)
    if not len(triples):
        raise ParameterValidationError("Cannot compute a loss over an empty fact set")
    s, r, o = triples[:, 0], triples[:, 1], triples[:, 2]
    n = len(triples)

    query = model.E[s]
    pred = forward(model, s, r)
    scores = score_all(pred, model)
    log_z = logsumexp(scores, axis=1)
    per_fact = log_z - scores[np.arange(n), o]
    if not np.all(np.isfinite(per_fact)):
        bad = int(order[np.flatnonzero(~np.isfinite(per_fact))[0]])
        raise NonFiniteError(f"Non-finite loss at fact {bad}", index=bad)
    loss = float(np.sum(per_fact) / n)

    grad_scores = np.exp(scores - log_z[:, None])
    grad_scores[np.arange(n), o] -= 1.0
    grad_scores /= n

    grad_E = grad_scores.T @ pred
    grad_pred = grad_scores @ model.E
    grad_M = np.zeros_like(model.M)
    np.add.at(grad_M, r, query[:, :, None] * grad_pred[:, None, :])
    grad_query = np.matmul(grad_pred[:, None, :], model.M[r].transpose(0, 2, 1))[:, 0, :]
    np.add.at(grad_E, s, grad_query)
    return loss, {"E": grad_E, "M": grad_M}


def check_gradients(model: EmbedModel, facts: Union[TripleStore, np.ndarray],
                    eps: float = 1e-5, max_coords: Optional[int] = None, seed: int = DEFAULT_SEED) -> float:
    """Largest relative error between ce_loss_and_grads and central differences"""
    params = {"E": model.E.copy(), "M": model.M.copy()}
    scratch = EmbedModel(params["E"], params["M"], model.entities, model.relations)
    _, grads = ce_loss_and_grads(scratch, facts)

    def loss_fn(current):
        scratch.E, scratch.M = current["E"], current["M"]
        return ce_loss_and_grads(scratch, facts)[0]

    return finite_diff_check(loss_fn, params, grads, eps=eps, max_coords=max_coords, rng=make_rng(seed, 9))


def init_model(entities: Vocabulary, relations: Vocabulary, config: TrainConfig) -> EmbedModel:
    E = xavier_uniform(len(entities), config.dim, make_rng(config.seed, 0))
    M = np.stack([xavier_uniform(config.dim, config.dim, make_rng(config.seed, 1, r)) for r in range(len(relations))])
    if config.normalize_embeddings:
        E = row_normalize(E)
    return EmbedModel(E, M, entities, relations)


@log("Training embedding model", "Embedding model trained in {elapsed}s")
def train(facts: TripleStore, config: TrainConfig, progress: bool = False) -> Tuple[EmbedModel, LossCurve]:
    """
    Full-batch Adam on every fact. With ``normalize_embeddings`` the rows of E
    are projected back to unit length after every optimizer step.
    """
    model = init_model(facts.entities, facts.relations, config)
    params = {"E": model.E, "M": model.M}
    optimizer = Adam(params, lr=config.learning_rate)
    curve = LossCurve()
    for epoch in tqdm(range(1, config.epochs + 1), desc="epochs", disable=not progress):
        try:
            loss, grads = ce_loss_and_grads(model, facts)
        except NonFiniteError as error:
            raise DivergenceError(f"Training diverged at epoch {epoch}: {error}", epoch) from error
        curve.losses.append(loss)
        optimizer.step(grads)
        if config.normalize_embeddings:
            params["E"][:] = row_normalize(params["E"])
        if not (np.all(np.isfinite(params["E"])) and np.all(np.isfinite(params["M"]))):
            raise DivergenceError(f"Parameters became non-finite at epoch {epoch}", epoch)
        if epoch == 1 or epoch % 50 == 0:
            logger.debug(f"Epoch {epoch}: loss {loss:.6f}")
    logger.info(f"Loss {curve.initial:.4f} -> {curve.final:.6f} over {config.epochs} epochs")
    return model, curve


def _rank(model: EmbedModel, scores: np.ndarray, topk: Optional[int]) -> Ranking:
    order = np.argsort(-scores, kind="stable")
    if topk is not None:
        order = order[:topk]
    return [(model.entities.name(int(i)), float(scores[i])) for i in order]


def compose_scores(model: EmbedModel, subject: NameOrId, chain: Sequence[NameOrId]) -> np.ndarray:
    if not chain:
        raise ParameterValidationError("A relation chain needs at least one relation")
    rel_ids = [model.relation_id(r) for r in chain]
    pred = forward(model, [model.entity_id(subject)], rel_ids[:1])
    for r in rel_ids[1:]:
        pred = batched_transform(pred, model.M[[r]])
    return score_all(pred, model)[0]


def compose_infer(model: EmbedModel, subject: NameOrId, chain: Sequence[NameOrId],
                  topk: Optional[int] = None) -> Ranking:
    """Entities ranked by (E[s] M[r1] ... M[rn]) . E[o]; ties go to the lower ordinal"""
    return _rank(model, compose_scores(model, subject, chain), topk)


def zero_shot_table(model: EmbedModel,
                    queries: Sequence[Tuple[str, str]] = ZERO_SHOT_QUERIES,
                    chain: Sequence[NameOrId] = COMPOSITION_CHAIN) -> List[ZeroShotResult]:
    results = []
    for subject, expected in queries:
        scores = compose_scores(model, subject, chain)
        order = np.argsort(-scores, kind="stable")
        expected_id = model.entity_id(expected)
        rank = int(np.flatnonzero(order == expected_id)[0]) + 1
        results.append(ZeroShotResult(subject, expected, model.entities.name(int(order[0])), rank))
    correct = sum(result.correct for result in results)
    logger.info(f"Zero-shot composition: {correct}/{len(results)} correct")
    return results


def training_accuracy(model: EmbedModel, facts: Union[TripleStore, np.ndarray]) -> float:
    """Fraction of facts whose object is the top-scoring entity"""
    triples, _ = _sorted_facts(facts)
    if not len(triples):
        return 0.0
    scores = score_all(forward(model, triples[:, 0], triples[:, 1]), model)
    best = np.argmax(scores, axis=1)
    return float(np.mean(best == triples[:, 2]))
