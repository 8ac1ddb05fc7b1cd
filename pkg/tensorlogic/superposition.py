"""
Relation matrices as superpositions of entity tensor products.

Only entity embeddings are learned. The matrix of relation r is derived from
the training facts on every forward pass:

    R_r = E^T A_r E = sum over facts (h, r, t) of outer(e_h, e_t)

where E holds the row-normalized embeddings and A_r is the relation's sparse
adjacency. Tail queries score normalize(e_h R_r) against E, head queries
normalize(e_t R_r^T), and two-hop queries chain R_r1 R_r2.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from loguru import logger
from scipy.special import logsumexp
from tqdm import tqdm

from .evaluation import CompBench, FilterIndex, Metrics, evaluate_comp, evaluate_lp
from .exceptions import DivergenceError, NonFiniteError, ParameterValidationError, ShapeError
from .logging import log
from .optim import AdamW, clip_grad_norm
from .store import DatasetSplit, TripleStore, Vocabulary, adjacencies
from .tensor import DEFAULT_SEED, DenseMatrix, SparseBoolMatrix, finite_diff_check, make_rng, row_normalize, \
    row_normalize_vjp, xavier_uniform

NameOrId = Union[str, int]
Validator = Callable[["SuperpositionModel"], float]


class _HeadRows:
    """Rows of one adjacency that hold at least one fact, as a float CSR block"""

    def __init__(self, matrix: SparseBoolMatrix):
        csr = matrix.csr
        self.heads = np.flatnonzero(np.diff(csr.indptr))
        self.block: sp.csr_matrix = csr[self.heads].astype(np.float64)

    @property
    def empty(self) -> bool:
        return len(self.heads) == 0


class SuperpositionModel:
    """
    Raw embedding parameters ``W`` (N x d) plus the immutable training
    adjacencies. ``E`` is always ``row_normalize(W)``.
    """

    def __init__(self, W: DenseMatrix, adjacency: Sequence[SparseBoolMatrix], entities: Vocabulary,
                 relations: Vocabulary, train_triples: Optional[np.ndarray] = None):
        self.W = np.asarray(W, dtype=np.float64)
        if self.W.ndim != 2 or self.W.shape[0] != len(entities):
            raise ShapeError(f"W must be {len(entities)} x d, got {self.W.shape}")
        if len(adjacency) != len(relations):
            raise ShapeError(f"{len(adjacency)} adjacencies for {len(relations)} relations")
        for matrix in adjacency:
            if matrix.shape != (len(entities), len(entities)):
                raise ShapeError(f"Adjacency of shape {matrix.shape} does not match {len(entities)} entities")
        self.adjacency = tuple(adjacency)
        self.entities = entities
        self.relations = relations
        self.train_triples = train_triples
        self._rows = [_HeadRows(matrix) for matrix in self.adjacency]

    @classmethod
    def from_store(cls, W: DenseMatrix, store: TripleStore) -> "SuperpositionModel":
        return cls(W, adjacencies(store), store.entities, store.relations, store.triples)

    @property
    def E(self) -> DenseMatrix:
        return row_normalize(self.W)

    @property
    def dim(self) -> int:
        return self.W.shape[1]

    @property
    def num_entities(self) -> int:
        return self.W.shape[0]

    def entity_id(self, entity: NameOrId) -> int:
        return _resolve(self.entities, entity)

    def relation_id(self, relation: NameOrId) -> int:
        return _resolve(self.relations, relation)

    def relation_matrix(self, r: int, E: Optional[DenseMatrix] = None) -> DenseMatrix:
        return self._relation_parts(r, self.E if E is None else E)[0]

    def relation_matrices(self, E: Optional[DenseMatrix] = None) -> np.ndarray:
        E = self.E if E is None else E
        return np.stack([self._relation_parts(r, E)[0] for r in range(len(self.relations))]) \
            if len(self.relations) else np.zeros((0, self.dim, self.dim))

    def _relation_parts(self, r: int, E: DenseMatrix) -> Tuple[DenseMatrix, DenseMatrix]:
        """R_r and the intermediate A_r[heads] @ E needed for its gradient"""
        rows = self._rows[r]
        if rows.empty:
            return np.zeros((self.dim, self.dim)), np.zeros((0, self.dim))
        propagated = np.asarray(rows.block @ E)
        return E[rows.heads].T @ propagated, propagated

    def scorer(self) -> "SuperpositionScorer":
        return SuperpositionScorer(self.E, self.relation_matrices())

    def __repr__(self) -> str:
        return f"SuperpositionModel(entities={self.num_entities}, relations={len(self.relations)}, dim={self.dim})"


class SuperpositionScorer:
    """Frozen embeddings and relation matrices; implements the link-predictor protocol"""

    def __init__(self, E: DenseMatrix, matrices: np.ndarray):
        self.E = E
        self.matrices = matrices

    @property
    def num_entities(self) -> int:
        return self.E.shape[0]

    def _score(self, queries: DenseMatrix) -> DenseMatrix:
        return row_normalize(queries) @ self.E.T

    def _transform(self, rows: np.ndarray, rels: np.ndarray, transpose: bool = False) -> DenseMatrix:
        """Row i is rows[i] @ R[rels[i]] (or its transpose), grouped by relation"""
        out = np.empty((len(rows), self.E.shape[1]))
        for rel in np.unique(rels):
            idx = np.flatnonzero(rels == rel)
            matrix = self.matrices[rel]
            out[idx] = rows[idx] @ (matrix.T if transpose else matrix)
        return out

    def score_tails(self, heads: np.ndarray, rels: np.ndarray) -> DenseMatrix:
        return self._score(self._transform(self.E[heads], np.asarray(rels)))

    def score_heads(self, tails: np.ndarray, rels: np.ndarray) -> DenseMatrix:
        return self._score(self._transform(self.E[tails], np.asarray(rels), transpose=True))

    def score_compositions(self, heads: np.ndarray, first: np.ndarray, second: np.ndarray) -> DenseMatrix:
        step = self._transform(self.E[heads], np.asarray(first))
        return self._score(self._transform(step, np.asarray(second)))


@dataclass
class SuperTrainConfig:
    learning_rate: float = 5e-4
    weight_decay: float = 1e-5
    batch_size: int = 1024
    temperature: float = 0.1
    clip_norm: float = 1.0
    epochs: int = 50
    validate_every: int = 10
    seed: int = DEFAULT_SEED
    dim: int = 256
    valid_sample: Optional[int] = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ParameterValidationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise ParameterValidationError(f"weight_decay must be non-negative, got {self.weight_decay}")
        if not self.temperature > 0:
            raise ParameterValidationError(f"temperature must be positive, got {self.temperature}")
        if not self.clip_norm > 0:
            raise ParameterValidationError(f"clip_norm must be positive, got {self.clip_norm}")
        for name in ("batch_size", "epochs", "validate_every", "dim"):
            if getattr(self, name) < 1:
                raise ParameterValidationError(f"{name} must be at least 1, got {getattr(self, name)}")
        if self.valid_sample is not None and self.valid_sample < 1:
            raise ParameterValidationError(f"valid_sample must be at least 1, got {self.valid_sample}")


@dataclass
class TrainingHistory:
    losses: List[float] = field(default_factory=list)
    grad_norms: List[float] = field(default_factory=list)
    clipped_norms: List[float] = field(default_factory=list)
    validation: List[Tuple[int, float]] = field(default_factory=list)
    best_epoch: Optional[int] = None
    best_mrr: Optional[float] = None

    def to_dict(self) -> Dict[str, object]:
        return {
            "losses": list(self.losses),
            "max_grad_norm": max(self.grad_norms) if self.grad_norms else None,
            "max_clipped_norm": max(self.clipped_norms) if self.clipped_norms else None,
            "validation": [{"epoch": epoch, "mrr": mrr} for epoch, mrr in self.validation],
            "best_epoch": self.best_epoch,
            "best_mrr": self.best_mrr,
        }


def _resolve(vocab: Vocabulary, item: NameOrId) -> int:
    if isinstance(item, str):
        return vocab[item]
    if not 0 <= int(item) < len(vocab):
        raise ShapeError(f"{vocab.kind.capitalize()} id {item} out of range [0, {len(vocab)})")
    return int(item)


def relation_matrix(model: SuperpositionModel, r: NameOrId) -> DenseMatrix:
    return model.relation_matrix(model.relation_id(r))


def predict_tail(model: SuperpositionModel, h: NameOrId, r: NameOrId) -> np.ndarray:
    E = model.E
    query = E[model.entity_id(h)] @ model.relation_matrix(model.relation_id(r), E)
    return row_normalize(query[None, :])[0] @ E.T


def predict_head(model: SuperpositionModel, t: NameOrId, r: NameOrId) -> np.ndarray:
    E = model.E
    query = E[model.entity_id(t)] @ model.relation_matrix(model.relation_id(r), E).T
    return row_normalize(query[None, :])[0] @ E.T


def compose_predict(model: SuperpositionModel, a: NameOrId, r1: NameOrId, r2: NameOrId) -> np.ndarray:
    """Scores of normalize(e_a R_r1 R_r2) against every entity"""
    E = model.E
    first = model.relation_matrix(model.relation_id(r1), E)
    second = model.relation_matrix(model.relation_id(r2), E)
    query = (E[model.entity_id(a)] @ first) @ second
    return row_normalize(query[None, :])[0] @ E.T


def rank_entities(model: SuperpositionModel, scores: np.ndarray, topk: Optional[int] = None) -> List[Tuple[str, float]]:
    order = np.argsort(-scores, kind="stable")[:topk]
    return [(model.entities.name(int(i)), float(scores[i])) for i in order]


def _cross_entropy(scores: DenseMatrix, targets: np.ndarray, scale: float) -> Tuple[np.ndarray, DenseMatrix]:
    """Per-row losses and the gradient of ``scale * sum(losses)`` w.r.t. the scores"""
    log_z = logsumexp(scores, axis=1)
    rows = np.arange(len(targets))
    losses = log_z - scores[rows, targets]
    grad = np.exp(scores - log_z[:, None])
    grad[rows, targets] -= 1.0
    return losses, grad * scale


def bidirectional_loss_and_grads(model: SuperpositionModel, batch: np.ndarray,
                                 temperature: float) -> Tuple[float, Dict[str, np.ndarray]]:
    """
    Average of the tail-prediction and head-prediction cross-entropies with
    scores divided by ``temperature``. The gradient with respect to ``W``
    covers every role E plays: query embedding, relation matrix factor and
    scoring matrix, all through the row normalization.
    """
    batch = np.asarray(batch, dtype=np.int64).reshape(-1, 3)
    if not len(batch):
        raise ParameterValidationError("Cannot compute a loss over an empty batch")
    if not temperature > 0:
        raise ParameterValidationError(f"temperature must be positive, got {temperature}")
    h, r, t = batch[:, 0], batch[:, 1], batch[:, 2]
    b = len(batch)
    E = model.E

    parts = {rel: model._relation_parts(int(rel), E) for rel in np.unique(r)}
    tail_q = np.empty((b, model.dim))
    head_q = np.empty((b, model.dim))
    for rel, (R, _) in parts.items():
        idx = np.flatnonzero(r == rel)
        tail_q[idx] = E[h[idx]] @ R
        head_q[idx] = E[t[idx]] @ R.T

    tail_v = row_normalize(tail_q)
    head_v = row_normalize(head_q)
    scale = 0.5 / (b * temperature)
    tail_losses, grad_tail = _cross_entropy(tail_v @ E.T / temperature, t, scale)
    head_losses, grad_head = _cross_entropy(head_v @ E.T / temperature, h, scale)
    per_triple = 0.5 * (tail_losses + head_losses)
    if not np.all(np.isfinite(per_triple)):
        bad = int(np.flatnonzero(~np.isfinite(per_triple))[0])
        raise NonFiniteError(f"Non-finite loss at batch triple {bad}", index=bad)
    loss = float(np.sum(per_triple) / b)

    grad_E = grad_tail.T @ tail_v + grad_head.T @ head_v
    grad_tail_q = row_normalize_vjp(tail_q, grad_tail @ E)
    grad_head_q = row_normalize_vjp(head_q, grad_head @ E)
    for rel, (R, propagated) in parts.items():
        idx = np.flatnonzero(r == rel)
        np.add.at(grad_E, h[idx], grad_tail_q[idx] @ R.T)
        np.add.at(grad_E, t[idx], grad_head_q[idx] @ R)
        grad_R = E[h[idx]].T @ grad_tail_q[idx] + grad_head_q[idx].T @ E[t[idx]]
        rows = model._rows[int(rel)]
        if rows.empty:
            continue
        grad_E[rows.heads] += propagated @ grad_R.T
        grad_E += np.asarray(rows.block.T @ (E[rows.heads] @ grad_R))
    return loss, {"W": row_normalize_vjp(model.W, grad_E)}


def check_gradients(model: SuperpositionModel, batch: np.ndarray, temperature: float, eps: float = 1e-5,
                    max_coords: Optional[int] = None, seed: int = DEFAULT_SEED) -> float:
    """Largest relative error between bidirectional_loss_and_grads and central differences"""
    scratch = SuperpositionModel(model.W.copy(), model.adjacency, model.entities, model.relations, model.train_triples)
    _, grads = bidirectional_loss_and_grads(scratch, batch, temperature)

    def loss_fn(current):
        scratch.W = current["W"]
        return bidirectional_loss_and_grads(scratch, batch, temperature)[0]

    return finite_diff_check(loss_fn, {"W": scratch.W}, grads, eps=eps, max_coords=max_coords, rng=make_rng(seed, 9))


def lp_validator(split: DatasetSplit, filters: Optional[FilterIndex] = None, sample: Optional[int] = None,
                 seed: int = DEFAULT_SEED) -> Validator:
    """Filtered link-prediction MRR on the validation split (optionally a seeded subsample)"""
    filters = filters or FilterIndex.from_split(split)
    triples = split.valid.triples
    if sample is not None and sample < len(triples):
        triples = triples[np.sort(make_rng(seed, 2).choice(len(triples), size=sample, replace=False))]

    def validate(model: SuperpositionModel) -> float:
        metrics: Metrics = evaluate_lp(model.scorer(), triples, filters)
        return metrics.mrr

    return validate


def comp_validator(bench: CompBench, filters: FilterIndex) -> Validator:
    """Composition MRR on the benchmark's validation paths"""
    def validate(model: SuperpositionModel) -> float:
        return evaluate_comp(model.scorer(), bench, filters, split="valid").mrr

    return validate


def init_model(store: TripleStore, config: SuperTrainConfig) -> SuperpositionModel:
    W = xavier_uniform(store.num_entities, config.dim, make_rng(config.seed, 0))
    return SuperpositionModel.from_store(W, store)


@log("Training superposition model", "Superposition model trained in {elapsed}s")
def train_superposition(split: DatasetSplit, config: SuperTrainConfig, validator: Optional[Validator] = None,
                        progress: bool = False) -> Tuple[SuperpositionModel, TrainingHistory]:
    """
    Seeded mini-batch AdamW with global-norm clipping. Every
    ``validate_every`` epochs the validator scores the model; the parameters
    with the best score are kept (the earlier epoch wins a tie).
    """
    if not len(split.train):
        raise ParameterValidationError("Training split is empty")
    model = init_model(split.train, config)
    validate = validator or lp_validator(split, sample=config.valid_sample, seed=config.seed)
    params = {"W": model.W}
    optimizer = AdamW(params, lr=config.learning_rate, weight_decay=config.weight_decay)
    history = TrainingHistory()
    best_W: Optional[np.ndarray] = None
    triples = split.train.triples

    for epoch in range(1, config.epochs + 1):
        order = make_rng(config.seed, 1, epoch).permutation(len(triples))
        batches = range(0, len(order), config.batch_size)
        epoch_loss = 0.0
        for start in tqdm(batches, desc=f"epoch {epoch}", disable=not progress, leave=False):
            batch = triples[order[start:start + config.batch_size]]
            try:
                loss, grads = bidirectional_loss_and_grads(model, batch, config.temperature)
            except NonFiniteError as error:
                raise DivergenceError(f"Training diverged at epoch {epoch}: {error}", epoch) from error
            clipped, norm = clip_grad_norm(grads, config.clip_norm)
            history.grad_norms.append(norm)
            history.clipped_norms.append(float(np.linalg.norm(clipped["W"])))
            optimizer.step(clipped)
            epoch_loss += loss * len(batch)
        if not np.all(np.isfinite(model.W)):
            raise DivergenceError(f"Parameters became non-finite at epoch {epoch}", epoch)
        history.losses.append(epoch_loss / len(triples))
        logger.debug(f"Epoch {epoch}: loss {history.losses[-1]:.6f}")

        if epoch % config.validate_every == 0:
            mrr = float(validate(model))
            history.validation.append((epoch, mrr))
            if history.best_mrr is None or mrr > history.best_mrr:
                history.best_mrr, history.best_epoch = mrr, epoch
                best_W = model.W.copy()
                logger.success(f"Epoch {epoch}: validation MRR {mrr:.4f} (new best)")
            else:
                logger.info(f"Epoch {epoch}: validation MRR {mrr:.4f} (best {history.best_mrr:.4f} at {history.best_epoch})")

    if best_W is not None:
        model.W[:] = best_W
    return model, history
