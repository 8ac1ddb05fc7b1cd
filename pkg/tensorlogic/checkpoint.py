"""
Model checkpoints as uncompressed ``.npz`` archives.

Every archive carries ``format`` and ``version`` scalars, float payloads as
little-endian ``<f8``, triples as ``<i8`` and vocabularies as unicode arrays in
ordinal order:

    embed:          E (N x d), M (R x d x d), entities, relations
    superposition:  W (N x d), train_triples (T x 3), entities, relations

A superposition model stores its raw parameters and the training triples its
relation matrices are derived from; adjacencies are rebuilt on load.
"""

from pathlib import Path
from typing import Dict, Union

import numpy as np
from loguru import logger

from .embed import EmbedModel
from .exceptions import CheckpointFormatError, ValidationError
from .reports import atomic_write
from .store import TripleStore, Vocabulary
from .superposition import SuperpositionModel

PathLike = Union[str, Path]

FORMAT_VERSION = 1
EMBED_FORMAT = "tensorlogic-embed"
SUPERPOSITION_FORMAT = "tensorlogic-superposition"


def _vocab_array(vocab: Vocabulary) -> np.ndarray:
    return np.array(vocab.names, dtype=np.str_) if len(vocab) else np.zeros(0, dtype="<U1")


def _save(path: PathLike, kind: str, arrays: Dict[str, np.ndarray]) -> Path:
    payload = {"format": np.array(kind), "version": np.array(FORMAT_VERSION, dtype="<i8"), **arrays}
    target = atomic_write(path, lambda handle: np.savez(handle, **payload))
    logger.info(f"Saved {kind} checkpoint to {target}")
    return target


def _load(path: PathLike, kind: str) -> Dict[str, np.ndarray]:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as archive:
            arrays = {name: archive[name] for name in archive.files}
    except FileNotFoundError:
        raise
    except (OSError, ValueError) as error:
        raise CheckpointFormatError(f"{path}: not a readable checkpoint ({error})") from error
    found = str(arrays.get("format", "")) if "format" in arrays else None
    if found != kind:
        raise CheckpointFormatError(f"{path}: expected a {kind} checkpoint, found {found or 'no format tag'}")
    if int(arrays.get("version", -1)) != FORMAT_VERSION:
        raise CheckpointFormatError(f"{path}: unsupported checkpoint version {arrays.get('version')}")
    return arrays


def _require(arrays: Dict[str, np.ndarray], path: PathLike, *names: str) -> None:
    missing = [name for name in names if name not in arrays]
    if missing:
        raise CheckpointFormatError(f"{path}: missing arrays {', '.join(missing)}")


def _vocabularies(arrays: Dict[str, np.ndarray]):
    entities = Vocabulary("entity", arrays["entities"].tolist()).freeze()
    relations = Vocabulary("relation", arrays["relations"].tolist()).freeze()
    return entities, relations


def save_embed_model(model: EmbedModel, path: PathLike) -> Path:
    return _save(path, EMBED_FORMAT, {
        "E": model.E.astype("<f8"),
        "M": model.M.astype("<f8"),
        "entities": _vocab_array(model.entities),
        "relations": _vocab_array(model.relations),
    })


def load_embed_model(path: PathLike) -> EmbedModel:
    arrays = _load(path, EMBED_FORMAT)
    _require(arrays, path, "E", "M", "entities", "relations")
    try:
        entities, relations = _vocabularies(arrays)
        return EmbedModel(arrays["E"].astype(np.float64), arrays["M"].astype(np.float64), entities, relations)
    except ValidationError as error:
        raise CheckpointFormatError(f"{path}: {error}") from error


def save_superposition_model(model: SuperpositionModel, path: PathLike) -> Path:
    triples = model.train_triples if model.train_triples is not None else np.zeros((0, 3), dtype=np.int64)
    return _save(path, SUPERPOSITION_FORMAT, {
        "W": model.W.astype("<f8"),
        "train_triples": np.asarray(triples).astype("<i8"),
        "entities": _vocab_array(model.entities),
        "relations": _vocab_array(model.relations),
    })


def load_superposition_model(path: PathLike) -> SuperpositionModel:
    arrays = _load(path, SUPERPOSITION_FORMAT)
    _require(arrays, path, "W", "train_triples", "entities", "relations")
    try:
        entities, relations = _vocabularies(arrays)
        store = TripleStore(entities, relations, arrays["train_triples"].astype(np.int64))
        return SuperpositionModel.from_store(arrays["W"].astype(np.float64), store)
    except ValidationError as error:
        raise CheckpointFormatError(f"{path}: {error}") from error
