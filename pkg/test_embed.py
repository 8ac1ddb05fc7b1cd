import math

import numpy as np
import pytest

from conftest import random_store
from tensorlogic.embed import (EmbedModel, TrainConfig, ce_loss_and_grads, check_gradients, compose_infer,
                               compose_scores, forward, init_model, score_all, train, training_accuracy,
                               zero_shot_table)
from tensorlogic.exceptions import ParameterValidationError, ShapeError
from tensorlogic.store import IS_CAPITAL_OF, IS_LOCATED_IN, TripleStore, Vocabulary, load_countries
from tensorlogic.tensor import dense_matmul, make_rng, row_normalize


def toy_model(store: TripleStore, dim: int = 4, seed: int = 0) -> EmbedModel:
    rng = make_rng(seed)
    E = rng.normal(size=(store.num_entities, dim))
    M = rng.normal(size=(store.num_relations, dim, dim)) / math.sqrt(dim)
    return EmbedModel(E, M, store.entities, store.relations)


@pytest.mark.parametrize("seed", range(5))
def test_gradients_match_finite_differences(seed):
    store = random_store(5, 2, 8, seed)
    model = toy_model(store, dim=4, seed=seed)
    assert check_gradients(model, store) < 1e-4


def test_gradients_on_larger_toy_with_sampled_coordinates():
    store = random_store(10, 3, 20, 7)
    model = toy_model(store, dim=8, seed=7)
    assert check_gradients(model, store, max_coords=40) < 1e-4


def test_single_entity_loss_is_zero():
    entities = Vocabulary("entity", ["only"]).freeze()
    relations = Vocabulary("relation", ["self"]).freeze()
    store = TripleStore(entities, relations, [(0, 0, 0)])
    model = EmbedModel(np.ones((1, 3)), np.ones((1, 3, 3)), entities, relations)
    loss, grads = ce_loss_and_grads(model, store)
    assert loss == 0.0
    np.testing.assert_allclose(grads["E"], 0.0, atol=1e-15)


def test_zero_embeddings_give_uniform_loss():
    store = random_store(7, 2, 10, 3)
    model = EmbedModel(np.zeros((7, 4)), np.zeros((2, 4, 4)), store.entities, store.relations)
    assert ce_loss_and_grads(model, store)[0] == pytest.approx(math.log(7))


def test_loss_does_not_depend_on_fact_order():
    store = random_store(8, 2, 15, 4)
    model = toy_model(store, seed=4)
    shuffled = store.triples[make_rng(4, 5).permutation(len(store))]
    loss_a, grads_a = ce_loss_and_grads(model, store.triples)
    loss_b, grads_b = ce_loss_and_grads(model, shuffled)
    assert loss_a == loss_b
    np.testing.assert_array_equal(grads_a["E"], grads_b["E"])
    np.testing.assert_array_equal(grads_a["M"], grads_b["M"])


def test_empty_fact_set():
    store = random_store(3, 1, 2, 0)
    with pytest.raises(ParameterValidationError):
        ce_loss_and_grads(toy_model(store), np.zeros((0, 3), dtype=np.int64))


def test_forward_matches_per_row_products():
    store = random_store(6, 2, 5, 1)
    model = toy_model(store, seed=1)
    pred = forward(model, [0, 3], [1, 0])
    np.testing.assert_allclose(pred[0], dense_matmul(model.E[[0]], model.M[1])[0])
    np.testing.assert_allclose(pred[1], dense_matmul(model.E[[3]], model.M[0])[0])
    assert score_all(pred, model).shape == (2, 6)
    with pytest.raises(ShapeError):
        forward(model, [6], [0])
    with pytest.raises(ShapeError):
        forward(model, [0, 1], [0])


def test_model_shape_validation():
    entities = Vocabulary("entity", ["a", "b"])
    relations = Vocabulary("relation", ["r"])
    with pytest.raises(ShapeError):
        EmbedModel(np.zeros((2, 3)), np.zeros((1, 3, 2)), entities, relations)
    with pytest.raises(ShapeError):
        EmbedModel(np.zeros((3, 3)), np.zeros((1, 3, 3)), entities, relations)


def test_compose_infer_chains_relation_matrices():
    store = random_store(6, 2, 8, 2)
    model = toy_model(store, seed=2)
    expected = model.E[1] @ model.M[0] @ model.M[1] @ model.E.T
    np.testing.assert_allclose(compose_scores(model, "e1", ["r0", "r1"]), expected)
    ranking = compose_infer(model, "e1", ["r0", "r1"], topk=3)
    assert [name for name, _ in ranking] == [f"e{i}" for i in np.argsort(-expected, kind="stable")[:3]]
    assert ranking[0][1] >= ranking[1][1] >= ranking[2][1]
    with pytest.raises(ParameterValidationError):
        compose_scores(model, "e1", [])


def test_train_config_validation():
    with pytest.raises(ParameterValidationError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ParameterValidationError):
        TrainConfig(epochs=0)


def test_init_model_normalizes_rows():
    store = random_store(6, 2, 8, 2)
    model = init_model(store.entities, store.relations, TrainConfig(dim=8))
    np.testing.assert_allclose(np.linalg.norm(model.E, axis=1), 1.0)
    np.testing.assert_allclose(model.E, row_normalize(model.E), atol=1e-15)


def test_training_on_countries(countries_file):
    store = load_countries(countries_file)
    config = TrainConfig(learning_rate=0.05, epochs=300, dim=16, seed=42)
    model, curve = train(store, config)
    assert len(curve) == 300
    assert curve.initial == pytest.approx(math.log(store.num_entities), abs=0.5)
    assert curve.final < curve.initial / 4
    assert training_accuracy(model, store) == 1.0
    np.testing.assert_allclose(np.linalg.norm(model.E, axis=1), 1.0)

    again, _ = train(store, config)
    np.testing.assert_array_equal(model.E, again.E)
    np.testing.assert_array_equal(model.M, again.M)

    table = zero_shot_table(model, queries=[("Tokyo", "Asia"), ("Lima", "Americas")],
                            chain=[IS_CAPITAL_OF, IS_LOCATED_IN])
    assert [row.subject for row in table] == ["Tokyo", "Lima"]
    assert all(row.expected_rank >= 1 for row in table)
    assert all(row.correct == (row.expected_rank == 1) for row in table)
