"""Tests for one-hot graphs, probabilistic graphs and the likelihood"""

import numpy as np
import pytest

from src.core.errors import SchemaError
from src.core.models import GraphSchema
from src.graphs.model import (
    GraphBatch,
    GraphOneHot,
    GraphProb,
    argmax_decode,
    argmax_decode_batch,
    log_likelihood,
    random_graph,
    relax,
    sample,
)


@pytest.fixture
def schema():
    return GraphSchema(max_nodes=4, node_types=3, edge_types=2)


def two_node_prob(edge_fiber):
    F = np.array([[0.0, 1.0], [0.0, 1.0]])
    E = np.zeros((2, 2, 2))
    E[0, 0, 0] = E[1, 1, 0] = 1.0
    E[0, 1] = E[1, 0] = edge_fiber
    return GraphProb.from_arrays(F, E)


class TestGraphOneHot:
    """Construction and structural invariants"""

    def test_from_labels_pads_with_ghosts(self, schema):
        g = GraphOneHot.from_labels(schema, [1, 2], [(0, 1, 2)])
        assert g.node_labels().tolist() == [1, 2, 0, 0]
        assert g.edges() == [(0, 1, 2)]
        assert g.active_nodes() == [0, 1]
        g.validate(ghost_consistent=True)

    def test_edges_are_mirrored(self, schema):
        g = GraphOneHot.from_labels(schema, [1, 1, 1], [(2, 0, 1)])
        assert g.edge_labels()[0, 2] == g.edge_labels()[2, 0] == 1

    @pytest.mark.parametrize(
        "labels,edges",
        [
            ([4], []),
            ([1, 1, 1, 1, 1], []),
            ([1, 1], [(0, 0, 1)]),
            ([1, 1], [(0, 1, 3)]),
            ([1, 1], [(0, 7, 1)]),
        ],
    )
    def test_invalid_inputs(self, schema, labels, edges):
        with pytest.raises(SchemaError):
            GraphOneHot.from_labels(schema, labels, edges)

    def test_ghost_with_edge_fails_strict_validation(self, schema):
        g = GraphOneHot.from_labels(schema, [1, 0], [(0, 1, 1)])
        g.validate()
        with pytest.raises(SchemaError):
            g.validate(ghost_consistent=True)

    def test_permute_and_equality(self, schema):
        g = GraphOneHot.from_labels(schema, [1, 2, 3], [(0, 1, 1), (1, 2, 2)])
        p = g.permute([2, 1, 0, 3])
        assert p.node_labels().tolist() == [3, 2, 1, 0]
        assert p != g
        assert p.permute([2, 1, 0, 3]) == g
        assert hash(p.permute([2, 1, 0, 3])) == hash(g)

    def test_empty_graph(self, schema):
        g = GraphOneHot.empty(schema)
        assert g.active_nodes() == []
        assert g.edges() == []

    def test_random_graph_is_ghost_consistent(self, schema):
        rng = np.random.default_rng(0)
        for _ in range(20):
            random_graph(schema, rng, edge_prob=0.6).validate(ghost_consistent=True)


class TestGraphBatch:
    def test_flat_inputs_width(self, schema):
        graphs = [GraphOneHot.empty(schema), GraphOneHot.from_labels(schema, [1])]
        flat = GraphBatch.of(graphs).flat_inputs()
        assert flat.shape == (2, 4 * (4 + 4 * 3))

    def test_empty_batch(self):
        with pytest.raises(SchemaError):
            GraphBatch.of([])


class TestLogLikelihood:
    """log p(G | m) hand values"""

    def test_exact_relaxation_is_zero(self, schema):
        g = GraphOneHot.from_labels(schema, [1, 2, 3], [(0, 1, 1), (1, 2, 2)])
        assert log_likelihood(g, relax(g)).item() == pytest.approx(0.0)

    def test_half_edge(self):
        schema = GraphSchema(max_nodes=2, node_types=1, edge_types=1)
        g = GraphOneHot.from_labels(schema, [1, 1], [(0, 1, 1)])
        assert log_likelihood(g, two_node_prob([0.5, 0.5])).item() == pytest.approx(np.log(0.5))

    def test_uniform_model(self):
        schema = GraphSchema(max_nodes=2, node_types=1, edge_types=1)
        g = GraphOneHot.from_labels(schema, [1, 0])
        F = np.full((2, 2), 0.5)
        E = np.full((2, 2, 2), 0.5)
        E[0, 0] = E[1, 1] = [1.0, 0.0]
        value = log_likelihood(g, GraphProb.from_arrays(F, E)).item()
        assert value == pytest.approx(-3 * np.log(2))

    def test_schema_mismatch(self, schema):
        g = GraphOneHot.from_labels(schema, [1])
        with pytest.raises(SchemaError):
            log_likelihood(g, two_node_prob([0.5, 0.5]))

    def test_batch_returns_one_value_per_graph(self, schema):
        graphs = [GraphOneHot.from_labels(schema, [1]), GraphOneHot.from_labels(schema, [2, 2], [(0, 1, 1)])]
        batch = GraphBatch.of(graphs)
        model = GraphProb.from_arrays(batch.F, batch.E)
        assert log_likelihood(batch, model).shape == (2,)


class TestDecoding:
    """Sampling and argmax decoding"""

    def test_one_hot_model_samples_itself(self, schema):
        g = GraphOneHot.from_labels(schema, [1, 2, 3], [(0, 2, 2)])
        for seed in range(5):
            assert sample(relax(g), np.random.default_rng(seed)) == g
        assert argmax_decode(relax(g)) == g

    def test_sample_frequency(self):
        model = two_node_prob([0.5, 0.5])
        rng = np.random.default_rng(123)
        draws = [sample(model, rng).edge_labels()[0, 1] for _ in range(10_000)]
        assert abs(np.mean(draws) - 0.5) < 0.02

    def test_samples_satisfy_invariants(self, schema):
        rng = np.random.default_rng(4)
        F = rng.dirichlet(np.ones(4), size=4)
        E = rng.dirichlet(np.ones(3), size=(4, 4))
        E = (E + E.transpose(1, 0, 2)) / 2
        E[np.arange(4), np.arange(4)] = [1.0, 0.0, 0.0]
        model = GraphProb.from_arrays(F, E)
        model.validate()
        for _ in range(10):
            sample(model, rng).validate()

    def test_argmax_fiber(self):
        schema = GraphSchema(max_nodes=2, node_types=1, edge_types=2)
        F = np.array([[0.0, 1.0], [0.0, 1.0]])
        E = np.zeros((2, 2, 3))
        E[0, 0, 0] = E[1, 1, 0] = 1.0
        E[0, 1] = E[1, 0] = [0.2, 0.5, 0.3]
        g = argmax_decode(GraphProb.from_arrays(F, E))
        assert g.edges() == [(0, 1, 1)]
        assert g.schema == schema

    def test_argmax_tie_goes_to_no_edge(self):
        g = argmax_decode(two_node_prob([0.5, 0.5]))
        assert g.edges() == []

    def test_batch_decode(self, schema):
        graphs = [GraphOneHot.from_labels(schema, [1]), GraphOneHot.from_labels(schema, [2, 2], [(0, 1, 1)])]
        batch = GraphBatch.of(graphs)
        assert argmax_decode_batch(GraphProb.from_arrays(batch.F, batch.E)) == graphs

    def test_invalid_prob_rejected(self):
        with pytest.raises(SchemaError):
            two_node_prob([0.7, 0.7]).validate()
