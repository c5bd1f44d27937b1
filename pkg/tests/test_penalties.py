"""Tests for the differentiable validity penalties"""

import numpy as np
import pytest

from src.constraints.oracles import check_compatibility, check_connectivity, check_valence
from src.constraints.penalties import (
    compatibility_constraints,
    compatibility_penalty,
    connectivity_penalty,
    generic_valence,
    molecular_constraints,
    ramped_violations,
    regularizer_terms,
    total_regularizer,
    valence_penalty,
)
from src.core.errors import ConfigError, SchemaError
from src.core.models import BENCHMARK_COMPATIBILITY, GraphSchema, RegularizationConfig
from src.core.tensor import Node, backward, leaf
from src.graphs.model import GraphBatch, GraphOneHot, GraphProb, random_graph, relax

from helpers import numeric_gradient, relative_error

MOLECULE = GraphSchema(max_nodes=4, node_types=4, edge_types=3)
COMPAT = GraphSchema(max_nodes=5, node_types=5, edge_types=1)
ORACLE_GRAPHS = 1000


def relaxed_batch(graphs):
    batch = GraphBatch.of(graphs)
    return GraphProb.from_arrays(batch.F, batch.E)


@pytest.fixture
def molecule_spec():
    return molecular_constraints(MOLECULE, valences=[4, 3, 2, 1], bond_capacities=[1, 2, 3])


@pytest.fixture
def compat_spec():
    return compatibility_constraints(COMPAT, BENCHMARK_COMPATIBILITY)


def reg(*families, weight=1.0, **kwargs):
    return RegularizationConfig(families=list(families), weights={f: weight for f in families}, **kwargs)


class TestPresets:
    def test_generic_valence(self):
        h, u = generic_valence(GraphSchema(max_nodes=5, node_types=2, edge_types=1))
        assert h == [0.0, 1.0]
        assert u == [0.0, 4.0, 4.0]

    def test_compatibility_padded_with_ghost_row(self, compat_spec):
        assert compat_spec.D.shape == (6, 6)
        assert not compat_spec.D[0].any()

    def test_schema_mismatch(self):
        with pytest.raises(SchemaError):
            molecular_constraints(MOLECULE, valences=[4, 3], bond_capacities=[1, 2, 3])


class TestValencePenalty:
    """Hand-evaluated valence values"""

    def test_overloaded_carbon(self, molecule_spec):
        # C#N and C=O: carbon carries 3 + 2 = 5 against a valence of 4
        g = GraphOneHot.from_labels(MOLECULE, [1, 2, 3], [(0, 1, 3), (0, 2, 2)])
        values = valence_penalty(relax(g), molecule_spec).value
        assert values[0] == pytest.approx(1.0)
        assert values[1] == pytest.approx(0.0)
        assert values[2] == pytest.approx(0.0)

    def test_isolated_ghost(self, molecule_spec):
        g = GraphOneHot.from_labels(MOLECULE, [1])
        assert valence_penalty(relax(g), molecule_spec).value[3] == pytest.approx(0.0)

    def test_generic_clique(self):
        schema = GraphSchema(max_nodes=5, node_types=1, edge_types=1)
        spec = compatibility_constraints(schema, [[1]])
        clique = GraphOneHot.from_labels(
            schema, [1] * 5, [(i, j, 1) for i in range(5) for j in range(i + 1, 5)]
        )
        assert np.allclose(valence_penalty(relax(clique), spec).value, 0.0)

    def test_matches_oracle_on_one_hot_graphs(self, molecule_spec):
        rng = np.random.default_rng(3)
        graphs = [
            random_graph(MOLECULE, rng, edge_prob=float(rng.uniform(0.1, 0.8)), ghost_consistent=False)
            for _ in range(ORACLE_GRAPHS)
        ]
        ramped = ramped_violations(relaxed_batch(graphs), molecule_spec, "valence").value
        for g, row in zip(graphs, ramped):
            report = check_valence(g, molecule_spec)
            assert np.allclose(row, np.maximum(report.violation, 0.0))
            assert (row.sum() == 0) == report.ok


class TestConnectivityPenalty:
    """Soft reachability at a=100"""

    def test_connected_pair(self, molecule_spec):
        g = GraphOneHot.from_labels(MOLECULE, [1, 1], [(0, 1, 1)])
        assert connectivity_penalty(relax(g), molecule_spec).value[0, 1] < 1e-10

    def test_ghost_without_edge(self, molecule_spec):
        g = GraphOneHot.from_labels(MOLECULE, [1])
        assert connectivity_penalty(relax(g), molecule_spec).value[0, 1] < 1e-10

    def test_isolated_real_node(self, molecule_spec):
        g = GraphOneHot.from_labels(MOLECULE, [1, 1, 1], [(0, 1, 1)])
        values = connectivity_penalty(relax(g), molecule_spec).value
        assert values[0, 2] == pytest.approx(1.0, abs=1e-6)
        assert values[1, 2] == pytest.approx(1.0, abs=1e-6)
        assert values[0, 1] < 1e-6

    def test_symmetric_zero_diagonal(self, molecule_spec):
        g = random_graph(MOLECULE, np.random.default_rng(1), edge_prob=0.4)
        values = connectivity_penalty(relax(g), molecule_spec).value
        assert np.allclose(values, values.T)
        assert np.allclose(np.diag(values), 0.0)

    def test_matches_bfs_oracle(self):
        schema = GraphSchema(max_nodes=8, node_types=2, edge_types=2)
        spec = molecular_constraints(schema, valences=[7, 7], bond_capacities=[1, 1])
        rng = np.random.default_rng(17)
        graphs = [
            random_graph(
                schema, rng, edge_prob=float(rng.uniform(0.1, 0.6)), ghost_prob=0.3,
                ghost_consistent=index % 4 != 0,
            )
            for index in range(ORACLE_GRAPHS)
        ]
        ramped = ramped_violations(relaxed_batch(graphs), spec, "connectivity").value
        connected = [check_connectivity(g) for g in graphs]
        assert 0 < sum(connected) < len(graphs)
        for row, ok in zip(ramped, connected):
            worst = row.max()
            if ok:
                assert worst < 1e-6
            else:
                assert worst > 0.9


class TestCompatibilityPenalty:
    def test_compatible_types(self, compat_spec):
        g = GraphOneHot.from_labels(COMPAT, [1, 2], [(0, 1, 1)])
        assert compatibility_penalty(relax(g), compat_spec).value[0, 1] == pytest.approx(-0.25)

    def test_incompatible_edge(self, compat_spec):
        g = GraphOneHot.from_labels(COMPAT, [1, 1], [(0, 1, 1)])
        assert compatibility_penalty(relax(g), compat_spec).value[0, 1] == pytest.approx(0.75)

    def test_missing_edge(self, compat_spec):
        g = GraphOneHot.from_labels(COMPAT, [1, 1])
        assert compatibility_penalty(relax(g), compat_spec).value[0, 1] == pytest.approx(-0.25)

    def test_needs_matrix(self, molecule_spec):
        with pytest.raises(ConfigError):
            compatibility_penalty(relax(GraphOneHot.empty(MOLECULE)), molecule_spec)

    def test_matches_oracle(self, compat_spec):
        rng = np.random.default_rng(8)
        graphs = [random_graph(COMPAT, rng, edge_prob=float(rng.uniform(0.05, 0.5))) for _ in range(ORACLE_GRAPHS)]
        ramped = ramped_violations(relaxed_batch(graphs), compat_spec, "compatibility").value
        verdicts = [check_compatibility(g, compat_spec) for g in graphs]
        assert 0 < sum(verdicts) < len(graphs)
        for row, ok in zip(ramped, verdicts):
            assert (row.max() == 0) == ok


class TestRegularizer:
    """Ramped sums and weights"""

    def test_all_satisfied(self, compat_spec):
        g = GraphOneHot.from_labels(COMPAT, [1, 2, 3], [(0, 1, 1), (1, 2, 1)])
        total = total_regularizer(relax(g), compat_spec, reg("valence", "compatibility"))
        assert total.item() == 0.0

    def test_single_violation_weighted(self, molecule_spec):
        g = GraphOneHot.from_labels(MOLECULE, [1, 2, 3], [(0, 1, 3), (0, 2, 2)])
        assert total_regularizer(relax(g), molecule_spec, reg("valence", weight=5.0)).item() == pytest.approx(5.0)

    def test_doubling_weights(self, molecule_spec):
        g = random_graph(MOLECULE, np.random.default_rng(2), edge_prob=0.8, ghost_consistent=False)
        m = relax(g)
        single = total_regularizer(m, molecule_spec, reg("valence", "connectivity", weight=1.5)).item()
        double = total_regularizer(m, molecule_spec, reg("valence", "connectivity", weight=3.0)).item()
        assert double == pytest.approx(2 * single)

    def test_no_family(self, molecule_spec):
        with pytest.raises(ConfigError):
            regularizer_terms(relax(GraphOneHot.empty(MOLECULE)), molecule_spec, RegularizationConfig())

    @pytest.mark.parametrize("form", ["ramp", "rms"])
    def test_identical_batch_equals_single_graph(self, molecule_spec, form):
        g = GraphOneHot.from_labels(MOLECULE, [1, 2, 3], [(0, 1, 3), (0, 2, 2)])
        batch = GraphBatch.of([g, g, g])
        batched = regularizer_terms(
            GraphProb.from_arrays(batch.F, batch.E), molecule_spec, reg("valence", penalty_form=form)
        )
        single = regularizer_terms(relax(g), molecule_spec, reg("valence"))
        assert batched["valence"].item() == pytest.approx(single["valence"].item())

    def test_rms_penalizes_rare_violations_more(self, molecule_spec):
        bad = GraphOneHot.from_labels(MOLECULE, [1, 2, 3], [(0, 1, 3), (0, 2, 2)])
        good = GraphOneHot.from_labels(MOLECULE, [1, 4], [(0, 1, 1)])
        batch = GraphBatch.of([bad, good, good, good])
        m = GraphProb.from_arrays(batch.F, batch.E)
        ramp_value = regularizer_terms(m, molecule_spec, reg("valence"))["valence"].item()
        rms_value = regularizer_terms(m, molecule_spec, reg("valence", penalty_form="rms"))["valence"].item()
        assert ramp_value == pytest.approx(0.25)
        assert rms_value == pytest.approx(0.5)


GRADIENT_SCHEMAS = {
    "valence": GraphSchema(max_nodes=6, node_types=4, edge_types=3),
    "compatibility": GraphSchema(max_nodes=6, node_types=5, edge_types=1),
    "connectivity": GraphSchema(max_nodes=5, node_types=2, edge_types=1),
}
PENALTIES = {
    "valence": valence_penalty,
    "compatibility": compatibility_penalty,
    "connectivity": connectivity_penalty,
}


def gradient_spec(family: str):
    schema = GRADIENT_SCHEMAS[family]
    if family == "compatibility":
        return compatibility_constraints(schema, BENCHMARK_COMPATIBILITY)
    if family == "valence":
        return molecular_constraints(schema, [4, 3, 2, 1], [1, 2, 3])
    return molecular_constraints(schema, [3, 3], [1])


class TestPenaltyGradients:
    """Gradients with respect to F~ and E~ against finite differences"""

    @staticmethod
    def _random_model(schema, rng, batch=()):
        n = schema.max_nodes
        F = rng.dirichlet(np.ones(schema.node_width), size=batch + (n,))
        E = rng.dirichlet(np.ones(schema.edge_width), size=batch + (n, n))
        E = (E + np.swapaxes(E, -2, -3)) / 2
        return F, E

    def _check(self, value, F0, E0):
        F, E = leaf(F0), leaf(E0)
        grads = backward(value(F, E))
        numeric_F = numeric_gradient(lambda x: value(Node(x), Node(E0)).item(), F0, step=1e-6)
        numeric_E = numeric_gradient(lambda x: value(Node(F0), Node(x)).item(), E0, step=1e-6)
        # saturated sigmoids leave gradients far below float noise; the floor ignores them
        assert relative_error(grads[F], numeric_F, floor=1e-4) < 1e-3
        assert relative_error(grads[E], numeric_E, floor=1e-4) < 1e-3

    @pytest.mark.parametrize("seed", [21, 22, 23, 24])
    @pytest.mark.parametrize("family", ["valence", "compatibility", "connectivity"])
    def test_finite_differences(self, family, seed):
        rng = np.random.default_rng(seed)
        spec = gradient_spec(family)
        penalty = PENALTIES[family]
        F0, E0 = self._random_model(GRADIENT_SCHEMAS[family], rng)
        weights = rng.normal(size=penalty(GraphProb.from_arrays(F0, E0), spec).shape)

        def value(F, E):
            return (penalty(GraphProb(F=F, E=E), spec) * weights).sum()

        self._check(value, F0, E0)

    @pytest.mark.parametrize("form", ["ramp", "rms"])
    @pytest.mark.parametrize("family", ["valence", "compatibility", "connectivity"])
    def test_weighted_regularizer_finite_differences(self, family, form):
        rng = np.random.default_rng(31)
        spec = gradient_spec(family)
        config = reg(family, weight=2.0, penalty_form=form)
        F0, E0 = self._random_model(GRADIENT_SCHEMAS[family], rng, batch=(3,))

        def value(F, E):
            return total_regularizer(GraphProb(F=F, E=E), spec, config)

        self._check(value, F0, E0)

    def test_permutation_equivariant(self, compat_spec):
        rng = np.random.default_rng(9)
        F, E = self._random_model(COMPAT, rng)
        perm = rng.permutation(COMPAT.max_nodes)
        base = GraphProb.from_arrays(F, E)
        permuted = GraphProb.from_arrays(F[perm], E[perm][:, perm])
        for penalty in (valence_penalty, compatibility_penalty, connectivity_penalty):
            a = penalty(base, compat_spec).value
            b = penalty(permuted, compat_spec).value
            expected = a[perm] if a.ndim == 1 else a[perm][:, perm]
            assert np.allclose(b, expected)
