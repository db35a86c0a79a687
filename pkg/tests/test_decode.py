"""Tests for matching decoders and benchmarks."""

import networkx as nx
import numpy as np
import pytest
from hexluci.analysis import MatchingGraph, dem_to_graph
from hexluci.decode import (
    Backend,
    BenchmarkResult,
    DecodingError,
    benchmark,
    correlated_reweights,
    correlated_second_pass,
    fired_detectors,
    logical_error_ci,
    match,
    measurement_layers,
    mwpm_decode,
    per_round,
)
from hexluci.noise_sim import DetectorErrorModel, ErrorMechanism, NoiseParams


def chain(length, p=0.01):
    graph = MatchingGraph(length)
    graph.add(0, graph.boundary, p, 1, 0)
    for d in range(length - 1):
        graph.add(d, d + 1, p, 0, d + 1)
    graph.add(length - 1, graph.boundary, p, 0, length)
    return graph


def random_graph(rng, num_detectors=8, num_edges=12):
    """A connected random graph with a few boundary edges."""
    graph = MatchingGraph(num_detectors)
    mid = 0
    for d in range(num_detectors - 1):
        graph.add(d, d + 1, float(rng.uniform(0.01, 0.3)), int(rng.integers(2)), mid)
        mid += 1
    graph.add(0, graph.boundary, float(rng.uniform(0.01, 0.3)), 1, mid)
    mid += 1
    while len(graph.edges) < num_edges:
        a, b = (int(v) for v in rng.choice(num_detectors + 1, size=2, replace=False))
        if graph.edge(a, b) is None:
            graph.add(a, b, float(rng.uniform(0.01, 0.3)), int(rng.integers(2)), mid)
            mid += 1
    return graph


def brute_force_pairing(graph, fired):
    """Minimum total path length over all pairings of fired detectors and the boundary."""
    lengths = dict(nx.all_pairs_dijkstra_path_length(graph.to_networkx()))

    def best(remaining):
        if not remaining:
            return 0.0
        first, rest = remaining[0], remaining[1:]
        options = [lengths[first][graph.boundary] + best(rest)]
        for i, other in enumerate(rest):
            options.append(lengths[first][other] + best(rest[:i] + rest[i + 1 :]))
        return min(options)

    return best(tuple(fired))


class TestMatching:
    """Tests for minimum-weight perfect matching."""

    def test_fired_detectors(self):
        assert fired_detectors([0, 1, 0, 1]) == {1, 3}

    def test_empty_syndrome(self):
        assert match(chain(3), frozenset()) == (0, ())

    @pytest.mark.parametrize("backend", list(Backend))
    def test_chain_decisions(self, backend):
        graph = chain(3)
        assert mwpm_decode(graph, frozenset({0}), backend) == 1
        assert mwpm_decode(graph, frozenset({2}), backend) == 0
        assert mwpm_decode(graph, frozenset({0, 1}), backend) == 0
        assert mwpm_decode(graph, frozenset({1, 2}), backend) == 0

    @pytest.mark.parametrize("backend", list(Backend))
    def test_boundary_edge_reported(self, backend):
        graph = chain(3)
        result = match(graph, frozenset({0}), backend)
        assert result.edges == ((0, graph.boundary),)

    def test_unreachable_detector(self):
        graph = MatchingGraph(3)
        graph.add(0, 1, 0.1, 0, 0)
        with pytest.raises(DecodingError):
            match(graph, frozenset({2}), Backend.NETWORKX)

    @pytest.mark.parametrize("seed", range(200))
    def test_matches_brute_force_pairing(self, seed):
        rng = np.random.default_rng(seed)
        graph = random_graph(rng)
        size = int(rng.integers(1, 9))
        fired = sorted(int(d) for d in rng.choice(graph.num_detectors, size=size, replace=False))
        result = match(graph, frozenset(fired), Backend.NETWORKX)
        total = sum(graph.edges[key].weight for key in result.edges)
        assert total == pytest.approx(brute_force_pairing(graph, fired))

    def test_backends_agree_on_unique_minimum(self):
        graph = chain(6)
        for fired in ({0}, {5}, {1, 2}, {0, 5}, {0, 3}):
            syndrome = frozenset(fired)
            assert mwpm_decode(graph, syndrome, Backend.NETWORKX) == mwpm_decode(
                graph, syndrome, Backend.PYMATCHING
            )


class TestCorrelatedPass:
    """Tests for the correlated reweighting pass."""

    def dem(self):
        return DetectorErrorModel(
            3,
            1,
            [
                ErrorMechanism(
                    0.05,
                    frozenset({0, 1, 2}),
                    frozenset(),
                    ((frozenset({0}), frozenset()), (frozenset({1, 2}), frozenset())),
                ),
                ErrorMechanism(0.1, frozenset({0}), frozenset()),
                ErrorMechanism(0.1, frozenset({1, 2}), frozenset()),
            ],
        )

    def test_reweights_partner_edge(self):
        dem = self.dem()
        graph = dem_to_graph(dem)
        updates = correlated_reweights(graph, dem, [(0, graph.boundary)])
        assert set(updates) == {(1, 2)}
        q_matched = graph.edge(0, graph.boundary).probability
        assert updates[(1, 2)] == pytest.approx(0.05 / q_matched)

    def test_no_update_without_correlations(self):
        graph = chain(3)
        dem = DetectorErrorModel(3, 1, [ErrorMechanism(0.01, frozenset({0}), frozenset())] * 4)
        first = match(graph, frozenset({0}))
        assert correlated_reweights(graph, dem, first.edges) == {}
        assert correlated_second_pass(graph, dem, first, frozenset({0})) == first.flip

    def test_second_pass_runs(self):
        dem = self.dem()
        graph = dem_to_graph(dem)
        syndrome = frozenset({0, 1, 2})
        first = match(graph, syndrome)
        assert correlated_second_pass(graph, dem, first, syndrome) in (0, 1)


class TestRates:
    """Tests for error rate statistics."""

    def test_ci_zero_errors(self):
        low, high = logical_error_ci(0, 100)
        assert low == 0.0
        assert high == pytest.approx(1 - 0.025 ** (1 / 100))

    def test_ci_all_errors(self):
        low, high = logical_error_ci(100, 100)
        assert high == 1.0
        assert low == pytest.approx(0.025 ** (1 / 100))

    def test_ci_brackets_rate(self):
        low, high = logical_error_ci(5, 100)
        assert low < 0.05 < high

    def test_per_round(self):
        assert per_round(0.1, 1) == pytest.approx(0.1)
        assert per_round(0.19, 2) == pytest.approx(0.1)
        assert per_round(1.0, 5) == 1.0

    def test_result_properties(self):
        result = BenchmarkResult(shots=1000, errors=19, rounds=2, passes=1, wall_time=0.0)
        assert result.ler_shot == pytest.approx(0.019)
        assert result.ler_round == pytest.approx(per_round(0.019, 2))
        low, high = result.ci_round
        assert low < result.ler_round < high

    def test_measurement_layers(self, small_memory):
        assert measurement_layers(small_memory) == 4


class TestBenchmark:
    """Tests for the Monte Carlo benchmark."""

    def test_noiseless(self, small_memory):
        result = benchmark(small_memory, NoiseParams(p=0), shots=100, seed=0)
        assert result.errors == 0
        assert result.rounds == 4

    @pytest.mark.parametrize("backend", list(Backend))
    @pytest.mark.parametrize("passes", [1, 2])
    def test_low_noise(self, small_memory, backend, passes):
        result = benchmark(
            small_memory, NoiseParams(p=1e-3), shots=200, seed=1, passes=passes, backend=backend
        )
        assert result.shots == 200
        assert result.passes == passes
        assert 0 <= result.errors < 20

    def test_threads_do_not_change_result(self, small_memory):
        one = benchmark(small_memory, NoiseParams(p=2e-3), shots=300, seed=4, threads=1)
        two = benchmark(small_memory, NoiseParams(p=2e-3), shots=300, seed=4, threads=3)
        assert one.errors == two.errors

    def test_bad_passes(self, small_memory):
        with pytest.raises(DecodingError):
            benchmark(small_memory, NoiseParams(p=1e-3), shots=10, seed=0, passes=3)

    @pytest.mark.slow
    def test_error_rate_grows_with_noise(self, small_memory):
        low = benchmark(small_memory, NoiseParams(p=1e-3), shots=4000, seed=2)
        high = benchmark(small_memory, NoiseParams(p=1e-2), shots=4000, seed=2)
        assert high.errors > low.errors
