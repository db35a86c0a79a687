"""Matching decoders and logical error benchmarks.

This module decodes syndromes by minimum-weight perfect matching on a
MatchingGraph, either with the exact blossom algorithm from networkx or with
pymatching, optionally followed by a correlated second pass that reweights
edges sharing a fault with the first-pass matching. ``benchmark`` runs a
complete Monte Carlo memory experiment.
"""

from __future__ import annotations

import logging
import time
from collections.abc import Iterable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple

import networkx as nx
import numpy as np
import pymatching
from scipy.stats import beta

from .analysis import MIN_PROBABILITY, MatchingGraph, dem_to_graph
from .circuit_ir import MEASURE_KINDS, Circuit, InstructionKind
from .noise_sim import DetectorErrorModel, NoiseParams, apply_si1000, extract_dem, sample_frames

logger = logging.getLogger(__name__)

Syndrome = frozenset[int]


class DecodingError(Exception):
    """Raised when a syndrome cannot be matched."""

    pass


class Backend(str, Enum):
    NETWORKX = "networkx"
    PYMATCHING = "pymatching"


class MatchResult(NamedTuple):
    """Predicted observable flip and the graph edges the matching used."""

    flip: int
    edges: tuple[tuple[int, int], ...]


def fired_detectors(bits: Iterable[bool] | np.ndarray) -> Syndrome:
    return frozenset(int(i) for i in np.flatnonzero(np.asarray(bits, dtype=np.bool_)))


def _path_edges(path: Sequence[int]) -> list[tuple[int, int]]:
    return [(min(a, b), max(a, b)) for a, b in zip(path, path[1:])]


def _match_networkx(graph: MatchingGraph, syndrome: Syndrome) -> MatchResult:
    fired = sorted(syndrome)
    if not fired:
        return MatchResult(0, ())
    g = graph.to_networkx()
    boundary = graph.boundary

    paths: dict[tuple[int, int], list[int]] = {}
    lengths: dict[tuple[int, int], float] = {}
    for s in fired:
        dist, route = nx.single_source_dijkstra(g, s, weight="weight")
        for t in (*fired, boundary):
            if t != s and t in dist:
                lengths[(s, t)] = dist[t]
                paths[(s, t)] = route[t]

    # fired detectors plus one boundary copy each; copies pair up for free
    pairing = nx.Graph()
    total = sum(lengths.values()) + 1.0
    for i, s in enumerate(fired):
        if (s, boundary) in lengths:
            pairing.add_edge(("d", s), ("b", s), weight=total - lengths[(s, boundary)])
        for t in fired[i + 1 :]:
            if (s, t) in lengths:
                pairing.add_edge(("d", s), ("d", t), weight=total - lengths[(s, t)])
            pairing.add_edge(("b", s), ("b", t), weight=total)
        if not pairing.has_node(("d", s)):
            raise DecodingError(f"Detector {s} has no path to another detector or the boundary")

    matching = nx.max_weight_matching(pairing, maxcardinality=True)
    flip = 0
    used: list[tuple[int, int]] = []
    covered = 0
    for a, b in matching:
        if a[0] == "b" and b[0] == "b":
            continue
        (_, s), (_, t) = sorted((a, b))
        route = paths[(s, boundary)] if s == t else paths[(s, t)]
        for key in _path_edges(route):
            flip ^= graph.edges[key].observables & 1
            used.append(key)
        covered += 1 if s == t else 2
    if covered != len(fired):
        raise DecodingError(f"No perfect matching for syndrome {fired}")
    return MatchResult(flip, tuple(used))


def build_pymatching(graph: MatchingGraph) -> pymatching.Matching:
    matching = pymatching.Matching()
    for e in graph.edges.values():
        fault_ids = {0} if e.observables & 1 else set()
        if e.v == graph.boundary:
            matching.add_boundary_edge(
                e.u, fault_ids=fault_ids, weight=e.weight, error_probability=e.probability
            )
        else:
            matching.add_edge(
                e.u, e.v, fault_ids=fault_ids, weight=e.weight, error_probability=e.probability
            )
    return matching


def _dense(matching: pymatching.Matching, syndrome: Syndrome) -> np.ndarray:
    bits = np.zeros(max(matching.num_detectors, 1), dtype=np.uint8)
    for d in syndrome:
        if d >= matching.num_detectors:
            raise DecodingError(f"Detector {d} has no edge in the matching graph")
        bits[d] = 1
    return bits


def _match_pymatching(
    graph: MatchingGraph, syndrome: Syndrome, matching: pymatching.Matching | None = None
) -> MatchResult:
    if not syndrome:
        return MatchResult(0, ())
    matching = matching or build_pymatching(graph)
    bits = _dense(matching, syndrome)
    prediction = matching.decode(bits)
    flip = int(prediction[0]) if len(prediction) else 0
    pairs = matching.decode_to_edges_array(bits)
    edges = []
    for a, b in pairs:
        a, b = int(a), int(b)
        b = graph.boundary if b < 0 else b
        a = graph.boundary if a < 0 else a
        edges.append((min(a, b), max(a, b)))
    return MatchResult(flip, tuple(edges))


def match(
    graph: MatchingGraph, syndrome: Syndrome, backend: Backend | str = Backend.NETWORKX
) -> MatchResult:
    backend = Backend(backend)
    if backend is Backend.NETWORKX:
        return _match_networkx(graph, syndrome)
    return _match_pymatching(graph, syndrome)


def mwpm_decode(
    graph: MatchingGraph, syndrome: Syndrome, backend: Backend | str = Backend.NETWORKX
) -> int:
    """Predicted observable flip of a minimum-weight perfect matching.

    Odd syndromes are completed by the boundary node.

    Raises:
        DecodingError: If a fired detector cannot be matched
    """
    return match(graph, syndrome, backend).flip


def correlated_reweights(
    graph: MatchingGraph, dem: DetectorErrorModel, matched: Iterable[tuple[int, int]]
) -> dict[tuple[int, int], float]:
    """Conditional edge probabilities implied by a first-pass matching.

    For every multi-component mechanism with a component on a matched edge,
    each of its other components gets q' = q_joint / q_matched (clamped to
    0.5), if that is more likely than the edge already is.
    """
    updates: dict[tuple[int, int], float] = {}
    for key in set(matched):
        edge = graph.edges.get(key)
        if edge is None:
            continue
        for mid in edge.mechanisms:
            mechanism = dem.mechanisms[mid]
            if len(mechanism.components) < 2:
                continue
            q = min(max(mechanism.probability / edge.probability, MIN_PROBABILITY), 0.5)
            for dets, _ in mechanism.components:
                ends = sorted(dets)
                if not ends or len(ends) > 2:
                    continue
                other = (ends[0], graph.boundary) if len(ends) == 1 else (ends[0], ends[1])
                if other == key or other not in graph.edges:
                    continue
                if q > max(graph.edges[other].probability, updates.get(other, 0.0)):
                    updates[other] = q
    return updates


def correlated_second_pass(
    graph: MatchingGraph,
    dem: DetectorErrorModel,
    first_match: MatchResult,
    syndrome: Syndrome,
    backend: Backend | str = Backend.NETWORKX,
) -> int:
    """Rerun matching after reweighting edges correlated with ``first_match``.

    Returns the first-pass prediction when no edge is reweighted.
    """
    updates = correlated_reweights(graph, dem, first_match.edges)
    if not updates:
        return first_match.flip
    return match(graph.reweighted(updates), syndrome, backend).flip


def logical_error_ci(errors: int, shots: int, alpha: float = 0.05) -> tuple[float, float]:
    """Clopper-Pearson interval for ``errors`` failures out of ``shots``."""
    if shots <= 0:
        return (0.0, 1.0)
    low, high = beta.ppf(
        [alpha / 2, 1 - alpha / 2], [errors, errors + 1], [shots - errors + 1, shots - errors]
    )
    low = 0.0 if np.isnan(low) else float(low)
    high = 1.0 if np.isnan(high) else float(high)
    return (low, high)


def per_round(rate: float, rounds: int) -> float:
    """Per-round rate from a per-shot rate: 1 - (1 - P)^(1 / rounds)."""
    if rate >= 1:
        return 1.0
    return float(1 - (1 - rate) ** (1 / max(rounds, 1)))


def measurement_layers(circuit: Circuit) -> int:
    layers = 0
    in_layer = False
    for inst in circuit.instructions:
        if inst.kind in MEASURE_KINDS:
            if not in_layer:
                layers += 1
            in_layer = True
        elif inst.kind not in (InstructionKind.DETECTOR, InstructionKind.OBSERVABLE_INCLUDE):
            in_layer = False
    return layers


@dataclass
class BenchmarkResult:
    shots: int
    errors: int
    rounds: int
    passes: int
    wall_time: float

    @property
    def ler_shot(self) -> float:
        return self.errors / self.shots if self.shots else 0.0

    @property
    def ler_round(self) -> float:
        return per_round(self.ler_shot, self.rounds)

    @property
    def ci_shot(self) -> tuple[float, float]:
        return logical_error_ci(self.errors, self.shots)

    @property
    def ci_round(self) -> tuple[float, float]:
        low, high = self.ci_shot
        return (per_round(low, self.rounds), per_round(high, self.rounds))


def _decode_chunk(
    graph: MatchingGraph,
    dem: DetectorErrorModel,
    detectors: np.ndarray,
    passes: int,
    backend: Backend,
) -> np.ndarray:
    predictions = np.zeros(detectors.shape[0], dtype=np.uint8)
    matching = build_pymatching(graph) if backend is Backend.PYMATCHING else None
    if backend is Backend.PYMATCHING and passes == 1:
        assert matching is not None
        width = matching.num_detectors
        if np.any(detectors[:, width:]):
            raise DecodingError("A fired detector has no edge in the matching graph")
        out = matching.decode_batch(detectors[:, :width].astype(np.uint8))
        return out[:, 0].astype(np.uint8) if out.shape[1] else predictions

    for n, row in enumerate(detectors):
        syndrome = fired_detectors(row)
        if backend is Backend.PYMATCHING:
            first = _match_pymatching(graph, syndrome, matching)
        else:
            first = _match_networkx(graph, syndrome)
        flip = first.flip
        if passes == 2 and syndrome:
            flip = correlated_second_pass(graph, dem, first, syndrome, backend)
        predictions[n] = flip
    return predictions


def benchmark(
    circuit: Circuit,
    params: NoiseParams,
    shots: int,
    seed: int,
    passes: int = 1,
    backend: Backend | str = Backend.PYMATCHING,
    threads: int = 1,
    rounds: int | None = None,
) -> BenchmarkResult:
    """Monte Carlo logical error rate of a noiseless memory circuit under SI1000 noise.

    Args:
        circuit: Noiseless circuit with detectors and one observable
        params: Noise strength
        shots: Number of shots
        seed: Sampler seed
        passes: 1 for plain matching, 2 for the correlated second pass
        backend: Matching backend
        threads: Worker threads for sampling and decoding
        rounds: Rounds per shot (defaults to the number of measurement layers)

    Raises:
        DecodingError: On an invalid pass count or an unmatched syndrome
    """
    if passes not in (1, 2):
        raise DecodingError(f"passes must be 1 or 2, got {passes}")
    backend = Backend(backend)
    started = time.perf_counter()
    rounds = rounds or measurement_layers(circuit)

    noisy = apply_si1000(circuit, params)
    detectors, observables = sample_frames(noisy, shots, seed, threads)
    truth = observables[:, 0].astype(np.uint8) if observables.shape[1] else np.zeros(shots, np.uint8)

    dem = extract_dem(noisy)
    if not dem.mechanisms:
        errors = int(np.count_nonzero(truth))
    else:
        graph = dem_to_graph(dem)
        chunks = np.array_split(detectors, max(1, threads))
        with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
            parts = list(
                pool.map(lambda c: _decode_chunk(graph, dem, c, passes, backend), chunks)
            )
        predictions = np.concatenate(parts)
        errors = int(np.count_nonzero(predictions != truth))

    result = BenchmarkResult(
        shots=shots,
        errors=errors,
        rounds=rounds,
        passes=passes,
        wall_time=time.perf_counter() - started,
    )
    logger.info(
        f"p={params.p}: {errors}/{shots} logical errors "
        f"({result.ler_round:.3e} per round, {result.wall_time:.1f}s)"
    )
    return result
