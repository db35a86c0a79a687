"""Matching graphs and graphlike circuit distance.

This module turns a detector error model into a matching graph (detectors
plus one virtual boundary node) and measures the graphlike circuit distance:
the fewest graphlike faults that flip the logical observable without
firing a detector.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Mapping
from dataclasses import dataclass, field, replace
from itertools import combinations

import networkx as nx
import pandas as pd

from .circuit_ir import Circuit
from .noise_sim import DetectorErrorModel, NoiseParams, apply_si1000, extract_dem
from .pauli import Basis

logger = logging.getLogger(__name__)

MIN_PROBABILITY = 1e-15


class GraphConstructionError(Exception):
    """Raised when a detector error model has no graphlike form."""

    pass


def edge_weight(probability: float) -> float:
    q = min(max(probability, MIN_PROBABILITY), 0.5)
    return math.log((1 - q) / q)


@dataclass(frozen=True)
class Edge:
    """A graphlike fault class between two nodes (or a node and the boundary)."""

    u: int
    v: int
    probability: float
    observables: int = 0
    mechanisms: tuple[int, ...] = ()

    @property
    def weight(self) -> float:
        return edge_weight(self.probability)

    @property
    def key(self) -> tuple[int, int]:
        return (self.u, self.v)


@dataclass
class MatchingGraph:
    """Detectors ``0..num_detectors-1`` plus the boundary node ``num_detectors``."""

    num_detectors: int
    edges: dict[tuple[int, int], Edge] = field(default_factory=dict)
    parallel: list[Edge] = field(default_factory=list)
    silent_observables: int = 0

    @property
    def boundary(self) -> int:
        return self.num_detectors

    def edge(self, a: int, b: int) -> Edge | None:
        return self.edges.get((min(a, b), max(a, b)))

    def add(self, a: int, b: int, probability: float, observables: int, mechanism: int) -> None:
        """Add a fault, merging it into an existing parallel edge.

        Parallel faults with different observable masks cannot share an
        edge: the more likely one is used for decoding and the other is kept
        in ``parallel`` for distance searches.
        """
        u, v = min(a, b), max(a, b)
        prior = self.edges.get((u, v))
        if prior is None:
            self.edges[(u, v)] = Edge(u, v, probability, observables, (mechanism,))
        elif prior.observables == observables:
            self.edges[(u, v)] = replace(
                prior,
                probability=prior.probability * (1 - probability)
                + probability * (1 - prior.probability),
                mechanisms=prior.mechanisms + (mechanism,),
            )
        else:
            fault = Edge(u, v, probability, observables, (mechanism,))
            if probability > prior.probability:
                logger.debug(f"Edge {(u, v)}: mask {observables} outweighs {prior.observables}")
                self.edges[(u, v)], fault = fault, prior
            self.parallel.append(fault)

    def faults(self) -> list[Edge]:
        """Every graphlike fault class, parallel edges included."""
        return [*self.edges.values(), *self.parallel]

    def reweighted(self, probabilities: Mapping[tuple[int, int], float]) -> MatchingGraph:
        edges = dict(self.edges)
        for key, q in probabilities.items():
            edges[key] = replace(edges[key], probability=q)
        return MatchingGraph(
            self.num_detectors, edges, list(self.parallel), self.silent_observables
        )

    def to_networkx(self, unit_weights: bool = False) -> nx.Graph:
        graph = nx.Graph()
        graph.add_nodes_from(range(self.num_detectors + 1))
        for e in self.edges.values():
            graph.add_edge(
                e.u,
                e.v,
                weight=1.0 if unit_weights else e.weight,
                observables=e.observables,
            )
        return graph


def _split(
    detectors: frozenset[int],
    observables: frozenset[int],
    known: dict[frozenset[int], frozenset[int]],
) -> list[tuple[frozenset[int], frozenset[int]]] | None:
    remaining = set(detectors)
    pieces: list[tuple[frozenset[int], frozenset[int]]] = []
    while remaining:
        found = None
        for a, b in combinations(sorted(remaining), 2):
            if frozenset((a, b)) in known:
                found = frozenset((a, b))
                break
        if found is None:
            found = next((frozenset({d}) for d in sorted(remaining) if frozenset({d}) in known), None)
        if found is None:
            return None
        pieces.append((found, known[found]))
        remaining -= found
    flipped: frozenset[int] = frozenset()
    for _, obs in pieces:
        flipped = flipped ^ obs
    return pieces if flipped == observables else None


def _mask(observables: frozenset[int]) -> int:
    return sum(1 << o for o in observables)


def dem_to_graph(dem: DetectorErrorModel) -> MatchingGraph:
    """Build the matching graph of a detector error model.

    Mechanisms flipping one detector become boundary edges. Components with
    more than two detectors are split greedily into graphlike symptom sets
    that already occur in the model.

    Raises:
        GraphConstructionError: If a component cannot be split
    """
    known: dict[frozenset[int], frozenset[int]] = {}
    for m in dem.mechanisms:
        for dets, obs in m.components or ((m.detectors, m.observables),):
            if 1 <= len(dets) <= 2:
                known.setdefault(dets, obs)

    graph = MatchingGraph(dem.num_detectors)
    for n, m in enumerate(dem.mechanisms):
        for dets, obs in m.components or ((m.detectors, m.observables),):
            if not dets:
                if obs:
                    logger.warning(f"Mechanism {n} flips an observable without any detector")
                    graph.silent_observables |= _mask(obs)
                continue
            pieces = [(dets, obs)] if len(dets) <= 2 else _split(dets, obs, known)
            if pieces is None:
                raise GraphConstructionError(
                    f"Mechanism {n} (detectors {sorted(dets)}) has no graphlike decomposition"
                )
            for piece, piece_obs in pieces:
                ends = sorted(piece)
                a, b = (ends[0], graph.boundary) if len(ends) == 1 else (ends[0], ends[1])
                graph.add(a, b, m.probability, _mask(piece_obs), n)
    logger.debug(f"Matching graph: {len(graph.edges)} edges over {graph.num_detectors} detectors")
    return graph


def graphlike_distance(graph: MatchingGraph, observable: int = 0) -> int | float:
    """Fewest edges in a closed walk with odd ``observable`` parity.

    Searches the parity double cover of the graph with unit weights. A fault
    that flips the observable without any detector is distance 1. Returns
    ``math.inf`` when no such walk exists.
    """
    if graph.silent_observables >> observable & 1:
        logger.warning("An undetectable fault flips the observable")
        return 1
    cover = nx.Graph()
    sources: set[int] = set()
    for e in graph.faults():
        parity = e.observables >> observable & 1
        cover.add_edge((e.u, 0), (e.v, parity))
        cover.add_edge((e.u, 1), (e.v, 1 - parity))
        if parity:
            sources.update((e.u, e.v))

    best: int | float = math.inf
    for node in sorted(sources):
        lengths = nx.single_source_shortest_path_length(cover, (node, 0))
        length = lengths.get((node, 1))
        if length is not None and length < best:
            best = length
    if best == math.inf:
        logger.warning("No logical fault found in the matching graph")
    return best


def brute_force_distance(graph: MatchingGraph, max_weight: int, observable: int = 0) -> int | None:
    """Exhaustive search over edge subsets of size <= ``max_weight``.

    Returns:
        The smallest undetectable odd-parity fault set size, or None
    """
    if graph.silent_observables >> observable & 1:
        return 1
    faults = []
    for e in graph.faults():
        syndrome = 1 << e.u
        if e.v != graph.boundary:
            syndrome ^= 1 << e.v
        faults.append((syndrome, e.observables >> observable & 1))

    for size in range(1, max_weight + 1):
        for combo in combinations(faults, size):
            syndrome = 0
            parity = 0
            for s, p in combo:
                syndrome ^= s
                parity ^= p
            if syndrome == 0 and parity:
                return size
    return None


def circuit_distance(circuit: Circuit, p: float = 1e-3) -> int | float:
    """Graphlike distance of a noiseless circuit under SI1000 noise of strength ``p``."""
    dem = extract_dem(apply_si1000(circuit, NoiseParams(p=p)))
    return graphlike_distance(dem_to_graph(dem))


def distance_table(
    circuits: Mapping[str, Mapping[Basis, Circuit]], p: float = 1e-3
) -> pd.DataFrame:
    """Per-case, per-basis graphlike distances.

    Returns:
        DataFrame with columns case, basis, distance, detectors
    """
    rows = []
    for case, by_basis in circuits.items():
        for basis, circuit in by_basis.items():
            distance = circuit_distance(circuit, p)
            rows.append(
                {
                    "case": case,
                    "basis": basis.value,
                    "distance": distance,
                    "detectors": circuit.num_detectors,
                }
            )
            logger.info(f"{case} {basis.value}-memory: distance {distance}")
    return pd.DataFrame(rows, columns=["case", "basis", "distance", "detectors"])
