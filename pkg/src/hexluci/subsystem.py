"""Mid-cycle subsystem code construction.

This module turns a lattice and a defect map into the checks the LUCI
schedule measures: untouched plaquettes stay stabilizers, plaquettes cut by a
defect split into gauge operators (one per surviving connected piece), and
the gauges around each defect combine into super-stabilizers.
"""

from __future__ import annotations

import logging
from enum import Enum

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict

from .layout import DefectCase, DefectMap, HexLattice, classify_defects
from .pauli import Basis, PauliError, PauliString, product

logger = logging.getLogger(__name__)


class CodeConstructionError(Exception):
    """Raised when the mid-cycle code cannot be built for a defect map."""

    pass


class CheckKind(str, Enum):
    STABILIZER = "Stabilizer"
    GAUGE = "Gauge"


class CheckOperator(BaseModel):
    """One measured check of the mid-cycle code.

    ``anchor`` is the plaquette the check was cut from, so its y parity gives
    the diagonal the schedule measures it on.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    id: int
    pauli: PauliString
    basis: Basis
    kind: CheckKind
    anchor: tuple[int, int]
    super_group: int | None = None

    @property
    def diagonal(self) -> int:
        return self.anchor[1] % 2

    @property
    def weight(self) -> int:
        return self.pauli.weight


class SuperStabilizer(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    basis: Basis
    pauli: PauliString
    members: tuple[int, ...]


class SubsystemCode(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    lattice: HexLattice
    defects: DefectMap
    checks: list[CheckOperator]
    super_stabilizers: dict[int, SuperStabilizer]

    @property
    def gauges(self) -> list[CheckOperator]:
        return [c for c in self.checks if c.kind is CheckKind.GAUGE]

    @property
    def stabilizers(self) -> list[CheckOperator]:
        return [c for c in self.checks if c.kind is CheckKind.STABILIZER]

    def group_members(self, group: int) -> list[CheckOperator]:
        return [self.checks[i] for i in self.super_stabilizers[group].members]


def gf2_rref(matrix: np.ndarray) -> tuple[np.ndarray, list[int]]:
    """Reduced row echelon form over GF(2) and the pivot columns."""
    m = matrix.copy().astype(np.uint8) % 2
    rows, cols = m.shape
    pivots: list[int] = []
    r = 0
    for c in range(cols):
        if r == rows:
            break
        hits = np.nonzero(m[r:, c])[0]
        if hits.size == 0:
            continue
        pivot = r + int(hits[0])
        m[[r, pivot]] = m[[pivot, r]]
        for i in range(rows):
            if i != r and m[i, c]:
                m[i, :] ^= m[r, :]
        pivots.append(c)
        r += 1
    return m, pivots


def gf2_nullspace(matrix: np.ndarray) -> np.ndarray:
    """Basis (as rows) of the right null space of ``matrix`` over GF(2)."""
    rows, cols = matrix.shape
    if rows == 0:
        return np.eye(cols, dtype=np.uint8)
    reduced, pivots = gf2_rref(matrix)
    basis = []
    for free in (c for c in range(cols) if c not in pivots):
        v = np.zeros(cols, dtype=np.uint8)
        v[free] = 1
        for i, pc in enumerate(pivots):
            v[pc] = reduced[i, free]
        basis.append(v)
    return np.array(basis, dtype=np.uint8).reshape(len(basis), cols)


def _components(
    lattice: HexLattice, defects: DefectMap, qubits: list[int]
) -> list[list[int]]:
    graph = nx.Graph()
    graph.add_nodes_from(qubits)
    for i, a in enumerate(qubits):
        for b in qubits[i + 1 :]:
            if lattice.has_coupler(a, b) and defects.coupler_ok(a, b):
                graph.add_edge(a, b)
    return sorted(sorted(c) for c in nx.connected_components(graph))


def build_midcycle_code(lattice: HexLattice, defects: DefectMap) -> SubsystemCode:
    """Build the mid-cycle subsystem code for ``defects``.

    Every plaquette loses its broken qubits and is split into the connected
    pieces of its surviving support under the working couplers. A piece that
    anticommutes with another piece is a gauge operator; gauge clusters are
    grouped into super-stabilizers by solving the commutation constraints
    over GF(2).

    Raises:
        CodeConstructionError: If a defect is not an isolated case A-D
    """
    defects.check_against(lattice)
    labels = classify_defects(lattice, defects)
    unsupported = [label for label in labels if label.case is DefectCase.UNSUPPORTED]
    if unsupported:
        first = unsupported[0]
        raise CodeConstructionError(
            f"Unsupported defect {first.element} ({first.reason or 'unknown configuration'})"
        )
    if len(labels) > 1:
        logger.warning(f"Composing {len(labels)} separated defects independently (experimental)")

    pieces: list[tuple[Basis, tuple[int, int], list[int]]] = []
    for plaquette in lattice.plaquettes:
        surviving = [q for q in plaquette.support if q not in defects.broken_qubits]
        if not surviving:
            continue
        if len(surviving) == len(plaquette.support) and not defects.broken_couplers:
            pieces.append((plaquette.basis, plaquette.anchor, surviving))
            continue
        for component in _components(lattice, defects, surviving):
            pieces.append((plaquette.basis, plaquette.anchor, component))

    paulis = [PauliString.from_qubits(basis, qs) for basis, _, qs in pieces]
    anticommuting: dict[int, set[int]] = {n: set() for n in range(len(paulis))}
    for a in range(len(paulis)):
        for b in range(a + 1, len(paulis)):
            if not paulis[a].commutes(paulis[b]):
                anticommuting[a].add(b)
                anticommuting[b].add(a)

    groups, supers = _group_gauges(paulis, pieces, anticommuting)

    checks = [
        CheckOperator(
            id=n,
            pauli=paulis[n],
            basis=basis,
            kind=CheckKind.GAUGE if anticommuting[n] else CheckKind.STABILIZER,
            anchor=anchor,
            super_group=groups.get(n),
        )
        for n, (basis, anchor, _) in enumerate(pieces)
    ]
    code = SubsystemCode(
        lattice=lattice, defects=defects, checks=checks, super_stabilizers=supers
    )
    logger.info(
        f"Mid-cycle code: {len(code.stabilizers)} stabilizers, {len(code.gauges)} gauges, "
        f"{len(supers)} super-stabilizers"
    )
    return code


def _group_gauges(
    paulis: list[PauliString],
    pieces: list[tuple[Basis, tuple[int, int], list[int]]],
    anticommuting: dict[int, set[int]],
) -> tuple[dict[int, int], dict[int, SuperStabilizer]]:
    graph = nx.Graph()
    for a, partners in anticommuting.items():
        for b in partners:
            graph.add_edge(a, b)

    groups: dict[int, int] = {}
    supers: dict[int, SuperStabilizer] = {}
    clusters = sorted(sorted(c) for c in nx.connected_components(graph))
    for cluster in clusters:
        xs = [n for n in cluster if pieces[n][0] is Basis.X]
        zs = [n for n in cluster if pieces[n][0] is Basis.Z]
        # rows: X gauges, columns: Z gauges
        matrix = np.array(
            [[0 if paulis[a].commutes(paulis[b]) else 1 for b in zs] for a in xs],
            dtype=np.uint8,
        ).reshape(len(xs), len(zs))
        for basis, members, constraints in (
            (Basis.X, xs, matrix.T),
            (Basis.Z, zs, matrix),
        ):
            for vector in gf2_nullspace(constraints):
                chosen = tuple(m for m, bit in zip(members, vector, strict=True) if bit)
                group = len(supers)
                supers[group] = SuperStabilizer(
                    basis=basis,
                    pauli=product(paulis[m] for m in chosen),
                    members=chosen,
                )
                for m in chosen:
                    groups.setdefault(m, group)
        ungrouped = [n for n in cluster if n not in groups]
        if ungrouped:
            raise CodeConstructionError(f"Gauges {ungrouped} belong to no super-stabilizer")
    return groups, supers


def verify_code(code: SubsystemCode) -> list[str]:
    """Check the commutation and product invariants of a mid-cycle code.

    Returns:
        Diagnostic messages; empty when every invariant holds
    """
    diagnostics: list[str] = []
    stabilizers = code.stabilizers
    for i, a in enumerate(stabilizers):
        for b in stabilizers[i + 1 :]:
            if not a.pauli.commutes(b.pauli):
                diagnostics.append(f"stabilizers {a.id} and {b.id} anticommute")

    for group, sup in code.super_stabilizers.items():
        members = [code.checks[m] for m in sup.members]
        try:
            expected = product(m.pauli for m in members)
        except PauliError:
            expected = None
        if expected is None or expected != sup.pauli:
            diagnostics.append(f"super-stabilizer {group} is not the product of its gauges")
        for check in code.checks:
            if not sup.pauli.commutes(check.pauli):
                diagnostics.append(f"super-stabilizer {group} anticommutes with check {check.id}")

    for check in code.gauges:
        if check.super_group is None:
            diagnostics.append(f"gauge {check.id} has no super-stabilizer group")
    return diagnostics


def support_extent(pauli: PauliString, lattice: HexLattice) -> tuple[int, int]:
    """Spread of a support along the two data-lattice directions.

    Returns (horizontal, vertical) where horizontal is the span of x + y and
    vertical the span of x - y over the supported qubits. A single plaquette
    spans (2, 2).
    """
    keys = [lattice.key_of(q) for q in pauli.qubits]
    if not keys:
        return (0, 0)
    us = [x + y for x, y in keys]
    vs = [x - y for x, y in keys]
    return (max(us) - min(us), max(vs) - min(vs))


def dump_checks(code: SubsystemCode) -> str:
    """Text dump, one check per line: ``<kind> <basis> <group> : q1,q2,...``."""
    lines = []
    for check in code.checks:
        group = "-" if check.super_group is None else str(check.super_group)
        qubits = ",".join(str(q) for q in check.pauli.qubits)
        lines.append(f"{check.kind.value} {check.basis.value} {group} : {qubits}")
    return "\n".join(lines)
