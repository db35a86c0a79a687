"""Four-round LUCI schedule for a mid-cycle subsystem code.

This module builds the contracting CX layers of each round type, decides
which checks each round measures (including the extra gauge measurements
that fit into the same depth), and lowers the resulting board to a memory
experiment circuit whose detectors are inferred by the ISG tracker.
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, field, replace

from .circuit_ir import Circuit, InstructionKind
from .isg import infer_all
from .layout import DefectCase, HexLattice, classify_defects, logical_support
from .pauli import Basis, PauliString, product
from .subsystem import CheckKind, SubsystemCode

logger = logging.getLogger(__name__)

Pair = tuple[int, int]
Layer = tuple[Pair, ...]
Offset = tuple[int, int]

# Contracting layers (first, second) of each round type
CONTRACT_LAYERS: dict[int, tuple[str, str]] = {
    0: ("C", "D"),
    1: ("B", "A"),
    2: ("C", "D"),
    3: ("B", "A"),
}

# Gauge basis measured in each round type; the other basis is skipped
STEP_BASIS: dict[int, Basis] = {0: Basis.Z, 1: Basis.X, 2: Basis.X, 3: Basis.Z}

CxEdits = tuple[list[tuple[Offset, Offset]], list[tuple[Offset, Offset]]]

# Edits of the second contracting layer around a defect, relative to the
# defect's data qubit: role -> (removed CX pairs, added CX pairs)
DEFECT_CX_TABLES: dict[DefectCase, dict[int, CxEdits]] = {
    DefectCase.A: {
        2: ([((-1, 1), (0, 1))], []),
        3: ([((0, -1), (-1, -1))], []),
    },
    DefectCase.B: {},
    DefectCase.C: {
        0: ([((-1, 1), (0, 1)), ((1, 0), (0, 0))], [((0, 1), (-1, 1))]),
        2: ([((-1, 1), (0, 1))], []),
    },
    DefectCase.D: {
        1: ([((0, -1), (-1, -1)), ((0, 0), (1, 0))], [((-1, -1), (0, -1))]),
        3: ([((0, -1), (-1, -1))], []),
    },
}


class ScheduleError(Exception):
    """Raised when a check cannot be scheduled or a circuit cannot be emitted."""

    pass


@dataclass(frozen=True)
class Round:
    """One LUCI round type.

    ``targets`` maps every measured check (base and extra) to the qubit the
    contracting layers map it onto.
    """

    round_type: int
    measured_checks: tuple[int, ...]
    expand_layers: tuple[Layer, Layer]
    contract_layers: tuple[Layer, Layer]
    targets: Mapping[int, int]
    extra_checks: tuple[int, ...] = ()

    @property
    def diagonal(self) -> int:
        return (self.round_type + 1) % 2

    @property
    def step_basis(self) -> Basis:
        return STEP_BASIS[self.round_type]

    @property
    def cx_layers(self) -> tuple[Layer, Layer, Layer, Layer]:
        return (*self.expand_layers, *self.contract_layers)

    def checks(self, augment: bool = True) -> tuple[int, ...]:
        return self.measured_checks + self.extra_checks if augment else self.measured_checks

    def measure_layer(self, code: SubsystemCode, augment: bool = True) -> dict[int, Basis]:
        """Qubit -> measurement basis for the checks measured this round."""
        return {self.targets[c]: code.checks[c].basis for c in self.checks(augment)}


@dataclass(frozen=True)
class LuciBoard:
    code: SubsystemCode
    rounds: tuple[Round, Round, Round, Round]
    augmented: bool = False

    def additions(self) -> dict[int, tuple[int, ...]]:
        return {r.round_type: r.extra_checks for r in self.rounds}


@dataclass(frozen=True)
class _Candidate:
    round_type: int
    check: int
    landing: int
    weight: int = field(compare=False)


def bulk_cx_layers(lattice: HexLattice) -> dict[str, list[Pair]]:
    """The four CX layers of the unbroken patch.

    A and D are horizontal (control on odd / even x), B and C vertical with
    the control on the lower qubit (lower y even / odd). A boundary measure
    qubit keeps its horizontal CX only in the layer where an X-boundary
    qubit is the control or a Z-boundary qubit is the target.
    """
    layers: dict[str, list[Pair]] = {"A": [], "B": [], "C": [], "D": []}
    for data in lattice.data_qubits():
        x, y = lattice.key_of(data)
        right = lattice.index_of(x + 1, y)
        if right is not None:
            odd_first = (data, right) if x % 2 == 1 else (right, data)
            even_first = (data, right) if x % 2 == 0 else (right, data)
            boundary = lattice.qubits[right].boundary_basis
            for name, (control, target) in (("A", odd_first), ("D", even_first)):
                if boundary is Basis.X and control != right:
                    continue
                if boundary is Basis.Z and target != right:
                    continue
                layers[name].append((control, target))
        for dy in (-1, 1):
            other = lattice.index_of(x, y + dy)
            if other is None:
                continue
            lower, upper = (other, data) if dy < 0 else (data, other)
            name = "B" if lattice.key_of(lower)[1] % 2 == 0 else "C"
            layers[name].append((lower, upper))
    return {name: sorted(pairs) for name, pairs in layers.items()}


def defect_role(lattice: HexLattice, anchor: int, round_type: int) -> int:
    """Which row of a defect table applies to ``round_type`` for a defect at ``anchor``."""
    x, y = lattice.key_of(anchor)
    return round_type if x % 2 == 1 and y % 2 == 1 else 3 - round_type


def contract_layers(code: SubsystemCode, round_type: int) -> tuple[Layer, Layer]:
    """Contracting CX layers of ``round_type`` with broken elements removed and defect edits applied.

    Raises:
        ScheduleError: If an edit needs a missing coupler or reuses a qubit
    """
    lattice, defects = code.lattice, code.defects
    bulk = bulk_cx_layers(lattice)
    first, second = (
        [pair for pair in bulk[name] if defects.coupler_ok(*pair)]
        for name in CONTRACT_LAYERS[round_type]
    )

    for label in classify_defects(lattice, defects):
        table = DEFECT_CX_TABLES.get(label.case, {})
        removed, added = table.get(defect_role(lattice, label.anchor, round_type), ([], []))
        x, y = lattice.key_of(label.anchor)

        def at(offset: Offset, x: int = x, y: int = y) -> int:
            idx = lattice.index_of(x + offset[0], y + offset[1])
            if idx is None:
                raise ScheduleError(f"Defect edit needs a qubit at offset {offset} of ({x},{y})")
            return idx

        for c, t in removed:
            pair = (at(c), at(t))
            if pair in second:
                second.remove(pair)
        for c, t in added:
            pair = (at(c), at(t))
            if not (lattice.has_coupler(*pair) and defects.coupler_ok(*pair)):
                raise ScheduleError(f"Defect edit {pair} has no working coupler")
            second.append(pair)

    for n, layer in enumerate((first, second)):
        seen: set[int] = set()
        for pair in layer:
            if seen & set(pair):
                raise ScheduleError(f"Round type {round_type} layer {n} reuses a qubit in {pair}")
            seen.update(pair)
    return (tuple(sorted(first)), tuple(sorted(second)))


def contract_target(pauli: PauliString, layers: tuple[Layer, ...]) -> int | None:
    """The single qubit ``pauli`` is mapped onto by ``layers``, if any."""
    out = pauli
    for layer in layers:
        out = out.conjugate_layer(layer)
    if out.weight != 1 or out.basis is not pauli.basis:
        return None
    return out.qubits[0]


def build_luci_rounds(code: SubsystemCode) -> LuciBoard:
    """Build the four base round types.

    Round type t measures the diagonal (t + 1) % 2: every stabilizer on it,
    and the gauges on it whose basis matches the round's step (X for types 1
    and 2, Z for types 3 and 0).

    Raises:
        ScheduleError: If a check does not contract onto a single free qubit
    """
    contracts = {t: contract_layers(code, t) for t in range(4)}
    rounds = []
    for t in range(4):
        previous = contracts[(t - 1) % 4]
        expand = (previous[1], previous[0])
        diagonal = (t + 1) % 2
        measured = tuple(
            c.id
            for c in code.checks
            if c.diagonal == diagonal
            and (c.kind is CheckKind.STABILIZER or c.basis is STEP_BASIS[t])
        )
        targets: dict[int, int] = {}
        used: dict[int, int] = {}
        for cid in measured:
            landing = contract_target(code.checks[cid].pauli, contracts[t])
            if landing is None:
                raise ScheduleError(f"Check {cid} does not contract to one qubit in round type {t}")
            if landing in used:
                raise ScheduleError(
                    f"Checks {used[landing]} and {cid} both contract onto qubit {landing}"
                )
            used[landing] = cid
            targets[cid] = landing
        rounds.append(
            Round(
                round_type=t,
                measured_checks=measured,
                expand_layers=expand,
                contract_layers=contracts[t],
                targets=targets,
            )
        )
        logger.debug(f"Round type {t}: {len(measured)} checks")
    return LuciBoard(code=code, rounds=(rounds[0], rounds[1], rounds[2], rounds[3]))


def _consistent(board: LuciBoard, selection: tuple[_Candidate, ...]) -> bool:
    code = board.code
    measured = {r.round_type: set(r.measured_checks) for r in board.rounds}
    landings = {r.round_type: set(r.targets.values()) for r in board.rounds}
    for cand in selection:
        if cand.landing in landings[cand.round_type]:
            return False
        landings[cand.round_type].add(cand.landing)
        measured[cand.round_type].add(cand.check)

    for cand in selection:
        g = code.checks[cand.check].pauli
        same_round = (code.checks[c] for c in measured[cand.round_type] if c != cand.check)
        if any(c.kind is CheckKind.GAUGE and not g.commutes(c.pauli) for c in same_round):
            return False
        previous = measured[(cand.round_type - 1) % 4]
        for sup in code.super_stabilizers.values():
            seen = [code.checks[m].pauli for m in sup.members if m in previous]
            if seen and not g.commutes(product(seen)):
                return False
    return True


def augment_extra_gauge_measurements(board: LuciBoard) -> LuciBoard:
    """Add skipped gauge measurements that fit into the existing rounds.

    A gauge skipped in a round because of its basis, but lying on that
    round's diagonal and contracting onto a free qubit, is a candidate. An
    extra measurement g is allowed when it commutes with every other gauge
    measured in its round, and with the product of the gauges of each
    super-stabilizer measured in the previous round. Both conditions are
    checked against the board with every earlier addition in place, taking
    candidates heaviest first (then by round type and check id). CX layers
    are not touched, so depth is unchanged.
    """
    code = board.code
    candidates: list[_Candidate] = []
    for rnd in board.rounds:
        used = set(rnd.targets.values())
        for g in code.gauges:
            if g.diagonal != rnd.diagonal or g.basis is rnd.step_basis:
                continue
            if g.id in rnd.measured_checks:
                continue
            landing = contract_target(g.pauli, rnd.contract_layers)
            if landing is None or landing in used:
                continue
            candidates.append(_Candidate(rnd.round_type, g.id, landing, g.weight))

    chosen: tuple[_Candidate, ...] = ()
    for cand in sorted(candidates, key=lambda c: -c.weight):
        if _consistent(board, (*chosen, cand)):
            chosen = (*chosen, cand)
        else:
            logger.debug(f"Round type {cand.round_type}: gauge {cand.check} not added")

    rounds = []
    for rnd in board.rounds:
        extra = tuple(sorted(c.check for c in chosen if c.round_type == rnd.round_type))
        targets = dict(rnd.targets)
        targets.update({c.check: c.landing for c in chosen if c.round_type == rnd.round_type})
        rounds.append(replace(rnd, extra_checks=extra, targets=targets))
        if extra:
            logger.debug(f"Round type {rnd.round_type}: extra gauge measurements {extra}")

    logger.info(f"Augmentation added {len(chosen)} gauge measurements per 4 rounds")
    return LuciBoard(
        code=code, rounds=(rounds[0], rounds[1], rounds[2], rounds[3]), augmented=True
    )


def build_board(code: SubsystemCode, augment: bool = True) -> LuciBoard:
    board = build_luci_rounds(code)
    return augment_extra_gauge_measurements(board) if augment else board


def emit_circuit(
    board: LuciBoard,
    rounds: int,
    memory_basis: Basis,
    augment: bool = True,
) -> Circuit:
    """Lower a board to a memory experiment.

    The circuit resets every working qubit (the qubits measured by round type
    3 in their own basis, the rest in ``memory_basis``), then repeats
    expand / contract / measure / reset for ``rounds`` rounds starting from
    round type 0. The last round also measures every remaining qubit in
    ``memory_basis``. Broken qubits are left out and the rest re-indexed in
    lattice order. Detectors and the observable are inferred afterwards.

    Args:
        board: Board from build_luci_rounds (augmented or not)
        rounds: Number of LUCI rounds
        memory_basis: Basis of the stored logical state
        augment: Whether to include the extra gauge measurements

    Raises:
        ScheduleError: If rounds < 1 or the board lacks its augmentation
    """
    if rounds < 1:
        raise ScheduleError(f"Need at least one round, got {rounds}")
    if augment and not board.augmented:
        board = augment_extra_gauge_measurements(board)

    code = board.code
    lattice = code.lattice
    working = [q.index for q in lattice.qubits if q.index not in code.defects.broken_qubits]
    index = {q: n for n, q in enumerate(working)}

    def remap(qubits: dict[int, Basis], basis: Basis) -> list[int]:
        return sorted(index[q] for q, b in qubits.items() if b is basis)

    circuit = Circuit()
    for q in working:
        circuit.declare(index[q], lattice.qubits[q].coord)

    previous = board.rounds[3].measure_layer(code, augment)
    initial = {q: previous.get(q, memory_basis) for q in working}
    circuit.gate(InstructionKind.R, remap(initial, Basis.Z))
    circuit.gate(InstructionKind.RX, remap(initial, Basis.X))
    circuit.tick()

    for r in range(rounds):
        rnd = board.rounds[r % 4]
        if r > 0:
            circuit.gate(InstructionKind.R, remap(previous, Basis.Z))
            circuit.gate(InstructionKind.RX, remap(previous, Basis.X))
            circuit.tick()
        for layer in rnd.cx_layers:
            circuit.gate(InstructionKind.CX, [index[q] for pair in layer for q in pair])
            circuit.tick()
        measure = rnd.measure_layer(code, augment)
        if r == rounds - 1:
            measure = {q: measure.get(q, memory_basis) for q in working}
        circuit.gate(InstructionKind.M, remap(measure, Basis.Z))
        circuit.gate(InstructionKind.MX, remap(measure, Basis.X))
        if r < rounds - 1:
            circuit.tick()
        previous = measure

    logical = PauliString.from_qubits(
        memory_basis, (index[q] for q in logical_support(lattice, memory_basis))
    )
    partner = PauliString.from_qubits(
        memory_basis.dual, (index[q] for q in logical_support(lattice, memory_basis.dual))
    )
    annotated = infer_all(circuit, observable=logical, partner=partner)
    logger.info(
        f"Emitted {rounds}-round {memory_basis.value}-memory circuit with "
        f"{annotated.num_detectors} detectors"
    )
    return annotated
