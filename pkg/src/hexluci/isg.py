"""Instantaneous stabilizer group tracking and detector inference.

This module walks a Clifford circuit of resets, CX gates and single-qubit
measurements while maintaining a basis of the group of Pauli operators the
state is known to be stabilized by. Each basis element remembers which
measurement records fix its sign. A measurement whose operator lies in the
span of the basis is deterministic, and the records of its decomposition
form a detector. A memory experiment's logical operator is kept outside the
basis and carried along separately, so no detector ever depends on it.
"""

from __future__ import annotations

import logging
import math
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from fractions import Fraction

from .circuit_ir import (
    KIND_BASIS,
    MEASURE_KINDS,
    RESET_KINDS,
    Circuit,
    Instruction,
    InstructionKind,
    MeasurementRef,
    strip_annotations,
)
from .layout import Coord
from .pauli import Basis, PauliString

logger = logging.getLogger(__name__)


class InferenceError(Exception):
    """Raised when the tracker meets an instruction it cannot process."""

    pass


def _bits(mask: int) -> list[int]:
    out = []
    while mask:
        low = mask & -mask
        out.append(low.bit_length() - 1)
        mask ^= low
    return out


def _low_bit(mask: int) -> int:
    return (mask & -mask).bit_length() - 1


@dataclass(frozen=True)
class BasisElement:
    """One generator of the tracked group.

    The state is stabilized by ``(-1)**parity(records) * pauli``, where
    ``records`` is a bitmask of absolute measurement indices.
    """

    pauli: PauliString
    records: int = 0
    last_measurements: tuple[int, ...] = ()
    origin_check: int | None = None

    def __mul__(self, other: BasisElement) -> BasisElement:
        return BasisElement(pauli=self.pauli * other.pauli, records=self.records ^ other.records)


@dataclass(frozen=True)
class Outcome:
    """Result of processing one measurement.

    ``records`` is the detector record set including the measurement itself;
    it is None for random measurements.
    """

    index: int
    deterministic: bool
    records: int | None = None


class StabilizerBasis:
    """A mutable basis of the instantaneous stabilizer group on ``num_qubits`` qubits.

    After ``attach_observable`` the basis spans only the part of the group
    that commutes with ``partner``; the logical itself lives in ``logical``
    and is rewritten by multiplying in basis elements whenever a reset or
    measurement would disturb it.
    """

    def __init__(self, num_qubits: int):
        self.num_qubits = num_qubits
        self.measurement_count = 0
        self.elements: list[BasisElement] = [
            BasisElement(PauliString.single(q, Basis.Z)) for q in range(num_qubits)
        ]
        self.logical: BasisElement | None = None
        self.partner: PauliString | None = None
        self.logical_lost = False

    def __len__(self) -> int:
        return len(self.elements)

    def _vector(self, pauli: PauliString) -> int:
        return pauli.xs | (pauli.zs << self.num_qubits)

    def decompose(self, pauli: PauliString) -> list[int] | None:
        """Indices of the elements whose product is ``pauli`` up to sign, or None."""
        rows: list[tuple[int, int]] = []
        for n, element in enumerate(self.elements):
            vector, combo = self._vector(element.pauli), 1 << n
            for pivot_vector, pivot_combo in rows:
                if vector ^ pivot_vector < vector:
                    vector ^= pivot_vector
                    combo ^= pivot_combo
            if vector:
                rows.append((vector, combo))
                rows.sort(reverse=True)

        target, combo = self._vector(pauli), 0
        for pivot_vector, pivot_combo in rows:
            if target ^ pivot_vector < target:
                target ^= pivot_vector
                combo ^= pivot_combo
        return _bits(combo) if target == 0 else None

    def combine(self, indices: Iterable[int]) -> BasisElement:
        out = BasisElement(PauliString.identity())
        for n in indices:
            out = out * self.elements[n]
        return out

    def _pick(self, candidates: Sequence[int]) -> int:
        """The heaviest candidate (earliest on ties)."""
        return max(candidates, key=lambda n: (self.elements[n].pauli.weight, -n))

    def _stalest(self, candidates: Sequence[int]) -> int:
        """The candidate whose sign rests on the oldest measurement record.

        Elements with no records (fixed by resets) count as newest; ties go to
        the lightest, so an element of the form g' * g survives to be reduced.
        """

        def age(n: int) -> tuple[int | float, int, int]:
            element = self.elements[n]
            oldest = _low_bit(element.records) if element.records else math.inf
            return (oldest, element.pauli.weight, n)

        return min(candidates, key=age)

    def _eliminate(self, pivot: int, others: Iterable[int]) -> None:
        for n in others:
            self.elements[n] = self.elements[n] * self.elements[pivot]
        del self.elements[pivot]

    def attach_observable(self, logical: PauliString, partner: PauliString) -> None:
        """Split ``logical`` off the group.

        Elements that anticommute with ``partner`` are paired up through one
        member of the logical's decomposition, which is then removed; the
        logical keeps that member's records.

        Raises:
            InferenceError: If ``logical`` is not in the group or ``partner`` commutes with it
        """
        if partner.commutes(logical):
            raise InferenceError(f"Partner {partner} must anticommute with logical {logical}")
        members = self.decompose(logical)
        if not members:
            raise InferenceError(f"Logical {logical} is not stabilized by the initial state")
        combined = self.combine(members)
        flipped = [n for n, e in enumerate(self.elements) if not e.pauli.commutes(partner)]
        # the logical anticommutes with partner, so an odd number of its members do
        pivot = next(n for n in members if n in flipped)
        self._eliminate(pivot, (n for n in flipped if n != pivot))
        self.logical = combined
        self.partner = partner

    def _carry_logical(self, pauli: PauliString, pivot: int | None) -> None:
        """Make the logical and its partner commute with ``pauli`` using element ``pivot``."""
        if self.logical is not None and not self.logical.pauli.commutes(pauli):
            if pivot is None:
                logger.warning(f"{pauli} anticommutes with the logical and the whole group")
                self.logical = None
                self.logical_lost = True
            else:
                self.logical = self.logical * self.elements[pivot]
        if self.partner is not None and not self.partner.commutes(pauli):
            if pivot is None:
                logger.debug(f"Measuring {pauli} reads out the logical; partner dropped")
                self.partner = None
            else:
                self.partner = self.partner * self.elements[pivot].pauli

    def _strip_logical(self, qubit: int, element: BasisElement | None) -> None:
        if self.logical is None or not self.logical.pauli.acts_on(qubit):
            return
        if element is None:
            logger.warning(f"Reset of qubit {qubit} discards part of the logical")
            self.logical = None
            self.logical_lost = True
            return
        self.logical = self.logical * element

    def process_unitary(self, gate: Instruction) -> None:
        """Conjugate every element (and the logical pair) through a CX instruction.

        Raises:
            InferenceError: For any other gate kind
        """
        if gate.kind is not InstructionKind.CX:
            raise InferenceError(f"Cannot conjugate through {gate.kind.value}")
        pairs = gate.pairs
        self.elements = [replace(e, pauli=e.pauli.conjugate_layer(pairs)) for e in self.elements]
        if self.logical is not None:
            self.logical = replace(self.logical, pauli=self.logical.pauli.conjugate_layer(pairs))
        if self.partner is not None:
            self.partner = self.partner.conjugate_layer(pairs)

    def process_reset(self, qubit: int, basis: Basis) -> None:
        """Reset ``qubit`` to the +1 eigenstate of ``basis``."""
        pauli = PauliString.single(qubit, basis)
        anticommuting = [n for n, e in enumerate(self.elements) if not e.pauli.commutes(pauli)]
        pivot = self._pick(anticommuting) if anticommuting else None
        self._carry_logical(pauli, pivot)
        if pivot is not None:
            self._eliminate(pivot, (n for n in anticommuting if n != pivot))

        members = self.decompose(pauli)
        touching = [n for n, e in enumerate(self.elements) if e.pauli.acts_on(qubit)]
        if members is None:
            if touching:
                pivot = self._pick(touching)
                self._strip_logical(qubit, self.elements[pivot])
                self._eliminate(pivot, (n for n in touching if n != pivot))
            else:
                self._strip_logical(qubit, None)
            self.elements.append(BasisElement(pauli))
            return

        # strip the qubit from every other element using its pre-reset value
        slot = self._pick(members)
        self.elements[slot] = self.combine(members)
        self._strip_logical(qubit, self.elements[slot])
        for n in touching:
            if n != slot:
                self.elements[n] = self.elements[n] * self.elements[slot]
        self.elements[slot] = BasisElement(pauli)

    def is_deterministic(self, pauli: PauliString) -> bool:
        if any(not e.pauli.commutes(pauli) for e in self.elements):
            return False
        return self.decompose(pauli) is not None

    def process_measurement(self, pauli: PauliString, index: int) -> Outcome:
        """Measure ``pauli`` as record ``index`` and update the basis."""
        bit = 1 << index
        self.measurement_count = max(self.measurement_count, index + 1)
        anticommuting = [n for n, e in enumerate(self.elements) if not e.pauli.commutes(pauli)]
        pivot = self._pick(anticommuting) if anticommuting else None
        self._carry_logical(pauli, pivot)
        if pivot is not None:
            self._eliminate(pivot, (n for n in anticommuting if n != pivot))
            new = BasisElement(pauli, records=bit, last_measurements=(index,))
            self._simplify(new)
            self.elements.append(new)
            return Outcome(index, deterministic=False)

        members = self.decompose(pauli)
        if members is None:
            self.elements.append(BasisElement(pauli, records=bit, last_measurements=(index,)))
            return Outcome(index, deterministic=False)

        combined = self.combine(members)
        if len(members) == 1 and self.elements[members[0]].pauli.same_operator(pauli):
            slot = members[0]
            history = (self.elements[slot].last_measurements + (index,))[-2:]
        else:
            slot = self._stalest(members)
            history = (index,)
        new = BasisElement(pauli, records=bit, last_measurements=history)
        self.elements[slot] = new
        # elements of the form g' * g become g'
        self._simplify(new, skip=slot)
        return Outcome(index, deterministic=True, records=combined.records ^ bit)

    def _simplify(self, new: BasisElement, skip: int | None = None) -> None:
        for n, e in enumerate(self.elements):
            if n == skip:
                continue
            reduced = e.pauli * new.pauli
            if reduced.weight < e.pauli.weight:
                self.elements[n] = e * new

    def process_measurement_layer(
        self, measurements: Sequence[tuple[PauliString, int]]
    ) -> list[Outcome]:
        """Measure a layer of commuting operators.

        Measurements that are deterministic against the basis before the
        layer are resolved first; the rest are processed in order, so a
        measurement fixed by earlier ones in the same layer is still found.
        """
        early = [m for m in measurements if self.is_deterministic(m[0])]
        early_indices = {index for _, index in early}
        late = [m for m in measurements if m[1] not in early_indices]
        outcomes = [self.process_measurement(p, i) for p, i in early]
        outcomes.extend(self.process_measurement(p, i) for p, i in late)
        return sorted(outcomes, key=lambda o: o.index)

    def logical_readout(self) -> int:
        """Records whose parity gives the logical's value at this point.

        Raises:
            InferenceError: If the logical was destroyed or is not yet fixed by measurements
        """
        if self.logical is None:
            if self.logical_lost:
                raise InferenceError("The logical observable was destroyed mid-circuit")
            raise InferenceError("No logical observable is attached")
        members = self.decompose(self.logical.pauli)
        if members is None:
            raise InferenceError("The logical observable is never measured deterministically")
        return self.logical.records ^ self.combine(members).records


def _detector_coords(coords: dict[int, Coord], qubit: int, layer: int) -> tuple[Fraction, ...]:
    coord = coords.get(qubit)
    if coord is None:
        return (Fraction(layer),)
    return (coord.x, coord.y, Fraction(layer))


def reduce_before(mask: int, detectors: Iterable[int], start: int) -> int:
    """Clear the records of ``mask`` below ``start`` by adding detector record sets.

    Detectors are put in echelon form keyed by their lowest record, and the
    earliest remaining record of ``mask`` is cancelled first. Records that no
    detector combination can move are left in place.
    """
    pivots: dict[int, int] = {}
    for vector in detectors:
        while vector:
            low = _low_bit(vector)
            if low not in pivots:
                pivots[low] = vector
                break
            vector ^= pivots[low]

    early_mask = (1 << start) - 1
    while mask & early_mask:
        low = _low_bit(mask & early_mask)
        if low not in pivots:
            logger.warning(f"Observable keeps record {low} before the final layer")
            break
        mask ^= pivots[low]
    return mask


def infer_all(
    circuit: Circuit,
    observable: PauliString | None = None,
    partner: PauliString | None = None,
) -> Circuit:
    """Re-derive every detector and the observable of ``circuit``.

    Existing annotations are dropped. After each run of consecutive
    measurement instructions, one DETECTOR per deterministic measurement is
    inserted (at the measured qubit's coordinates plus the layer number).

    When ``observable`` is given it is split off the state before the first
    gate, with ``partner`` (a logical anticommuting with it) fixing which part
    of the state counts as stabilizers. The logical is carried to the end and
    its readout becomes OBSERVABLE_INCLUDE(0), moved onto the last measurement
    layer by adding detectors.

    Raises:
        InferenceError: On an unknown instruction, a missing partner, or a
            logical that is not prepared, is destroyed or is never read out
    """
    if observable is not None and partner is None:
        raise InferenceError("Tracking an observable needs its partner logical")
    bare = strip_annotations(circuit)
    coords = bare.qubit_coords
    qubits = [i.qubits for i in bare.instructions if i.kind is not InstructionKind.TICK]
    num_qubits = max((q for qs in qubits for q in qs), default=-1) + 1
    tracker = StabilizerBasis(num_qubits)

    out = Circuit()
    measured = 0
    layer = 0
    last_layer_start = 0
    detectors: list[int] = []
    pending: list[tuple[PauliString, int, int]] = []
    attached = observable is None

    def attach() -> None:
        nonlocal attached
        if not attached and observable is not None and partner is not None:
            tracker.attach_observable(observable, partner)
            attached = True

    def flush() -> None:
        nonlocal layer, last_layer_start
        if not pending:
            return
        last_layer_start = pending[0][1]
        outcomes = tracker.process_measurement_layer([(p, i) for p, i, _ in pending])
        qubit_of = {i: q for _, i, q in pending}
        for outcome in outcomes:
            if not outcome.deterministic or outcome.records is None:
                continue
            detectors.append(outcome.records)
            refs = [MeasurementRef(r - measured) for r in _bits(outcome.records)]
            out.detector(refs, _detector_coords(coords, qubit_of[outcome.index], layer))
        pending.clear()
        layer += 1

    for inst in bare.instructions:
        if inst.kind in MEASURE_KINDS:
            attach()
            out.append(inst)
            basis = KIND_BASIS[inst.kind]
            for q in inst.qubits:
                pending.append((PauliString.single(q, basis), measured, q))
                measured += 1
            continue
        flush()
        if inst.kind is InstructionKind.QUBIT_COORDS or inst.kind is InstructionKind.TICK:
            pass
        elif inst.kind in RESET_KINDS:
            basis = KIND_BASIS[inst.kind]
            for q in inst.qubits:
                tracker.process_reset(q, basis)
        elif inst.kind is InstructionKind.NOISE:
            pass
        elif inst.kind is InstructionKind.CX:
            attach()
            tracker.process_unitary(inst)
        else:
            raise InferenceError(f"Cannot track instruction {inst.name or inst.kind.value}")
        out.append(inst)
    flush()

    if observable is not None:
        records = reduce_before(tracker.logical_readout(), detectors, last_layer_start)
        out.observable_include(MeasurementRef(r - measured) for r in _bits(records))
    logger.debug(f"Inferred {out.num_detectors} detectors over {measured} measurements")
    return out


def observable_from_annotations(circuit: Circuit) -> PauliString | None:
    """The operator measured by the records of OBSERVABLE_INCLUDE(0), if present."""
    records: list[int] = []
    measured = 0
    for inst in circuit.instructions:
        if inst.kind in MEASURE_KINDS:
            measured += len(inst.qubits)
        elif inst.kind is InstructionKind.OBSERVABLE_INCLUDE and inst.args[0] == 0:
            records.extend(measured + ref.lookback for ref in inst.refs)
    if not records:
        return None
    by_index = {n: (q, b) for n, q, b in circuit.measurements()}
    support: dict[int, str] = {}
    for r in records:
        q, b = by_index[r]
        support[q] = b.value
    return PauliString.from_support(support)


def non_deterministic_detectors(circuit: Circuit) -> list[int]:
    """Indices of declared detectors whose records are not deterministic.

    A record set is deterministic exactly when it lies in the span of the
    detectors inferred for the bare circuit (no logical is attached, so
    parities involving the prepared logical count as deterministic too).
    """
    inferred = infer_all(circuit)
    spans: list[int] = []
    measured = 0
    for inst in inferred.instructions:
        if inst.kind in MEASURE_KINDS:
            measured += len(inst.qubits)
        elif inst.kind is InstructionKind.DETECTOR:
            spans.append(_mask(measured + ref.lookback for ref in inst.refs))

    rows: list[int] = []
    for vector in spans:
        for row in rows:
            if vector ^ row < vector:
                vector ^= row
        if vector:
            rows.append(vector)
            rows.sort(reverse=True)

    bad: list[int] = []
    measured = 0
    n = 0
    for inst in circuit.instructions:
        if inst.kind in MEASURE_KINDS:
            measured += len(inst.qubits)
        elif inst.kind is InstructionKind.DETECTOR:
            vector = _mask(measured + ref.lookback for ref in inst.refs)
            for row in rows:
                if vector ^ row < vector:
                    vector ^= row
            if vector:
                bad.append(n)
            n += 1
    return bad


def _mask(indices: Iterable[int]) -> int:
    mask = 0
    for i in indices:
        mask ^= 1 << i
    return mask

