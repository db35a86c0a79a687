"""Circuit intermediate representation and text formats.

This module parses the compact `;`-separated circuit strings used for the
golden LUCI circuits, serializes circuits back to that format or to stim's
text format, and validates measurement-record bookkeeping.
"""

from __future__ import annotations

import logging
import re
from collections.abc import Iterable, Iterator
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from importlib import resources
from typing import NamedTuple

import stim

from .layout import Coord, format_number
from .pauli import Basis

logger = logging.getLogger(__name__)

FIXTURE_NAMES = ("caseA", "caseB", "caseC", "caseD")

# Compact token patterns
QUBIT_PATTERN = re.compile(r"^Q\(([^,()]+),([^,()]+)\)(\d+)$")
GATE_PATTERN = re.compile(r"^(R|RX|M|MX|CX)((?:_\d+)*)$")
ANNOTATION_PATTERN = re.compile(r"^(DT|OI)\(([^()]*)\)(.*)$")
REC_PATTERN = re.compile(r"^rec\[(-\d+)\]$")

# StimText line pattern: NAME(args) targets
STIM_LINE_PATTERN = re.compile(r"^([A-Z_0-9]+)(?:\(([^)]*)\))?\s*(.*)$")

NOISE_NAMES = frozenset({"X_ERROR", "Z_ERROR", "DEPOLARIZE1", "DEPOLARIZE2"})


class ParseError(Exception):
    """Raised when a circuit string is malformed."""

    def __init__(self, message: str, position: int):
        self.position = position
        super().__init__(f"{message} (at character {position})")


class ResolutionError(ParseError):
    """Raised when a measurement record lookback points before the first measurement."""

    pass


class InstructionKind(str, Enum):
    QUBIT_COORDS = "QUBIT_COORDS"
    R = "R"
    RX = "RX"
    M = "M"
    MX = "MX"
    CX = "CX"
    TICK = "TICK"
    DETECTOR = "DETECTOR"
    OBSERVABLE_INCLUDE = "OBSERVABLE_INCLUDE"
    NOISE = "NOISE"


class Format(str, Enum):
    COMPACT = "compact"
    STIM = "stim"


GATE_KINDS = {
    "R": InstructionKind.R,
    "RX": InstructionKind.RX,
    "M": InstructionKind.M,
    "MX": InstructionKind.MX,
    "CX": InstructionKind.CX,
}
RESET_KINDS = frozenset({InstructionKind.R, InstructionKind.RX})
MEASURE_KINDS = frozenset({InstructionKind.M, InstructionKind.MX})
ANNOTATION_KINDS = frozenset({InstructionKind.DETECTOR, InstructionKind.OBSERVABLE_INCLUDE})

KIND_BASIS = {
    InstructionKind.R: Basis.Z,
    InstructionKind.M: Basis.Z,
    InstructionKind.RX: Basis.X,
    InstructionKind.MX: Basis.X,
}


class MeasurementRef(NamedTuple):
    """A ``rec[-k]`` target: the k-th most recent measurement."""

    lookback: int


@dataclass(frozen=True)
class Instruction:
    """One circuit instruction.

    ``targets`` holds qubit indices, except for detectors and observable
    includes where it holds MeasurementRefs. ``args`` holds coordinates or the
    observable index; noise channels keep their channel name and probability.
    """

    kind: InstructionKind
    targets: tuple[int, ...] | tuple[MeasurementRef, ...] = ()
    args: tuple[Fraction, ...] = ()
    name: str = ""
    probability: float = 0.0

    @property
    def qubits(self) -> tuple[int, ...]:
        if self.kind in ANNOTATION_KINDS:
            return ()
        return self.targets  # type: ignore[return-value]

    @property
    def refs(self) -> tuple[MeasurementRef, ...]:
        if self.kind not in ANNOTATION_KINDS:
            return ()
        return self.targets  # type: ignore[return-value]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        qs = self.qubits
        return [(qs[i], qs[i + 1]) for i in range(0, len(qs) - 1, 2)]

    @property
    def basis(self) -> Basis | None:
        return KIND_BASIS.get(self.kind)


class CircuitStats(NamedTuple):
    qubits: int
    measurements: int
    detectors: int
    observables: int
    ticks: int
    cx_layers: int


@dataclass
class Circuit:
    """An ordered instruction list; qubit coordinates come from QUBIT_COORDS entries."""

    instructions: list[Instruction] = field(default_factory=list)

    @property
    def qubit_coords(self) -> dict[int, Coord]:
        out: dict[int, Coord] = {}
        for inst in self.instructions:
            if inst.kind is InstructionKind.QUBIT_COORDS:
                out[inst.qubits[0]] = Coord.of(inst.args[0], inst.args[1])
        return out

    @property
    def num_measurements(self) -> int:
        return sum(len(i.targets) for i in self.instructions if i.kind in MEASURE_KINDS)

    @property
    def num_detectors(self) -> int:
        return sum(1 for i in self.instructions if i.kind is InstructionKind.DETECTOR)

    def append(self, inst: Instruction) -> None:
        self.instructions.append(inst)

    def declare(self, qubit: int, coord: Coord) -> None:
        self.append(Instruction(InstructionKind.QUBIT_COORDS, (qubit,), (coord.x, coord.y)))

    def gate(self, kind: InstructionKind, targets: Iterable[int]) -> None:
        ts = tuple(targets)
        if ts:
            self.append(Instruction(kind, ts))

    def tick(self) -> None:
        self.append(Instruction(InstructionKind.TICK))

    def detector(self, refs: Iterable[MeasurementRef], coords: Iterable[Fraction]) -> None:
        self.append(Instruction(InstructionKind.DETECTOR, tuple(refs), tuple(coords)))

    def observable_include(self, refs: Iterable[MeasurementRef], index: int = 0) -> None:
        self.append(
            Instruction(InstructionKind.OBSERVABLE_INCLUDE, tuple(refs), (Fraction(index),))
        )

    def measurements(self) -> Iterator[tuple[int, int, Basis]]:
        """Yield (absolute measurement index, qubit, basis) in record order."""
        n = 0
        for inst in self.instructions:
            if inst.kind in MEASURE_KINDS:
                basis = KIND_BASIS[inst.kind]
                for q in inst.qubits:
                    yield n, q, basis
                    n += 1

    def copy(self) -> Circuit:
        return Circuit(list(self.instructions))


def _parse_number(text: str, position: int) -> Fraction:
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as e:
        raise ParseError(f"Bad number {text!r}", position) from e


def _parse_refs(text: str, position: int, measured: int) -> tuple[MeasurementRef, ...]:
    if not text:
        return ()
    refs = []
    for item in text.split("_"):
        match = REC_PATTERN.match(item)
        if not match:
            raise ParseError(f"Bad measurement record {item!r}", position)
        lookback = int(match.group(1))
        if lookback >= 0:
            raise ParseError(f"Record lookback must be negative, got {lookback}", position)
        if -lookback > measured:
            raise ResolutionError(
                f"rec[{lookback}] reaches before the first of {measured} measurements", position
            )
        refs.append(MeasurementRef(lookback))
    return tuple(refs)


def parse_token(token: str, position: int, measured: int) -> Instruction:
    """Parse one compact token.

    Args:
        token: A token such as "Q(1,5)0", "CX_20_13", "TICK" or "DT(6,1,0)rec[-11]"
        position: Character offset of the token (for error messages)
        measured: Number of measurements before this token

    Returns:
        The parsed Instruction

    Raises:
        ParseError: On malformed tokens
        ResolutionError: On a record lookback beyond the measurements so far
    """
    if token == "TICK":
        return Instruction(InstructionKind.TICK)

    if match := QUBIT_PATTERN.match(token):
        x = _parse_number(match.group(1), position)
        y = _parse_number(match.group(2), position)
        return Instruction(InstructionKind.QUBIT_COORDS, (int(match.group(3)),), (x, y))

    if match := GATE_PATTERN.match(token):
        targets = tuple(int(t) for t in match.group(2).split("_")[1:])
        return Instruction(GATE_KINDS[match.group(1)], targets)

    if match := ANNOTATION_PATTERN.match(token):
        args = tuple(
            _parse_number(a, position) for a in match.group(2).split(",") if a.strip() != ""
        )
        refs = _parse_refs(match.group(3), position, measured)
        if match.group(1) == "DT":
            return Instruction(InstructionKind.DETECTOR, refs, args)
        if len(args) != 1:
            raise ParseError("OI expects exactly one observable index", position)
        return Instruction(InstructionKind.OBSERVABLE_INCLUDE, refs, args)

    raise ParseError(f"Unrecognized token {token!r}", position)


def parse_compact(text: str) -> Circuit:
    """Parse a compact circuit string.

    Args:
        text: `;`-separated tokens

    Returns:
        Circuit whose compact serialization reproduces ``text``

    Raises:
        ParseError: On a malformed token
        ResolutionError: On an out-of-range record lookback
    """
    circuit = Circuit()
    if text == "":
        return circuit

    measured = 0
    position = 0
    for token in text.split(";"):
        inst = parse_token(token, position, measured)
        if inst.kind in MEASURE_KINDS:
            measured += len(inst.targets)
        circuit.append(inst)
        position += len(token) + 1

    logger.debug(f"Parsed {len(circuit.instructions)} instructions, {measured} measurements")
    return circuit


def _compact_token(inst: Instruction) -> str:
    kind = inst.kind
    if kind is InstructionKind.TICK:
        return "TICK"
    if kind is InstructionKind.QUBIT_COORDS:
        x, y = inst.args
        return f"Q({format_number(x)},{format_number(y)}){inst.qubits[0]}"
    if kind in ANNOTATION_KINDS:
        head = "DT" if kind is InstructionKind.DETECTOR else "OI"
        args = ",".join(format_number(a) for a in inst.args)
        refs = "_".join(f"rec[{r.lookback}]" for r in inst.refs)
        return f"{head}({args}){refs}"
    if kind is InstructionKind.NOISE:
        raise ValueError("Noise channels have no compact form")
    return kind.value + "".join(f"_{q}" for q in inst.qubits)


def _stim_line(inst: Instruction) -> str:
    kind = inst.kind
    if kind is InstructionKind.TICK:
        return "TICK"
    if kind is InstructionKind.NOISE:
        return f"{inst.name}({inst.probability!r}) " + " ".join(str(q) for q in inst.qubits)
    args = ", ".join(format_number(a) for a in inst.args)
    head = f"{kind.value}({args})" if inst.args else kind.value
    if kind in ANNOTATION_KINDS:
        body = " ".join(f"rec[{r.lookback}]" for r in inst.refs)
    else:
        body = " ".join(str(q) for q in inst.qubits)
    return f"{head} {body}".rstrip()


def serialize(circuit: Circuit, fmt: Format = Format.COMPACT) -> str:
    """Serialize a circuit.

    Compact output joins tokens with `;` and skips noise channels; StimText
    output puts one instruction per line.
    """
    if fmt is Format.COMPACT:
        return ";".join(
            _compact_token(i) for i in circuit.instructions if i.kind is not InstructionKind.NOISE
        )
    return "\n".join(_stim_line(i) for i in circuit.instructions)


def parse_stim_text(text: str) -> Circuit:
    """Parse the StimText dialect produced by ``serialize``.

    Raises:
        ParseError: On an instruction outside this artifact's gate set
    """
    circuit = Circuit()
    measured = 0
    position = 0
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            match = STIM_LINE_PATTERN.match(line)
            if not match:
                raise ParseError(f"Bad line {line!r}", position)
            name, arg_text, body = match.group(1), match.group(2) or "", match.group(3).split()
            inst = _stim_instruction(name, arg_text, body, position, measured)
            if inst.kind in MEASURE_KINDS:
                measured += len(inst.targets)
            circuit.append(inst)
        position += len(raw) + 1
    return circuit


def _parse_targets(body: list[str], position: int) -> tuple[int, ...]:
    try:
        return tuple(int(t) for t in body)
    except ValueError as e:
        raise ParseError(f"Bad qubit target in {' '.join(body)!r}", position) from e


def _stim_instruction(
    name: str, arg_text: str, body: list[str], position: int, measured: int
) -> Instruction:
    if name == "TICK":
        return Instruction(InstructionKind.TICK)
    if name in NOISE_NAMES:
        try:
            probability = float(arg_text)
        except ValueError as e:
            raise ParseError(f"Bad {name} probability {arg_text!r}", position) from e
        targets = _parse_targets(body, position)
        return Instruction(InstructionKind.NOISE, targets, name=name, probability=probability)
    args = tuple(_parse_number(a, position) for a in arg_text.split(",") if a.strip())
    if name == "QUBIT_COORDS":
        if len(body) != 1:
            raise ParseError("QUBIT_COORDS expects exactly one qubit", position)
        return Instruction(InstructionKind.QUBIT_COORDS, _parse_targets(body, position), args[:2])
    if name in ("DETECTOR", "OBSERVABLE_INCLUDE"):
        refs = _parse_refs("_".join(body), position, measured)
        return Instruction(InstructionKind(name), refs, args)
    if name in GATE_KINDS:
        return Instruction(GATE_KINDS[name], _parse_targets(body, position))
    raise ParseError(f"Unsupported instruction {name}", position)


def to_stim(circuit: Circuit) -> stim.Circuit:
    """Convert to a ``stim.Circuit``."""
    return stim.Circuit(serialize(circuit, Format.STIM))


def from_stim(circuit: stim.Circuit | str) -> Circuit:
    """Convert a flattened ``stim.Circuit`` (or its text) back into the IR."""
    text = circuit if isinstance(circuit, str) else str(circuit.flattened())
    return parse_stim_text(text)


def validate(circuit: Circuit) -> list[str]:
    """Check declarations, CX pairing and record lookbacks.

    Returns:
        Diagnostic messages; empty when the circuit is well-formed
    """
    diagnostics: list[str] = []
    declared: set[int] = set()
    measured = 0
    for n, inst in enumerate(circuit.instructions):
        if inst.kind is InstructionKind.QUBIT_COORDS:
            declared.add(inst.qubits[0])
            continue
        if inst.kind in ANNOTATION_KINDS:
            if inst.kind is InstructionKind.DETECTOR and measured == 0:
                diagnostics.append(f"instruction {n}: detector before any measurement")
            for ref in inst.refs:
                if ref.lookback >= 0 or -ref.lookback > measured:
                    diagnostics.append(
                        f"instruction {n}: rec[{ref.lookback}] does not resolve "
                        f"({measured} measurements so far)"
                    )
            continue
        undeclared = sorted({q for q in inst.qubits if q not in declared})
        if undeclared:
            diagnostics.append(f"instruction {n}: undeclared qubits {undeclared}")
        if inst.kind is InstructionKind.CX and len(inst.qubits) % 2:
            diagnostics.append(f"instruction {n}: CX has an odd number of targets")
        if inst.kind in MEASURE_KINDS:
            measured += len(inst.qubits)
    return diagnostics


def strip_annotations(circuit: Circuit) -> Circuit:
    """Drop every DETECTOR and OBSERVABLE_INCLUDE."""
    return Circuit([i for i in circuit.instructions if i.kind not in ANNOTATION_KINDS])


def count(circuit: Circuit) -> CircuitStats:
    observables = {
        int(i.args[0])
        for i in circuit.instructions
        if i.kind is InstructionKind.OBSERVABLE_INCLUDE
    }
    return CircuitStats(
        qubits=len(circuit.qubit_coords),
        measurements=circuit.num_measurements,
        detectors=circuit.num_detectors,
        observables=len(observables),
        ticks=sum(1 for i in circuit.instructions if i.kind is InstructionKind.TICK),
        cx_layers=sum(1 for i in circuit.instructions if i.kind is InstructionKind.CX),
    )


def fixture_text(name: str) -> str:
    """Raw compact text of a shipped golden circuit (caseA .. caseD)."""
    if name not in FIXTURE_NAMES:
        raise ValueError(f"Unknown fixture {name!r}; expected one of {', '.join(FIXTURE_NAMES)}")
    return resources.files("hexluci.fixtures").joinpath(f"{name}.txt").read_text().strip()


def load_fixture(name: str) -> Circuit:
    return parse_compact(fixture_text(name))
