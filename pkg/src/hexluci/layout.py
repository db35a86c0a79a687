"""Hex-grid surface-code patch geometry and fabrication-defect maps.

This module builds the qubit layout of a distance-d hex-grid patch (data and
measure qubits on a checkerboard, three couplers per qubit), the mid-cycle
plaquettes the LUCI schedule measures, and the defect maps that mark broken
qubits and couplers. It also classifies isolated defects into the four
supported configurations.
"""

from __future__ import annotations

import logging
from enum import Enum
from fractions import Fraction
from itertools import product as cartesian
from pathlib import Path
from typing import NamedTuple

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_validator

from .pauli import Basis

logger = logging.getLogger(__name__)


class LayoutError(Exception):
    """Raised when a lattice or defect map cannot be built."""

    pass


class DefectFileError(LayoutError):
    """Raised when a defect map file is malformed."""

    def __init__(self, message: str, line_number: int | None = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)


class QubitRole(str, Enum):
    DATA = "Data"
    MEASURE = "Measure"


class DefectCase(str, Enum):
    """Isolated defect configurations handled by the extended schedule."""

    A = "A"  # broken data qubit
    B = "B"  # broken coupler to the measure qubit at +x
    C = "C"  # broken coupler to the measure qubit at +y
    D = "D"  # broken coupler to the measure qubit at -y
    UNSUPPORTED = "Unsupported"


def format_number(value: Fraction) -> str:
    """Render a coordinate the way the compact circuit strings do ("4", "4.5", "-1")."""
    if value.denominator == 1:
        return str(value.numerator)
    return repr(float(value))


class Coord(BaseModel):
    """A grid coordinate stored as doubled integers so half-integers compare exactly."""

    model_config = ConfigDict(frozen=True)

    x2: int = Field(ge=0)
    y2: int = Field(ge=0)

    @classmethod
    def of(cls, x: int | Fraction | str, y: int | Fraction | str) -> Coord:
        fx, fy = Fraction(x), Fraction(y)
        if (2 * fx).denominator != 1 or (2 * fy).denominator != 1:
            raise ValueError(f"Coordinate ({x}, {y}) is not on the half-integer grid")
        return cls(x2=int(2 * fx), y2=int(2 * fy))

    @property
    def x(self) -> Fraction:
        return Fraction(self.x2, 2)

    @property
    def y(self) -> Fraction:
        return Fraction(self.y2, 2)

    @property
    def key(self) -> tuple[int, int]:
        """Integer (x, y) for whole-number coordinates."""
        return (self.x2 // 2, self.y2 // 2)

    def __str__(self) -> str:
        return f"({format_number(self.x)},{format_number(self.y)})"


class QubitSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int = Field(ge=0)
    coord: Coord
    role: QubitRole
    boundary_basis: Basis | None = None


class Plaquette(BaseModel):
    """A mid-cycle check: a 2x2 block of the qubit grid truncated at the boundary.

    ``anchor`` is the lower-left corner of the block; its y parity selects the
    diagonal (which rounds measure it) and ``owner`` is the measure qubit the
    contracting circuit maps the check onto.
    """

    model_config = ConfigDict(frozen=True)

    basis: Basis
    anchor: tuple[int, int]
    support: tuple[int, ...]
    owner: int

    @property
    def diagonal(self) -> int:
        return self.anchor[1] % 2


class HexLattice(BaseModel):
    """Qubits, couplers and mid-cycle plaquettes of one patch."""

    distance: int = Field(ge=2)
    qubits: list[QubitSpec]
    couplers: frozenset[tuple[int, int]]
    plaquettes: list[Plaquette]

    _by_key: dict[tuple[int, int], int] = PrivateAttr(default_factory=dict)
    _neighbors: dict[int, set[int]] = PrivateAttr(default_factory=dict)

    def model_post_init(self, __context: object) -> None:
        self._by_key = {q.coord.key: q.index for q in self.qubits}
        self._neighbors = {q.index: set() for q in self.qubits}
        for a, b in self.couplers:
            self._neighbors[a].add(b)
            self._neighbors[b].add(a)

    @property
    def num_qubits(self) -> int:
        return len(self.qubits)

    @property
    def y_offset(self) -> int:
        return 1 if self.distance % 2 == 0 else 0

    def index_of(self, x: int, y: int) -> int | None:
        return self._by_key.get((x, y))

    def key_of(self, index: int) -> tuple[int, int]:
        return self.qubits[index].coord.key

    def neighbors(self, index: int) -> set[int]:
        return self._neighbors[index]

    def degree(self, index: int) -> int:
        return len(self._neighbors[index])

    def has_coupler(self, a: int, b: int) -> bool:
        return (min(a, b), max(a, b)) in self.couplers

    def data_qubits(self) -> list[int]:
        return [q.index for q in self.qubits if q.role is QubitRole.DATA]

    def measure_qubits(self) -> list[int]:
        return [q.index for q in self.qubits if q.role is QubitRole.MEASURE]


class DefectMap(BaseModel):
    """Broken qubits and couplers of one device."""

    model_config = ConfigDict(frozen=True)

    broken_qubits: frozenset[int] = frozenset()
    broken_couplers: frozenset[tuple[int, int]] = frozenset()

    @field_validator("broken_couplers")
    @classmethod
    def normalize_couplers(cls, v: frozenset[tuple[int, int]]) -> frozenset[tuple[int, int]]:
        return frozenset((min(a, b), max(a, b)) for a, b in v)

    @property
    def is_empty(self) -> bool:
        return not self.broken_qubits and not self.broken_couplers

    def check_against(self, lattice: HexLattice) -> None:
        """Raise LayoutError if an element is not part of ``lattice``."""
        for q in self.broken_qubits:
            if not 0 <= q < lattice.num_qubits:
                raise LayoutError(f"Broken qubit {q} is not in the lattice")
        for a, b in self.broken_couplers:
            if not lattice.has_coupler(a, b):
                raise LayoutError(f"Broken coupler ({a}, {b}) is not in the lattice")

    def coupler_ok(self, a: int, b: int) -> bool:
        """True when the coupler and both of its qubits are working."""
        if a in self.broken_qubits or b in self.broken_qubits:
            return False
        return (min(a, b), max(a, b)) not in self.broken_couplers


class DefectLabel(NamedTuple):
    """Classification of one broken element."""

    element: tuple[int, ...]  # (qubit,) or (qubit_a, qubit_b)
    case: DefectCase
    anchor: int  # data qubit the defect sits on
    reason: str = ""


# Measure-qubit offset (relative to the coupler's data qubit) for each coupler case
COUPLER_CASES: dict[tuple[int, int], DefectCase] = {
    (1, 0): DefectCase.B,
    (0, 1): DefectCase.C,
    (0, -1): DefectCase.D,
}

ISOLATION_RADIUS = 3
BULK_RADIUS = 2


def data_coord(d: int, i: int, j: int) -> tuple[int, int]:
    """Grid position of data qubit (i, j) of a distance-d patch."""
    off = 1 if d % 2 == 0 else 0
    return (i + j + 1, i - j + d + off)


def _measure_positions(d: int) -> dict[tuple[int, int], Basis | None]:
    off = 1 if d % 2 == 0 else 0
    out: dict[tuple[int, int], Basis | None] = {}
    for a, b in cartesian(range(1, d), repeat=2):
        out[(a + b, a - b + d + off)] = None
    for k in range(1, d):
        out[(d + k, 2 * d - k + off)] = Basis.Z
        out[(k + d, k + off)] = Basis.X
    return out


def build_hex_lattice(d: int) -> HexLattice:
    """Build the distance-d hex-grid patch.

    Data qubit (i, j) sits at ``data_coord(d, i, j)``; measure qubits fill the
    faces between them, with one boundary row per basis. Each data qubit
    couples to the measure qubits at +x, -y and +y, which keeps every qubit
    at degree three or less. Qubits are indexed in (x, y) order.

    Raises:
        LayoutError: If d < 2
    """
    if d < 2:
        raise LayoutError(f"Code distance must be at least 2, got {d}")

    data = {data_coord(d, i, j) for i, j in cartesian(range(d), repeat=2)}
    measure = _measure_positions(d)
    keys = sorted(data | set(measure))
    index = {k: n for n, k in enumerate(keys)}

    qubits = [
        QubitSpec(
            index=index[k],
            coord=Coord.of(*k),
            role=QubitRole.DATA if k in data else QubitRole.MEASURE,
            boundary_basis=measure.get(k),
        )
        for k in keys
    ]

    couplers: set[tuple[int, int]] = set()
    for x, y in data:
        for nb in ((x + 1, y), (x, y - 1), (x, y + 1)):
            if nb in index:
                a, b = index[(x, y)], index[nb]
                couplers.add((min(a, b), max(a, b)))

    plaquettes = block_checks(d, index, measure)
    lattice = HexLattice(
        distance=d, qubits=qubits, couplers=frozenset(couplers), plaquettes=plaquettes
    )
    logger.info(
        f"Built d={d} hex lattice: {len(data)} data, {len(measure)} measure qubits, "
        f"{len(couplers)} couplers, {len(plaquettes)} plaquettes"
    )
    return lattice


def block_checks(
    d: int,
    index: dict[tuple[int, int], int],
    measure: dict[tuple[int, int], Basis | None],
) -> list[Plaquette]:
    """Enumerate the mid-cycle plaquettes of an unbroken patch.

    A block is kept when it contains a measure qubit and no boundary measure
    qubit of the other basis. X blocks are owned by their (x0+1, y0) corner,
    Z blocks by (x0+1, y0+1); if that corner is missing the block's only
    measure qubit owns it.
    """
    checks: list[Plaquette] = []
    for x0 in range(-1, 2 * d + 2):
        for y0 in range(-1, 2 * d + 3):
            basis = Basis.X if (x0 + y0) % 2 == 0 else Basis.Z
            cells = [
                (x0 + dx, y0 + dy)
                for dx, dy in ((0, 0), (1, 0), (0, 1), (1, 1))
                if (x0 + dx, y0 + dy) in index
            ]
            inner = [c for c in cells if c in measure]
            if not inner:
                continue
            if any(measure[c] is basis.dual for c in inner):
                continue
            corner = (x0 + 1, y0) if basis is Basis.X else (x0 + 1, y0 + 1)
            if corner in cells:
                owner = corner
            elif len(inner) == 1:
                owner = inner[0]
            else:
                raise LayoutError(f"Plaquette at ({x0}, {y0}) has no unique owner")
            checks.append(
                Plaquette(
                    basis=basis,
                    anchor=(x0, y0),
                    support=tuple(sorted(index[c] for c in cells)),
                    owner=index[owner],
                )
            )
    return checks


def logical_support(lattice: HexLattice, basis: Basis) -> list[int]:
    """Data qubits of the memory-experiment logical operator.

    The X logical runs along the data row i = 0, the Z logical along the
    data column j = 0.
    """
    d = lattice.distance
    cells = (
        [data_coord(d, 0, j) for j in range(d)]
        if basis is Basis.X
        else [data_coord(d, i, 0) for i in range(d)]
    )
    out = []
    for x, y in cells:
        idx = lattice.index_of(x, y)
        if idx is None:
            raise LayoutError(f"Logical support qubit ({x},{y}) missing from lattice")
        out.append(idx)
    return out


def central_data_qubit(lattice: HexLattice) -> int:
    """The data qubit closest to the patch center (i = j = (d - 1) // 2)."""
    k = (lattice.distance - 1) // 2
    idx = lattice.index_of(*data_coord(lattice.distance, k, k))
    assert idx is not None
    return idx


def preset_defects(lattice: HexLattice, case: str) -> DefectMap:
    """Place a named isolated defect on the central data qubit.

    Args:
        lattice: Patch to place the defect in
        case: One of "none", "A", "B", "C", "D"

    Returns:
        DefectMap with the single broken element

    Raises:
        LayoutError: On an unknown preset name
    """
    name = case.strip().upper()
    if name == "NONE":
        return DefectMap()
    p = central_data_qubit(lattice)
    if name == "A":
        return DefectMap(broken_qubits=frozenset({p}))
    x, y = lattice.key_of(p)
    for offset, label in COUPLER_CASES.items():
        if label.value == name:
            m = lattice.index_of(x + offset[0], y + offset[1])
            if m is None:
                raise LayoutError(f"Preset {name} needs qubit ({x + offset[0]},{y + offset[1]})")
            return DefectMap(broken_couplers=frozenset({(p, m)}))
    raise LayoutError(f"Unknown defect preset: {case!r} (expected none, A, B, C or D)")


def load_defect_file(path: Path | str, lattice: HexLattice) -> DefectMap:
    """Read a defect map from text.

    One defect per line: ``qubit x y`` or ``coupler x1 y1 x2 y2``. Blank lines
    and ``#`` comments are ignored.

    Raises:
        DefectFileError: On unreadable files, bad syntax or unknown positions
    """
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as e:
        raise DefectFileError(f"Cannot read defect file {path}: {e}") from e

    qubits: set[int] = set()
    couplers: set[tuple[int, int]] = set()

    def lookup(xs: str, ys: str, line_number: int) -> int:
        try:
            x, y = int(xs), int(ys)
        except ValueError as e:
            raise DefectFileError(f"Bad coordinate ({xs}, {ys})", line_number) from e
        idx = lattice.index_of(x, y)
        if idx is None:
            raise DefectFileError(f"No qubit at ({x},{y})", line_number)
        return idx

    for n, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].lower()
        if kind == "qubit" and len(parts) == 3:
            qubits.add(lookup(parts[1], parts[2], n))
        elif kind == "coupler" and len(parts) == 5:
            a = lookup(parts[1], parts[2], n)
            b = lookup(parts[3], parts[4], n)
            if not lattice.has_coupler(a, b):
                raise DefectFileError(f"No coupler between {parts[1:3]} and {parts[3:5]}", n)
            couplers.add((min(a, b), max(a, b)))
        else:
            raise DefectFileError(f"Expected 'qubit x y' or 'coupler x1 y1 x2 y2', got {line!r}", n)

    defects = DefectMap(broken_qubits=frozenset(qubits), broken_couplers=frozenset(couplers))
    logger.debug(f"Loaded {len(qubits)} broken qubits and {len(couplers)} broken couplers")
    return defects


def _in_bulk(lattice: HexLattice, anchor: int) -> bool:
    x, y = lattice.key_of(anchor)
    for dx, dy in cartesian(range(-BULK_RADIUS, BULK_RADIUS + 1), repeat=2):
        idx = lattice.index_of(x + dx, y + dy)
        if idx is None or lattice.qubits[idx].boundary_basis is not None:
            return False
    return True


def _chebyshev(lattice: HexLattice, a: int, b: int) -> int:
    (xa, ya), (xb, yb) = lattice.key_of(a), lattice.key_of(b)
    return max(abs(xa - xb), abs(ya - yb))


def classify_defects(lattice: HexLattice, defects: DefectMap) -> list[DefectLabel]:
    """Label every broken element as case A-D or Unsupported.

    Broken data qubits are case A; a broken coupler is B, C or D by the
    direction from its data qubit to its measure qubit. Broken measure
    qubits, defects near the patch boundary and defects within three grid
    steps of another defect are Unsupported.
    """
    provisional: list[DefectLabel] = []
    for q in sorted(defects.broken_qubits):
        if lattice.qubits[q].role is QubitRole.MEASURE:
            provisional.append(DefectLabel((q,), DefectCase.UNSUPPORTED, q, "broken measure qubit"))
        else:
            provisional.append(DefectLabel((q,), DefectCase.A, q))

    for a, b in sorted(defects.broken_couplers):
        data, meas = (a, b) if lattice.qubits[a].role is QubitRole.DATA else (b, a)
        (xd, yd), (xm, ym) = lattice.key_of(data), lattice.key_of(meas)
        case = COUPLER_CASES.get((xm - xd, ym - yd), DefectCase.UNSUPPORTED)
        provisional.append(DefectLabel((a, b), case, data))

    labels: list[DefectLabel] = []
    for n, label in enumerate(provisional):
        if label.case is DefectCase.UNSUPPORTED:
            labels.append(label)
            continue
        crowded = any(
            _chebyshev(lattice, label.anchor, other.anchor) <= ISOLATION_RADIUS
            for m, other in enumerate(provisional)
            if m != n
        )
        if crowded:
            labels.append(label._replace(case=DefectCase.UNSUPPORTED, reason="not isolated"))
        elif not _in_bulk(lattice, label.anchor):
            labels.append(label._replace(case=DefectCase.UNSUPPORTED, reason="near boundary"))
        else:
            labels.append(label)

    for label in labels:
        logger.debug(f"Defect {label.element}: {label.case.value} {label.reason}".rstrip())
    return labels


def cascade_dropout(lattice: HexLattice, defects: DefectMap) -> list[frozenset[int]]:
    """Qubits lost when each plaquette may hold only one gauge operator.

    The hex grid is read as a square grid with broken couplers: every
    square-grid coupler between two patch qubits that the hex grid lacks
    counts as broken, as do the map's broken couplers and every coupler of a
    lost qubit. A qubit with one broken horizontal and one broken vertical
    coupler is lost, and the rule is applied again until nothing changes.

    Returns:
        The lost qubits pass by pass, starting with the broken qubits
    """
    lost = set(defects.broken_qubits)
    passes = [frozenset(lost)] if lost else []
    while True:
        wave: set[int] = set()
        for q in lattice.qubits:
            if q.index in lost:
                continue
            x, y = q.coord.key
            broken_axes: set[bool] = set()
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nb = lattice.index_of(x + dx, y + dy)
                if nb is None:
                    continue
                working = lattice.has_coupler(q.index, nb) and defects.coupler_ok(q.index, nb)
                if nb in lost or not working:
                    broken_axes.add(dx == 0)
            if len(broken_axes) == 2:
                wave.add(q.index)
        if not wave:
            break
        lost |= wave
        passes.append(frozenset(wave))
    logger.debug(f"Single-gauge dropout: {len(lost)} qubits lost over {len(passes)} passes")
    return passes
