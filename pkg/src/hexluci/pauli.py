"""Pauli algebra on bit-packed qubit masks.

This module provides the signed Pauli strings shared by the subsystem-code
construction, the scheduler and the instantaneous-stabilizer tracker. A
Pauli string is stored as two Python ints (X bits and Z bits, one bit per
qubit index) plus a sign bit, so commutation and products are a handful of
bitwise operations regardless of the qubit count.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator
from dataclasses import dataclass
from enum import Enum


class PauliError(Exception):
    """Raised on an invalid Pauli operation (e.g. a product of anticommuting strings)."""

    pass


class Basis(str, Enum):
    """Measurement / check basis of a CSS operator."""

    X = "X"
    Z = "Z"

    @property
    def dual(self) -> Basis:
        return Basis.Z if self is Basis.X else Basis.X


def _bits(mask: int) -> Iterator[int]:
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def mask_of(qubits: Iterable[int]) -> int:
    """Pack qubit indices into a bitmask."""
    mask = 0
    for q in qubits:
        mask |= 1 << q
    return mask


@dataclass(frozen=True, slots=True)
class PauliString:
    """A signed Pauli product, ``(-1)**sign * prod_q P_q``.

    Y on qubit q is represented by both the X and Z bit being set.
    """

    xs: int = 0
    zs: int = 0
    sign: int = 0

    @classmethod
    def identity(cls) -> PauliString:
        return cls()

    @classmethod
    def from_qubits(cls, basis: Basis, qubits: Iterable[int], sign: int = 0) -> PauliString:
        """Build a CSS string acting as ``basis`` on every qubit in ``qubits``."""
        mask = mask_of(qubits)
        if basis is Basis.X:
            return cls(xs=mask, sign=sign & 1)
        return cls(zs=mask, sign=sign & 1)

    @classmethod
    def single(cls, qubit: int, basis: Basis) -> PauliString:
        return cls.from_qubits(basis, (qubit,))

    @classmethod
    def from_support(cls, support: dict[int, str], sign: int = 0) -> PauliString:
        """Build from a sparse ``{qubit: "X" | "Y" | "Z"}`` map.

        Raises:
            PauliError: On an unknown Pauli letter
        """
        xs = zs = 0
        for q, letter in support.items():
            if letter not in ("X", "Y", "Z"):
                raise PauliError(f"Unknown Pauli letter {letter!r} on qubit {q}")
            if letter in ("X", "Y"):
                xs |= 1 << q
            if letter in ("Z", "Y"):
                zs |= 1 << q
        return cls(xs=xs, zs=zs, sign=sign & 1)

    @property
    def support_mask(self) -> int:
        return self.xs | self.zs

    @property
    def qubits(self) -> list[int]:
        return list(_bits(self.support_mask))

    @property
    def support(self) -> dict[int, str]:
        out: dict[int, str] = {}
        for q in _bits(self.support_mask):
            bit = 1 << q
            x = bool(self.xs & bit)
            z = bool(self.zs & bit)
            out[q] = "Y" if x and z else ("X" if x else "Z")
        return out

    @property
    def weight(self) -> int:
        return self.support_mask.bit_count()

    @property
    def is_identity(self) -> bool:
        return self.support_mask == 0

    @property
    def basis(self) -> Basis | None:
        """The CSS basis of the string, or None for identity / mixed strings."""
        if self.xs and not self.zs:
            return Basis.X
        if self.zs and not self.xs:
            return Basis.Z
        return None

    def unsigned(self) -> PauliString:
        return PauliString(self.xs, self.zs, 0)

    def same_operator(self, other: PauliString) -> bool:
        """True when both strings agree up to sign."""
        return self.xs == other.xs and self.zs == other.zs

    def commutes(self, other: PauliString) -> bool:
        return ((self.xs & other.zs) ^ (self.zs & other.xs)).bit_count() % 2 == 0

    def acts_on(self, qubit: int) -> bool:
        return bool(self.support_mask >> qubit & 1)

    def __mul__(self, other: PauliString) -> PauliString:
        """Product of two commuting strings.

        Raises:
            PauliError: If the strings anticommute (product not Hermitian)
        """
        x1, z1, x2, z2 = self.xs, self.zs, other.xs, other.zs
        y1, xo1, zo1 = x1 & z1, x1 & ~z1, z1 & ~x1
        y2, xo2, zo2 = x2 & z2, x2 & ~z2, z2 & ~x2
        plus = (y1 & zo2) | (xo1 & y2) | (zo1 & xo2)
        minus = (y1 & xo2) | (xo1 & zo2) | (zo1 & y2)
        phase = (2 * self.sign + 2 * other.sign + plus.bit_count() - minus.bit_count()) % 4
        if phase % 2:
            raise PauliError("Product of anticommuting Pauli strings is not Hermitian")
        return PauliString(x1 ^ x2, z1 ^ z2, phase // 2)

    def conjugate_cx(self, control: int, target: int) -> PauliString:
        """Conjugate by CX(control, target): X_c -> X_c X_t and Z_t -> Z_c Z_t."""
        xc = self.xs >> control & 1
        zc = self.zs >> control & 1
        xt = self.xs >> target & 1
        zt = self.zs >> target & 1
        sign = self.sign ^ (xc & zt & (xt ^ zc ^ 1))
        xs = self.xs ^ (xc << target)
        zs = self.zs ^ (zt << control)
        return PauliString(xs, zs, sign)

    def conjugate_layer(self, pairs: Iterable[tuple[int, int]]) -> PauliString:
        out = self
        for control, target in pairs:
            if out.support_mask >> control & 1 or out.support_mask >> target & 1:
                out = out.conjugate_cx(control, target)
        return out

    def restricted(self, qubits: Iterable[int]) -> PauliString:
        """Drop every qubit not in ``qubits`` (sign kept)."""
        mask = mask_of(qubits)
        return PauliString(self.xs & mask, self.zs & mask, self.sign)

    def __str__(self) -> str:
        if self.is_identity:
            return "-I" if self.sign else "+I"
        body = "*".join(f"{p}{q}" for q, p in self.support.items())
        return ("-" if self.sign else "+") + body


def product(paulis: Iterable[PauliString]) -> PauliString:
    """Product of pairwise commuting strings."""
    out = PauliString()
    for p in paulis:
        out = out * p
    return out
