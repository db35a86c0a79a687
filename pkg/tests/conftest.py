"""Shared fixtures for hexluci tests."""

import pytest
from hexluci.layout import build_hex_lattice, preset_defects
from hexluci.pauli import Basis
from hexluci.schedule import build_board, emit_circuit
from hexluci.subsystem import build_midcycle_code


@pytest.fixture(scope="session")
def lattice3():
    return build_hex_lattice(3)


@pytest.fixture(scope="session")
def lattice5():
    return build_hex_lattice(5)


@pytest.fixture(scope="session")
def codes5(lattice5):
    """Mid-cycle codes of the d=5 patch keyed by defect preset."""
    return {
        case: build_midcycle_code(lattice5, preset_defects(lattice5, case))
        for case in ("none", "A", "B", "C", "D")
    }


@pytest.fixture(scope="session")
def small_memory(lattice3):
    """A four-round X-memory circuit on the unbroken d=3 patch."""
    code = build_midcycle_code(lattice3, preset_defects(lattice3, "none"))
    return emit_circuit(build_board(code), rounds=4, memory_basis=Basis.X)


@pytest.fixture
def repetition_text():
    """Three qubits, two parity checks of Z0Z1 onto qubit 2, then a final readout."""
    return (
        "Q(0,0)0;Q(1,0)1;Q(2,0)2;R_0_1_2;TICK;CX_0_2_1_2;TICK;M_2;TICK;"
        "R_2;TICK;CX_0_2_1_2;TICK;M_2;M_0_1"
    )
