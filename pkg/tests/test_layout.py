"""Tests for lattice geometry and defect maps."""

import pytest
from hexluci.layout import (
    Coord,
    DefectCase,
    DefectFileError,
    DefectMap,
    LayoutError,
    QubitRole,
    build_hex_lattice,
    cascade_dropout,
    central_data_qubit,
    classify_defects,
    load_defect_file,
    logical_support,
    preset_defects,
)
from hexluci.pauli import Basis


class TestBuildLattice:
    """Tests for the hex-grid patch."""

    def test_qubit_counts(self, lattice5):
        assert len(lattice5.data_qubits()) == 25
        assert len(lattice5.measure_qubits()) == 24
        assert lattice5.num_qubits == 49

    def test_degree_at_most_three(self, lattice5):
        assert all(lattice5.degree(q) <= 3 for q in range(lattice5.num_qubits))

    def test_couplers_join_data_and_measure(self, lattice5):
        for a, b in lattice5.couplers:
            roles = {lattice5.qubits[a].role, lattice5.qubits[b].role}
            assert roles == {QubitRole.DATA, QubitRole.MEASURE}

    def test_index_lookup(self, lattice5):
        for q in lattice5.qubits:
            assert lattice5.index_of(*q.coord.key) == q.index

    def test_boundary_rows(self, lattice5):
        x_boundary = [q for q in lattice5.qubits if q.boundary_basis is Basis.X]
        z_boundary = [q for q in lattice5.qubits if q.boundary_basis is Basis.Z]
        assert len(x_boundary) == 4
        assert len(z_boundary) == 4

    def test_plaquette_owner_in_support(self, lattice5):
        for plaquette in lattice5.plaquettes:
            assert plaquette.owner in plaquette.support
            assert lattice5.qubits[plaquette.owner].role is QubitRole.MEASURE

    def test_distance_too_small(self):
        with pytest.raises(LayoutError):
            build_hex_lattice(1)

    def test_logical_support_length(self, lattice5):
        assert len(logical_support(lattice5, Basis.X)) == 5
        assert len(logical_support(lattice5, Basis.Z)) == 5


class TestCoord:
    """Tests for half-integer coordinates."""

    def test_half_integer(self):
        c = Coord.of("4.5", 2)
        assert str(c) == "(4.5,2)"

    def test_off_grid(self):
        with pytest.raises(ValueError):
            Coord.of("0.25", 0)


class TestPresets:
    """Tests for named defect presets."""

    def test_none_is_empty(self, lattice5):
        assert preset_defects(lattice5, "none").is_empty

    def test_case_a_breaks_central_qubit(self, lattice5):
        defects = preset_defects(lattice5, "A")
        assert defects.broken_qubits == {central_data_qubit(lattice5)}
        assert lattice5.key_of(central_data_qubit(lattice5)) == (5, 5)

    @pytest.mark.parametrize("case", ["B", "C", "D"])
    def test_coupler_presets(self, lattice5, case):
        defects = preset_defects(lattice5, case)
        assert len(defects.broken_couplers) == 1
        labels = classify_defects(lattice5, defects)
        assert [label.case for label in labels] == [DefectCase(case)]

    def test_unknown_preset(self, lattice5):
        with pytest.raises(LayoutError):
            preset_defects(lattice5, "E")


class TestClassify:
    """Tests for defect classification."""

    def test_broken_data_qubit(self, lattice5):
        labels = classify_defects(lattice5, preset_defects(lattice5, "A"))
        assert labels[0].case is DefectCase.A

    def test_broken_measure_qubit_unsupported(self, lattice5):
        m = lattice5.index_of(6, 5)
        labels = classify_defects(lattice5, DefectMap(broken_qubits=frozenset({m})))
        assert labels[0].case is DefectCase.UNSUPPORTED

    def test_adjacent_defects_unsupported(self, lattice5):
        p = central_data_qubit(lattice5)
        m = lattice5.index_of(6, 5)
        defects = DefectMap(broken_qubits=frozenset({p}), broken_couplers=frozenset({(m, p)}))
        labels = classify_defects(lattice5, defects)
        assert all(label.case is DefectCase.UNSUPPORTED for label in labels)

    def test_near_boundary_unsupported(self, lattice3):
        labels = classify_defects(lattice3, preset_defects(lattice3, "A"))
        assert labels[0].case is DefectCase.UNSUPPORTED
        assert labels[0].reason == "near boundary"

    def test_coupler_order_normalized(self):
        defects = DefectMap(broken_couplers=frozenset({(7, 3)}))
        assert defects.broken_couplers == {(3, 7)}
        assert not defects.coupler_ok(3, 7)
        assert not defects.coupler_ok(7, 3)


class TestCascadeDropout:
    """Tests for the single-gauge-per-plaquette dropout cascade."""

    def test_unbroken_patch_keeps_everything(self, lattice5):
        assert cascade_dropout(lattice5, preset_defects(lattice5, "none")) == []

    def test_broken_data_qubit_cascades_across_patch(self, lattice5):
        passes = cascade_dropout(lattice5, preset_defects(lattice5, "A"))
        lost = {lattice5.key_of(q) for wave in passes for q in wave}
        assert lost == {(5, y) for y in range(2, 9)}
        assert len(passes) == 4
        assert {lattice5.key_of(q) for q in passes[1]} == {(5, 4), (5, 6)}

    def test_vertical_coupler_cascades(self, lattice5):
        passes = cascade_dropout(lattice5, preset_defects(lattice5, "C"))
        assert {lattice5.key_of(q) for q in passes[0]} == {(5, 5), (5, 6)}
        assert len({q for wave in passes for q in wave}) == 7

    def test_horizontal_coupler_stays_local(self, lattice5):
        assert cascade_dropout(lattice5, preset_defects(lattice5, "B")) == []


class TestDefectFile:
    """Tests for defect map files."""

    def test_qubit_and_coupler(self, tmp_path, lattice5):
        path = tmp_path / "defects.txt"
        path.write_text("# broken parts\nqubit 5 5\n\ncoupler 7 7 8 7  # far away\n")
        defects = load_defect_file(path, lattice5)
        assert defects.broken_qubits == {lattice5.index_of(5, 5)}
        assert len(defects.broken_couplers) == 1

    def test_unknown_position(self, tmp_path, lattice5):
        path = tmp_path / "defects.txt"
        path.write_text("qubit 5 5\nqubit 0 0\n")
        with pytest.raises(DefectFileError) as exc:
            load_defect_file(path, lattice5)
        assert exc.value.line_number == 2

    def test_bad_syntax(self, tmp_path, lattice5):
        path = tmp_path / "defects.txt"
        path.write_text("broken 5 5\n")
        with pytest.raises(DefectFileError):
            load_defect_file(path, lattice5)

    def test_missing_file(self, tmp_path, lattice5):
        with pytest.raises(DefectFileError):
            load_defect_file(tmp_path / "missing.txt", lattice5)
