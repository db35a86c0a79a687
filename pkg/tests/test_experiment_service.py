"""Tests for the experiment service layer."""

from threading import Event

import pytest
from hexluci.circuit_ir import to_stim
from hexluci.experiment_service import CASES, SWEEP_COLUMNS, ExperimentError, ExperimentService
from hexluci.pauli import Basis


@pytest.fixture
def service():
    return ExperimentService(distance=3, rounds=2)


class TestBuildCircuit:
    """Tests for circuit construction."""

    def test_generated(self, service):
        circuit = service.build_circuit("none", Basis.Z)
        assert circuit.num_detectors > 0
        assert to_stim(circuit).num_observables == 1

    def test_rounds_override(self, service):
        short = service.build_circuit("none", Basis.X)
        longer = service.build_circuit("none", Basis.X, rounds=4)
        assert longer.num_measurements > short.num_measurements

    def test_fixture(self, service):
        circuit = service.build_circuit("A", Basis.X, use_fixture=True)
        assert circuit.num_detectors == 220

    def test_no_fixture_for_unbroken(self, service):
        with pytest.raises(ExperimentError):
            service.build_circuit("none", Basis.X, use_fixture=True)

    def test_fixture_basis_mismatch(self, service):
        with pytest.raises(ExperimentError):
            service.build_circuit("B", Basis.Z, use_fixture=True)


class TestRunSweep:
    """Tests for batch sweeps."""

    def test_small_sweep(self, service):
        calls = []
        result = service.run_sweep(
            ["none"],
            [Basis.X],
            [1e-3],
            shots=100,
            progress_callback=lambda current, total, message: calls.append((current, total)),
        )
        assert result.total == 1
        assert result.completed == 1
        assert result.failed == 0
        assert not result.cancelled
        frame = result.to_dataframe()
        assert list(frame.columns) == SWEEP_COLUMNS
        assert frame.iloc[0]["shots"] == 100
        assert calls == [(0, 1), (1, 1)]

    def test_bad_case_recorded(self, service):
        result = service.run_sweep(["none", "Q"], [Basis.Z], [1e-3], shots=50)
        assert result.total == 2
        assert result.completed == 1
        assert result.failed == 1
        assert "case Q" in result.errors[0]

    def test_cancelled_before_start(self, service):
        cancel = Event()
        cancel.set()
        messages = []
        result = service.run_sweep(
            ["none"],
            [Basis.X, Basis.Z],
            [1e-3],
            shots=50,
            progress_callback=lambda current, total, message: messages.append(message),
            cancel_event=cancel,
        )
        assert result.cancelled
        assert result.rows == []
        assert messages == ["Sweep cancelled"]


@pytest.fixture(scope="module")
def memory_sweep():
    """Per-round error rates of every case at p = 1e-3 over 20 rounds."""
    service = ExperimentService(distance=5, rounds=20, threads=4)
    result = service.run_sweep(CASES, [Basis.X, Basis.Z], [1e-3], shots=300_000, seed=11)
    assert result.failed == 0, result.errors
    return result.to_dataframe().set_index(["case", "basis"])


@pytest.mark.slow
class TestDefectOrderings:
    """Monte Carlo comparisons between defect cases."""

    @pytest.mark.parametrize("basis", ["X", "Z"])
    @pytest.mark.parametrize("case", ["A", "B", "C", "D"])
    def test_within_order_of_magnitude(self, memory_sweep, case, basis):
        unbroken = memory_sweep.loc[("none", basis), "ler_per_round"]
        assert memory_sweep.loc[(case, basis), "ler_per_round"] < 10 * unbroken

    @pytest.mark.parametrize("basis, better, worse", [("X", "D", "C"), ("Z", "C", "D")])
    def test_coupler_orientation(self, memory_sweep, basis, better, worse):
        better_high = memory_sweep.loc[(better, basis), "ci_high"]
        assert better_high < memory_sweep.loc[(worse, basis), "ci_low"]

    @pytest.mark.parametrize("case", ["A", "C"])
    def test_extra_measurements_help(self, case):
        rates = {}
        for augment in (True, False):
            service = ExperimentService(distance=5, rounds=20, threads=4, augment=augment)
            result = service.run_sweep([case], [Basis.Z], [2e-3], shots=200_000, seed=5)
            rates[augment] = result.rows[0]
        augmented, plain = rates[True], rates[False]
        # 95% intervals are roughly four sigma wide
        sigma = sum((r["ci_high"] - r["ci_low"]) / 4 for r in (augmented, plain))
        assert augmented["ler_per_round"] <= plain["ler_per_round"] + 2 * sigma
