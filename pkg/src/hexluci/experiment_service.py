"""Service layer for memory experiments.

This module provides a higher-level API for the CLI and programmatic use:
building the circuit of a defect case, distance reports and Monte Carlo
sweeps, with progress callbacks, cancellation and structured results.
"""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field
from threading import Event

import pandas as pd

from .analysis import distance_table
from .circuit_ir import Circuit, load_fixture
from .decode import Backend, benchmark
from .isg import observable_from_annotations
from .layout import build_hex_lattice, preset_defects
from .noise_sim import NoiseParams
from .pauli import Basis
from .schedule import build_board, emit_circuit
from .subsystem import build_midcycle_code

logger = logging.getLogger(__name__)


# Type aliases for callbacks
ProgressCallback = Callable[[int, int, str], None]  # (current, total, message)

CASES = ("none", "A", "B", "C", "D")
SWEEP_COLUMNS = ["case", "basis", "p", "shots", "errors", "ler_per_round", "ci_low", "ci_high"]


class ExperimentError(Exception):
    """Raised when an experiment cannot be set up."""

    pass


@dataclass
class SweepResult:
    """Result of a batch benchmark sweep."""

    total: int = 0
    completed: int = 0
    failed: int = 0
    rows: list[dict[str, object]] = field(default_factory=list)
    errors: list[str] = field(default_factory=list)
    cancelled: bool = False

    def to_dataframe(self) -> pd.DataFrame:
        return pd.DataFrame(self.rows, columns=SWEEP_COLUMNS)


class ExperimentService:
    """High-level service for LUCI memory experiments.

    This class wraps circuit generation, distance analysis and benchmarking
    and provides:
    - Progress callbacks for UI updates
    - Cancellation support via threading.Event
    - Structured result objects
    - Batch operations with per-point error handling
    """

    def __init__(
        self,
        distance: int = 5,
        rounds: int = 20,
        threads: int = 1,
        backend: Backend | str = Backend.PYMATCHING,
        augment: bool = True,
    ):
        """Initialize the experiment service.

        Args:
            distance: Patch distance
            rounds: LUCI rounds per memory experiment
            threads: Worker threads for sampling and decoding
            backend: Matching backend used by benchmarks
            augment: Whether generated circuits include the extra gauge measurements
        """
        self.distance = distance
        self.rounds = rounds
        self.threads = threads
        self.backend = Backend(backend)
        self.augment = augment

    def build_circuit(
        self,
        case: str,
        basis: Basis,
        use_fixture: bool = False,
        rounds: int | None = None,
    ) -> Circuit:
        """Build the noiseless memory circuit of a defect case.

        Args:
            case: Defect preset ("none", "A" .. "D")
            basis: Memory basis
            use_fixture: Load the shipped golden circuit instead of generating one
            rounds: Override the service's round count

        Returns:
            Circuit with detectors and one observable

        Raises:
            ExperimentError: If no fixture exists for the case and basis
        """
        if use_fixture:
            if case.upper() not in ("A", "B", "C", "D"):
                raise ExperimentError(f"No golden circuit for case {case!r}")
            circuit = load_fixture(f"case{case.upper()}")
            logical = observable_from_annotations(circuit)
            if logical is None or logical.basis is not basis:
                raise ExperimentError(f"Golden circuit for case {case} is not a {basis.value} memory")
            return circuit

        lattice = build_hex_lattice(self.distance)
        code = build_midcycle_code(lattice, preset_defects(lattice, case))
        board = build_board(code, augment=self.augment)
        return emit_circuit(board, rounds or self.rounds, basis, augment=self.augment)

    def distance_report(
        self,
        cases: Iterable[str],
        bases: Iterable[Basis] = (Basis.X, Basis.Z),
        p: float = 1e-3,
    ) -> pd.DataFrame:
        """Graphlike distance of every (case, basis) circuit."""
        bases = list(bases)
        circuits = {case: {b: self.build_circuit(case, b) for b in bases} for case in cases}
        return distance_table(circuits, p=p)

    def run_sweep(
        self,
        cases: Iterable[str],
        bases: Iterable[Basis],
        ps: Iterable[float],
        shots: int,
        seed: int = 0,
        passes: int = 1,
        use_fixture: bool = False,
        progress_callback: ProgressCallback | None = None,
        cancel_event: Event | None = None,
    ) -> SweepResult:
        """Benchmark every (case, basis, p) point.

        Args:
            cases: Defect presets
            bases: Memory bases
            ps: SI1000 strengths
            shots: Shots per point
            seed: Base seed; each point gets its own offset
            passes: Decoder passes (1 or 2)
            use_fixture: Use the golden circuits instead of generated ones
            progress_callback: Optional callback(current, total, message)
            cancel_event: Optional threading.Event to check for cancellation

        Returns:
            SweepResult with one row per finished point
        """
        points = [(c, b, p) for c in cases for b in bases for p in ps]
        result = SweepResult(total=len(points))
        circuits: dict[tuple[str, Basis], Circuit] = {}

        for i, (case, basis, p) in enumerate(points):
            if cancel_event and cancel_event.is_set():
                result.cancelled = True
                break

            if progress_callback:
                progress_callback(i, len(points), f"Case {case}, {basis.value} memory, p={p}")

            try:
                if (case, basis) not in circuits:
                    circuits[(case, basis)] = self.build_circuit(case, basis, use_fixture)
                bench = benchmark(
                    circuits[(case, basis)],
                    NoiseParams(p=p),
                    shots=shots,
                    seed=seed + i,
                    passes=passes,
                    backend=self.backend,
                    threads=self.threads,
                    rounds=None if use_fixture else self.rounds,
                )
                low, high = bench.ci_round
                result.rows.append(
                    {
                        "case": case,
                        "basis": basis.value,
                        "p": p,
                        "shots": bench.shots,
                        "errors": bench.errors,
                        "ler_per_round": bench.ler_round,
                        "ci_low": low,
                        "ci_high": high,
                    }
                )
                result.completed += 1

            except Exception as e:
                result.failed += 1
                error_msg = f"case {case} {basis.value} p={p}: {e}"
                result.errors.append(error_msg)
                logger.error(f"Sweep point failed: {error_msg}")

        if progress_callback:
            progress_callback(
                result.completed,
                len(points),
                "Sweep complete" if not result.cancelled else "Sweep cancelled",
            )

        return result
