"""SI1000 noise, sampling and detector error models.

This module decorates a noiseless circuit with superconducting-inspired
(SI1000) Pauli channels, samples detector and observable bits through stim,
exposes stim's Pauli-frame simulator for frame-level inspection, and
extracts a detector error model with identical symptom sets merged.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
import stim
from pydantic import BaseModel, ConfigDict, Field

from .circuit_ir import (
    MEASURE_KINDS,
    RESET_KINDS,
    Circuit,
    Instruction,
    InstructionKind,
    to_stim,
)

logger = logging.getLogger(__name__)

SAMPLE_BATCH = 25_000


class NoiseModelError(Exception):
    """Raised when a circuit cannot be sampled or modelled."""

    pass


class SampleFormat(str, Enum):
    B8 = "b8"
    TEXT01 = "01"


class NoiseParams(BaseModel):
    """SI1000 strength ``p``.

    Channel rates: two-qubit gates p, idling through a gate layer p/10,
    resets 2p (after), measurements 5p (before), idling through a
    measurement or reset layer 2p.
    """

    model_config = ConfigDict(frozen=True)

    p: float = Field(ge=0.0, le=0.5)

    @property
    def two_qubit(self) -> float:
        return self.p

    @property
    def gate_idle(self) -> float:
        return self.p / 10

    @property
    def reset_flip(self) -> float:
        return 2 * self.p

    @property
    def measure_flip(self) -> float:
        return 5 * self.p

    @property
    def measure_idle(self) -> float:
        return 2 * self.p


def _noise(name: str, qubits: list[int] | tuple[int, ...], p: float) -> Instruction:
    return Instruction(InstructionKind.NOISE, tuple(qubits), name=name, probability=min(p, 0.5))


def _flip_name(kind: InstructionKind) -> str:
    return "X_ERROR" if kind in (InstructionKind.R, InstructionKind.M) else "Z_ERROR"


def _moments(circuit: Circuit) -> list[list[Instruction]]:
    moments: list[list[Instruction]] = [[]]
    for inst in circuit.instructions:
        if inst.kind is InstructionKind.TICK:
            moments.append([])
        else:
            moments[-1].append(inst)
    return moments


def apply_si1000(circuit: Circuit, params: NoiseParams) -> Circuit:
    """Insert SI1000 channels into a noiseless circuit.

    Bit flips use the basis dual to the reset or measurement basis
    (X_ERROR around Z-basis operations, Z_ERROR around X-basis ones).

    Raises:
        NoiseModelError: If the circuit already carries noise
    """
    if any(i.kind is InstructionKind.NOISE for i in circuit.instructions):
        raise NoiseModelError("Circuit already contains noise channels")
    if params.p == 0:
        return circuit.copy()

    qubits = sorted(circuit.qubit_coords) or sorted(
        {q for i in circuit.instructions for q in i.qubits}
    )
    out = Circuit()
    moments = _moments(circuit)
    for n, moment in enumerate(moments):
        touched: set[int] = set()
        has_cx = False
        has_layer_op = False
        for inst in moment:
            if inst.kind in MEASURE_KINDS:
                out.append(_noise(_flip_name(inst.kind), inst.qubits, params.measure_flip))
            out.append(inst)
            if inst.kind is InstructionKind.CX:
                out.append(_noise("DEPOLARIZE2", inst.qubits, params.two_qubit))
                has_cx = True
            elif inst.kind in RESET_KINDS:
                out.append(_noise(_flip_name(inst.kind), inst.qubits, params.reset_flip))
            if inst.kind is InstructionKind.CX or inst.kind in RESET_KINDS | MEASURE_KINDS:
                touched.update(inst.qubits)
                has_layer_op = has_layer_op or inst.kind is not InstructionKind.CX

        idle = [q for q in qubits if q not in touched]
        if idle and (has_cx or has_layer_op):
            rate = params.gate_idle if has_cx else params.measure_idle
            out.append(_noise("DEPOLARIZE1", idle, rate))
        if n < len(moments) - 1:
            out.tick()
    return out


def _stim_circuit(circuit: Circuit | stim.Circuit) -> stim.Circuit:
    return circuit if isinstance(circuit, stim.Circuit) else to_stim(circuit)


def _batch_seeds(seed: int, batches: int) -> list[int]:
    streams = np.random.SeedSequence(seed).spawn(batches)
    return [int(s.generate_state(1, dtype=np.uint64)[0]) for s in streams]


def sample_frames(
    circuit: Circuit | stim.Circuit, shots: int, seed: int, threads: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Sample detector and observable bits.

    Shots are split into fixed-size batches with independent seeds derived
    from ``seed``, so results do not depend on ``threads``.

    Returns:
        Tuple of (detectors, observables) boolean arrays, one row per shot

    Raises:
        NoiseModelError: If the circuit has no detectors or shots < 1
    """
    if shots < 1:
        raise NoiseModelError(f"shots must be positive, got {shots}")
    compiled = _stim_circuit(circuit)
    if compiled.num_detectors == 0:
        raise NoiseModelError("Circuit has no detectors to sample")

    sizes = [SAMPLE_BATCH] * (shots // SAMPLE_BATCH)
    if shots % SAMPLE_BATCH:
        sizes.append(shots % SAMPLE_BATCH)
    seeds = _batch_seeds(seed, len(sizes))

    def run(job: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
        size, batch_seed = job
        sampler = compiled.compile_detector_sampler(seed=batch_seed)
        return sampler.sample(size, separate_observables=True)

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        parts = list(pool.map(run, zip(sizes, seeds, strict=True)))
    detectors = np.concatenate([d for d, _ in parts], axis=0)
    observables = np.concatenate([o for _, o in parts], axis=0)
    logger.debug(f"Sampled {shots} shots in {len(sizes)} batches")
    return detectors, observables


@dataclass
class PauliFrame:
    """Pauli-frame flips after a simulation, one row per shot."""

    x_flips: np.ndarray
    z_flips: np.ndarray
    measurement_flips: np.ndarray

    @property
    def num_qubits(self) -> int:
        return int(self.x_flips.shape[1])


def simulate_frames(circuit: Circuit | stim.Circuit, shots: int, seed: int) -> PauliFrame:
    """Run stim's flip simulator and return the final frame and measurement flips."""
    compiled = _stim_circuit(circuit)
    simulator = stim.FlipSimulator(
        batch_size=shots,
        num_qubits=compiled.num_qubits,
        disable_stabilizer_randomization=True,
        seed=seed,
    )
    simulator.do(compiled)
    xs, zs, flips, _, _ = simulator.to_numpy(
        transpose=True, output_xs=True, output_zs=True, output_measure_flips=True
    )
    return PauliFrame(x_flips=xs, z_flips=zs, measurement_flips=flips)


@dataclass(frozen=True)
class ErrorMechanism:
    """An independent fault: its probability and the symptoms it flips.

    ``components`` is the graphlike decomposition (from stim's ``^``
    separators); a mechanism stim did not split has a single component.
    """

    probability: float
    detectors: frozenset[int]
    observables: frozenset[int]
    components: tuple[tuple[frozenset[int], frozenset[int]], ...] = ()


@dataclass
class DetectorErrorModel:
    num_detectors: int
    num_observables: int
    mechanisms: list[ErrorMechanism] = field(default_factory=list)

    def to_text(self) -> str:
        lines = []
        for m in self.mechanisms:
            targets = [f"D{d}" for d in sorted(m.detectors)]
            targets += [f"L{o}" for o in sorted(m.observables)]
            lines.append(f"error({m.probability!r}) " + " ".join(targets))
        return "\n".join(lines)


def combine_probabilities(p1: float, p2: float) -> float:
    """Probability that exactly one of two independent faults fires."""
    return p1 * (1 - p2) + p2 * (1 - p1)


def merge_mechanisms(mechanisms: list[ErrorMechanism]) -> list[ErrorMechanism]:
    merged: dict[tuple[frozenset[int], frozenset[int]], ErrorMechanism] = {}
    for m in mechanisms:
        key = (m.detectors, m.observables)
        prior = merged.get(key)
        if prior is None:
            merged[key] = m
        else:
            merged[key] = ErrorMechanism(
                probability=combine_probabilities(prior.probability, m.probability),
                detectors=m.detectors,
                observables=m.observables,
                components=prior.components,
            )
    return list(merged.values())


def _parse_stim_dem(dem: stim.DetectorErrorModel) -> list[ErrorMechanism]:
    mechanisms = []
    for inst in dem.flattened():
        if inst.type != "error":
            continue
        probability = inst.args_copy()[0]
        if probability <= 0:
            continue
        components: list[tuple[set[int], set[int]]] = [(set(), set())]
        for target in inst.targets_copy():
            if target.is_separator():
                components.append((set(), set()))
            elif target.is_relative_detector_id():
                components[-1][0].symmetric_difference_update({target.val})
            elif target.is_logical_observable_id():
                components[-1][1].symmetric_difference_update({target.val})
        detectors: set[int] = set()
        observables: set[int] = set()
        for dets, obs in components:
            detectors ^= dets
            observables ^= obs
        if not detectors and not observables:
            continue
        mechanisms.append(
            ErrorMechanism(
                probability=probability,
                detectors=frozenset(detectors),
                observables=frozenset(observables),
                components=tuple((frozenset(d), frozenset(o)) for d, o in components),
            )
        )
    return mechanisms


def extract_dem(circuit: Circuit | stim.Circuit, decompose: bool = True) -> DetectorErrorModel:
    """Detector error model of a noisy circuit.

    Every single Pauli fault is propagated to the detectors and observables
    it flips (through stim); mechanisms with identical symptom sets are
    merged.
    """
    compiled = _stim_circuit(circuit)
    dem = compiled.detector_error_model(
        decompose_errors=decompose,
        ignore_decomposition_failures=decompose,
    )
    model = DetectorErrorModel(
        num_detectors=dem.num_detectors,
        num_observables=dem.num_observables,
        mechanisms=merge_mechanisms(_parse_stim_dem(dem)),
    )
    logger.info(
        f"Detector error model: {len(model.mechanisms)} mechanisms over "
        f"{model.num_detectors} detectors"
    )
    return model


def write_samples(path: Path | str, bits: np.ndarray, fmt: SampleFormat | str = SampleFormat.B8) -> None:
    """Write shot-major detector bits as ``b8`` or ``01``."""
    fmt = SampleFormat(fmt)
    data = np.asarray(bits, dtype=np.bool_)
    if data.ndim != 2:
        raise NoiseModelError(f"Expected a 2-D shots x bits array, got shape {data.shape}")
    stim.write_shot_data_file(
        data=data, path=str(path), format=fmt.value, num_detectors=data.shape[1]
    )
    logger.info(f"Wrote {data.shape[0]} shots to {path} ({fmt.value})")


def write_dem(path: Path | str, dem: DetectorErrorModel) -> None:
    Path(path).write_text(dem.to_text() + "\n", encoding="utf-8")
