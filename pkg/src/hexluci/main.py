"""CLI entry point for hex-luci.

This module provides the command-line interface for generating, checking
and benchmarking defect-aware LUCI memory circuits.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Annotated, Literal, NoReturn, Optional

import numpy as np
import pandas as pd
import typer
from pydantic import BaseModel, Field, ValidationError, model_validator
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import BarColumn, Progress, SpinnerColumn, TaskProgressColumn, TextColumn
from rich.table import Table

from . import __version__
from .analysis import GraphConstructionError, distance_table
from .circuit_ir import (
    FIXTURE_NAMES,
    Circuit,
    Format,
    ParseError,
    count,
    fixture_text,
    load_fixture,
    parse_compact,
    serialize,
    to_stim,
    validate,
)
from .decode import Backend, DecodingError, benchmark
from .experiment_service import CASES, SWEEP_COLUMNS, ExperimentService
from .isg import InferenceError, non_deterministic_detectors
from .layout import (
    LayoutError,
    build_hex_lattice,
    cascade_dropout,
    load_defect_file,
    preset_defects,
)
from .noise_sim import (
    NoiseModelError,
    NoiseParams,
    SampleFormat,
    apply_si1000,
    extract_dem,
    sample_frames,
    write_dem,
    write_samples,
)
from .pauli import Basis
from .schedule import ScheduleError, build_board, emit_circuit
from .subsystem import CodeConstructionError, build_midcycle_code, verify_code

# Initialize Typer app
app = typer.Typer(
    name="hexluci",
    help="Generate, check and benchmark defect-aware LUCI circuits on hex-grid surface codes.",
    add_completion=False,
)

console = Console()

PIPELINE_ERRORS = (
    LayoutError,
    ParseError,
    CodeConstructionError,
    ScheduleError,
    InferenceError,
    NoiseModelError,
    GraphConstructionError,
    DecodingError,
)


class RunConfig(BaseModel):
    """Validated flags of one CLI invocation."""

    command: str
    distance: int = Field(default=5, ge=2)
    defect: str = "none"
    defect_file: Path | None = None
    fixture: str | None = None
    basis: Basis = Basis.X
    rounds: int = Field(default=10, ge=1)
    p: float = Field(default=1e-3, ge=0.0, le=0.5)
    shots: int = Field(default=1000, ge=1)
    seed: int = Field(default=0, ge=0)
    passes: Literal[1, 2] = 1
    threads: int = Field(default=1, ge=1)
    augment: bool = True
    output: Path | None = None

    @model_validator(mode="after")
    def check_source(self) -> RunConfig:
        if self.fixture is not None and self.fixture not in FIXTURE_NAMES:
            raise ValueError(f"fixture must be one of {', '.join(FIXTURE_NAMES)}")
        if self.fixture is not None and self.defect_file is not None:
            raise ValueError("--fixture and --defect-file are mutually exclusive")
        if self.defect not in CASES and self.defect.upper() not in CASES:
            raise ValueError(f"defect must be one of {', '.join(CASES)}")
        return self


def setup_logging(verbose: bool = False) -> None:
    """Configure logging with Rich handler."""
    level = logging.DEBUG if verbose else logging.INFO
    logging.basicConfig(
        level=level,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True)],
    )


def version_callback(value: bool) -> None:
    """Show version and exit."""
    if value:
        console.print(f"hexluci version {__version__}")
        raise typer.Exit()


def make_config(**flags: object) -> RunConfig:
    """Build a RunConfig, turning validation failures into usage errors (exit 2)."""
    try:
        return RunConfig(**flags)  # type: ignore[arg-type]
    except ValidationError as e:
        for err in e.errors():
            field = ".".join(str(p) for p in err["loc"]) or "flags"
            console.print(f"[red]Usage error:[/red] {field}: {err['msg']}")
        raise typer.Exit(2)


def resolve_circuit(config: RunConfig) -> Circuit:
    """The noiseless circuit selected by ``--fixture`` or by the defect flags."""
    if config.fixture:
        return load_fixture(config.fixture)
    lattice = build_hex_lattice(config.distance)
    defects = (
        load_defect_file(config.defect_file, lattice)
        if config.defect_file
        else preset_defects(lattice, config.defect)
    )
    code = build_midcycle_code(lattice, defects)
    board = build_board(code, augment=config.augment)
    return emit_circuit(board, config.rounds, config.basis, augment=config.augment)


def _fail(message: str, error: Exception) -> NoReturn:
    console.print(f"[red]{message}:[/red] {error}")
    raise typer.Exit(1)


@app.callback()
def main_callback(
    version: Annotated[
        Optional[bool],
        typer.Option(
            "--version",
            "-V",
            help="Show version and exit",
            callback=version_callback,
            is_eager=True,
        ),
    ] = None,
) -> None:
    """Defect-aware LUCI circuits for hex-grid surface codes."""


# Shared option declarations
DistanceOpt = Annotated[int, typer.Option("--d", "-d", help="Code distance")]
DefectOpt = Annotated[str, typer.Option("--defect", help="Defect preset: none, A, B, C or D")]
DefectFileOpt = Annotated[
    Optional[Path],
    typer.Option("--defect-file", help="Defect map file", exists=True, dir_okay=False),
]
FixtureOpt = Annotated[
    Optional[str], typer.Option("--fixture", help="Golden circuit: caseA, caseB, caseC or caseD")
]
BasisOpt = Annotated[Basis, typer.Option("--basis", "-b", help="Memory basis")]
RoundsOpt = Annotated[int, typer.Option("--rounds", "-r", help="Number of LUCI rounds")]
AugmentOpt = Annotated[
    bool, typer.Option("--augment/--no-augment", help="Include extra gauge measurements")
]
VerboseOpt = Annotated[bool, typer.Option("--verbose", "-v", help="Enable verbose logging")]
OutputOpt = Annotated[Optional[Path], typer.Option("--output", "-o", help="Output file")]
POpt = Annotated[float, typer.Option("--p", help="SI1000 noise strength")]
ShotsOpt = Annotated[int, typer.Option("--shots", help="Number of shots")]
SeedOpt = Annotated[int, typer.Option("--seed", help="Random seed")]
ThreadsOpt = Annotated[int, typer.Option("--threads", help="Worker threads")]
PassesOpt = Annotated[int, typer.Option("--passes", help="Decoder passes (1 or 2)")]


@app.command()
def generate(
    distance: DistanceOpt = 5,
    defect: DefectOpt = "none",
    defect_file: DefectFileOpt = None,
    basis: BasisOpt = Basis.X,
    rounds: RoundsOpt = 10,
    augment: AugmentOpt = True,
    fmt: Annotated[Format, typer.Option("--format", "-f", help="Output format")] = Format.COMPACT,
    noise: Annotated[
        Optional[float], typer.Option("--noise", help="Add SI1000 noise (stim format only)")
    ] = None,
    output: OutputOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Generate a LUCI memory circuit for a defect configuration."""
    setup_logging(verbose)
    config = make_config(
        command="generate",
        distance=distance,
        defect=defect,
        defect_file=defect_file,
        basis=basis,
        rounds=rounds,
        augment=augment,
        p=noise or 0.0,
        output=output,
    )
    if noise and fmt is Format.COMPACT:
        console.print("[red]Usage error:[/red] --noise needs --format stim")
        raise typer.Exit(2)

    try:
        circuit = resolve_circuit(config)
        if noise:
            circuit = apply_si1000(circuit, NoiseParams(p=noise))
    except PIPELINE_ERRORS as e:
        _fail("Generation failed", e)

    text = serialize(circuit, fmt)
    if config.output:
        config.output.write_text(text + "\n", encoding="utf-8")
        stats = count(circuit)
        console.print(
            f"[green]✓ Wrote {config.output}[/green] "
            f"({stats.qubits} qubits, {stats.detectors} detectors, {stats.ticks} ticks)"
        )
    else:
        typer.echo(text)


@app.command()
def parse(
    text: Annotated[Optional[str], typer.Argument(help="Compact circuit string")] = None,
    file: Annotated[
        Optional[Path], typer.Option("--file", help="Read the string from a file", exists=True)
    ] = None,
    fixture: FixtureOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Parse a compact circuit string, validate it and check the round trip."""
    setup_logging(verbose)
    sources = [s for s in (text, file, fixture) if s is not None]
    if len(sources) != 1:
        console.print("[red]Usage error:[/red] give exactly one of TEXT, --file or --fixture")
        raise typer.Exit(2)
    if fixture is not None:
        config = make_config(command="parse", fixture=fixture)
        source = fixture_text(config.fixture or fixture)
    elif file is not None:
        source = file.read_text(encoding="utf-8").strip()
    else:
        source = (text or "").strip()

    try:
        circuit = parse_compact(source)
    except ParseError as e:
        _fail(f"Parse failed at position {e.position}", e)

    stats = count(circuit)
    table = Table(title="Circuit Summary")
    table.add_column("Qubits", justify="right")
    table.add_column("Measurements", justify="right")
    table.add_column("Detectors", justify="right")
    table.add_column("Observables", justify="right")
    table.add_column("Ticks", justify="right")
    table.add_column("CX layers", justify="right")
    table.add_row(*(str(v) for v in stats))
    console.print(table)

    diagnostics = validate(circuit)
    round_trip = serialize(circuit) == source
    for message in diagnostics:
        console.print(f"  [yellow]•[/yellow] {message}")
    if diagnostics or not round_trip:
        if not round_trip:
            console.print("[red]✗ Serialization does not reproduce the input[/red]")
        raise typer.Exit(1)
    console.print("[green]✓ Valid circuit; round trip is byte-identical[/green]")


@app.command()
def check(
    fixture: FixtureOpt = None,
    distance: DistanceOpt = 5,
    defect: DefectOpt = "none",
    defect_file: DefectFileOpt = None,
    basis: BasisOpt = Basis.X,
    rounds: RoundsOpt = 10,
    shots: ShotsOpt = 1000,
    verbose: VerboseOpt = False,
) -> None:
    """Check detector determinism and (for generated circuits) the subsystem code."""
    setup_logging(verbose)
    config = make_config(
        command="check",
        fixture=fixture,
        distance=distance,
        defect=defect,
        defect_file=defect_file,
        basis=basis,
        rounds=rounds,
        shots=shots,
    )
    failures = 0

    try:
        if config.fixture is None:
            lattice = build_hex_lattice(config.distance)
            defects = (
                load_defect_file(config.defect_file, lattice)
                if config.defect_file
                else preset_defects(lattice, config.defect)
            )
            diagnostics = verify_code(build_midcycle_code(lattice, defects))
            for message in diagnostics:
                console.print(f"  [red]•[/red] {message}")
            failures += len(diagnostics)
            if not diagnostics:
                console.print("[green]✓ Subsystem code invariants hold[/green]")
            passes = cascade_dropout(lattice, defects)
            if passes:
                lost = sum(len(wave) for wave in passes)
                console.print(
                    f"  [dim]one gauge per plaquette would lose {lost} qubits "
                    f"over {len(passes)} passes[/dim]"
                )
        circuit = resolve_circuit(config)
    except PIPELINE_ERRORS as e:
        _fail("Check failed", e)

    for message in validate(circuit):
        console.print(f"  [red]•[/red] {message}")
        failures += 1

    sampler = to_stim(circuit).compile_detector_sampler(seed=config.seed)
    bits = sampler.sample(config.shots)
    fired = int(np.count_nonzero(bits))
    bad = non_deterministic_detectors(circuit)
    if fired or bad:
        console.print(
            f"[red]✗ {fired} detector firings over {config.shots} noiseless shots; "
            f"{len(bad)} detectors not deterministic[/red]"
        )
        failures += 1
    else:
        console.print(
            f"[green]✓ all detectors deterministic[/green] "
            f"({circuit.num_detectors} detectors, {config.shots} shots)"
        )
    if failures:
        raise typer.Exit(1)


@app.command()
def distance(
    defect: Annotated[
        list[str], typer.Option("--defect", help="Defect preset (repeatable)")
    ] = ["none"],  # noqa: B006
    d: DistanceOpt = 5,
    rounds: RoundsOpt = 10,
    p: POpt = 1e-3,
    output: OutputOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Report graphlike X and Z distances for defect presets."""
    setup_logging(verbose)
    configs = [
        make_config(command="distance", distance=d, defect=name, rounds=rounds, p=p)
        for name in defect
    ]

    try:
        service = ExperimentService(distance=d, rounds=rounds)
        circuits = {
            c.defect: {b: service.build_circuit(c.defect, b) for b in (Basis.X, Basis.Z)}
            for c in configs
        }
        frame = distance_table(circuits, p=p)
    except PIPELINE_ERRORS as e:
        _fail("Distance analysis failed", e)

    table = Table(title=f"Graphlike distance (d={d}, {rounds} rounds)")
    table.add_column("Case", style="cyan")
    table.add_column("Basis", style="blue")
    table.add_column("Distance", style="green", justify="right")
    table.add_column("Detectors", justify="right")
    for row in frame.itertuples(index=False):
        table.add_row(str(row.case), str(row.basis), str(row.distance), str(row.detectors))
    console.print(table)
    if output:
        frame.to_csv(output, index=False)
        console.print(f"[green]✓ Wrote {output}[/green]")


@app.command()
def sample(
    output: Annotated[Path, typer.Option("--output", "-o", help="Detector sample file")],
    fixture: FixtureOpt = None,
    distance: DistanceOpt = 5,
    defect: DefectOpt = "none",
    defect_file: DefectFileOpt = None,
    basis: BasisOpt = Basis.X,
    rounds: RoundsOpt = 10,
    p: POpt = 1e-3,
    shots: ShotsOpt = 1000,
    seed: SeedOpt = 0,
    threads: ThreadsOpt = 1,
    fmt: Annotated[
        SampleFormat, typer.Option("--format", "-f", help="Sample format")
    ] = SampleFormat.B8,
    dem: Annotated[
        Optional[Path], typer.Option("--dem", help="Also write the detector error model")
    ] = None,
    verbose: VerboseOpt = False,
) -> None:
    """Sample detector bits of a noisy circuit."""
    setup_logging(verbose)
    config = make_config(
        command="sample",
        fixture=fixture,
        distance=distance,
        defect=defect,
        defect_file=defect_file,
        basis=basis,
        rounds=rounds,
        p=p,
        shots=shots,
        seed=seed,
        threads=threads,
        output=output,
    )

    try:
        noisy = apply_si1000(resolve_circuit(config), NoiseParams(p=config.p))
        detectors, _ = sample_frames(noisy, config.shots, config.seed, config.threads)
        write_samples(output, detectors, fmt)
        if dem:
            write_dem(dem, extract_dem(noisy))
    except PIPELINE_ERRORS as e:
        _fail("Sampling failed", e)

    console.print(
        f"[green]✓ Wrote {config.shots} shots x {detectors.shape[1]} detectors to {output}[/green]"
    )


@app.command(name="benchmark")
def benchmark_command(
    fixture: FixtureOpt = None,
    distance: DistanceOpt = 5,
    defect: DefectOpt = "none",
    defect_file: DefectFileOpt = None,
    basis: BasisOpt = Basis.X,
    rounds: RoundsOpt = 20,
    augment: AugmentOpt = True,
    p: POpt = 1e-3,
    shots: ShotsOpt = 10_000,
    seed: SeedOpt = 0,
    passes: PassesOpt = 1,
    backend: Annotated[
        Backend, typer.Option("--backend", help="Matching backend")
    ] = Backend.PYMATCHING,
    threads: ThreadsOpt = 1,
    output: OutputOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Estimate the logical error rate of one memory experiment."""
    setup_logging(verbose)
    config = make_config(
        command="benchmark",
        fixture=fixture,
        distance=distance,
        defect=defect,
        defect_file=defect_file,
        basis=basis,
        rounds=rounds,
        augment=augment,
        p=p,
        shots=shots,
        seed=seed,
        passes=passes,
        threads=threads,
        output=output,
    )

    try:
        circuit = resolve_circuit(config)
        result = benchmark(
            circuit,
            NoiseParams(p=config.p),
            shots=config.shots,
            seed=config.seed,
            passes=config.passes,
            backend=backend,
            threads=config.threads,
            rounds=None if config.fixture else config.rounds,
        )
    except PIPELINE_ERRORS as e:
        _fail("Benchmark failed", e)

    low, high = result.ci_round
    table = Table(title="Benchmark")
    for column in ("Shots", "Errors", "LER/shot", "LER/round", "95% CI", "Time"):
        table.add_column(column, justify="right")
    table.add_row(
        str(result.shots),
        str(result.errors),
        f"{result.ler_shot:.3e}",
        f"{result.ler_round:.3e}",
        f"[{low:.2e}, {high:.2e}]",
        f"{result.wall_time:.1f}s",
    )
    console.print(table)
    console.print(f"ler {result.ler_round:g}")

    if output:
        case = config.fixture or config.defect
        row = [
            case,
            config.basis.value,
            config.p,
            result.shots,
            result.errors,
            result.ler_round,
            low,
            high,
        ]
        pd.DataFrame([row], columns=SWEEP_COLUMNS).to_csv(output, index=False)


@app.command()
def sweep(
    cases: Annotated[str, typer.Option("--cases", help="Comma-separated presets")] = "none,A,B,C,D",
    bases: Annotated[str, typer.Option("--bases", help="Comma-separated bases")] = "X,Z",
    ps: Annotated[str, typer.Option("--ps", help="Comma-separated noise strengths")] = "1e-3",
    distance: DistanceOpt = 5,
    rounds: RoundsOpt = 20,
    augment: AugmentOpt = True,
    shots: ShotsOpt = 10_000,
    seed: SeedOpt = 0,
    passes: PassesOpt = 1,
    threads: ThreadsOpt = 1,
    output: OutputOpt = None,
    verbose: VerboseOpt = False,
) -> None:
    """Benchmark every combination of cases, bases and noise strengths; emit CSV."""
    setup_logging(verbose)
    try:
        case_list = [c.strip() for c in cases.split(",") if c.strip()]
        basis_list = [Basis(b.strip().upper()) for b in bases.split(",") if b.strip()]
        p_list = [float(v) for v in ps.split(",") if v.strip()]
    except ValueError as e:
        console.print(f"[red]Usage error:[/red] {e}")
        raise typer.Exit(2)
    for case in case_list:
        for p in p_list:
            make_config(
                command="sweep",
                distance=distance,
                defect=case,
                rounds=rounds,
                p=p,
                shots=shots,
                seed=seed,
                passes=passes,
                threads=threads,
                output=output,
            )

    service = ExperimentService(
        distance=distance, rounds=rounds, threads=threads, augment=augment
    )
    with Progress(
        SpinnerColumn(),
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        TaskProgressColumn(),
        console=console,
    ) as progress:
        task = progress.add_task("Sweeping...", total=None)

        def sweep_progress(current: int, total: int, message: str) -> None:
            progress.update(task, total=total, completed=current)
            progress.update(task, description=f"[cyan]{message[:50]}[/cyan]")

        result = service.run_sweep(
            case_list,
            basis_list,
            p_list,
            shots=shots,
            seed=seed,
            passes=passes,
            progress_callback=sweep_progress,
        )

    frame = result.to_dataframe()
    csv_text = frame.to_csv(index=False)
    if output:
        output.write_text(csv_text, encoding="utf-8")
        console.print(f"[green]✓ Wrote {len(frame)} rows to {output}[/green]")
    else:
        typer.echo(csv_text.rstrip("\n"))

    if result.errors:
        console.print(f"[red]{len(result.errors)} sweep points failed:[/red]")
        for err in result.errors[:5]:
            console.print(f"    • {err}")
        raise typer.Exit(1)


def main() -> None:
    """Main entry point."""
    app()


if __name__ == "__main__":
    main()
