"""Workload acquisition: trace CSV parsing, synthetic generation, validation.

The trace format is a plain comma-separated file with header
``task_id,arrival_time,duration,cpu_request,mem_request,priority`` and
``\n`` line endings. A trailing ``scheduler_decision`` column is tolerated
and ignored. Workloads are kept in canonical order (arrival_time, id), and
the checksum is the sha256 of the canonical serialization.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

from .errors import ConfigError, TraceFormatError, TraceValidationError
from .seeding import STREAM_WORKLOAD, named_rng
from .simulation import Task

TRACE_HEADER = "task_id,arrival_time,duration,cpu_request,mem_request,priority"
OPTIONAL_TRACE_COLUMN = "scheduler_decision"


@dataclass(frozen=True)
class Workload:
    tasks: tuple[Task, ...]
    source: str
    checksum: str

    def __len__(self) -> int:
        return len(self.tasks)


def serialize_trace(tasks: Sequence[Task]) -> str:
    """Canonical CSV text; floats use repr so parsing is exact."""
    lines = [TRACE_HEADER]
    for t in tasks:
        lines.append(f"{t.id},{t.arrival_time},{t.duration},{t.cpu_req!r},{t.mem_req!r},{t.priority}")
    return "\n".join(lines) + "\n"


def make_workload(tasks: Iterable[Task], source: str) -> Workload:
    """Sort into canonical order, check id uniqueness, compute the checksum."""
    ordered = tuple(sorted(tasks, key=lambda t: (t.arrival_time, t.id)))
    seen: set[int] = set()
    for t in ordered:
        if t.id in seen:
            raise TraceValidationError(f"duplicate task id {t.id}")
        seen.add(t.id)
    checksum = hashlib.sha256(serialize_trace(ordered).encode("utf-8")).hexdigest()
    return Workload(tasks=ordered, source=source, checksum=checksum)


def parse_trace(path) -> Workload:
    """Parse and validate a trace file; errors name the offending line."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if not text.strip():
        raise TraceFormatError(f"{path}: empty file")
    lines = text.split("\n")
    header = lines[0].rstrip("\r")
    if header == TRACE_HEADER:
        ncols = 6
    elif header == f"{TRACE_HEADER},{OPTIONAL_TRACE_COLUMN}":
        ncols = 7
    else:
        raise TraceFormatError(f"{path}: expected header '{TRACE_HEADER}', got '{header}'")
    tasks: list[Task] = []
    seen: set[int] = set()
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.rstrip("\r")
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != ncols:
            raise TraceValidationError(f"{path}: line {lineno}: expected {ncols} fields, got {len(parts)}")
        try:
            task = Task(
                id=int(parts[0]),
                arrival_time=int(parts[1]),
                duration=int(parts[2]),
                cpu_req=float(parts[3]),
                mem_req=float(parts[4]),
                priority=int(parts[5]),
            )
        except ValueError as e:
            raise TraceValidationError(f"{path}: line {lineno}: {e}") from None
        if task.id in seen:
            raise TraceValidationError(f"{path}: line {lineno}: duplicate task id {task.id}")
        seen.add(task.id)
        tasks.append(task)
    return make_workload(tasks, source=str(path))


def write_trace(workload: Workload, path) -> None:
    """Write the canonical CSV; parse_trace(write_trace(w)) == w."""
    path = Path(path)
    try:
        path.write_text(serialize_trace(workload.tasks), encoding="utf-8", newline="")
    except OSError as e:
        raise OSError(f"cannot write trace to {path}: {e}") from e


@dataclass(frozen=True)
class SynthParams:
    """Synthetic workload knobs: Poisson arrivals, uniform task shapes.

    Resource demands are quantized to 0.01 units, so range minimums must be
    at least 0.01. Priorities are uniform over 0..4.
    """

    task_count: int
    arrival_rate: float = 1.0  # mean tasks per tick
    duration_range: tuple[int, int] = (5, 30)
    cpu_range: tuple[float, float] = (0.5, 3.5)
    mem_range: tuple[float, float] = (0.5, 6.0)
    seed: int = 0

    def __post_init__(self):
        if self.task_count < 0:
            raise ConfigError(f"task_count must be non-negative, got {self.task_count}")
        if self.arrival_rate <= 0:
            raise ConfigError(f"arrival_rate must be positive, got {self.arrival_rate}")
        lo, hi = self.duration_range
        if lo < 1 or hi < lo:
            raise ConfigError(f"duration_range must satisfy 1 <= min <= max, got {self.duration_range}")
        for name in ("cpu_range", "mem_range"):
            lo, hi = getattr(self, name)
            if lo < 0.01 or hi < lo:
                raise ConfigError(f"{name} must satisfy 0.01 <= min <= max, got {(lo, hi)}")
        if self.seed < 0:
            raise ConfigError(f"seed must be non-negative, got {self.seed}")


def generate_synthetic(params: SynthParams) -> Workload:
    """Seeded synthetic workload; a pure function of its parameters.

    Arrival ticks come from a Poisson process (exponential inter-arrivals
    at rate `arrival_rate`, floored to integer ticks). Per task the stream
    is consumed in a fixed order: inter-arrival, duration, cpu, mem,
    priority.
    """
    rng = named_rng(params.seed, STREAM_WORKLOAD)
    d_lo, d_hi = params.duration_range
    tasks: list[Task] = []
    clock = 0.0
    for i in range(params.task_count):
        clock += rng.exponential(1.0 / params.arrival_rate)
        tasks.append(
            Task(
                id=i,
                arrival_time=int(clock),
                duration=int(rng.integers(d_lo, d_hi + 1)),
                cpu_req=round(float(rng.uniform(*params.cpu_range)), 2),
                mem_req=round(float(rng.uniform(*params.mem_range)), 2),
                priority=int(rng.integers(0, 5)),
            )
        )
    source = f"synthetic(seed={params.seed},tasks={params.task_count},rate={params.arrival_rate})"
    return make_workload(tasks, source=source)
