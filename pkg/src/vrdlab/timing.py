"""RDT test-time estimation from DRAM command schedules.

A single RDT measurement initializes the victim and both aggressors, hammers
the aggressors ``H`` times (one hammer = one activation of each aggressor) and
reads the victim back. Every command is charged the delay that must elapse
before the next command may issue. Durations are kept as exact fractions of a
nanosecond; convert with :func:`round_ns` or ``float`` for display.

Refresh is not modeled: profiling runs with refresh disabled.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from enum import Enum
from fractions import Fraction
from typing import Iterator, Sequence

ROW_WRITE_BURSTS = 128  # column commands to fill/read one row
BANK_GROUP_SIZE = 16


def _exact(value) -> Fraction:
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        # shortest repr keeps decimal literals such as 14.09 exact
        return Fraction(repr(value))
    return Fraction(value)


@dataclass(frozen=True)
class TimingParams:
    """DDR5-8800 timing parameters in nanoseconds."""

    t_rrd_s: float = 1.816
    t_ccd_s: float = 1.816
    t_ccd_l: float = 5.000
    t_ccd_l_wr: float = 20.000
    t_rcd: float = 14.090
    t_rp: float = 14.090
    t_ras: float = 32.000
    t_rtp: float = 7.500
    t_wr: float = 30.000
    t_refi: float = 7800.0

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be strictly positive")

    def exact(self, name: str) -> Fraction:
        return _exact(getattr(self, name))


DEFAULT_TIMING = TimingParams()


class Command(str, Enum):
    ACT = "ACT"
    WRITE = "WRITE"
    READ = "READ"
    PRE = "PRE"


class Target(str, Enum):
    VICTIM = "Victim"
    AGG1 = "Agg1"
    AGG2 = "Agg2"


@dataclass(frozen=True)
class Step:
    command: Command
    target: Target
    delay_ns: Fraction
    repeat: int = 1
    # steps sharing a loop id repeat together as one interleaved body
    loop: int | None = None

    def __post_init__(self):
        if self.repeat < 1:
            raise ValueError("repeat must be >= 1")


@dataclass
class CommandSchedule:
    steps: list[Step] = field(default_factory=list)
    banks: int = 1

    def add(self, command, target, delay, repeat=1, loop=None):
        if repeat == 0:
            return
        self.steps.append(Step(Command(command), Target(target), _exact(delay), repeat, loop))

    def command_count(self) -> int:
        return sum(s.repeat for s in self.steps)

    def iter_commands(self) -> Iterator[tuple[Command, Target, Fraction]]:
        """Expand repeats into the literal issue order."""
        i = 0
        steps = self.steps
        while i < len(steps):
            s = steps[i]
            if s.loop is None:
                for _ in range(s.repeat):
                    yield s.command, s.target, s.delay_ns
                i += 1
                continue
            j = i
            while j < len(steps) and steps[j].loop == s.loop:
                j += 1
            body = steps[i:j]
            for _ in range(s.repeat):
                for b in body:
                    yield b.command, b.target, b.delay_ns
            i = j


def resolve_t_aggon(value, timing: TimingParams = DEFAULT_TIMING) -> Fraction:
    """Accept ``tras``, ``trefi``, ``9trefi`` or a number of nanoseconds."""
    if isinstance(value, str):
        key = value.strip().lower()
        if key == "tras":
            return timing.exact("t_ras")
        if key == "trefi":
            return timing.exact("t_refi")
        if key == "9trefi":
            return 9 * timing.exact("t_refi")
        value = float(key)
    t = _exact(value)
    if t <= 0:
        raise ValueError("tAggOn must be positive")
    return t


def _init_row(sched: CommandSchedule, target: Target, tp: TimingParams):
    sched.add("ACT", target, tp.exact("t_rcd"))
    sched.add("WRITE", target, tp.exact("t_ccd_l_wr"), ROW_WRITE_BURSTS - 1)
    sched.add("WRITE", target, tp.exact("t_wr"))
    sched.add("PRE", target, tp.exact("t_rp"))


def _readback(sched: CommandSchedule, tp: TimingParams):
    sched.add("ACT", Target.VICTIM, tp.exact("t_rcd"))
    sched.add("READ", Target.VICTIM, tp.exact("t_ccd_l"), ROW_WRITE_BURSTS - 1)
    sched.add("READ", Target.VICTIM, tp.exact("t_rtp"))


def _hammers(sched: CommandSchedule, hammer_count: int, act_delay: Fraction, tp: TimingParams):
    t_rp = tp.exact("t_rp")
    for target in (Target.AGG1, Target.AGG2):
        sched.add("ACT", target, act_delay, hammer_count, loop=0)
        sched.add("PRE", target, t_rp, hammer_count, loop=0)


def build_single_bank_schedule(hammer_count: int, t_aggon="tras",
                               timing: TimingParams = DEFAULT_TIMING) -> CommandSchedule:
    if hammer_count < 0:
        raise ValueError("hammer_count must be >= 0")
    sched = CommandSchedule(banks=1)
    for target in (Target.VICTIM, Target.AGG1, Target.AGG2):
        _init_row(sched, target, timing)
    _hammers(sched, hammer_count, resolve_t_aggon(t_aggon, timing), timing)
    _readback(sched, timing)
    return sched


def build_bank_parallel_schedule(hammer_count: int, t_aggon="tras", banks: int = 16,
                                 timing: TimingParams = DEFAULT_TIMING,
                                 sequential_readback: bool = False) -> CommandSchedule:
    """Measure one row address in 16 banks at once.

    Initialization opens the row in all banks back to back (tRRD_S) and streams
    16 x 127 writes at tCCD_S. Each hammer ACT waits for the larger of tAggOn
    and the 16-bank activation window. The readback is a single victim row
    read unless ``sequential_readback`` reads each bank's victim in turn.
    """
    if banks != BANK_GROUP_SIZE:
        raise ValueError(f"bank-parallel schedule defined only for {BANK_GROUP_SIZE} banks")
    if hammer_count < 0:
        raise ValueError("hammer_count must be >= 0")
    tp = timing
    sched = CommandSchedule(banks=banks)
    for target in (Target.VICTIM, Target.AGG1, Target.AGG2):
        sched.add("ACT", target, tp.exact("t_rrd_s"), banks)
        sched.add("WRITE", target, tp.exact("t_ccd_s"), banks * (ROW_WRITE_BURSTS - 1))
        sched.add("WRITE", target, tp.exact("t_wr"))
        sched.add("PRE", target, tp.exact("t_rp"))
    act = max(resolve_t_aggon(t_aggon, tp), banks * tp.exact("t_rrd_s"))
    _hammers(sched, hammer_count, act, tp)
    for _ in range(banks if sequential_readback else 1):
        _readback(sched, tp)
    return sched


def schedule_time(schedule: CommandSchedule) -> Fraction:
    """Total schedule duration in ns (exact)."""
    return sum((s.delay_ns * s.repeat for s in schedule.steps), Fraction(0))


def round_ns(t: Fraction, places: int = 2) -> float:
    return round(float(t), places)


def hammer_pair_time(t_aggon="tras", timing: TimingParams = DEFAULT_TIMING, parallel_banks: int = 1) -> Fraction:
    act = resolve_t_aggon(t_aggon, timing)
    if parallel_banks > 1:
        act = max(act, parallel_banks * timing.exact("t_rrd_s"))
    return 2 * (act + timing.exact("t_rp"))


def measurement_time(hammer_count: int, t_aggon="tras", parallel_banks: int = 1,
                     timing: TimingParams = DEFAULT_TIMING, sequential_readback: bool = False) -> Fraction:
    if parallel_banks == 1:
        return schedule_time(build_single_bank_schedule(hammer_count, t_aggon, timing))
    return schedule_time(build_bank_parallel_schedule(
        hammer_count, t_aggon, parallel_banks, timing, sequential_readback))


@dataclass(frozen=True)
class CampaignSpec:
    rows: int
    measurements_per_row: int
    hammer_count: int
    t_aggon: object = "tras"
    banks: int = 1
    patterns: int = 1
    temperatures: int = 1
    parallel_banks: int = 1

    def __post_init__(self):
        for name in ("rows", "banks", "measurements_per_row", "hammer_count", "patterns", "temperatures"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.parallel_banks not in (1, BANK_GROUP_SIZE):
            raise ValueError("parallel_banks must be 1 or 16")


def campaign_time(spec: CampaignSpec, timing: TimingParams = DEFAULT_TIMING,
                  sequential_readback: bool = False) -> Fraction:
    """Total campaign time in ns.

    Banks are processed in groups of ``parallel_banks``; a partial last group
    costs a full group.
    """
    per = measurement_time(spec.hammer_count, spec.t_aggon, spec.parallel_banks, timing, sequential_readback)
    groups = math.ceil(spec.banks / spec.parallel_banks)
    count = groups * spec.rows * spec.measurements_per_row * spec.patterns * spec.temperatures
    return per * count


def sweep_measurement_time(rdt_guess: int, found_rdt: int | None, t_aggon="tras",
                           parallel_banks: int = 1, timing: TimingParams = DEFAULT_TIMING) -> Fraction:
    """Sweep-mode cost of one measurement.

    Each grid hammer count from guess/2 upward is a full initialize-hammer-read
    iteration; the sweep stops at ``found_rdt`` or runs to guess*3 when nothing
    flips (``found_rdt=None``).
    """
    from .profiler import SweepConfig

    cfg = SweepConfig.from_guess(rdt_guess, iterations=1)
    stop = cfg.rdt_max if found_rdt is None else min(found_rdt, cfg.rdt_max)
    if stop < cfg.rdt_min:
        stop = cfg.rdt_min
    steps = (stop - cfg.rdt_min) // cfg.rdt_step + 1
    base = measurement_time(0, t_aggon, parallel_banks, timing)
    pair = hammer_pair_time(t_aggon, timing, parallel_banks)
    # sum over H = rdt_min + i*step, i in [0, steps)
    hammer_total = cfg.rdt_min * steps + cfg.rdt_step * steps * (steps - 1) // 2
    return base * steps + pair * hammer_total


def human_duration(ns) -> str:
    seconds = float(ns) / 1e9
    for unit, size in (("years", 365 * 86400), ("days", 86400), ("hours", 3600), ("minutes", 60)):
        if seconds >= size:
            return f"{seconds / size:.2f} {unit}"
    if seconds >= 1:
        return f"{seconds:.2f} seconds"
    if seconds >= 1e-3:
        return f"{seconds * 1e3:.2f} ms"
    return f"{seconds * 1e6:.2f} us"


def estimate(hammers: int, t_aggon="tras", rows: int = 1, banks: int = 1, parallel: int = 1,
             measurements: int = 1, patterns: int = 1, temps: int = 1,
             timing: TimingParams = DEFAULT_TIMING, sequential_readback: bool = False) -> dict:
    """JSON-ready estimate used by the ``esttime`` subcommand."""
    spec = CampaignSpec(rows=rows, measurements_per_row=measurements, hammer_count=hammers,
                        t_aggon=t_aggon, banks=banks, patterns=patterns, temperatures=temps,
                        parallel_banks=parallel)
    per = measurement_time(hammers, t_aggon, parallel, timing, sequential_readback)
    total = campaign_time(spec, timing, sequential_readback)
    return {
        "per_measurement_ns": round_ns(per),
        "total_seconds": float(total) / 1e9,
        "human_readable": human_duration(total),
    }


def schedule_table(schedule: CommandSchedule) -> Sequence[dict]:
    return [{"command": s.command.value, "target": s.target.value,
             "delay_ns": float(s.delay_ns), "repeat": s.repeat} for s in schedule.steps]
