"""Trace-driven read-disturbance mitigation models and their security outcome.

Each technique watches a stream of row activations and decides when an
aggressor is *mitigated*, i.e. its two physical neighbors (blast radius 1) are
preventively refreshed. The simulation records every refresh; a separate
replay against a VRD device model counts missed bitflips.

Performance is proxied by preventive actions per million activations.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Callable, Iterable, Mapping

import numpy as np

from . import device
from .device import Conditions, DEFAULT_CONDITIONS, RdtModel, RowState
from .errors import ConfigError, IntegrityError


class Technique(str, Enum):
    PARA = "para"
    MINT = "mint"
    GRAPHENE = "graphene"
    PRAC = "prac"


@dataclass
class ActivationTrace:
    events: list[tuple[int, int]]  # (bank, row) in issue order
    rows_per_bank: int
    banks: int = 1

    def __post_init__(self):
        if self.rows_per_bank < 1 or self.banks < 1:
            raise ConfigError("bank geometry must be positive")
        for b, r in self.events:
            if not (0 <= b < self.banks and 0 <= r < self.rows_per_bank):
                raise ConfigError(f"activation ({b}, {r}) outside geometry")

    def __len__(self):
        return len(self.events)

    def neighbors(self, row: int) -> tuple[int, ...]:
        return tuple(v for v in (row - 1, row + 1) if 0 <= v < self.rows_per_bank)

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["seq", "bank", "row"])
            for i, (b, r) in enumerate(self.events):
                w.writerow([i, b, r])

    @classmethod
    def read_csv(cls, path, rows_per_bank: int | None = None, banks: int | None = None) -> "ActivationTrace":
        events = []
        try:
            with open(path, newline="") as fh:
                reader = csv.DictReader(fh)
                if reader.fieldnames is None or not {"seq", "bank", "row"} <= set(reader.fieldnames):
                    raise IntegrityError(f"{path}: trace needs columns seq,bank,row")
                for rec in reader:
                    events.append((int(rec["seq"]), int(rec["bank"]), int(rec["row"])))
        except ValueError as exc:
            raise IntegrityError(f"corrupt trace {path}: {exc}") from exc
        events.sort()
        ev = [(b, r) for _, b, r in events]
        rows = rows_per_bank or (max((r for _, r in ev), default=0) + 2)
        nb = banks or (max((b for b, _ in ev), default=0) + 1)
        return cls(ev, rows, nb)


def random_trace(n: int, rows_per_bank: int, banks: int = 1, seed: int = 0,
                 hot_rows: int | None = None, hot_fraction: float = 0.0) -> ActivationTrace:
    """Uniform activations, optionally skewed toward a few hot rows."""
    rng = np.random.default_rng(seed)
    rows = rng.integers(0, rows_per_bank, n)
    if hot_rows:
        hot = rng.integers(0, rows_per_bank, hot_rows)
        pick = rng.random(n) < hot_fraction
        rows = np.where(pick, hot[rng.integers(0, hot_rows, n)], rows)
    bnk = rng.integers(0, banks, n)
    return ActivationTrace(list(zip(bnk.tolist(), rows.tolist())), rows_per_bank, banks)


def double_sided_trace(victim: int, hammers: int, rows_per_bank: int, bank: int = 0) -> ActivationTrace:
    ev = [(bank, victim - 1), (bank, victim + 1)] * hammers
    return ActivationTrace(ev, rows_per_bank, bank + 1)


def single_sided_trace(aggressor: int, count: int, rows_per_bank: int, bank: int = 0) -> ActivationTrace:
    return ActivationTrace([(bank, aggressor)] * count, rows_per_bank, bank + 1)


@dataclass(frozen=True)
class MitigationConfig:
    technique: Technique
    configured_rdt: int
    guardband: float = 0.0
    params: Mapping = field(default_factory=dict)
    # "scale": rdt * (1 - g), as in testing 450 for a 10% margin on RDT 500
    # "divide": rdt / (1 + g)
    margin_rule: str = "scale"

    def __post_init__(self):
        object.__setattr__(self, "technique", Technique(self.technique))
        if self.configured_rdt < 1:
            raise ConfigError("configured_rdt must be positive")
        if self.guardband < 0:
            raise ConfigError("guardband must be >= 0")
        if self.margin_rule not in ("scale", "divide"):
            raise ConfigError("margin_rule must be 'scale' or 'divide'")
        if self.effective_threshold < 1:
            raise ConfigError(f"guardband {self.guardband} leaves no usable threshold")

    @property
    def effective_threshold(self) -> int:
        g = Fraction(repr(float(self.guardband)))
        if self.margin_rule == "scale":
            return math.floor(self.configured_rdt * (1 - g))
        return math.floor(self.configured_rdt / (1 + g))

    @property
    def aggressor_threshold(self) -> int:
        """Per-aggressor count; halved by default for PRAC/Graphene (double-sided)."""
        halve = self.params.get("double_sided_halving",
                                self.technique in (Technique.PRAC, Technique.GRAPHENE))
        t = self.params.get("threshold")
        if t is None:
            t = self.effective_threshold // 2 if halve else self.effective_threshold
        return max(1, int(t))


@dataclass
class MitigationOutcome:
    technique: Technique
    activations: int = 0
    mitigations: int = 0
    preventive_refreshes: int = 0
    backoffs_or_rfm: int = 0
    missed_bitflips: int = 0
    max_unmitigated: int = 0
    epochs: int = 0
    refresh_log: list[tuple[int, int, int]] = field(default_factory=list, repr=False)
    mitigations_per_row: dict = field(default_factory=dict, repr=False)
    guardband: float | None = None
    effective_threshold: int | None = None

    @property
    def actions_per_million(self) -> float:
        return 1e6 * self.mitigations / self.activations if self.activations else 0.0

    def to_dict(self) -> dict:
        return {
            "technique": self.technique.value,
            "activations": self.activations,
            "mitigations": self.mitigations,
            "preventive_refreshes": self.preventive_refreshes,
            "backoffs_or_rfm": self.backoffs_or_rfm,
            "missed_bitflips": self.missed_bitflips,
            "max_unmitigated": self.max_unmitigated,
            "epochs": self.epochs,
            "actions_per_million": self.actions_per_million,
            "guardband": self.guardband,
            "effective_threshold": self.effective_threshold,
        }


# --- victim population ----------------------------------------------------

class VictimPopulation:
    """Lazily created :class:`RowState` per (bank, row), all seeded from one seed."""

    def __init__(self, model: RdtModel | Mapping[int, RdtModel] | Callable[[int, int], RdtModel],
                 seed: int = 0, conditions: Conditions = DEFAULT_CONDITIONS):
        self._model = model
        self.seed = seed
        self.conditions = conditions
        self._states: dict[tuple[int, int], RowState] = {}

    def model_for(self, bank: int, row: int) -> RdtModel:
        m = self._model
        if isinstance(m, RdtModel):
            return m
        if isinstance(m, Mapping):
            return m[row]
        return m(bank, row)

    def state(self, bank: int, row: int) -> RowState:
        key = (bank, row)
        st = self._states.get(key)
        if st is None:
            st = RowState.seeded(row, self.model_for(bank, row), self.seed, campaign_id=bank)
            self._states[key] = st
        return st

    def draw(self, bank: int, row: int) -> int:
        return device.draw_latent_rdt(self.state(bank, row), self.conditions)


def replay_security(refresh_log: Iterable[tuple[int, int, int]], trace: ActivationTrace,
                    victims: VictimPopulation) -> tuple[int, int]:
    """Replay the trace with the recorded refreshes; return (missed bitflips, epochs).

    A victim's epoch runs between preventive refreshes; its latent RDT is drawn
    at the epoch's first disturbance. A bitflip is missed when the epoch's
    aggressor activations (both sides summed) reach that RDT; at most one per
    epoch is counted.
    """
    by_event: dict[int, list[tuple[int, int]]] = defaultdict(list)
    for i, b, v in refresh_log:
        by_event[i].append((b, v))
    disturb: dict[tuple[int, int], int] = {}
    latent: dict[tuple[int, int], int] = {}
    flipped: set = set()
    missed = epochs = 0
    rows = trace.rows_per_bank
    for i, (b, a) in enumerate(trace.events):
        for v in (a - 1, a + 1):
            if not 0 <= v < rows:
                continue
            key = (b, v)
            if key not in latent:
                latent[key] = victims.draw(b, v)
                disturb[key] = 0
                epochs += 1
            d = disturb[key] + 1
            disturb[key] = d
            if d >= latent[key] and key not in flipped:
                flipped.add(key)
                missed += 1
        for key in by_event.get(i, ()):
            latent.pop(key, None)
            disturb.pop(key, None)
            flipped.discard(key)
    return missed, epochs


def evaluate_security(outcome: MitigationOutcome, victims: VictimPopulation, trace: ActivationTrace) -> int:
    missed, epochs = replay_security(outcome.refresh_log, trace, victims)
    outcome.missed_bitflips = missed
    outcome.epochs = epochs
    return missed


# --- techniques --------------------------------------------------------------

class _Engine:
    """Shared bookkeeping: exact per-row counts since each row's last mitigation."""

    def __init__(self, trace: ActivationTrace, config: MitigationConfig):
        self.trace = trace
        self.out = MitigationOutcome(config.technique, guardband=config.guardband,
                                     effective_threshold=config.effective_threshold)
        self.since: dict[tuple[int, int], int] = defaultdict(int)
        self.per_row: dict[tuple[int, int], int] = defaultdict(int)

    def activate(self, bank: int, row: int):
        key = (bank, row)
        c = self.since[key] + 1
        self.since[key] = c
        if c > self.out.max_unmitigated:
            self.out.max_unmitigated = c

    def mitigate(self, i: int, bank: int, row: int):
        self.since[(bank, row)] = 0
        self.per_row[(bank, row)] += 1
        self.out.mitigations += 1
        for v in self.trace.neighbors(row):
            self.out.refresh_log.append((i, bank, v))
            self.out.preventive_refreshes += 1

    def finish(self, victims: VictimPopulation | None) -> MitigationOutcome:
        self.out.activations = len(self.trace)
        self.out.mitigations_per_row = dict(self.per_row)
        if victims is not None:
            evaluate_security(self.out, victims, self.trace)
        return self.out


def para_probability(config: MitigationConfig) -> float:
    """Explicit ``p``, else 1 - failure_prob ** (1 / threshold)."""
    p = config.params.get("p")
    if p is None:
        target = float(config.params.get("failure_prob", 1e-15))
        p = 1.0 - target ** (1.0 / config.aggressor_threshold)
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ConfigError("PARA probability must lie in [0, 1]")
    return p


def run_para(trace: ActivationTrace, config: MitigationConfig, seed: int = 0,
             victims: VictimPopulation | None = None) -> MitigationOutcome:
    p = para_probability(config)
    eng = _Engine(trace, config)
    coins = np.random.default_rng(seed).random(len(trace)) < p
    for i, ((b, r), hit) in enumerate(zip(trace.events, coins.tolist())):
        eng.activate(b, r)
        if hit:
            eng.mitigate(i, b, r)
    return eng.finish(victims)


def run_mint(trace: ActivationTrace, config: MitigationConfig, seed: int = 0,
             victims: VictimPopulation | None = None) -> MitigationOutcome:
    """One uniformly chosen activation per W-activation window (per bank) is mitigated."""
    w = int(config.params.get("window", config.aggressor_threshold))
    if w < 1:
        raise ConfigError("MINT window must be >= 1")
    rng = np.random.default_rng(seed)
    eng = _Engine(trace, config)
    pos: dict[int, int] = defaultdict(int)
    chosen: dict[int, int] = {}
    for i, (b, r) in enumerate(trace.events):
        if pos[b] == 0:
            chosen[b] = int(rng.integers(w))
        eng.activate(b, r)
        if pos[b] == chosen[b]:
            eng.out.backoffs_or_rfm += 1
            eng.mitigate(i, b, r)
        pos[b] = (pos[b] + 1) % w
    return eng.finish(victims)


class GrapheneTable:
    """Frequent-item table with a spillover counter (one per bank).

    Estimates never undercount: a row outside the table has been activated at
    most ``spill`` times. A row that misses the table takes over an entry whose
    count equals ``spill``; otherwise ``spill`` grows.
    """

    def __init__(self, size: int):
        if size < 1:
            raise ConfigError("Graphene table size must be >= 1")
        self.size = size
        self.count: dict[int, int] = {}
        self.spill = 0
        self._level: dict[int, set] = defaultdict(set)

    def _set(self, row: int, c: int):
        old = self.count.get(row)
        if old is not None:
            self._level[old].discard(row)
        self.count[row] = c
        self._level[c].add(row)

    def observe(self, row: int) -> int | None:
        """Count one activation; return the row's estimate if it is tabled."""
        if row in self.count:
            self._set(row, self.count[row] + 1)
        elif len(self.count) < self.size:
            self._set(row, self.spill + 1)
        else:
            at_spill = self._level.get(self.spill)
            if at_spill:
                evict = min(at_spill)
                at_spill.discard(evict)
                del self.count[evict]
                self._set(row, self.spill + 1)
            else:
                self.spill += 1
                return None
        return self.count[row]

    def estimate(self, row: int) -> int:
        return self.count.get(row, self.spill)

    def reset(self):
        self.count.clear()
        self._level.clear()
        self.spill = 0


def run_graphene(trace: ActivationTrace, config: MitigationConfig,
                 victims: VictimPopulation | None = None) -> MitigationOutcome:
    """Mitigate whenever a tabled row's estimate reaches a multiple of the threshold.

    Triggering on multiples is the counter reset expressed without breaking
    the table invariant (entries never drop below the spillover level).
    """
    t = config.aggressor_threshold
    size = int(config.params.get("table_size", 256))
    reset_every = config.params.get("reset_window")
    tables: dict[int, GrapheneTable] = {}
    eng = _Engine(trace, config)
    for i, (b, r) in enumerate(trace.events):
        if reset_every and i and i % int(reset_every) == 0:
            for tab in tables.values():
                tab.reset()
        tab = tables.get(b)
        if tab is None:
            tab = tables[b] = GrapheneTable(size)
        eng.activate(b, r)
        est = tab.observe(r)
        if est is not None and est % t == 0:
            eng.mitigate(i, b, r)
    return eng.finish(victims)


def run_prac(trace: ActivationTrace, config: MitigationConfig,
             victims: VictimPopulation | None = None) -> MitigationOutcome:
    """Exact per-row counters; reaching the threshold raises a back-off.

    A back-off mitigates the triggering row plus the next
    ``backoff_refreshes - 1`` highest counters in that bank.
    """
    t = config.aggressor_threshold
    extra = int(config.params.get("backoff_refreshes", 1)) - 1
    if extra < 0:
        raise ConfigError("backoff_refreshes must be >= 1")
    counters: dict[int, dict[int, int]] = defaultdict(dict)
    eng = _Engine(trace, config)
    for i, (b, r) in enumerate(trace.events):
        bank = counters[b]
        bank[r] = bank.get(r, 0) + 1
        eng.activate(b, r)
        if bank[r] >= t:
            eng.out.backoffs_or_rfm += 1
            targets = [r]
            if extra:
                others = sorted((c, row) for row, c in bank.items() if row != r and c > 0)
                targets += [row for _, row in others[::-1][:extra]]
            for row in targets:
                bank[row] = 0
                eng.mitigate(i, b, row)
    return eng.finish(victims)


def run_none(trace: ActivationTrace, config: MitigationConfig | None = None,
             victims: VictimPopulation | None = None) -> MitigationOutcome:
    """Unmitigated baseline."""
    cfg = config or MitigationConfig(Technique.PRAC, 1)
    eng = _Engine(trace, cfg)
    for b, r in trace.events:
        eng.activate(b, r)
    return eng.finish(victims)


def run(trace: ActivationTrace, config: MitigationConfig, seed: int = 0,
        victims: VictimPopulation | None = None) -> MitigationOutcome:
    tech = config.technique
    if tech is Technique.PARA:
        return run_para(trace, config, seed, victims)
    if tech is Technique.MINT:
        return run_mint(trace, config, seed, victims)
    if tech is Technique.GRAPHENE:
        return run_graphene(trace, config, victims)
    return run_prac(trace, config, victims)


def guardband_sweep(trace: ActivationTrace, technique, configured_rdt: int, guardbands=(0.0, 0.1, 0.25, 0.5),
                    seed: int = 0, victims_factory: Callable[[], VictimPopulation] | None = None,
                    params: Mapping | None = None, margin_rule: str = "scale") -> list[MitigationOutcome]:
    out = []
    for g in guardbands:
        cfg = MitigationConfig(technique, configured_rdt, g, params or {}, margin_rule)
        out.append(run(trace, cfg, seed, victims_factory() if victims_factory else None))
    return out
