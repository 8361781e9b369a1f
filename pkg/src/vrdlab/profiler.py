"""RDT profiling loop: victim selection, guess, and repeated sweeps.

A measurement sweeps hammer counts from ``guess/2`` to ``guess*3`` in steps of
``guess/100`` and records the first count that flips the victim. Sweeps that
never flip record :data:`NOFLIP` (``None``).
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from . import device
from .device import Conditions, DEFAULT_CONDITIONS, RowState
from .errors import ConfigError, IntegrityError, NoBitflipError, VictimNotFound

NOFLIP = None
NOFLIP_TOKEN = "noflip"


@dataclass(frozen=True)
class SweepConfig:
    rdt_guess: int
    rdt_min: int
    rdt_max: int
    rdt_step: int
    iterations: int

    def __post_init__(self):
        if self.rdt_step < 1:
            raise ConfigError("rdt_step must be >= 1")
        if not 1 <= self.rdt_min < self.rdt_max:
            raise ConfigError(f"need 1 <= rdt_min < rdt_max, got {self.rdt_min}, {self.rdt_max}")
        if (self.rdt_max - self.rdt_min) // self.rdt_step < 1:
            raise ConfigError("sweep range holds fewer than two grid points")
        if self.iterations < 0:
            raise ConfigError("iterations must be >= 0")

    @classmethod
    def from_guess(cls, rdt_guess: int, iterations: int = 100_000) -> "SweepConfig":
        if rdt_guess < 1:
            raise ConfigError("rdt_guess must be positive")
        step = max(1, (rdt_guess + 50) // 100)  # round(guess/100), never 0
        return cls(rdt_guess, max(1, rdt_guess // 2), rdt_guess * 3, step, iterations)

    @property
    def grid_top(self) -> int:
        return self.rdt_min + (self.rdt_max - self.rdt_min) // self.rdt_step * self.rdt_step

    def grid(self) -> range:
        return range(self.rdt_min, self.grid_top + 1, self.rdt_step)

    def to_dict(self) -> dict:
        return {"rdt_guess": self.rdt_guess, "rdt_min": self.rdt_min, "rdt_max": self.rdt_max,
                "rdt_step": self.rdt_step, "iterations": self.iterations}


@dataclass
class MeasurementSeries:
    row_address: int
    config: SweepConfig
    values: list = field(default_factory=list)
    conditions: Conditions = DEFAULT_CONDITIONS
    seed: int | None = None

    def __len__(self):
        return len(self.values)

    def numeric(self) -> list[int]:
        return [v for v in self.values if v is not NOFLIP]

    @property
    def noflip_count(self) -> int:
        return sum(1 for v in self.values if v is NOFLIP)

    def metadata(self) -> dict:
        return {
            "row": self.row_address,
            "config": self.config.to_dict(),
            "pattern": self.conditions.pattern.value,
            "t_aggon": self.conditions.t_aggon,
            "temperature": self.conditions.temperature.value,
            "seed": self.seed,
        }

    def write(self, path) -> Path:
        """Write ``index,rdt`` CSV plus a ``.json`` metadata sidecar."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "rdt"])
            for i, v in enumerate(self.values):
                w.writerow([i, NOFLIP_TOKEN if v is NOFLIP else v])
        path.with_suffix(".json").write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path) -> "MeasurementSeries":
        path = Path(path)
        values = read_series_csv(path)
        side = path.with_suffix(".json")
        if side.exists():
            meta = json.loads(side.read_text())
            cfg = SweepConfig(**meta["config"])
            cond = Conditions(meta["pattern"], meta["t_aggon"], meta["temperature"])
            return cls(int(meta["row"]), cfg, values, cond, meta.get("seed"))
        nums = [v for v in values if v is not NOFLIP]
        guess = max(2, round(sum(nums) / len(nums))) if nums else 2
        return cls(0, SweepConfig.from_guess(guess, len(values)), values)


def read_series_csv(path) -> list:
    values = []
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header != ["index", "rdt"]:
                raise IntegrityError(f"{path}: expected header 'index,rdt', got {header}")
            for lineno, rec in enumerate(reader, 2):
                if len(rec) != 2:
                    raise IntegrityError(f"{path}:{lineno}: malformed row {rec}")
                tok = rec[1].strip()
                if tok == NOFLIP_TOKEN:
                    values.append(NOFLIP)
                    continue
                try:
                    v = int(tok)
                except ValueError:
                    raise IntegrityError(f"{path}:{lineno}: bad rdt value {tok!r}") from None
                if v < 1:
                    raise IntegrityError(f"{path}:{lineno}: non-positive rdt {v}")
                values.append(v)
    except OSError as exc:
        raise IntegrityError(f"cannot read series {path}: {exc}") from exc
    return values


def _first_flip(latent: int, rdt_min: int, top: int, step: int):
    if latent <= rdt_min:
        return rdt_min
    h = rdt_min + -(-(latent - rdt_min) // step) * step
    return h if h <= top else NOFLIP


def measure_rdt_once(state: RowState, config: SweepConfig, conditions: Conditions = DEFAULT_CONDITIONS):
    """One sweep: draw a latent RDT, return the smallest grid count that flips.

    Equivalent to calling :func:`device.hammer` at each grid point in order and
    stopping at the first flip; the closed form avoids the O(grid) loop.
    """
    latent = device.draw_latent_rdt(state, conditions)
    return _first_flip(latent, config.rdt_min, config.grid_top, config.rdt_step)


def test_loop(state: RowState, config: SweepConfig, conditions: Conditions = DEFAULT_CONDITIONS) -> MeasurementSeries:
    values = [measure_rdt_once(state, config, conditions) for _ in range(config.iterations)]
    return MeasurementSeries(state.row_address, config, values, conditions, getattr(state, "seed", None))


# pytest would otherwise collect the public name as a test function
test_loop.__test__ = False


def guess_rdt(state: RowState, conditions: Conditions = DEFAULT_CONDITIONS, n: int = 10,
              ceiling: int | None = None) -> int:
    """Mean of ``n`` bootstrap measurements, rounded to the nearest integer.

    No pre-guess sweep is given for the bootstrap, so it sweeps the model's own
    grid (optionally capped at ``ceiling``).
    """
    if n < 1:
        raise ConfigError("n must be >= 1")
    m = state.model
    top = m.grid_top if ceiling is None else min(m.grid_top, ceiling)
    found = []
    for _ in range(n):
        latent = device.draw_latent_rdt(state, conditions)
        if top < m.grid_bottom:
            continue
        v = _first_flip(latent, m.grid_bottom, top, m.grid_step)
        if v is not NOFLIP:
            found.append(v)
    if not found:
        raise NoBitflipError(f"row {state.row_address}: no bitflip in {n} bootstrap measurements")
    total = sum(found)
    return (2 * total + len(found)) // (2 * len(found))


def find_victim(rows: Sequence[RowState], conditions: Conditions = DEFAULT_CONDITIONS,
                threshold: int = 40_000, n: int = 10, ceiling: int | None = None) -> tuple[int, int]:
    """First row (ascending address) whose guessed RDT is below ``threshold``."""
    if not rows:
        raise ConfigError("empty row list")
    for state in sorted(rows, key=lambda s: s.row_address):
        try:
            guess = guess_rdt(state, conditions, n, ceiling)
        except NoBitflipError:
            continue
        if guess < threshold:
            return guess, state.row_address
    raise VictimNotFound(f"no row with guessed RDT below {threshold}")


def profile_row(state: RowState, iterations: int, conditions: Conditions = DEFAULT_CONDITIONS,
                guess_n: int = 10) -> MeasurementSeries:
    """Guess, build the sweep, and run the loop for a single row."""
    guess = guess_rdt(state, conditions, guess_n)
    cfg = SweepConfig.from_guess(max(guess, 2), iterations)
    return test_loop(state, cfg, conditions)


def series_from_values(values: Iterable, row_address: int = 0) -> MeasurementSeries:
    vals = list(values)
    nums = [v for v in vals if v is not NOFLIP]
    guess = max(2, round(sum(nums) / len(nums))) if nums else 2
    return MeasurementSeries(row_address, SweepConfig.from_guess(guess, len(vals)), vals)
