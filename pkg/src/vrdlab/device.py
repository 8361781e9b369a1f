"""Generative models of time-varying read disturbance thresholds.

Each row carries an :class:`RdtModel`. A measurement sweep draws one latent
RDT from the model; within that sweep the row behaves deterministically
(``hammer`` flips iff the hammer count reaches the latent value), and the next
sweep draws a fresh value. Draws are i.i.d. across sweeps.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import DeviceStateError, ModelError, ReplayExhausted
from .timing import DEFAULT_TIMING


class Family(str, Enum):
    DISCRETE_NORMAL = "DiscreteNormal"
    BIMODAL_MIXTURE = "BimodalMixture"
    EMPIRICAL_REPLAY = "EmpiricalReplay"
    CONSTANT = "Constant"

    @classmethod
    def _missing_(cls, value):
        # accept "discretenormal", "normal", "bimodal", "replay", ...
        if isinstance(value, str):
            key = value.replace("_", "").replace("-", "").lower()
            for member in cls:
                name = member.value.lower()
                if key == name or (len(key) >= 4 and name.startswith(key)) or name.endswith(key):
                    return member
        return None


class DataPattern(str, Enum):
    ROWSTRIPE0 = "Rowstripe0"
    ROWSTRIPE1 = "Rowstripe1"
    CHECKERED0 = "Checkered0"
    CHECKERED1 = "Checkered1"


class Temperature(str, Enum):
    C50 = "C50"
    C65 = "C65"
    C80 = "C80"


class CellEncoding(str, Enum):
    TRUE = "True"
    ANTI = "Anti"


TAGGON_CLASSES = ("tRAS", "tREFI", "9tREFI")


def taggon_class(t_aggon_ns: float) -> str:
    """Bucket an aggressor on-time into the three profiled tAggOn levels."""
    t_refi = DEFAULT_TIMING.t_refi
    if t_aggon_ns < t_refi:
        return "tRAS"
    if t_aggon_ns < 9 * t_refi:
        return "tREFI"
    return "9tREFI"


@dataclass(frozen=True)
class Conditions:
    """Test conditions that select a modifier scale."""

    pattern: DataPattern = DataPattern.CHECKERED0
    t_aggon: float = DEFAULT_TIMING.t_ras
    temperature: Temperature = Temperature.C50

    def __post_init__(self):
        object.__setattr__(self, "pattern", DataPattern(self.pattern))
        object.__setattr__(self, "temperature", Temperature(self.temperature))
        if self.t_aggon < DEFAULT_TIMING.t_ras:
            raise ValueError(f"t_aggon must be >= tRAS ({DEFAULT_TIMING.t_ras} ns)")

    @property
    def key(self) -> tuple[str, str, str]:
        return (self.pattern.value, taggon_class(self.t_aggon), self.temperature.value)


DEFAULT_CONDITIONS = Conditions()


@dataclass(frozen=True)
class Mixture:
    weight: float  # probability of drawing from the second component
    mean: float
    stddev: float


@dataclass(frozen=True)
class RdtModel:
    family: Family
    mean: float = 0.0
    stddev: float = 0.0
    grid_step: int = 1
    grid_min: int = 1
    grid_max: int = 10**9
    mixture: Mixture | None = None
    replay_values: tuple[int, ...] | None = None
    # (pattern, tAggOn class, temperature) -> scale; "*" matches anything
    modifiers: Mapping[tuple[str, str, str], float] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "family", Family(self.family))
        if self.grid_step < 1 or self.grid_min < 1 or self.grid_max < 1:
            raise ModelError("grid step/min/max must be positive integers")
        if self.grid_min > self.grid_max:
            raise ModelError(f"grid_min {self.grid_min} > grid_max {self.grid_max}")
        if self.grid_bottom > self.grid_max:
            raise ModelError(f"no multiple of {self.grid_step} in [{self.grid_min}, {self.grid_max}]")
        if self.stddev < 0:
            raise ModelError("stddev must be non-negative")
        if self.family in (Family.CONSTANT, Family.DISCRETE_NORMAL, Family.BIMODAL_MIXTURE):
            if not self.grid_min <= self.mean <= self.grid_max:
                raise ModelError(f"mean {self.mean} outside grid [{self.grid_min}, {self.grid_max}]")
        if self.family is Family.BIMODAL_MIXTURE:
            if self.mixture is None:
                raise ModelError("BimodalMixture requires mixture parameters")
            if not 0.0 <= self.mixture.weight <= 1.0:
                raise ModelError("mixture weight must lie in [0, 1]")
            if self.mixture.stddev < 0 or self.mixture.mean <= 0:
                raise ModelError("invalid second mixture component")
        if self.family is Family.EMPIRICAL_REPLAY:
            if self.replay_values is None:
                raise ModelError("EmpiricalReplay requires replay_values")
            vals = tuple(int(v) for v in self.replay_values)
            if any(v < 1 for v in vals):
                raise ModelError("replay values must be positive integers")
            object.__setattr__(self, "replay_values", vals)
        for scale in self.modifiers.values():
            if not scale > 0:
                raise ModelError("modifier scales must be positive")

    @classmethod
    def constant(cls, value: int, grid_step: int = 1, grid_min: int = 1, grid_max: int = 10**9) -> "RdtModel":
        return cls(Family.CONSTANT, mean=value, grid_step=grid_step, grid_min=grid_min, grid_max=grid_max)

    @classmethod
    def normal(cls, mean: float, stddev: float, grid_step: int = 1, grid_min: int = 1,
               grid_max: int = 10**9, **kw) -> "RdtModel":
        return cls(Family.DISCRETE_NORMAL, mean=mean, stddev=stddev, grid_step=grid_step,
                   grid_min=grid_min, grid_max=grid_max, **kw)

    @classmethod
    def replay(cls, values, grid_step: int = 1, grid_min: int = 1, grid_max: int = 10**9) -> "RdtModel":
        return cls(Family.EMPIRICAL_REPLAY, replay_values=tuple(values), grid_step=grid_step,
                   grid_min=grid_min, grid_max=grid_max)

    # Grid points are the multiples of grid_step inside [grid_min, grid_max].
    @property
    def grid_bottom(self) -> int:
        return -(-self.grid_min // self.grid_step) * self.grid_step

    @property
    def grid_top(self) -> int:
        """Largest grid point not above ``grid_max``."""
        return self.grid_max // self.grid_step * self.grid_step

    def scale_for(self, conditions: Conditions) -> float:
        if not self.modifiers:
            return 1.0
        p, t, c = conditions.key
        for key in ((p, t, c), (p, t, "*"), (p, "*", c), ("*", t, c),
                    (p, "*", "*"), ("*", t, "*"), ("*", "*", c), ("*", "*", "*")):
            if key in self.modifiers:
                return float(self.modifiers[key])
        return 1.0

    def quantize(self, x):
        """Round to the nearest grid point and clamp into the grid."""
        k = np.floor(np.asarray(x, dtype=float) / self.grid_step + 0.5)
        return np.clip(k * self.grid_step, self.grid_bottom, self.grid_top).astype(np.int64)

    def sample(self, rng: np.random.Generator, size: int, conditions: Conditions = DEFAULT_CONDITIONS) -> np.ndarray:
        """Vectorized i.i.d. draws (not available for EmpiricalReplay)."""
        s = self.scale_for(conditions)
        if self.family is Family.CONSTANT:
            raw = np.full(size, self.mean * s)
        elif self.family is Family.DISCRETE_NORMAL:
            raw = rng.normal(self.mean * s, self.stddev * s, size)
        elif self.family is Family.BIMODAL_MIXTURE:
            second = rng.random(size) < self.mixture.weight
            a = rng.normal(self.mean * s, self.stddev * s, size)
            b = rng.normal(self.mixture.mean * s, self.mixture.stddev * s, size)
            raw = np.where(second, b, a)
        else:
            raise ModelError("EmpiricalReplay is sequential; draw through RowState")
        return self.quantize(raw)

    def to_record(self, row: int | None = None) -> dict:
        rec: dict = {"family": self.family.value}
        if row is not None:
            rec["row"] = row
        if self.family is not Family.EMPIRICAL_REPLAY:
            rec["mean"] = self.mean
            rec["stddev"] = self.stddev
        if self.mixture is not None:
            rec["mixture"] = {"weight": self.mixture.weight, "mean": self.mixture.mean,
                              "stddev": self.mixture.stddev}
        rec["grid"] = {"min": self.grid_min, "max": self.grid_max, "step": self.grid_step}
        if self.modifiers:
            rec["modifiers"] = {"/".join(k): v for k, v in self.modifiers.items()}
        if self.replay_values is not None:
            rec["replay_values"] = list(self.replay_values)
        return rec


def rng_stream(seed: int, row_address: int = 0, campaign_id: int = 0) -> np.random.Generator:
    """Independent generator per (seed, row, campaign)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(row_address), int(campaign_id)]))


@dataclass
class RowState:
    row_address: int
    model: RdtModel
    rng: np.random.Generator = field(default_factory=lambda: rng_stream(0))
    latent_rdt: int | None = None
    draw_count: int = 0
    cell_encoding: CellEncoding = CellEncoding.TRUE  # informational only
    seed: int | None = None

    @classmethod
    def seeded(cls, row_address: int, model: RdtModel, seed: int = 0, campaign_id: int = 0, **kw) -> "RowState":
        return cls(row_address, model, rng_stream(seed, row_address, campaign_id), seed=seed, **kw)


def draw_latent_rdt(state: RowState, conditions: Conditions = DEFAULT_CONDITIONS) -> int:
    """Start a new measurement sweep: draw and store the row's latent RDT."""
    m = state.model
    s = m.scale_for(conditions)
    if m.family is Family.EMPIRICAL_REPLAY:
        if state.draw_count >= len(m.replay_values):
            raise ReplayExhausted(
                f"row {state.row_address}: replay list exhausted after {len(m.replay_values)} draws")
        raw = m.replay_values[state.draw_count] * s
    elif m.family is Family.CONSTANT:
        raw = m.mean * s
    elif m.family is Family.DISCRETE_NORMAL:
        raw = state.rng.normal(m.mean * s, m.stddev * s)
    else:
        if state.rng.random() < m.mixture.weight:
            raw = state.rng.normal(m.mixture.mean * s, m.mixture.stddev * s)
        else:
            raw = state.rng.normal(m.mean * s, m.stddev * s)
    value = int(m.quantize(raw))
    state.latent_rdt = value
    state.draw_count += 1
    return value


@dataclass(frozen=True)
class HammerRequest:
    row_address: int
    hammer_count: int
    t_aggon: float = DEFAULT_TIMING.t_ras
    data_pattern: DataPattern = DataPattern.CHECKERED0
    temperature: Temperature = Temperature.C50

    def __post_init__(self):
        if self.hammer_count < 1:
            raise ValueError("hammer_count must be >= 1")
        if self.t_aggon < DEFAULT_TIMING.t_ras:
            raise ValueError("t_aggon must be >= tRAS")


def hammer(state: RowState, req: HammerRequest) -> bool:
    """Double-sided hammer of ``req.hammer_count``; True iff the victim flips."""
    if state.latent_rdt is None:
        raise DeviceStateError(f"row {state.row_address}: hammer before any latent RDT draw")
    return req.hammer_count >= state.latent_rdt


# --- model files -----------------------------------------------------------

def _parse_modifiers(raw: Mapping | None) -> dict:
    out = {}
    for key, scale in (raw or {}).items():
        parts = tuple(key.split("/")) if isinstance(key, str) else tuple(key)
        if len(parts) != 3:
            raise ModelError(f"modifier key {key!r} must be pattern/taggon/temperature")
        out[parts] = float(scale)
    return out


def read_replay_file(path) -> list[int]:
    values = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                values.append(int(line))
            except ValueError:
                raise ModelError(f"{path}:{lineno}: not an integer: {line!r}") from None
    return values


def model_from_record(rec: Mapping, base_dir: Path | None = None) -> RdtModel:
    try:
        grid = rec.get("grid", {})
        replay = rec.get("replay_values")
        if replay is None and rec.get("replay_file"):
            path = Path(rec["replay_file"])
            if base_dir is not None and not path.is_absolute():
                path = base_dir / path
            replay = read_replay_file(path)
        mix = rec.get("mixture")
        return RdtModel(
            family=Family(rec["family"]),
            mean=float(rec.get("mean", 0.0)),
            stddev=float(rec.get("stddev", 0.0)),
            grid_step=int(grid.get("step", 1)),
            grid_min=int(grid.get("min", 1)),
            grid_max=int(grid.get("max", 10**9)),
            mixture=Mixture(float(mix["weight"]), float(mix["mean"]), float(mix["stddev"])) if mix else None,
            replay_values=tuple(replay) if replay is not None else None,
            modifiers=_parse_modifiers(rec.get("modifiers")),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ModelError):
            raise
        raise ModelError(f"bad model record {dict(rec)!r}: {exc}") from exc


def load_model_file(path) -> dict[int, RdtModel]:
    """Load ``{row: RdtModel}`` from a JSON (or YAML) model document."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ModelError(f"cannot read model file {path}: {exc}") from exc
    if path.suffix in (".yaml", ".yml"):
        import yaml
        doc = yaml.safe_load(text)
    else:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ModelError(f"{path}: {exc}") from exc
    records = doc["rows"] if isinstance(doc, dict) else doc
    models: dict[int, RdtModel] = {}
    for rec in records:
        if "row" not in rec:
            raise ModelError(f"model record without 'row': {rec!r}")
        row = int(rec["row"])
        if row in models:
            raise ModelError(f"duplicate row {row} in {path}")
        models[row] = model_from_record(rec, path.parent)
    if not models:
        raise ModelError(f"{path}: no rows")
    return models


def save_model_file(path, models: Mapping[int, RdtModel]):
    doc = {"rows": [m.to_record(row) for row, m in sorted(models.items())]}
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


def normal_cdf_on_grid(model: RdtModel, x: float, conditions: Conditions = DEFAULT_CONDITIONS) -> float:
    """P(latent <= x) for DiscreteNormal models, accounting for rounding and clamping."""
    if model.family is not Family.DISCRETE_NORMAL:
        raise ModelError("closed-form CDF only for DiscreteNormal")
    if x < model.grid_bottom:
        return 0.0
    if x >= model.grid_top:
        return 1.0
    s = model.scale_for(conditions)
    k = math.floor(x / model.grid_step)
    edge = (k + 0.5) * model.grid_step
    if model.stddev == 0:
        return 1.0 if model.mean * s < edge else 0.0
    return 0.5 * math.erfc(-(edge - model.mean * s) / (model.stddev * s * math.sqrt(2)))
