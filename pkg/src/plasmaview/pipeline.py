"""Ingestion, resampling, normalization, truncation, and corpus file I/O.

Also provides a synthetic discharge generator so every downstream stage
can be exercised at desk scale without the full multi-machine dataset.
"""
from __future__ import annotations

import csv
import hashlib
import io
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import DEFAULT_SCHEMA, MACHINE_STATS, Discharge, FeatureSchema, Machine
from .errors import ConfigError, MissingInputError, SchemaError

FLOAT_FMT = "%.17g"  # full float64 precision, so corpus round trips are bit-exact


@dataclass(frozen=True)
class RawSeries:
    """Irregularly sampled per-channel series, timestamps in ms from shot start.

    ``channels`` maps physics channel name -> (times, values); each channel
    may have its own timestamps.
    """

    channels: dict[str, tuple[np.ndarray, np.ndarray]]

    def validate(self, schema: FeatureSchema = DEFAULT_SCHEMA) -> None:
        names = [schema.channels[i].name for i in schema.physics_idx]
        for name in names:
            if name not in self.channels:
                raise SchemaError(f"raw series is missing physics channel {name!r}")
            t, v = self.channels[name]
            if len(t) == 0:
                raise SchemaError(f"channel {name!r} has no samples")
            if len(t) != len(v):
                raise SchemaError(f"channel {name!r}: {len(t)} timestamps vs {len(v)} values")
            if np.any(np.diff(np.asarray(t, dtype=float)) <= 0):
                raise SchemaError(f"channel {name!r}: timestamps must be strictly increasing")

    @property
    def duration_ms(self) -> float:
        return max(float(np.asarray(t)[-1]) for t, _ in self.channels.values())


@dataclass(frozen=True)
class ShotMeta:
    id: str
    machine: Machine
    disruptive: bool
    disruption_time_ms: float | None = None


@dataclass(frozen=True)
class PreprocessConfig:
    grid_step_ms: float = 5.0
    min_length_ms: float = 125.0
    truncate_tail_ms: float = 40.0  # minimum engagement time of a mitigation system
    normalization: str = "zscore"  # "zscore" | "none"
    per_machine: bool = False

    def __post_init__(self):
        if self.grid_step_ms <= 0 or self.min_length_ms <= 0 or self.truncate_tail_ms <= 0:
            raise ConfigError("preprocess durations must be positive")
        if self.truncate_tail_ms >= self.min_length_ms:
            raise ConfigError("truncate_tail_ms must be smaller than min_length_ms")
        if self.normalization not in ("zscore", "none"):
            raise ConfigError(f"unknown normalization {self.normalization!r}")


def resample(
    raw: RawSeries, grid_step_ms: float, schema: FeatureSchema = DEFAULT_SCHEMA
) -> np.ndarray:
    """Forward-fill all physics channels onto the shared uniform grid.

    Grid points sit at 0, step, 2*step, ... covering [0, last timestamp].
    A grid time before a channel's first sample takes that channel's first
    value (head backfill); afterwards each grid value is the most recent
    raw sample at or before the grid time.
    """
    raw.validate(schema)
    if grid_step_ms <= 0:
        raise ConfigError("grid_step_ms must be positive")
    names = [schema.channels[i].name for i in schema.physics_idx]
    n_steps = int(np.floor(raw.duration_ms / grid_step_ms)) + 1
    grid = np.arange(n_steps) * grid_step_ms
    out = np.empty((n_steps, len(names)))
    for j, name in enumerate(names):
        t, v = raw.channels[name]
        t = np.asarray(t, dtype=float)
        v = np.asarray(v, dtype=float)
        pos = np.searchsorted(t, grid, side="right") - 1
        out[:, j] = v[np.clip(pos, 0, len(v) - 1)]
    return out


def preprocess(
    raw: RawSeries,
    meta: ShotMeta,
    cfg: PreprocessConfig = PreprocessConfig(),
    normalizer: "Normalizer | None" = None,
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> Discharge | None:
    """Resample, truncate the final tail, append indicators, normalize.

    Returns None for shots shorter than ``cfg.min_length_ms``. The number
    of retained steps is floor((duration - tail) / step).
    """
    duration = raw.duration_ms
    if duration < cfg.min_length_ms:
        return None
    physics = resample(raw, cfg.grid_step_ms, schema)
    keep = int(np.floor((duration - cfg.truncate_tail_ms) / cfg.grid_step_ms))
    physics = physics[:keep]

    samples = np.zeros((keep, schema.n_channels))
    samples[:, list(schema.physics_idx)] = physics
    samples[:, list(schema.indicator_idx)] = schema.indicator_row(meta.machine)

    disruption_time = meta.disruption_time_ms if meta.disruptive else None
    if disruption_time is not None:
        disruption_time = min(disruption_time, keep * cfg.grid_step_ms)
    shot = Discharge(
        id=meta.id,
        machine=meta.machine,
        samples=samples,
        grid_step_ms=cfg.grid_step_ms,
        disruptive=meta.disruptive,
        disruption_time_ms=disruption_time,
    )
    if cfg.normalization == "zscore":
        if normalizer is None:
            raise ConfigError("zscore normalization requires a fitted Normalizer")
        shot = normalizer.apply(shot)
    return shot


@dataclass
class Normalizer:
    """Per-channel z-score statistics for the nine physics channels.

    Fit on the training corpus only and persisted beside the model, so the
    test split never leaks into the statistics. Indicator channels are
    left untouched. ``per_machine`` scoping is available because the
    cross-machine statistic is otherwise a documented ambiguity.
    """

    mean: dict[str, np.ndarray] = field(default_factory=dict)
    std: dict[str, np.ndarray] = field(default_factory=dict)
    per_machine: bool = False

    GLOBAL = "__global__"

    @classmethod
    def fit(
        cls,
        discharges: list[Discharge],
        per_machine: bool = False,
        schema: FeatureSchema = DEFAULT_SCHEMA,
    ) -> "Normalizer":
        if not discharges:
            raise ConfigError("cannot fit a Normalizer on an empty corpus")
        norm = cls(per_machine=per_machine)
        groups: dict[str, list[Discharge]] = {}
        if per_machine:
            for d in discharges:
                groups.setdefault(d.machine.value, []).append(d)
        else:
            groups[cls.GLOBAL] = list(discharges)
        cols = list(schema.physics_idx)
        for key, shots in groups.items():
            stacked = np.concatenate([d.samples[:, cols] for d in shots], axis=0)
            mean = stacked.mean(axis=0)
            std = stacked.std(axis=0)
            zero = std < 1e-12
            if np.any(zero):
                names = [schema.channels[cols[i]].name for i in np.where(zero)[0]]
                warnings.warn(
                    f"zero-variance channel(s) {names} in group {key!r}; using std=1",
                    stacklevel=2,
                )
                std = np.where(zero, 1.0, std)
            norm.mean[key] = mean
            norm.std[key] = std
        return norm

    def _stats_for(self, machine: Machine) -> tuple[np.ndarray, np.ndarray]:
        key = machine.value if self.per_machine else self.GLOBAL
        if key not in self.mean:
            raise ConfigError(f"normalizer has no statistics for group {key!r}")
        return self.mean[key], self.std[key]

    def apply(self, d: Discharge, schema: FeatureSchema = DEFAULT_SCHEMA) -> Discharge:
        mean, std = self._stats_for(d.machine)
        cols = list(schema.physics_idx)
        samples = np.array(d.samples)
        samples[:, cols] = (samples[:, cols] - mean) / std
        return d.with_samples(samples)

    def save(self, path: str | Path) -> None:
        payload = {
            "per_machine": self.per_machine,
            "mean": {k: v.tolist() for k, v in self.mean.items()},
            "std": {k: v.tolist() for k, v in self.std.items()},
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: str | Path) -> "Normalizer":
        p = Path(path)
        if not p.exists():
            raise MissingInputError(f"normalizer file not found: {p}")
        payload = json.loads(p.read_text())
        return cls(
            per_machine=payload["per_machine"],
            mean={k: np.asarray(v, dtype=float) for k, v in payload["mean"].items()},
            std={k: np.asarray(v, dtype=float) for k, v in payload["std"].items()},
        )


# Baseline levels for the synthetic physics channels; these sit in
# normalized-like units so the corpus is trainable as emitted.
_SYNTH_BASE = np.array([0.0, 0.2, -0.1, 0.0, 0.3, -0.2, 0.1, 0.0, -0.3])
_SYNTH_N1_COL = 3  # n=1 mode amplitude
_SYNTH_IPERR_COL = 7  # plasma-current error fraction
_DEFAULT_DURATION_RANGE = {
    Machine.CMOD: (300.0, 600.0),
    Machine.D3D: (500.0, 900.0),
    Machine.EAST: (600.0, 1000.0),
}


def generate_synthetic(
    n_shots: int,
    machine: Machine,
    disruptive_fraction: float = 0.1,
    rng: np.random.Generator | None = None,
    grid_step_ms: float = 5.0,
    duration_range_ms: tuple[float, float] | None = None,
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> list[Discharge]:
    """Emit valid synthetic Discharges with separable classes.

    Physics channels follow smooth band-limited trajectories; disruptive
    shots superimpose a growing n=1-mode amplitude and a rising current
    error beginning tau(machine) before the disruption time, which
    coincides with series end.
    """
    if not 0.0 <= disruptive_fraction <= 1.0:
        raise ConfigError("disruptive_fraction must lie in [0, 1]")
    if n_shots == 0:
        return []
    if rng is None:
        raise ConfigError("generate_synthetic requires an explicit rng")
    machine = Machine(machine)
    lo, hi = duration_range_ms or _DEFAULT_DURATION_RANGE[machine]
    tau = MACHINE_STATS[machine].tau_ms
    n_disruptive = int(round(n_shots * disruptive_fraction))

    shots: list[Discharge] = []
    for k in range(n_shots):
        disruptive = k < n_disruptive
        duration = float(rng.uniform(lo, hi))
        T = max(int(duration / grid_step_ms), int(np.ceil(2 * tau / grid_step_ms)))
        t = np.arange(T) * grid_step_ms / 1000.0  # seconds
        physics = np.empty((T, 9))
        for c in range(9):
            level = _SYNTH_BASE[c] + rng.normal(0.0, 0.3)
            traj = np.full(T, level)
            for _ in range(3):
                freq = rng.uniform(0.5, 3.0)
                amp = rng.uniform(0.05, 0.2)
                phase = rng.uniform(0.0, 2 * np.pi)
                traj = traj + amp * np.sin(2 * np.pi * freq * t + phase)
            physics[:, c] = traj
        disruption_time = None
        if disruptive:
            disruption_time = T * grid_step_ms
            onset = disruption_time - tau
            times = np.arange(T) * grid_step_ms
            # sqrt ramp: most of the excursion appears early in the window
            ramp = np.sqrt(np.clip((times - onset) / tau, 0.0, 1.0))
            physics[:, _SYNTH_N1_COL] += 3.5 * ramp
            physics[:, _SYNTH_IPERR_COL] += 2.0 * ramp

        samples = np.zeros((T, schema.n_channels))
        samples[:, list(schema.physics_idx)] = physics
        samples[:, list(schema.indicator_idx)] = schema.indicator_row(machine)
        shots.append(
            Discharge(
                id=f"{machine.value}-{k:05d}",
                machine=machine,
                samples=samples,
                grid_step_ms=grid_step_ms,
                disruptive=disruptive,
                disruption_time_ms=disruption_time,
            )
        )
    return shots


def sanitize_id(shot_id: str) -> str:
    """Filesystem-safe record name for an opaque shot id."""
    safe = []
    for ch in shot_id:
        if ch.isalnum() or ch in "-_.":
            safe.append(ch)
        else:
            safe.append(f"%{ord(ch):02x}")
    return "".join(safe)


def write_corpus(
    discharges: list[Discharge], path: str | Path, schema: FeatureSchema = DEFAULT_SCHEMA
) -> None:
    """Write a corpus directory: a ``schema`` file plus one record per shot.

    Values are serialized at full float64 precision, so read-back is
    bit-exact.
    """
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    schema_lines = [f"{c.name},{c.unit},{c.kind.value}" for c in schema.channels]
    (root / "schema").write_text("\n".join(schema_lines) + "\n")
    for d in sorted(discharges, key=lambda s: s.id):
        buf = io.StringIO()
        buf.write(f"id={d.id}\n")
        buf.write(f"machine={d.machine.value}\n")
        buf.write(f"grid_step_ms={FLOAT_FMT % d.grid_step_ms}\n")
        buf.write(f"disruptive={int(d.disruptive)}\n")
        if d.disruption_time_ms is not None:
            buf.write(f"disruption_time_ms={FLOAT_FMT % d.disruption_time_ms}\n")
        buf.write("data\n")
        for row in d.samples:
            buf.write(",".join(FLOAT_FMT % v for v in row) + "\n")
        (root / f"{sanitize_id(d.id)}.rec").write_text(buf.getvalue())


def read_corpus(path: str | Path, schema: FeatureSchema = DEFAULT_SCHEMA) -> list[Discharge]:
    """Read a corpus directory written by :func:`write_corpus`."""
    root = Path(path)
    if not root.exists():
        raise MissingInputError(f"corpus directory not found: {root}")
    schema_path = root / "schema"
    if schema_path.exists():
        lines = [ln for ln in schema_path.read_text().splitlines() if ln.strip()]
        names = [ln.split(",")[0] for ln in lines]
        if len(names) != schema.n_channels:
            raise SchemaError(
                f"{schema_path}: expected {schema.n_channels} channels, found {len(names)}"
            )
        if tuple(names) != schema.names:
            raise SchemaError(f"{schema_path}: channel names do not match the feature schema")
    shots: list[Discharge] = []
    for rec in sorted(root.glob("*.rec")):
        shots.append(_read_record(rec, schema))
    return shots


def _read_record(path: Path, schema: FeatureSchema) -> Discharge:
    header: dict[str, str] = {}
    rows: list[list[float]] = []
    in_data = False
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if not in_data:
            if line.strip() == "data":
                in_data = True
                continue
            if "=" not in line:
                raise SchemaError(f"{path}:{lineno}: malformed header line {line!r}")
            key, value = line.split("=", 1)
            header[key.strip()] = value.strip()
        else:
            parts = line.split(",")
            if len(parts) != schema.n_channels:
                raise SchemaError(
                    f"{path}:{lineno}: expected {schema.n_channels} values, got {len(parts)}"
                )
            try:
                rows.append([float(p) for p in parts])
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    for key in ("id", "machine", "grid_step_ms", "disruptive"):
        if key not in header:
            raise SchemaError(f"{path}: missing header field {key!r}")
    if not rows:
        raise SchemaError(f"{path}: record contains no data rows")
    disruptive = bool(int(header["disruptive"]))
    disruption_time = (
        float(header["disruption_time_ms"]) if "disruption_time_ms" in header else None
    )
    try:
        machine = Machine(header["machine"])
    except ValueError as exc:
        raise SchemaError(f"{path}: unknown machine {header['machine']!r}") from exc
    return Discharge(
        id=header["id"],
        machine=machine,
        samples=np.asarray(rows),
        grid_step_ms=float(header["grid_step_ms"]),
        disruptive=disruptive,
        disruption_time_ms=disruption_time,
    )


def corpus_fingerprint(path: str | Path) -> str:
    """Order-independent content hash of a corpus directory."""
    root = Path(path)
    h = hashlib.sha256()
    for rec in sorted(root.iterdir()):
        if rec.is_file():
            h.update(rec.name.encode())
            h.update(rec.read_bytes())
    return h.hexdigest()


# Column-name mapping for per-shot exports of the open multi-machine
# dataset; override any entry via a JSON mapping file. The full table is
# documented in the README.
DEFAULT_COLUMN_MAP: dict[str, str] = {
    "beta_p": "beta_p",
    "l_i": "li",
    "q95": "q95",
    "n1_mode": "n_equal_1_normalized",
    "greenwald_fraction": "greenwald_fraction",
    "lower_gap": "lower_gap",
    "kappa": "kappa",
    "ip_error_frac": "ip_error_normalized",
    "v_loop": "v_loop",
    "__time__": "time",
}


def import_external(
    directory: str | Path,
    mapping: dict[str, str] | None = None,
    schema: FeatureSchema = DEFAULT_SCHEMA,
) -> list[tuple[RawSeries, ShotMeta]]:
    """Read per-shot CSV exports plus a ``labels.csv`` into raw series.

    Each shot file is ``<id>.csv`` with a time column (seconds or ms,
    see mapping) and one column per physics channel. ``labels.csv`` rows
    are (id, machine, disruptive, disruption_time_ms).
    """
    root = Path(directory)
    if not root.exists():
        raise MissingInputError(f"import directory not found: {root}")
    colmap = dict(DEFAULT_COLUMN_MAP)
    if mapping:
        colmap.update(mapping)
    labels_path = root / "labels.csv"
    if not labels_path.exists():
        raise MissingInputError(f"missing labels file: {labels_path}")
    metas: dict[str, ShotMeta] = {}
    with labels_path.open() as fh:
        for row in csv.DictReader(fh):
            dt = row.get("disruption_time_ms", "")
            disruptive = row["disruptive"].strip() in ("1", "true", "True")
            metas[row["id"]] = ShotMeta(
                id=row["id"],
                machine=Machine(row["machine"].strip().lower()),
                disruptive=disruptive,
                disruption_time_ms=float(dt) if disruptive and dt else None,
            )
    out: list[tuple[RawSeries, ShotMeta]] = []
    names = [schema.channels[i].name for i in schema.physics_idx]
    for shot_id, meta in sorted(metas.items()):
        shot_path = root / f"{shot_id}.csv"
        if not shot_path.exists():
            raise MissingInputError(f"missing shot file: {shot_path}")
        with shot_path.open() as fh:
            reader = csv.DictReader(fh)
            rows = list(reader)
        if not rows:
            raise SchemaError(f"{shot_path}: no samples")
        time_col = colmap["__time__"]
        if time_col not in rows[0]:
            raise SchemaError(f"{shot_path}: missing time column {time_col!r}")
        times = np.asarray([float(r[time_col]) for r in rows])
        channels: dict[str, tuple[np.ndarray, np.ndarray]] = {}
        for name in names:
            src = colmap[name]
            if src not in rows[0]:
                raise SchemaError(f"{shot_path}: missing column {src!r} for channel {name!r}")
            vals = np.asarray([float(r[src]) for r in rows])
            ok = np.isfinite(vals)
            if not ok.any():
                raise SchemaError(f"{shot_path}: channel {name!r} has no finite samples")
            channels[name] = (times[ok], vals[ok])
        out.append((RawSeries(channels), meta))
    return out
