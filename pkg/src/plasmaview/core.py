"""Domain data model: discharges, feature schema, machine stats, splits, RNG.

Everything here is immutable after construction and safe to share across
threads; the operations are pure functions of their inputs.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import ConfigError

# Named, portable PRNG used everywhere. PCG64 streams are platform-independent
# for a given seed, which is what makes corpora and checkpoints reproducible.
RNG_ALGORITHM = "pcg64"


class Machine(str, Enum):
    CMOD = "cmod"
    D3D = "d3d"
    EAST = "east"


class ChannelKind(str, Enum):
    PHYSICS = "physics"
    MACHINE_INDICATOR = "machine_indicator"


@dataclass(frozen=True)
class Channel:
    name: str
    unit: str
    kind: ChannelKind


# The nine global plasma-state channels, in fixed order, plus one binary
# indicator channel per machine.
PHYSICS_CHANNELS: tuple[Channel, ...] = (
    Channel("beta_p", "unitless", ChannelKind.PHYSICS),
    Channel("l_i", "unitless", ChannelKind.PHYSICS),
    Channel("q95", "unitless", ChannelKind.PHYSICS),
    Channel("n1_mode", "T", ChannelKind.PHYSICS),
    Channel("greenwald_fraction", "unitless", ChannelKind.PHYSICS),
    Channel("lower_gap", "m", ChannelKind.PHYSICS),
    Channel("kappa", "unitless", ChannelKind.PHYSICS),
    Channel("ip_error_frac", "unitless", ChannelKind.PHYSICS),
    Channel("v_loop", "V", ChannelKind.PHYSICS),
)

INDICATOR_CHANNELS: tuple[Channel, ...] = (
    Channel("is_cmod", "unitless", ChannelKind.MACHINE_INDICATOR),
    Channel("is_d3d", "unitless", ChannelKind.MACHINE_INDICATOR),
    Channel("is_east", "unitless", ChannelKind.MACHINE_INDICATOR),
)

_INDICATOR_BY_MACHINE = {
    Machine.CMOD: "is_cmod",
    Machine.D3D: "is_d3d",
    Machine.EAST: "is_east",
}


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered channel layout of every discharge matrix."""

    channels: tuple[Channel, ...] = PHYSICS_CHANNELS + INDICATOR_CHANNELS

    def __post_init__(self):
        names = [c.name for c in self.channels]
        if len(self.channels) != 12:
            raise ConfigError(f"schema must have exactly 12 channels, got {len(self.channels)}")
        if len(set(names)) != len(names):
            raise ConfigError("channel names must be unique")
        n_ind = sum(1 for c in self.channels if c.kind is ChannelKind.MACHINE_INDICATOR)
        if n_ind != 3:
            raise ConfigError(f"schema must have exactly 3 indicator channels, got {n_ind}")

    @property
    def n_channels(self) -> int:
        return len(self.channels)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.channels)

    @property
    def physics_idx(self) -> tuple[int, ...]:
        return tuple(i for i, c in enumerate(self.channels) if c.kind is ChannelKind.PHYSICS)

    @property
    def indicator_idx(self) -> tuple[int, ...]:
        return tuple(
            i for i, c in enumerate(self.channels) if c.kind is ChannelKind.MACHINE_INDICATOR
        )

    def indicator_column(self, machine: Machine) -> int:
        return self.names.index(_INDICATOR_BY_MACHINE[Machine(machine)])

    def indicator_row(self, machine: Machine) -> np.ndarray:
        """One-hot indicator values for the three indicator columns."""
        row = np.zeros(3)
        row[self.indicator_idx.index(self.indicator_column(machine))] = 1.0
        return row


DEFAULT_SCHEMA = FeatureSchema()


@dataclass(frozen=True)
class Discharge:
    """One shot: a T x 12 matrix on a uniform time grid plus its label.

    ``samples[t, c]`` is channel ``c`` at time ``t * grid_step_ms``.
    ``disruption_time_ms`` is measured from series start and is present
    iff the shot is disruptive.
    """

    id: str
    machine: Machine
    samples: np.ndarray
    grid_step_ms: float
    disruptive: bool
    disruption_time_ms: float | None = None

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.samples, dtype=np.float64))
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "machine", Machine(self.machine))

    @property
    def n_steps(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_ms(self) -> float:
        return self.n_steps * self.grid_step_ms

    def with_samples(self, samples: np.ndarray) -> "Discharge":
        return Discharge(
            id=self.id,
            machine=self.machine,
            samples=samples,
            grid_step_ms=self.grid_step_ms,
            disruptive=self.disruptive,
            disruption_time_ms=self.disruption_time_ms,
        )


@dataclass(frozen=True)
class MachineStats:
    """Per-machine dataset characteristics, including the class-label
    horizon ``tau_ms`` used when labeling training windows.

    The horizon interpretation of tau is inferred, not independently
    documented; see README for the caveat.
    """

    machine: Machine
    tau_ms: float
    discharge_count: int
    avg_length_ms: float
    native_sampling_ms: float

    def __post_init__(self):
        for name in ("tau_ms", "avg_length_ms", "native_sampling_ms"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"MachineStats.{name} must be positive")
        if self.discharge_count <= 0:
            raise ConfigError("MachineStats.discharge_count must be positive")


MACHINE_STATS: dict[Machine, MachineStats] = {
    Machine.CMOD: MachineStats(Machine.CMOD, 50.0, 4000, 520.0, 0.005),
    Machine.D3D: MachineStats(Machine.D3D, 150.0, 8000, 3700.0, 0.01),
    Machine.EAST: MachineStats(Machine.EAST, 400.0, 11000, 5300.0, 0.025),
}


class SplitCase(str, Enum):
    ZERO_SHOT = "zero_shot"
    FEW_SHOT = "few_shot"
    MANY_SHOT = "many_shot"
    SINGLE_MACHINE = "single_machine"


@dataclass(frozen=True)
class SplitSpec:
    """Benchmark split parameters.

    ``holdout_fraction`` defines each machine's held-out test pool; it is
    needed to make the many-shot and single-machine cases well defined.
    """

    case: SplitCase
    new_machine: Machine
    few_shot_count: int = 20
    seed: int = 0
    holdout_fraction: float = 0.25

    def __post_init__(self):
        object.__setattr__(self, "case", SplitCase(self.case))
        object.__setattr__(self, "new_machine", Machine(self.new_machine))
        if self.few_shot_count < 0:
            raise ConfigError("few_shot_count must be >= 0")
        if not 0.0 < self.holdout_fraction < 1.0:
            raise ConfigError("holdout_fraction must be in (0, 1)")


def make_rng(seed: int) -> np.random.Generator:
    """Construct the package-wide PRNG (PCG64) for a 64-bit seed."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed))))


def substream(seed: int, name: str) -> np.random.Generator:
    """Named child stream of a master seed.

    Derivation hashes the stream name, so adding a new named stream never
    perturbs the draws of existing ones.
    """
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = int.from_bytes(digest[:8], "little")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed), key])))


def _shuffled_ids(ids: list[str], rng: np.random.Generator) -> list[str]:
    # Lexicographic sort before the seeded shuffle keeps sampling
    # independent of input ordering.
    ordered = sorted(ids)
    perm = rng.permutation(len(ordered))
    return [ordered[i] for i in perm]


def make_splits(
    dataset: list[Discharge], spec: SplitSpec
) -> tuple[list[Discharge], list[Discharge]]:
    """Partition a corpus into train/test for one benchmark case.

    The test set always consists of the new machine's shots that are not
    in train. Per-machine holdout pools are derived deterministically from
    ``spec.seed``; the few-shot sample is drawn from the new machine's
    training pool only.
    """
    if not dataset:
        raise ConfigError("make_splits requires a nonempty dataset")
    ids_seen: set[str] = set()
    for d in dataset:
        if d.id in ids_seen:
            raise ConfigError(f"duplicate discharge id {d.id!r}")
        ids_seen.add(d.id)

    by_machine: dict[Machine, list[Discharge]] = {m: [] for m in Machine}
    for d in dataset:
        by_machine[d.machine].append(d)
    by_id = {d.id: d for d in dataset}

    new = spec.new_machine
    new_ids = [d.id for d in by_machine[new]]
    other = [d for m in Machine if m != new for d in by_machine[m]]

    pool_rng = substream(spec.seed, f"holdout:{new.value}")
    shuffled = _shuffled_ids(new_ids, pool_rng)
    n_test = int(round(spec.holdout_fraction * len(shuffled)))
    test_pool = shuffled[:n_test]
    train_pool = shuffled[n_test:]

    if spec.case is SplitCase.ZERO_SHOT:
        train_ids: list[str] = [d.id for d in other]
        held = set(new_ids)
    elif spec.case is SplitCase.FEW_SHOT:
        if spec.few_shot_count > len(train_pool):
            raise ConfigError(
                f"few_shot_count={spec.few_shot_count} exceeds the "
                f"{len(train_pool)} available {new.value} training shots"
            )
        few_rng = substream(spec.seed, f"few_shot:{new.value}")
        sampled = _shuffled_ids(train_pool, few_rng)[: spec.few_shot_count]
        train_ids = [d.id for d in other] + sampled
        held = set(new_ids) - set(sampled)
    elif spec.case is SplitCase.MANY_SHOT:
        train_ids = [d.id for d in other] + train_pool
        held = set(test_pool)
    else:  # SINGLE_MACHINE
        train_ids = list(train_pool)
        held = set(test_pool)

    # Deterministic output ordering: sort both halves by id.
    train = [by_id[i] for i in sorted(train_ids)]
    test = [by_id[i] for i in sorted(held)]
    return train, test


def validate_discharge(d: Discharge, schema: FeatureSchema = DEFAULT_SCHEMA) -> list[str]:
    """Check all Discharge invariants; returns one message per violation.

    Violations are data, not exceptions: an empty list means the shot is
    well formed.
    """
    out: list[str] = []
    if d.samples.ndim != 2:
        out.append(f"samples must be 2-D, got ndim={d.samples.ndim}")
        return out
    T, width = d.samples.shape
    if T < 1:
        out.append("series must have at least one time step")
    if width != schema.n_channels:
        out.append(f"expected {schema.n_channels} channels, got {width}")
        return out
    if d.grid_step_ms <= 0:
        out.append(f"grid_step_ms must be positive, got {d.grid_step_ms}")
    bad = np.argwhere(~np.isfinite(d.samples))
    for t, c in bad[:20]:
        out.append(f"non-finite value at (t={t}, ch={c})")
    if len(bad) > 20:
        out.append(f"... {len(bad) - 20} more non-finite values")

    ind = list(schema.indicator_idx)
    ind_block = d.samples[:, ind]
    if not np.all(np.isin(ind_block, (0.0, 1.0))):
        out.append("indicator channels must carry values in {0, 1}")
    elif T >= 1:
        if np.any(ind_block != ind_block[0]):
            out.append("indicator channels must be constant over time")
        if int(ind_block[0].sum()) != 1:
            out.append("exactly one indicator channel must be 1")
        else:
            expected = schema.indicator_column(d.machine)
            lit = ind[int(np.argmax(ind_block[0]))]
            if lit != expected:
                out.append(
                    f"indicator column {lit} is set but machine is {d.machine.value}"
                )

    if d.disruptive:
        if d.disruption_time_ms is None:
            out.append("disruptive shot missing disruption_time_ms")
        elif d.disruption_time_ms > d.duration_ms + 1e-9:
            out.append(
                f"disruption_time_ms={d.disruption_time_ms} exceeds series "
                f"duration {d.duration_ms}"
            )
        elif d.disruption_time_ms <= 0:
            out.append("disruption_time_ms must be positive")
    elif d.disruption_time_ms is not None:
        out.append("non-disruptive shot must not carry a disruption_time_ms")
    return out
