import numpy as np
import pytest

from plasmaview.core import DEFAULT_SCHEMA, Discharge, Machine, substream
from plasmaview.pipeline import generate_synthetic


@pytest.fixture(scope="session")
def schema():
    return DEFAULT_SCHEMA


@pytest.fixture(scope="session")
def small_corpus():
    """40 C-Mod + 40 D3D shots, fixed seed, reused read-only."""
    shots = generate_synthetic(40, Machine.CMOD, 0.25, substream(11, "fix-cmod"))
    shots += generate_synthetic(40, Machine.D3D, 0.25, substream(11, "fix-d3d"))
    return shots


@pytest.fixture(scope="session")
def d3d_corpus():
    return generate_synthetic(60, Machine.D3D, 0.25, substream(12, "fix-d3d-only"))


def make_shot(
    shot_id="s0",
    machine=Machine.CMOD,
    n_steps=50,
    disruptive=False,
    seed=0,
    grid_step_ms=5.0,
    schema=DEFAULT_SCHEMA,
):
    """Small hand-rolled valid discharge for unit tests."""
    rng = np.random.default_rng(seed)
    samples = np.zeros((n_steps, schema.n_channels))
    samples[:, list(schema.physics_idx)] = rng.normal(size=(n_steps, 9))
    samples[:, list(schema.indicator_idx)] = schema.indicator_row(machine)
    return Discharge(
        id=shot_id,
        machine=machine,
        samples=samples,
        grid_step_ms=grid_step_ms,
        disruptive=disruptive,
        disruption_time_ms=n_steps * grid_step_ms if disruptive else None,
    )
