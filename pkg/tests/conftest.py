"""Shared fixtures.

The bundled-scenario workups dominate the suite's runtime, so each one is
computed once per session and shared across modules.  The tiny dim-12 run
exists for tests that need a trajectory but not the full 8000-step grids.
"""

import dataclasses

import numpy as np
import pytest

from dysonmap import (
    CoefficientSpec,
    Scenario,
    TimeGrid,
    hamiltonian_fn,
    initial_map,
    propagate_dyson,
    scenario_workup,
    validated_scenario,
)
from dysonmap.cli import _load_doc, scenario_from_doc


def load_bundled(name):
    doc, stem = _load_doc(name)
    return scenario_from_doc(doc, stem)


def rebuild(s, **overrides):
    return dataclasses.replace(s, **overrides)


def tiny_scenario(**overrides):
    """Dim-12 shrink of the constant-drive scenario; passes its workup."""
    base = dict(
        omega=CoefficientSpec.constant(1.0),
        alpha=CoefficientSpec.constant(1j),
        beta=CoefficientSpec.constant(1j),
        kappa=0.1,
        grid=TimeGrid(0.0, 2 * np.pi, 1500),
        dim=12,
        guard=4,
    )
    base.update(overrides)
    return Scenario(**base)


@pytest.fixture(scope="session")
def s1_workup():
    return scenario_workup(load_bundled("s1"))


@pytest.fixture(scope="session")
def s2_workup():
    return scenario_workup(load_bundled("s2"))


@pytest.fixture(scope="session")
def kappa_zero_workup():
    return scenario_workup(load_bundled("kappa_zero"))


@pytest.fixture(scope="session")
def gamma_drift_workup():
    return scenario_workup(load_bundled("gamma_drift"))


@pytest.fixture(scope="session")
def time_independent_workup():
    return scenario_workup(load_bundled("time_independent"))


@pytest.fixture(scope="session")
def tiny_run():
    """(s_run, H, traj) for the tiny scenario, convergence probe on."""
    s_run, _ = validated_scenario(tiny_scenario())
    H = hamiltonian_fn(s_run)
    eta0 = initial_map(s_run, complex(s_run.gamma0), complex(s_run.lambda0))
    traj = propagate_dyson(H, eta0, s_run.grid, options=s_run.solver_options())
    return s_run, H, traj
