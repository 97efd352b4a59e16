"""Shared fixtures: the two-state surge benchmark model, synthesized metrics,
and the expensive closed-loop reference runs (built once per session)."""

import numpy as np
import pytest
from hypothesis import settings as hyp_settings

from ccm.poly import PolyMatrix, poly_from_text
from ccm.synth import Role, SynthStatus, SystemModel, synthesize

# reproducible property-test runs
hyp_settings.register_profile("ci", derandomize=True)
hyp_settings.load_profile("ci")


def build_benchmark_model() -> SystemModel:
    f = PolyMatrix.column(
        [
            poly_from_text("-x2 - 1.5*x1^2 - 0.5*x1^3", 2),
            poly_from_text("x1", 2),
        ]
    )
    return SystemModel(f, np.array([[0.0], [1.0]]), np.array([[0.0, 1.0]]))


@pytest.fixture(scope="session")
def mg_model():
    return build_benchmark_model()


def _synth_pair(model, lam, a1, a2):
    cres = synthesize(model, Role.CONTROLLER, lam, a1, a2)
    ores = synthesize(model, Role.OBSERVER, lam, a1, a2)
    assert cres.status is SynthStatus.FEASIBLE, cres.message
    assert ores.status is SynthStatus.FEASIBLE, ores.message
    return cres.metric, ores.metric


@pytest.fixture(scope="session")
def metrics_slow(mg_model):
    return _synth_pair(mg_model, 0.1, 0.1, 1.3)


@pytest.fixture(scope="session")
def metrics_medium(mg_model):
    return _synth_pair(mg_model, 5.0, 0.1, 30.0)


@pytest.fixture(scope="session")
def metrics_fast(mg_model):
    return _synth_pair(mg_model, 10.0, 0.1, 100.0)


@pytest.fixture(scope="session")
def laws_slow(mg_model, metrics_slow):
    from ccm.realize import ControlLaw, ObserverLaw

    cmetric, ometric = metrics_slow
    return ControlLaw(cmetric, mg_model), ObserverLaw(ometric, mg_model)


@pytest.fixture(scope="session")
def lc_state():
    from ccm.sim import limit_cycle_state

    return limit_cycle_state()


@pytest.fixture(scope="session")
def trace_open(mg_model):
    from ccm.sim import SimConfig, run_open_loop

    cfg = SimConfig(dt=1e-3, T=50.0, x0=np.array([1.0, -1.0]))
    return run_open_loop(mg_model, cfg)


@pytest.fixture(scope="session")
def trace_conv_slow(mg_model, laws_slow, lc_state):
    """Output feedback, slow metrics, limit-cycle start, no noise, T = 60."""
    from ccm.sim import SimConfig, run_output_feedback

    claw, olaw = laws_slow
    cfg = SimConfig(dt=1e-3, T=60.0, x0=lc_state, xhat0=np.zeros(2))
    return run_output_feedback(mg_model, claw, olaw, cfg)


@pytest.fixture(scope="session")
def trace_noise_slow(mg_model, laws_slow, lc_state):
    """Output feedback with measurement noise 0.3, fixed seed, T = 100."""
    from ccm.sim import SimConfig, run_output_feedback

    claw, olaw = laws_slow
    cfg = SimConfig(
        dt=1e-3, T=100.0, x0=lc_state, xhat0=np.zeros(2), noise_std=0.3, seed=0
    )
    return run_output_feedback(mg_model, claw, olaw, cfg)
