import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from wittenlab.discretize import Discretization, Grid
from wittenlab.errors import InputError, UnsupportedFlowError
from wittenlab.flows import catalog, static_flow, time_reparametrization
from wittenlab.geometry import PotentialSpec, RadialModel, quadratic_potential, zero_potential


def test_static_flow():
    flow = static_flow(RadialModel.hyperbolic(3), quadratic_potential(1.0))
    assert flow.c(0.7) == 1.0
    assert flow.h_factor(0.7) == 0.0
    assert flow.is_static


def test_shrinking_sphere_example():
    model = RadialModel.sphere(2)
    flow = catalog("shrinking_sphere", model, zero_potential(), "measure-preserving", T=0.2)
    assert flow.c(0.2) == pytest.approx(0.6)
    assert float(flow.potential.phi(1.0, 0.2)) == pytest.approx(math.log(0.6))


def test_exponential_example():
    # h/g = c'/(2c) equals lambda for c = exp(2 lambda t)
    flow = catalog("exponential", RadialModel.sphere(2), lam=0.5)
    assert flow.c(1.0) == pytest.approx(math.e)
    assert flow.h_factor(1.0) == pytest.approx(0.5)
    assert flow.tr_h(1.0) == pytest.approx(2 * 0.5)


def test_extinction_time_rejected():
    with pytest.raises(InputError, match="0.25"):
        catalog("shrinking_sphere", RadialModel.sphere(3), T=0.3)
    with pytest.raises(InputError):
        catalog("shrinking_sphere", RadialModel.euclidean(2), T=0.1)


def test_unknown_flow_and_coupling():
    model = RadialModel.sphere(2)
    with pytest.raises(InputError):
        catalog("ricci_soliton", model)
    with pytest.raises(InputError):
        catalog("static", model, coupling="loose")


@pytest.mark.parametrize("name, kw, t, expected", [
    ("static", {}, 0.7, 0.7),
    ("exponential", {"lam": 0.5}, 1.0, 1 - math.exp(-1.0)),
    ("shrinking_sphere", {"T": 0.2}, 0.2, -0.5 * math.log(0.6)),
])
def test_time_reparametrization_examples(name, kw, t, expected):
    flow = catalog(name, RadialModel.sphere(2), **kw)
    assert time_reparametrization(flow, t) == pytest.approx(expected, rel=1e-14)


@given(lam=st.floats(-1.0, 1.0), t=st.floats(0.0, 1.0))
def test_reparametrization_matches_quadrature(lam, t):
    model = RadialModel.sphere(2)
    closed = catalog("exponential", model, lam=lam)
    custom = catalog("custom", model, c=lambda s: math.exp(2 * lam * s),
                     dc=lambda s: 2 * lam * math.exp(2 * lam * s))
    assert time_reparametrization(custom, t) == pytest.approx(
        time_reparametrization(closed, t), rel=1e-10, abs=1e-13)


def test_reparametrization_needs_static_profile():
    model = RadialModel.euclidean(2)
    moving = PotentialSpec("moving", lambda r, t: r * t, lambda r, t: t + 0 * r,
                           lambda r, t: 0 * r, lambda r, t: r, lambda r, t: 1 + 0 * r,
                           time_dependent=True)
    flow = catalog("exponential", model, moving, lam=0.5)
    with pytest.raises(UnsupportedFlowError):
        time_reparametrization(flow, 0.5)


@pytest.mark.parametrize("name, kw", [("exponential", {"lam": 0.7}),
                                      ("shrinking_sphere", {"T": 0.24})])
def test_measure_preserving_coupling_fixes_total_measure(name, kw):
    model = RadialModel.sphere(2)
    flow = catalog(name, model, zero_potential(), "measure-preserving", **kw)
    disc = Discretization(model, Grid(model, 400), flow)
    totals = np.array([disc.weights(t).total for t in (0.0, 0.1, 0.2, 0.24)])
    assert np.max(np.abs(totals / totals[0] - 1)) <= 1e-12
    # the potential shift is (n/2) c'/(2c) * 2 = n c'/(2c)
    t = 0.1
    assert float(flow.potential.dt(1.0, t)) == pytest.approx(flow.tr_h(t))


def test_independent_coupling_scales_measure():
    model = RadialModel.sphere(2)
    flow = catalog("exponential", model, lam=0.5)
    disc = Discretization(model, Grid(model, 200), flow)
    assert disc.weights(1.0).total / disc.weights(0.0).total == pytest.approx(math.e)
