import logging
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import make_disc
from wittenlab.discretize import Discretization, Grid, quadrature
from wittenlab.errors import InputError
from wittenlab.flows import catalog, time_reparametrization
from wittenlab.geometry import RadialModel, quadratic_potential
from wittenlab.heatflow import (HeatState, Stepper, eigenfunction, make_initial, march, run,
                                spectral_reference, step)


@pytest.mark.parametrize("scheme", ["crank_nicolson", "backward_euler"])
@pytest.mark.parametrize("kind", ["sphere", "circle", "hyperbolic"])
def test_constants_are_stationary(kind, scheme):
    disc = make_disc(kind, 200)
    state = HeatState(np.full(200, 2.5), 0.0, disc.weights(0.0))
    out = step(state, disc, 0.01, scheme)
    np.testing.assert_allclose(out.u, 2.5, rtol=1e-14)
    assert out.mass == pytest.approx(state.mass, rel=1e-14)


def _circle_run(N=256, steps=500, dt=1e-3):
    disc = make_disc("circle", N)
    r = disc.grid.r
    u0 = HeatState(1 + 0.5 * np.cos(r), 0.0, disc.weights(0.0))
    traj = run(disc, u0, dt, [steps * dt])
    return disc, traj.states[-1]


def test_circle_mode_matches_discrete_oracle():
    # exact solution of the semi-discrete system: eigenvalue 4 sin^2(dr/2)/dr^2,
    # advanced by the Crank-Nicolson amplification factor
    disc, end = _circle_run()
    r, dr, dt = disc.grid.r, disc.grid.dr, 1e-3
    lam = 4 * math.sin(dr / 2) ** 2 / dr**2
    g = (1 - 0.5 * lam * dt) / (1 + 0.5 * lam * dt)
    assert np.max(np.abs(end.u - (1 + 0.5 * g**500 * np.cos(r)))) < 1e-12


def test_circle_mode_against_continuum_is_second_order():
    errs = []
    for N, dt, steps in ((128, 2e-3, 250), (256, 1e-3, 500)):
        disc, end = _circle_run(N, steps, dt)
        exact = 1 + 0.5 * math.exp(-0.5) * np.cos(disc.grid.r)
        errs.append(np.max(np.abs(end.u - exact)))
    assert errs[1] < 1e-5
    assert errs[0] / errs[1] > 3.9


@pytest.mark.xfail(strict=True, reason="the discrete truncation error at N=256 is 7.6e-6")
def test_circle_mode_literal_bound():
    disc, end = _circle_run()
    exact = 1 + 0.5 * math.exp(-0.5) * np.cos(disc.grid.r)
    assert np.max(np.abs(end.u - exact)) <= 5e-7


def test_sphere_mode_decay():
    disc = make_disc("sphere", 400, n=2)
    u0 = make_initial("eigen_perturbation", disc, l=1, amplitude=0.5)
    np.testing.assert_allclose(u0.u, 1 + 0.5 * np.cos(disc.grid.r), atol=1e-14)
    end = run(disc, u0, 1e-3, [0.5]).states[-1]
    assert end.u[0] == pytest.approx(1 + 0.5 * math.exp(-1.0), abs=5e-5)
    assert 1 + 0.5 * math.exp(-1.0) == pytest.approx(1.18394, abs=5e-6)


def test_spectral_reference_examples():
    circ = make_disc("circle", 128)
    ref = spectral_reference(circ, lambda r: np.ones_like(r), 0.7)
    np.testing.assert_allclose(ref.values, 1.0, atol=1e-13)

    sph = make_disc("sphere", 200, n=2)
    r = sph.grid.r
    ref = spectral_reference(sph, lambda x: 1 + 0.5 * np.cos(x), 0.5)
    np.testing.assert_allclose(ref.values, 1 + 0.5 * math.exp(-1) * np.cos(r), atol=1e-12)
    assert ref.tail_bound < 1e-12

    itv = make_disc("interval", 200)
    r = itv.grid.r
    ref = spectral_reference(itv, lambda x: 1 + 0.1 * np.cos(2 * x), 0.25)
    np.testing.assert_allclose(ref.values, 1 + 0.1 * math.exp(-1) * np.cos(2 * r), atol=1e-12)


def test_spectral_reference_vectorized_times():
    sph = make_disc("sphere", 100, n=3)
    f0 = lambda x: 1 + 0.3 * eigenfunction(sph.model, 2, x)
    many = spectral_reference(sph, f0, [0.1, 0.4]).values
    assert many.shape == (2, 100)
    np.testing.assert_allclose(many[1], spectral_reference(sph, f0, 0.4).values, atol=1e-14)
    lam = 2 * (2 + 2)  # l(l + n - 1) on S^3
    decayed = 1 + 0.3 * math.exp(-0.4 * lam) * eigenfunction(sph.model, 2, sph.grid.r)
    np.testing.assert_allclose(many[1], decayed, atol=1e-12)


def test_spectral_reference_rejects_unsupported():
    with pytest.raises(InputError):
        spectral_reference(make_disc("hyperbolic", 100, n=3), np.ones(100), 0.1)
    model = RadialModel.sphere(2)
    weighted = Discretization(model, Grid(model, 100), potential=quadratic_potential(1.0))
    with pytest.raises(InputError):
        spectral_reference(weighted, np.ones(100), 0.1)


def test_uniform_initial_datum():
    disc = make_disc("sphere", 400, n=2)
    u = make_initial("uniform", disc)
    np.testing.assert_allclose(u.u, 1 / (4 * math.pi), rtol=1e-9)
    assert u.mass == pytest.approx(1.0, abs=1e-14)


def test_kernel_burnin_matches_euclidean_kernel():
    disc = make_disc("euclidean", 400, n=2, r_max=8.0)
    t0 = 0.01
    u = make_initial("kernel_burnin", disc, t0=t0)
    r = disc.grid.r
    exact = np.exp(-r**2 / (4 * t0)) / (4 * math.pi * t0)
    near = r <= 5 * math.sqrt(t0)
    assert np.max(np.abs(u.u[near] / exact[near] - 1)) <= 1e-3
    assert u.kernel_time == pytest.approx(t0)


def test_kernel_burnin_without_closed_form_is_normalized():
    disc = make_disc("sphere", 200, n=2)
    u = make_initial("kernel_burnin", disc, t0=0.05)
    assert u.mass == pytest.approx(1.0, abs=1e-12)
    assert np.all(u.u > 0)
    assert np.argmax(u.u) == 0


def test_initial_datum_preconditions():
    disc = make_disc("sphere", 100, n=2)
    with pytest.raises(InputError):
        make_initial("eigen_perturbation", disc, amplitude=1.5)
    with pytest.raises(InputError):
        make_initial("normalized_gaussian_bump", disc, width=disc.grid.dr)
    with pytest.raises(InputError):
        make_initial("delta", disc)
    with pytest.raises(InputError):
        make_initial("kernel_burnin", disc, t0=-1.0)


def test_mass_conservation_short():
    disc = make_disc("sphere", 200, n=2)
    u0 = make_initial("normalized_gaussian_bump", disc, width=0.2)
    traj = run(disc, u0, 1e-3, [0.5, 1.0])
    assert np.max(np.abs(traj.diagnostics["mass_drift"])) < 1e-12


@given(seed=st.integers(0, 2**32 - 1), dt=st.floats(1e-4, 10.0))
def test_backward_euler_maximum_principle(seed, dt):
    disc = make_disc("sphere", 64, n=2)
    u = 0.1 + np.random.default_rng(seed).random(64)
    out = Stepper(disc, "backward_euler").step_values(u, 0.0, dt)
    assert np.all(out > 0)
    assert out.max() <= u.max() * (1 + 1e-12)
    assert out.min() >= u.min() * (1 - 1e-12)


def test_crank_nicolson_fallback_is_logged(caplog):
    disc = make_disc("circle", 128)
    u = np.full(128, 1e-6)
    u[0] = 1.0
    stepper = Stepper(disc, "crank_nicolson")
    with caplog.at_level(logging.INFO, logger="wittenlab"):
        out = stepper.step_values(u, 0.0, 1.0)
    assert np.all(out > 0)
    assert stepper.fallbacks == 1
    assert "backward Euler" in caplog.text


def test_oracle_error_drops_under_refinement():
    errs = []
    for N, dt in ((100, 2e-3), (200, 1e-3)):
        disc = make_disc("interval", N)
        f0 = lambda x: 1 + 0.4 * np.cos(x)
        u0 = HeatState(f0(disc.grid.r), 0.0, disc.weights(0.0))
        end = run(disc, u0, dt, [0.5]).states[-1]
        errs.append(np.max(np.abs(end.u - spectral_reference(disc, f0, 0.5).values)))
    assert errs[0] / errs[1] >= 3.8


def test_homothety_reparametrization():
    model = RadialModel.sphere(2)
    flow = catalog("exponential", model, lam=0.5)
    flowed = Discretization(model, Grid(model, 200), flow)
    static = Discretization(model, Grid(model, 200))
    r = flowed.grid.r
    times = [0.01 * k for k in range(1, 51)]
    a = run(flowed, HeatState(1 + 0.5 * np.cos(r), 0.0, flowed.weights(0.0)), 0.01, times)
    taus = [time_reparametrization(flow, t) for t in times]
    b = march(static, HeatState(1 + 0.5 * np.cos(r), 0.0, static.weights(0.0)), taus)
    err = max(np.max(np.abs(x.u - y.u)) for x, y in zip(a.states, b.states[1:]))
    assert err < 1e-6


def test_output_times_must_sit_on_step_grid():
    disc = make_disc("circle", 64)
    u0 = HeatState(np.ones(64), 0.0, disc.weights(0.0))
    with pytest.raises(InputError):
        run(disc, u0, 0.01, [0.015])
    with pytest.raises(InputError):
        run(disc, u0, 0.01, [0.02, 0.01])
    with pytest.raises(InputError):
        march(disc, u0, [0.1, 0.05])


def test_boundary_flux_diagnostic_on_truncated_model():
    disc = make_disc("hyperbolic", 200, n=3)
    u0 = make_initial("kernel_burnin", disc, t0=0.05)
    traj = run(disc, u0, 1e-2, [0.5])
    flux = traj.diagnostics["boundary_flux"]
    assert len(flux) == 50 and np.all(flux >= 0)
    assert quadrature(traj.states[-1].u, traj.states[-1].weights) == pytest.approx(1.0, abs=1e-12)
