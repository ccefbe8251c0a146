import math

import numpy as np
import pytest

from littleparks import (
    GLParams,
    GLState,
    InconsistentState,
    NotConverged,
    ResolutionGuard,
    build_gauge,
    build_link_field,
    curl_deviation_l2,
    current_l2,
    energy,
    fd_gradient_error,
    gradient,
    minimize,
    omega_mass,
    psi_l2,
    real_profile,
    stationarity_residual,
    supercurrent,
    zero_state,
)
from littleparks.gl_energy import classify_phase, psi_dof_mask, random_state


def params(kappa=2.0, flux=0.3, **kw):
    return GLParams(kappa=kappa, flux=flux, **kw)


class TestEnergy:
    def test_normal_state_zero(self, coarse_grid):
        st = zero_state(coarse_grid)
        assert energy(st, params(), "full") == 0.0
        assert energy(st, params(), "effective") == 0.0

    def test_uniform_state_zero_flux(self, coarse_grid):
        st = zero_state(coarse_grid)
        st.psi[:] = 1.0
        e = energy(st, params(kappa=2.0, flux=0.0), "full")
        expected = -(2.0**2 / 2.0) * coarse_grid.n_nodes * coarse_grid.h**2
        assert e == pytest.approx(expected, rel=1e-14)

    def test_quadratic_part_matches_operator_form(self, coarse_grid, rng):
        # kinetic sum at a=0 equals the L2(grid) quadratic form of H
        from littleparks import apply, assemble

        g = coarse_grid
        op = assemble(g, build_link_field(g, 0.7), "full")
        v = rng.standard_normal(g.n_nodes) + 1j * rng.standard_normal(g.n_nodes)
        st = zero_state(g)
        st.psi[:] = v
        # kappa -> 0 limit: only the kinetic term remains
        e_kin = energy(st, GLParams(kappa=1e-12, flux=0.7), "full")
        q = float(np.real(np.vdot(v, apply(op, v)))) * g.h**2
        assert e_kin == pytest.approx(q, rel=1e-11)

    def test_effective_requires_zero_on_eliminated(self, coarse_grid):
        st = zero_state(coarse_grid)
        st.psi[:] = 1.0
        with pytest.raises(InconsistentState):
            energy(st, params(), "effective")

    def test_stream_boundary_enforced(self, coarse_grid):
        st = zero_state(coarse_grid)
        bad = np.flatnonzero(~coarse_grid.a_dof_mask)
        if bad.size:
            st.a[bad[0]] = 0.1
            with pytest.raises(InconsistentState):
                energy(st, params(), "full")

    def test_global_phase_invariance(self, coarse_grid, rng):
        st = random_state(coarse_grid, "full", seed=5)
        p = params()
        e0 = energy(st, p, "full")
        for alpha in rng.uniform(0.0, 2.0 * math.pi, 20):
            st2 = GLState(grid=coarse_grid, psi=np.exp(1j * alpha) * st.psi, a=st.a.copy())
            assert energy(st2, p, "full") == pytest.approx(e0, rel=1e-12)


class TestGradient:
    def test_normal_state_is_critical(self, coarse_grid):
        st = zero_state(coarse_grid)
        gr = gradient(st, params(), "full")
        assert np.all(gr.psi == 0.0) and np.all(gr.a == 0.0)

    def test_matches_finite_differences_full(self, coarse_grid):
        err = fd_gradient_error(coarse_grid, params(), "full", seed=1234, ndirs=10)
        assert err <= 1e-6

    def test_matches_finite_differences_effective(self, coarse_grid):
        err = fd_gradient_error(coarse_grid, params(kappa=1.5, flux=0.8), "effective", seed=77, ndirs=10)
        assert err <= 1e-6

    def test_gradient_small_at_minimizer(self, coarse_grid):
        st, e, diag = minimize(coarse_grid, params(), "full")
        gr = gradient(st, params(), "full")
        ginf = max(np.abs(gr.psi.real).max(), np.abs(gr.psi.imag).max(), np.abs(gr.a).max())
        assert ginf <= params().grad_tol


class TestMinimize:
    def test_subcritical_returns_normal(self, coarse_harness):
        # kappa^2 below the punctured ground eigenvalue: normal state wins
        lam = coarse_harness.lambda1("punctured", 0.5)
        kappa = math.sqrt(lam) * 0.5
        st, e, diag = minimize(coarse_harness.grid, params(kappa=kappa, flux=0.5), "effective")
        assert e >= -1e-8
        assert diag["phase"] == "normal"

    def test_supercritical_condenses(self, coarse_harness):
        lam = coarse_harness.lambda1("punctured", 0.5)
        kappa = math.sqrt(lam) * 1.4
        st, e, diag = minimize(coarse_harness.grid, params(kappa=kappa, flux=0.5), "effective")
        assert e < 0.0
        assert psi_l2(coarse_harness.grid, st.psi) > 0.01
        assert diag["phase"] == "superconducting"

    def test_energy_ordering_full_vs_effective(self, coarse_grid):
        p = params(kappa=2.0, flux=0.3)
        _, e_full, _ = minimize(coarse_grid, p, "full")
        _, e_eff, _ = minimize(coarse_grid, p, "effective")
        assert e_full <= e_eff + 1e-8
        assert e_eff <= 1e-10

    def test_resolution_guard(self, coarse_grid):
        # b h^2 = 2 pi flux h^2 / area > 0.5 must be refused
        bad_flux = 0.51 * coarse_grid.spec.inner_area / (2.0 * math.pi * coarse_grid.h**2)
        with pytest.raises(ResolutionGuard):
            minimize(coarse_grid, params(flux=bad_flux), "full")

    def test_descent_diagnostics(self, coarse_grid):
        st, e, diag = minimize(coarse_grid, params(), "full")
        assert diag["converged"]
        assert diag["chosen"] in ("normal", "uniform", "linear-ground-state")
        labels = [s.label for s in diag["starts"]]
        assert labels == ["normal", "uniform", "linear-ground-state"]

    def test_supplied_start(self, coarse_grid):
        p = params()
        st0, e0, _ = minimize(coarse_grid, p, "full")
        st, e, diag = minimize(coarse_grid, p, "full", init="supplied", supplied=st0)
        assert e <= e0 + 1e-12

    def test_deterministic(self, coarse_grid):
        p = params(kappa=1.7, flux=0.4)
        st1, e1, _ = minimize(coarse_grid, p, "full")
        st2, e2, _ = minimize(coarse_grid, p, "full")
        assert e1 == e2
        assert np.array_equal(st1.psi, st2.psi)


class TestSupercurrent:
    def test_zero_for_normal_state(self, coarse_grid):
        st = zero_state(coarse_grid)
        j = supercurrent(st, params(), "full")
        assert np.all(j == 0.0)

    def test_zero_for_real_state_zero_flux(self, coarse_grid):
        st = zero_state(coarse_grid)
        st.psi[:] = 0.7
        j = supercurrent(st, params(kappa=2.0, flux=0.0), "full")
        assert np.abs(j).max() == 0.0

    def test_integer_flux_minimizer_currentless(self, coarse_harness):
        st, e, diag = coarse_harness.minimize("effective", 1.0, kappa=2.0, grad_tol=1e-10)
        j = supercurrent(st, params(kappa=2.0, flux=1.0), "effective")
        assert current_l2(coarse_harness.grid, j) <= 1e-6

    def test_gauge_shift_energy_identity(self, coarse_harness):
        # energy at (u, flux) equals energy at (U1 u, flux + 1) on the lattice
        g = coarse_harness.grid
        p = params(kappa=2.0, flux=0.3)
        st, e, diag = coarse_harness.minimize("effective", 0.3, kappa=2.0)
        phases = build_gauge(g, build_link_field(g, 1.0), 1)
        psi_shift = np.zeros(g.n_nodes, dtype=np.complex128)
        psi_shift[phases.dof_nodes] = phases.values * st.psi[phases.dof_nodes]
        st_shift = GLState(grid=g, psi=psi_shift, a=st.a.copy())
        e_shift = energy(st_shift, params(kappa=2.0, flux=1.3), "effective")
        assert abs(e_shift - e) <= 1e-10


class TestStationarity:
    def test_normal_state_zero(self, coarse_grid):
        st = zero_state(coarse_grid)
        assert stationarity_residual(st, params()) == 0.0

    def test_pure_stream_branch(self, coarse_grid):
        st = zero_state(coarse_grid)
        ad = np.flatnonzero(coarse_grid.a_dof_mask)
        st.a[ad[ad.size // 2]] = 0.01
        r = stationarity_residual(st, params(kappa=2.0, flux=1.0))
        assert r > 0.0

    def test_flags_nonconverged(self, coarse_grid):
        st = zero_state(coarse_grid)
        with pytest.raises(NotConverged):
            stationarity_residual(st, params(), {"converged": False})

    def test_decreases_under_refinement(self, disk_spec):
        from littleparks import build_grid

        vals = []
        for h in (0.2, 0.1):
            g = build_grid(disk_spec, h)
            p = params(kappa=2.0, flux=0.3, grad_tol=1e-8)
            st, e, diag = minimize(g, p, "full")
            vals.append(stationarity_residual(st, p, diag))
        assert vals[1] < vals[0]


class TestAPrioriBounds:
    def test_minimizer_bounds(self, coarse_grid):
        p = params(kappa=2.0, flux=1.0)
        st, e, diag = minimize(coarse_grid, p, "full")
        h = coarse_grid.h
        assert np.abs(st.psi).max() <= 1.0 + 10.0 * h
        lhs = p.flux * curl_deviation_l2(st, p)
        rhs = p.kappa * psi_l2(coarse_grid, st.psi) * (1.0 + 10.0 * h)
        assert lhs <= rhs

    def test_mass_decay_in_field_region(self, coarse_harness):
        masses = []
        for n in (4, 8, 16):
            st, e, diag = coarse_harness.minimize("full", float(n), kappa=2.0)
            masses.append(omega_mass(coarse_harness.grid, st.psi))
        assert masses[0] > masses[1] > masses[2]


class TestRealProfile:
    def test_subcritical_flag(self, coarse_harness):
        lam0 = coarse_harness.lambda1("punctured", 0.0)
        prof, subcritical = real_profile(coarse_harness.grid, math.sqrt(lam0) * 0.8)
        assert subcritical
        assert np.all(prof.values == 0.0)

    def test_large_kappa_bulk_value(self, coarse_harness):
        g = coarse_harness.grid
        prof, subcritical = real_profile(g, 10.0)
        assert not subcritical
        # farthest node from the Dirichlet ring: profile saturates near 1
        dofs = g.punctured_dofs()
        rho = np.hypot(g.node_x[dofs], g.node_y[dofs])
        far = dofs[int(np.argmax(rho))]
        assert prof.values[far] >= 0.99

    def test_positive_interior(self, coarse_harness):
        prof, subcritical = real_profile(coarse_harness.grid, 2.0)
        assert not subcritical
        dofs = coarse_harness.grid.punctured_dofs()
        assert prof.values[dofs].min() > 0.0

    def test_matches_integer_flux_minimizer(self, coarse_harness):
        g = coarse_harness.grid
        kappa = 2.0
        prof, _ = real_profile(g, kappa, GLParams(kappa=kappa, flux=0.0, grad_tol=1e-10))
        st, e, diag = coarse_harness.minimize("effective", 1.0, kappa=kappa, grad_tol=1e-10)
        diff = np.abs(st.psi) - prof.values
        dist = math.sqrt(float(np.sum(diff * diff)) * g.h**2)
        assert dist <= 1e-6


class TestClassification:
    def test_labels(self, coarse_grid):
        psi = np.zeros(coarse_grid.n_nodes, dtype=np.complex128)
        assert classify_phase(coarse_grid, psi, 0.0) == "normal"
        psi[:] = 0.5
        assert classify_phase(coarse_grid, psi, -1.0) == "superconducting"

    def test_dof_masks(self, coarse_grid):
        full = psi_dof_mask(coarse_grid, "full")
        eff = psi_dof_mask(coarse_grid, "effective")
        assert full.sum() == coarse_grid.n_nodes
        assert eff.sum() == coarse_grid.punctured_dofs().size
