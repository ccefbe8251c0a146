import math

import numpy as np
import pytest

from littleparks import (
    InconsistentHolonomy,
    ScalarField,
    build_gauge,
    build_link_field,
    omega_indicator_source,
    solve_dirichlet_poisson,
)
from littleparks.geometry import INTERIOR_OMEGA0

TWO_PI = 2.0 * math.pi


def rectangle_loop(grid, half_width):
    """Closed node path along |x| = c or |y| = c, inside the annular region."""
    sel = np.flatnonzero(
        (np.maximum(np.abs(grid.node_x), np.abs(grid.node_y)) <= half_width + 0.25 * grid.h)
        & (np.maximum(np.abs(grid.node_x), np.abs(grid.node_y)) >= half_width - 0.25 * grid.h)
    )
    # order by angle around the origin
    ang = np.arctan2(grid.node_y[sel], grid.node_x[sel])
    return sel[np.argsort(ang)]


class TestPoisson:
    def test_zero_source(self, coarse_grid):
        src = ScalarField(grid=coarse_grid, location="dual", values=np.zeros(coarse_grid.dual_ix.size))
        phi = solve_dirichlet_poisson(coarse_grid, src)
        assert np.all(phi.values == 0.0)

    def test_radial_solution_at_interface(self, medium_grid):
        # -Lap(phi) = (2 pi/|inner|) * indicator: phi(rho) = ln(R/rho) outside
        phi = solve_dirichlet_poisson(medium_grid, omega_indicator_source(medium_grid))
        g = medium_grid
        xs = g.xs[g.dual_ix] + 0.5 * g.h
        ys = g.ys[g.dual_iy] + 0.5 * g.h
        rho = np.hypot(xs, ys)
        k = int(np.argmin(np.abs(rho - 1.0)))
        assert phi.values[k] == pytest.approx(math.log(2.0), abs=6.0 * g.h)

    def test_radial_solution_at_center(self, medium_grid):
        phi = solve_dirichlet_poisson(medium_grid, omega_indicator_source(medium_grid))
        g = medium_grid
        xs = g.xs[g.dual_ix] + 0.5 * g.h
        ys = g.ys[g.dual_iy] + 0.5 * g.h
        k = int(np.argmin(np.hypot(xs, ys)))
        assert phi.values[k] == pytest.approx(math.log(2.0) + 0.5, abs=6.0 * g.h)

    def test_radial_error_shrinks(self, disk_spec):
        from littleparks import build_grid

        errs = []
        for h in (0.2, 0.1):
            g = build_grid(disk_spec, h)
            phi = solve_dirichlet_poisson(g, omega_indicator_source(g))
            xs = g.xs[g.dual_ix] + 0.5 * g.h
            ys = g.ys[g.dual_iy] + 0.5 * g.h
            k = int(np.argmin(np.hypot(xs, ys)))
            errs.append(abs(phi.values[k] - math.log(2.0) - 0.5))
        assert errs[1] < errs[0]

    def test_dihedral_symmetry(self, medium_grid):
        g = medium_grid
        phi = solve_dirichlet_poisson(g, omega_indicator_source(g))
        field2d = np.full(g.dual_id2d.shape, np.nan)
        field2d[g.dual_ix, g.dual_iy] = phi.values
        for mapped in (field2d[::-1, :], field2d[:, ::-1], field2d.T):
            assert np.nanmax(np.abs(field2d - mapped)) <= 1e-12


class TestLinkField:
    def test_zero_flux(self, coarse_grid):
        link = build_link_field(coarse_grid, 0.0)
        assert np.all(link.theta == 0.0)

    def test_plaquette_fluxes_exact(self, coarse_grid):
        link = build_link_field(coarse_grid, 0.7)
        circ = link.plaquette_circulation()
        target = TWO_PI * 0.7 * coarse_grid.cell_weight
        assert np.max(np.abs(circ - target)) <= 1e-12

    def test_zero_weight_plaquettes_exactly_zero(self, coarse_grid):
        link = build_link_field(coarse_grid, 1.3)
        circ = link.plaquette_circulation()
        assert np.max(np.abs(circ[coarse_grid.cell_weight == 0.0])) == 0.0

    def test_enclosing_loop_quantized(self, medium_grid):
        link = build_link_field(medium_grid, 1.0)
        loop = rectangle_loop(medium_grid, 1.3)
        circ = link.loop_circulation(loop)
        assert circ == pytest.approx(TWO_PI, abs=1e-9)

    def test_half_flux_enclosing_loop(self, medium_grid):
        link = build_link_field(medium_grid, 0.5)
        loop = rectangle_loop(medium_grid, 1.3)
        assert link.loop_circulation(loop) == pytest.approx(math.pi, abs=1e-9)

    def test_non_enclosing_loop_zero(self, medium_grid):
        g = medium_grid
        # small square loop far from the field region
        base = np.flatnonzero(
            (np.abs(g.node_x - 1.5) < 0.26) & (np.abs(g.node_y) < 0.26)
            & (g.node_class == INTERIOR_OMEGA0)
        )
        assert base.size >= 9
        link = build_link_field(g, 0.5)
        # walk the 8-node ring around one plaquette block
        sel = base[np.lexsort((g.node_y[base], g.node_x[base]))]
        xs = np.unique(np.round(g.node_x[sel], 12))[:3]
        ys = np.unique(np.round(g.node_y[sel], 12))[:3]
        ring = []
        for x, y in [(xs[0], ys[0]), (xs[1], ys[0]), (xs[2], ys[0]), (xs[2], ys[1]),
                     (xs[2], ys[2]), (xs[1], ys[2]), (xs[0], ys[2]), (xs[0], ys[1])]:
            k = np.flatnonzero((np.abs(g.node_x - x) < 1e-9) & (np.abs(g.node_y - y) < 1e-9))
            ring.append(int(k[0]))
        assert abs(link.loop_circulation(ring)) <= 1e-12

    def test_total_flux(self, coarse_grid):
        for flux in (0.3, 1.0, 2.5):
            link = build_link_field(coarse_grid, flux)
            total = math.fsum(link.plaquette_circulation())
            assert total == pytest.approx(TWO_PI * flux, abs=1e-9)

    def test_antisymmetry_convention(self, coarse_grid):
        link = build_link_field(coarse_grid, 0.7)
        e, s = coarse_grid.edge_between(int(coarse_grid.edge_i[0]), int(coarse_grid.edge_j[0]))
        e2, s2 = coarse_grid.edge_between(int(coarse_grid.edge_j[0]), int(coarse_grid.edge_i[0]))
        assert e == e2 and s == -s2


class TestGauge:
    def test_n_zero_all_ones(self, coarse_grid):
        link = build_link_field(coarse_grid, 0.0)
        phases = build_gauge(coarse_grid, link, 0)
        assert np.all(phases.values == 1.0 + 0.0j)

    def test_unit_modulus(self, medium_grid):
        phases = build_gauge(medium_grid, build_link_field(medium_grid, 1.0), 1)
        assert np.max(np.abs(np.abs(phases.values) - 1.0)) <= 5e-16

    def test_edge_consistency(self, medium_grid):
        g = medium_grid
        link = build_link_field(g, 1.0)
        phases = build_gauge(g, link, 1)
        index = np.full(g.n_nodes, -1, dtype=np.int64)
        index[phases.dof_nodes] = np.arange(phases.dof_nodes.size)
        di, dj = index[g.edge_i], index[g.edge_j]
        keep = (di >= 0) & (dj >= 0)
        ratio = phases.values[dj[keep]] * np.conj(phases.values[di[keep]])
        dev = np.abs(ratio * np.exp(1j * link.theta[keep]) - 1.0)
        assert float(dev.max()) <= 1e-12

    def test_loop_phases_quantized(self, medium_grid):
        # holonomy within 1e-9 of 2*pi*Z certified by the consistency bound
        g = medium_grid
        link = build_link_field(g, 1.0)
        loop = rectangle_loop(g, 1.3)
        assert abs(link.loop_circulation(loop) - TWO_PI) <= 1e-9

    def test_squaring_relation(self, medium_grid):
        p1 = build_gauge(medium_grid, build_link_field(medium_grid, 1.0), 1)
        p2 = build_gauge(medium_grid, build_link_field(medium_grid, 2.0), 2)
        assert np.max(np.abs(p2.values - p1.values**2)) <= 1e-12

    def test_wrong_flux_rejected(self, coarse_grid):
        link = build_link_field(coarse_grid, 0.5)
        with pytest.raises(ValueError):
            build_gauge(coarse_grid, link, 1)

    def test_base_node_is_lexicographic_minimum(self, coarse_grid):
        phases = build_gauge(coarse_grid, build_link_field(coarse_grid, 1.0), 1)
        dofs = coarse_grid.punctured_dofs()
        keys = list(zip(coarse_grid.node_x[dofs], coarse_grid.node_y[dofs]))
        assert phases.base_node == dofs[int(np.lexsort((coarse_grid.node_y[dofs], coarse_grid.node_x[dofs]))[0])]

    def test_broken_quantization_detected(self, coarse_grid):
        from dataclasses import replace

        from littleparks.fields import LinkField

        link = build_link_field(coarse_grid, 1.0)
        theta = link.theta.copy()
        # poison one bulk edge phase: every fundamental loop through it breaks
        dofs = set(coarse_grid.punctured_dofs().tolist())
        for e in range(coarse_grid.n_edges):
            if int(coarse_grid.edge_i[e]) in dofs and int(coarse_grid.edge_j[e]) in dofs:
                theta[e] += 0.37
                break
        bad = LinkField(grid=coarse_grid, flux=1.0, theta=theta)
        with pytest.raises(InconsistentHolonomy):
            build_gauge(coarse_grid, bad, 1)
