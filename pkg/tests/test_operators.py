import math

import numpy as np
import pytest

from littleparks import (
    DimensionMismatch,
    GridMismatch,
    apply,
    assemble,
    build_gauge,
    build_grid,
    build_link_field,
    dense_oracle,
    gauge_conjugate,
    quadratic_form,
)

TWO_PI = 2.0 * math.pi


class TestAssemble:
    def test_zero_flux_full_is_graph_laplacian(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.0), "full")
        assert np.abs(op.matrix.imag).max() == 0.0
        ones = np.ones(op.dimension, dtype=np.complex128)
        assert np.abs(op.matrix @ ones).max() <= 1e-12
        w = dense_oracle(op)
        assert abs(w[0]) <= 1e-11
        assert w.min() >= -1e-11

    def test_hermitian_exact(self, coarse_grid):
        for flux in (0.0, 0.37, 1.3):
            op = assemble(coarse_grid, build_link_field(coarse_grid, flux), "punctured")
            diff = op.matrix - op.matrix.getH()
            assert diff.nnz == 0 or np.abs(diff.data).max() == 0.0

    def test_diagonal_counts_active_links(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.3), "full")
        diag = op.matrix.diagonal().real * coarse_grid.h**2
        assert np.array_equal(diag, coarse_grid.node_degree.astype(float))

    def test_punctured_keeps_full_degree(self, coarse_grid):
        # Dirichlet by elimination: diagonal still counts eliminated neighbours
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.0), "punctured")
        diag = op.matrix.diagonal().real * coarse_grid.h**2
        assert np.array_equal(diag, coarse_grid.node_degree[op.dof_nodes].astype(float))

    def test_omega_variant_subgraph_degree(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.0), "omega")
        ones = np.ones(op.dimension, dtype=np.complex128)
        # pure Neumann on the subgraph: constants are in the kernel
        assert np.abs(op.matrix @ ones).max() <= 1e-12

    def test_grid_mismatch(self, coarse_grid, medium_grid):
        link = build_link_field(medium_grid, 0.3)
        with pytest.raises(GridMismatch):
            assemble(coarse_grid, link, "full")


class TestApply:
    def test_zero_vector(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.3), "full")
        out = apply(op, np.zeros(op.dimension, dtype=np.complex128))
        assert np.all(out == 0.0)

    def test_constant_null_mode(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.0), "full")
        out = apply(op, np.ones(op.dimension, dtype=np.complex128))
        assert np.abs(out).max() <= 1e-13 * (1.0 / coarse_grid.h**2)

    def test_dimension_mismatch(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.3), "full")
        with pytest.raises(DimensionMismatch):
            apply(op, np.zeros(op.dimension + 1))

    def test_quadratic_form_real_and_psd(self, coarse_grid, rng):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.7), "punctured")
        expansion_dev = 0.0
        for _ in range(10):
            v = rng.standard_normal(op.dimension) + 1j * rng.standard_normal(op.dimension)
            q = quadratic_form(op, v)
            assert q >= -1e-12 * float(np.vdot(v, v).real)
            # oracle: expand the form edge by edge
            full = np.zeros(coarse_grid.n_nodes, dtype=np.complex128)
            full[op.dof_nodes] = v
            link = build_link_field(coarse_grid, 0.7)
            keep = (op.dof_index[coarse_grid.edge_i] >= 0) | (op.dof_index[coarse_grid.edge_j] >= 0)
            th = link.theta[keep]
            vi = full[coarse_grid.edge_i[keep]]
            vj = full[coarse_grid.edge_j[keep]]
            d = vi - np.exp(1j * th) * vj
            q_oracle = float(np.vdot(d, d).real) / coarse_grid.h**2
            expansion_dev = max(expansion_dev, abs(q - q_oracle) / max(1.0, abs(q)))
        assert expansion_dev <= 1e-12

    def test_imaginary_part_of_form_tiny(self, coarse_grid, rng):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 1.3), "full")
        v = rng.standard_normal(op.dimension) + 1j * rng.standard_normal(op.dimension)
        hv = apply(op, v)
        q = np.vdot(v, hv)
        assert abs(q.imag) <= 1e-13 * abs(q.real)


class TestGaugeConjugate:
    def test_identity_at_n_zero(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 1.3), "punctured")
        phases = build_gauge(coarse_grid, build_link_field(coarse_grid, 0.0), 0)
        out = gauge_conjugate(op, phases)
        assert (out.matrix != op.matrix).nnz == 0

    def test_flux_shift_matches_direct_assembly(self, medium_grid):
        g = medium_grid
        op13 = assemble(g, build_link_field(g, 1.3), "punctured")
        phases = build_gauge(g, build_link_field(g, 1.0), 1)
        out = gauge_conjugate(op13, phases)
        direct = assemble(g, build_link_field(g, 0.3), "punctured")
        dev = np.abs((out.matrix - direct.matrix).toarray()).max() * g.h**2
        assert dev <= 1e-12
        assert out.flux == pytest.approx(0.3)

    def test_integer_flux_conjugates_to_real(self, medium_grid):
        g = medium_grid
        op2 = assemble(g, build_link_field(g, 2.0), "punctured")
        phases = build_gauge(g, build_link_field(g, 2.0), 2)
        out = gauge_conjugate(op2, phases)
        assert np.abs(out.matrix.imag).max() * g.h**2 <= 1e-12

    def test_requires_punctured(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 1.0), "full")
        phases = build_gauge(coarse_grid, build_link_field(coarse_grid, 1.0), 1)
        with pytest.raises(ValueError):
            gauge_conjugate(op, phases)

    def test_spectrum_invariant(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 1.3), "punctured")
        phases = build_gauge(coarse_grid, build_link_field(coarse_grid, 1.0), 1)
        out = gauge_conjugate(op, phases)
        w1 = dense_oracle(op)
        w2 = dense_oracle(out)
        assert np.abs(w1 - w2).max() <= 1e-9


class TestDomination:
    def test_full_below_punctured(self, coarse_harness):
        for flux in (0.0, 0.3, 0.5, 1.7):
            lam_full = coarse_harness.lambda1("full", flux)
            lam_p = coarse_harness.lambda1("punctured", flux)
            assert lam_full <= lam_p + 1e-8


class TestExport:
    def test_coo_text_roundtrip(self, coarse_grid):
        op = assemble(coarse_grid, build_link_field(coarse_grid, 0.3), "punctured")
        text = op.to_coo_text()
        lines = text.strip().split("\n")
        assert len(lines) == op.matrix.nnz
        row, col, re, im = lines[0].split()
        entry = op.matrix[int(row), int(col)]
        assert float(re) == entry.real and float(im) == entry.imag
