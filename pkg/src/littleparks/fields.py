"""Reference link field, Dirichlet Poisson solve, and integer-flux gauge phases.

The applied field enters only through per-edge Peierls phases.  Vertical
edges carry theta = 2*pi*flux * (total plaquette weight strictly to the
left in their cell row); horizontal edges carry zero.  Because the prefix
values left and right of the weight support of a row are the *same stored
floats*, every plaquette with zero weight has exactly zero circulation and
every loop winding around the field region picks up 2*pi*flux to a few
ulps.  That exact telescoping is what makes the integer-flux gauge
equivalence hold to solver precision on the lattice.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import GridMismatch, InconsistentHolonomy, InconsistentState, SolverDiverged
from .geometry import Grid

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ScalarField:
    """Real values attached to primal nodes or to dual (cell-center) nodes."""

    grid: Grid
    location: str  # "node" or "dual"
    values: np.ndarray

    def __post_init__(self):
        if self.location not in ("node", "dual"):
            raise InconsistentState(f"unknown location {self.location!r}")
        n = self.grid.n_nodes if self.location == "node" else self.grid.dual_ix.size
        if self.values.shape != (n,):
            raise InconsistentState("field length does not match its index set")
        if not np.all(np.isfinite(self.values)):
            raise InconsistentState("field has non-finite entries")


@dataclass(frozen=True)
class LinkField:
    """Per-edge phases, stored for traversal from the lower to the higher node id."""

    grid: Grid
    flux: float
    theta: np.ndarray

    orientation = "low_to_high"

    def plaquette_circulation(self):
        """Counterclockwise circulation of every plaquette."""
        th = self.theta[self.grid.cell_edges]
        return th @ self.grid.cell_edge_signs

    def loop_circulation(self, node_loop):
        """Circulation along a closed node path (last node connects to first)."""
        total = 0.0
        n = len(node_loop)
        for k in range(n):
            e, s = self.grid.edge_between(int(node_loop[k]), int(node_loop[(k + 1) % n]))
            total += s * self.theta[e]
        return total


@dataclass(frozen=True)
class NodePhases:
    """Unit-modulus gauge phases on the punctured degrees of freedom."""

    grid: Grid
    n: int
    dof_nodes: np.ndarray
    values: np.ndarray
    base_node: int


def _row_prefixes(grid):
    """Prefix weights P[ix, iy] = sum of plaquette weights strictly left of
    column ix in cell row iy, with exact flat tails.

    Row sums are fixed up so that their exact accumulated sum is 1.0; the
    columns right of a row's support all store the row sum itself, so any
    difference across the support is exact in floating point.
    """
    w2d = grid.cell_weight2d
    nxc, nyc = w2d.shape
    row_sums = np.array([math.fsum(w2d[:, iy]) for iy in range(nyc)])
    k = int(np.argmax(row_sums))
    for _ in range(100):
        gap = 1.0 - math.fsum(row_sums)
        if gap == 0.0:
            break
        row_sums[k] += gap
    else:
        raise AssertionError("row-sum fixup did not converge")

    prefix = np.zeros((nxc + 1, nyc))
    for iy in range(nyc):
        row = w2d[:, iy]
        nz = np.flatnonzero(row)
        if nz.size == 0:
            continue
        prefix[1:, iy] = np.cumsum(row)
        prefix[nz[-1] + 1 :, iy] = row_sums[iy]
    return prefix


def build_link_field(grid: Grid, flux: float) -> LinkField:
    """Link phases whose plaquette circulations are 2*pi*flux*a_p.

    The per-plaquette fluxes are imposed through exact prefix sums of the
    overlap weights rather than by integrating a vector potential, so zero
    weight plaquettes circulate exactly 0.0 and loops enclosing the field
    region circulate 2*pi*flux to accumulated rounding.
    """
    if flux < 0.0:
        raise ValueError("flux must be nonnegative")
    prefix = _row_prefixes(grid)
    theta = np.zeros(grid.n_edges)
    vert = grid.edge_vertical
    theta[vert] = (TWO_PI * flux) * prefix[grid.edge_ix[vert], grid.edge_iy[vert]]
    return LinkField(grid=grid, flux=float(flux), theta=theta)


def build_gauge(grid: Grid, link: LinkField, n: int) -> NodePhases:
    """Gauge phases accumulating the integer-flux link field along a spanning tree.

    The base point is the punctured node with the lexicographically smallest
    (x, y).  Phases are built by complex multiplication so that the phase of
    value(j)/value(i) reproduces the link phase of every tree edge to an ulp;
    non-tree edges are checked and must close to a multiple of 2*pi.
    """
    if link.grid is not grid:
        raise GridMismatch("link field was built on a different grid")
    if float(n) != link.flux:
        raise ValueError(f"link field is at flux {link.flux}, expected the integer {n}")

    dofs = grid.punctured_dofs()
    if dofs.size == 0:
        raise ValueError("no punctured degrees of freedom")
    index = np.full(grid.n_nodes, -1, dtype=np.int64)
    index[dofs] = np.arange(dofs.size)

    keep = (index[grid.edge_i] >= 0) & (index[grid.edge_j] >= 0)
    ei = index[grid.edge_i[keep]]
    ej = index[grid.edge_j[keep]]
    th = link.theta[keep]

    # adjacency in deterministic edge order
    adj_head = [[] for _ in range(dofs.size)]
    for e in range(ei.size):
        adj_head[ei[e]].append((ej[e], e, 1.0))
        adj_head[ej[e]].append((ei[e], e, -1.0))

    # value(j)/value(i) = exp(-i*theta_ij): conjugating the Hamiltonian by
    # these phases then lowers the flux by n, matching the continuum
    # convention exp(i*n*path integral of the reference potential)
    values = np.zeros(dofs.size, dtype=np.complex128)
    visited = np.zeros(dofs.size, dtype=bool)
    tree_edge = np.zeros(ei.size, dtype=bool)
    values[0] = 1.0 + 0.0j
    visited[0] = True
    queue = deque([0])
    while queue:
        u = queue.popleft()
        for v, e, s in adj_head[u]:
            if not visited[v]:
                visited[v] = True
                tree_edge[e] = True
                values[v] = values[u] * complex(math.cos(s * th[e]), -math.sin(s * th[e]))
                queue.append(v)
    if not visited.all():
        raise ValueError("punctured grid graph is disconnected")
    values /= np.abs(values)

    rest = np.flatnonzero(~tree_edge)
    if rest.size:
        ratio = values[ej[rest]] * np.conj(values[ei[rest]])
        dev = np.abs(ratio * np.exp(1j * th[rest]) - 1.0)
        worst = float(dev.max())
        if worst > 1e-8:
            raise InconsistentHolonomy(
                f"loop phase mismatch {worst:.3e} exceeds 1e-8; flux quantization broken"
            )
    return NodePhases(grid=grid, n=int(n), dof_nodes=dofs, values=values, base_node=int(dofs[0]))


def _dual_laplacian(grid):
    """Five-point -Laplacian/h^2 on dual nodes with Dirichlet zero outside."""
    nxd, nyd = grid.dual_id2d.shape
    ids = grid.dual_id2d
    n = grid.dual_ix.size
    rows, cols, vals = [], [], []
    h2 = grid.h**2
    my = ids >= 0
    for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
        src = np.zeros_like(my)
        src[max(0, -dx) : nxd - max(0, dx), max(0, -dy) : nyd - max(0, dy)] = my[
            max(0, dx) : nxd - max(0, -dx), max(0, dy) : nyd - max(0, -dy)
        ]
        both = my & src
        a = ids[both]
        bx, by = np.nonzero(both)
        b = ids[bx + dx, by + dy]
        rows.append(a)
        cols.append(b)
        vals.append(np.full(a.size, -1.0 / h2))
    rows.append(ids[my])
    cols.append(ids[my])
    vals.append(np.full(n, 4.0 / h2))
    A = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
    )
    return A.tocsr()


def solve_dirichlet_poisson(grid: Grid, source: ScalarField) -> ScalarField:
    """Solve -Lap(phi) = source on dual nodes, phi = 0 outside the outer domain.

    Conjugate gradients on the symmetric positive definite five-point
    operator; the relative residual is verified to be <= 1e-10.
    """
    if source.grid is not grid or source.location != "dual":
        raise InconsistentState("source must live on the dual nodes of this grid")
    b = np.asarray(source.values, dtype=float)
    if not np.any(b):
        return ScalarField(grid=grid, location="dual", values=np.zeros_like(b))
    A = _dual_laplacian(grid)
    x, info = spla.cg(A, b, rtol=1e-12, atol=0.0, maxiter=40 * b.size)
    res = float(np.linalg.norm(A @ x - b) / np.linalg.norm(b))
    if info != 0 or res > 1e-10:
        raise SolverDiverged(f"Poisson solve stalled: info={info}, residual={res:.3e}")
    return ScalarField(grid=grid, location="dual", values=x)


def omega_indicator_source(grid: Grid) -> ScalarField:
    """Cell-averaged source (2*pi/|inner|)*indicator on the dual nodes.

    Uses the renormalized plaquette weights, so the discrete integral of the
    source is exactly 2*pi.
    """
    vals = np.zeros(grid.dual_ix.size)
    cid = grid.cell_id2d[grid.dual_ix, grid.dual_iy]
    has = cid >= 0
    vals[has] = TWO_PI * grid.cell_weight[cid[has]] / grid.h**2
    return ScalarField(grid=grid, location="dual", values=vals)
