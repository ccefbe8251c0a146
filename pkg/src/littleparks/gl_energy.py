"""Ginzburg-Landau energy, gradient, minimizer, and the integer-flux profile.

One discretization serves both variants: the kinetic term uses the same
Peierls link phases as the linear operator, so the quadratic part of the
energy at zero stream deviation equals the L2(grid) quadratic form of the
assembled Hamiltonian.  The induced-potential deviation is parametrized by
a dual-grid stream function `a` that vanishes on the outer dual boundary,
which builds the divergence-free / tangential gauge conditions into the
unconstrained variables.  The effective (punctured) variant is the same
energy with the order parameter pinned to zero on the field region and its
Dirichlet ring.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .eigensolve import DEFAULT_SEED, lowest_eigenpair
from .errors import InconsistentState, NotConverged, ResolutionGuard
from .fields import ScalarField, build_link_field
from .geometry import Grid
from .operators import assemble

TWO_PI = 2.0 * math.pi
ARMIJO_C = 1e-4
ARMIJO_SHRINK = 0.5
NORMAL_MASS_FRACTION = 1e-6   # |psi|_2^2 <= frac * |domain_h| counts as normal
NORMAL_ENERGY_FLOOR = -1e-8

VARIANT_OPS = {"full": "full", "effective": "punctured"}


@dataclass
class GLParams:
    kappa: float
    flux: float
    grad_tol: float = 1e-7
    energy_tol: float = 1e-10
    max_iters: int = 200000
    eig_tol: float = 1e-9
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        if not self.kappa > 0.0:
            raise InconsistentState("kappa must be positive")
        if self.flux < 0.0:
            raise InconsistentState("flux must be nonnegative")


@dataclass
class GLState:
    """Order parameter on nodes plus stream-function deviation on plaquettes."""

    grid: Grid
    psi: np.ndarray
    a: np.ndarray

    def copy(self):
        return GLState(grid=self.grid, psi=self.psi.copy(), a=self.a.copy())


def zero_state(grid: Grid) -> GLState:
    return GLState(
        grid=grid,
        psi=np.zeros(grid.n_nodes, dtype=np.complex128),
        a=np.zeros(grid.n_cells),
    )


def psi_dof_mask(grid: Grid, variant: str) -> np.ndarray:
    if variant == "full":
        return np.ones(grid.n_nodes, dtype=bool)
    if variant == "effective":
        mask = np.zeros(grid.n_nodes, dtype=bool)
        mask[grid.punctured_dofs()] = True
        return mask
    raise ValueError(f"variant must be 'full' or 'effective', got {variant!r}")


def check_resolution(grid: Grid, flux: float):
    b = TWO_PI * flux / grid.spec.inner_area
    if b * grid.h**2 > 0.5:
        raise ResolutionGuard(
            f"b*h^2 = {b * grid.h**2:.3f} > 0.5: field not resolved at flux {flux}"
        )


def _check_state(state: GLState, grid: Grid, variant: str):
    if state.grid is not grid:
        raise InconsistentState("state lives on a different grid")
    if state.psi.shape != (grid.n_nodes,) or state.a.shape != (grid.n_cells,):
        raise InconsistentState("state arrays have the wrong length")
    if not (np.all(np.isfinite(state.psi)) and np.all(np.isfinite(state.a))):
        raise InconsistentState("state has non-finite entries")
    if variant == "effective" and np.any(state.psi[~psi_dof_mask(grid, variant)] != 0.0):
        raise InconsistentState("effective state must vanish on eliminated nodes")
    if np.any(state.a[~grid.a_dof_mask] != 0.0):
        raise InconsistentState("stream function must vanish on the outer dual boundary")


class _Workspace:
    """Precomputed arrays for repeated energy/gradient evaluations."""

    def __init__(self, grid, params, variant):
        self.grid = grid
        self.variant = variant
        self.kappa2 = params.kappa**2
        self.h = grid.h
        self.h2 = grid.h**2
        link = build_link_field(grid, params.flux)
        self.z0 = np.exp(1j * link.theta)
        self.ie = grid.edge_i
        self.je = grid.edge_j
        nc = grid.n_cells
        self.pos = np.where(grid.edge_cell_pos >= 0, grid.edge_cell_pos, nc)
        self.neg = np.where(grid.edge_cell_neg >= 0, grid.edge_cell_neg, nc)
        self.psi_mask = psi_dof_mask(grid, variant)
        self.cshape = grid.cell_weight2d.shape
        self.cix = grid.cell_ix
        self.ciy = grid.cell_iy
        self._stream_solve = None

    def stream_preconditioner(self):
        """Fixed SPD metric for the stream block: inverse of the shifted
        squared-Laplacian, so descent coordinates see O(1) stiffness across
        both the bilaplacian top and the screened smooth modes."""
        if self._stream_solve is None:
            grid = self.grid
            ad = np.flatnonzero(grid.a_dof_mask)
            if ad.size == 0:
                self._stream_solve = lambda v: v
                return self._stream_solve
            cid = grid.cell_id2d
            ix = grid.cell_ix[ad]
            iy = grid.cell_iy[ad]
            col_of = np.full(grid.n_cells, -1, dtype=np.int64)
            col_of[ad] = np.arange(ad.size)
            rows = [ad]
            cols = [np.arange(ad.size)]
            vals = [np.full(ad.size, -4.0)]
            for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                nbr = cid[ix + dx, iy + dy]
                rows.append(nbr)
                cols.append(np.arange(ad.size))
                vals.append(np.ones(ad.size))
            lap = sp.coo_matrix(
                (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                shape=(grid.n_cells, ad.size),
            ).tocsc()
            T = (2.0 / self.h2) * (lap.T @ lap) + 8.0 * sp.identity(ad.size, format="csc")
            lu = spla.splu(T.tocsc())
            self._stream_solve = lambda v: 12.0 * lu.solve(v)
        return self._stream_solve

    def hop_phase(self, a):
        if a.size and np.any(a):
            pad = np.append(a, 0.0)
            return self.z0 * np.exp(1j * (pad[self.pos] - pad[self.neg]))
        return self.z0

    def cell_circulation(self, a):
        """Lattice Laplacian of the zero-padded stream values, per plaquette."""
        A = np.zeros(self.cshape)
        A[self.cix, self.ciy] = a
        C = -4.0 * A
        C[1:, :] += A[:-1, :]
        C[:-1, :] += A[1:, :]
        C[:, 1:] += A[:, :-1]
        C[:, :-1] += A[:, 1:]
        return C[self.cix, self.ciy]

    def _laplacian_adjoint(self, c):
        C = np.zeros(self.cshape)
        C[self.cix, self.ciy] = c
        out = -4.0 * C
        out[1:, :] += C[:-1, :]
        out[:-1, :] += C[1:, :]
        out[:, 1:] += C[:, :-1]
        out[:, :-1] += C[:, 1:]
        return out[self.cix, self.ciy]

    def energy(self, psi, a):
        z = self.hop_phase(a)
        D = psi[self.ie] - z * psi[self.je]
        kin = float(np.vdot(D, D).real)
        m2 = psi.real**2 + psi.imag**2
        pot = self.h2 * self.kappa2 * float(np.sum(0.5 * m2 * m2 - m2))
        circ = self.cell_circulation(a)
        fld = float(circ @ circ) / self.h2
        return kin + pot + fld

    def energy_grad(self, psi, a):
        z = self.hop_phase(a)
        zj = z * psi[self.je]
        D = psi[self.ie] - zj
        kin = float(np.vdot(D, D).real)
        m2 = psi.real**2 + psi.imag**2
        pot = self.h2 * self.kappa2 * float(np.sum(0.5 * m2 * m2 - m2))
        circ = self.cell_circulation(a)
        fld = float(circ @ circ) / self.h2

        n = psi.size
        gi = 2.0 * D
        gj = -2.0 * np.conj(z) * D
        gpsi = (
            np.bincount(self.ie, gi.real, minlength=n)
            + np.bincount(self.je, gj.real, minlength=n)
            + 1j * (np.bincount(self.ie, gi.imag, minlength=n) + np.bincount(self.je, gj.imag, minlength=n))
        )
        gpsi += 2.0 * self.h2 * self.kappa2 * (m2 - 1.0) * psi
        gpsi[~self.psi_mask] = 0.0

        dtheta = 2.0 * (zj * np.conj(psi[self.ie])).imag
        nc = self.grid.n_cells
        ga = (
            np.bincount(self.pos, dtheta, minlength=nc + 1)
            - np.bincount(self.neg, dtheta, minlength=nc + 1)
        )[:nc]
        ga += (2.0 / self.h2) * self._laplacian_adjoint(circ)
        ga[~self.grid.a_dof_mask] = 0.0
        return kin + pot + fld, gpsi, ga

    def current(self, psi, a):
        z = self.hop_phase(a)
        return (np.conj(psi[self.ie]) * z * psi[self.je]).imag / self.h


def energy(state: GLState, params: GLParams, variant: str) -> float:
    """Discrete Ginzburg-Landau energy of a state."""
    _check_state(state, state.grid, variant)
    ws = _Workspace(state.grid, params, variant)
    return ws.energy(state.psi, state.a)


def gradient(state: GLState, params: GLParams, variant: str) -> GLState:
    """Exact gradient with respect to (Re psi, Im psi, a), state-shaped.

    The complex entry per node is dE/d(Re psi) + i dE/d(Im psi).
    """
    _check_state(state, state.grid, variant)
    ws = _Workspace(state.grid, params, variant)
    _, gpsi, ga = ws.energy_grad(state.psi, state.a)
    return GLState(grid=state.grid, psi=gpsi, a=ga)


def supercurrent(state: GLState, params: GLParams, variant: str) -> np.ndarray:
    """Edge supercurrent Im(conj(psi_i) e^{i theta} psi_j)/h, antisymmetric."""
    _check_state(state, state.grid, variant)
    ws = _Workspace(state.grid, params, variant)
    return ws.current(state.psi, state.a)


def current_l2(grid: Grid, j: np.ndarray) -> float:
    return float(np.sqrt(np.sum(j * j) * grid.h**2))


def psi_l2(grid: Grid, psi: np.ndarray) -> float:
    return float(np.sqrt(np.sum(psi.real**2 + psi.imag**2) * grid.h**2))


def omega_mass(grid: Grid, psi: np.ndarray) -> float:
    sel = grid.omega_nodes()
    return float(np.sum(np.abs(psi[sel]) ** 2) * grid.h**2)


def curl_deviation_l2(state: GLState, params: GLParams) -> float:
    """L2 norm of the induced-field deviation curl(A - F) encoded by the stream."""
    ws = _Workspace(state.grid, params, "full")
    circ = ws.cell_circulation(state.a)
    if params.flux == 0.0:
        return 0.0 if not np.any(circ) else float("inf")
    c = circ / (ws.h2 * params.flux)
    return float(np.sqrt(np.sum(c * c) * ws.h2))


def classify_phase(grid: Grid, psi: np.ndarray, energy_value: float) -> str:
    """Scale-aware normal/superconducting label."""
    mass = np.sum(psi.real**2 + psi.imag**2) * grid.h**2
    if mass <= NORMAL_MASS_FRACTION * grid.domain_area_h() and energy_value >= NORMAL_ENERGY_FLOOR:
        return "normal"
    return "superconducting"


@dataclass
class StartDiagnostics:
    label: str
    energy: float
    iterations: int
    converged: bool
    grad_inf: float
    reason: str


def _descend(ws, params, psi0, a0, label):
    grid = ws.grid
    pd = np.flatnonzero(ws.psi_mask)
    ad = np.flatnonzero(grid.a_dof_mask)
    npd = pd.size
    precond = ws.stream_preconditioner()

    def unpack(x):
        psi = np.zeros(grid.n_nodes, dtype=np.complex128)
        psi[pd] = x[:npd] + 1j * x[npd : 2 * npd]
        a = np.zeros(grid.n_cells)
        a[ad] = x[2 * npd :]
        return psi, a

    def direction(gpsi, ga):
        # fixed SPD metric: identity on the order parameter, shifted
        # inverse bilaplacian on the stream block
        return np.concatenate([gpsi.real[pd], gpsi.imag[pd], precond(ga[ad])])

    x = np.concatenate([psi0.real[pd], psi0.imag[pd], a0[ad]])
    psi, a = unpack(x)
    E, gpsi, ga = ws.energy_grad(psi, a)
    g = np.concatenate([gpsi.real[pd], gpsi.imag[pd], ga[ad]])
    d = direction(gpsi, ga)
    alpha = 1.0
    rel_drop = math.inf
    reason = "iteration_cap"
    it = 0
    converged = False
    ginf = _grad_inf(gpsi, ga, pd, ad)
    while it < params.max_iters:
        if ginf <= params.grad_tol and rel_drop <= params.energy_tol:
            converged, reason = True, "tolerances met"
            break
        slope = float(g @ d)   # <grad, M grad> > 0 unless at a critical point
        if slope == 0.0:
            converged, reason = True, "exact critical point"
            break
        alpha = min(alpha, 1e6)
        while True:
            step = alpha * d
            xn = x - step
            psin, an = unpack(xn)
            En = ws.energy(psin, an)
            if En <= E - ARMIJO_C * alpha * slope:
                break
            alpha *= ARMIJO_SHRINK
            if alpha < 1e-20:
                break
        if alpha < 1e-20:
            converged = ginf <= params.grad_tol
            reason = "line search stagnated"
            break
        assert En <= E + 1e-15 * max(1.0, abs(E)), "energy increased along descent"
        rel_drop = (E - En) / max(1.0, abs(En))
        x, E = xn, En
        psi, a = psin, an
        _, gpsi, ga = ws.energy_grad(psi, a)
        gn = np.concatenate([gpsi.real[pd], gpsi.imag[pd], ga[ad]])
        dn = direction(gpsi, ga)
        # Barzilai-Borwein trial step for the next backtracking search,
        # measured in the preconditioned metric (s = -step, y = grad change)
        yg = gn - g
        denom = float((dn - d) @ yg)
        num = -float(step @ yg)
        if denom > 0.0 and num > 0.0:
            alpha = min(max(num / denom, 1e-10), 1e6)
        else:
            alpha = min(alpha * 2.0, 1e6)
        g, d = gn, dn
        ginf = _grad_inf(gpsi, ga, pd, ad)
        it += 1
    return psi, a, E, StartDiagnostics(
        label=label, energy=E, iterations=it, converged=converged, grad_inf=ginf, reason=reason
    )


def _grad_inf(gpsi, ga, pd, ad):
    vals = [0.0]
    if pd.size:
        vals.append(float(np.max(np.abs(gpsi.real[pd]))))
        vals.append(float(np.max(np.abs(gpsi.imag[pd]))))
    if ad.size:
        vals.append(float(np.max(np.abs(ga[ad]))))
    return max(vals)


def _linear_start(grid, params, variant):
    """Scaled ground state of the linear operator at the same flux."""
    link = build_link_field(grid, params.flux)
    op = assemble(grid, link, VARIANT_OPS[variant])
    res = lowest_eigenpair(op, tol=params.eig_tol, seed=params.seed)
    psi = np.zeros(grid.n_nodes, dtype=np.complex128)
    psi[op.dof_nodes] = res.vector
    lam = res.value
    if lam >= params.kappa**2:
        return None, lam
    q4 = float(np.sum(np.abs(psi) ** 4) * grid.h**2)
    t = math.sqrt(max((params.kappa**2 - lam) / (params.kappa**2 * q4), 0.0))
    return t * psi, lam


def minimize(grid: Grid, params: GLParams, variant: str, init: str = "multi", supplied: GLState = None):
    """Armijo-backtracking gradient descent on the discrete energy.

    With init="multi" the descent is run from the normal, uniform, and
    linear-ground-state configurations and the lowest energy wins.  Returns
    (state, energy, diagnostics); diagnostics carry per-start convergence.
    """
    check_resolution(grid, params.flux)
    if variant not in VARIANT_OPS:
        raise ValueError(f"variant must be 'full' or 'effective', got {variant!r}")
    ws = _Workspace(grid, params, variant)
    mask = ws.psi_mask

    starts = []
    zero_psi = np.zeros(grid.n_nodes, dtype=np.complex128)
    zero_a = np.zeros(grid.n_cells)
    if init in ("multi", "normal"):
        starts.append(("normal", zero_psi, zero_a))
    if init in ("multi", "uniform"):
        uni = np.where(mask, 1.0 + 0.0j, 0.0)
        starts.append(("uniform", uni, zero_a))
    if init in ("multi", "linear-ground-state"):
        lin, lam = _linear_start(grid, params, variant)
        if lin is not None:
            starts.append(("linear-ground-state", lin, zero_a))
        elif init == "linear-ground-state":
            starts.append(("normal", zero_psi, zero_a))
    if init == "supplied":
        if supplied is None:
            raise InconsistentState("init='supplied' needs a state")
        _check_state(supplied, grid, variant)
        starts.append(("supplied", supplied.psi.copy(), supplied.a.copy()))
    if not starts:
        raise ValueError(f"unknown init {init!r}")

    runs = [_descend(ws, params, p0, a0, label) for (label, p0, a0) in starts]
    best = min(range(len(runs)), key=lambda k: runs[k][2])
    psi, a, E, diag = runs[best]
    state = GLState(grid=grid, psi=psi, a=a)
    diagnostics = {
        "chosen": diag.label,
        "converged": diag.converged,
        "iterations": diag.iterations,
        "grad_inf": diag.grad_inf,
        "reason": diag.reason,
        "phase": classify_phase(grid, psi, E),
        "starts": [r[3] for r in runs],
    }
    return state, E, diagnostics


def _eroded_cell_mask(grid, width):
    """Plaquette mask shrunk by `width` cells from any missing neighbour."""
    m2 = np.zeros(grid.cell_weight2d.shape, dtype=bool)
    m2[grid.cell_ix, grid.cell_iy] = True
    for _ in range(width):
        m = np.zeros_like(m2)
        m[1:-1, 1:-1] = (
            m2[1:-1, 1:-1] & m2[:-2, 1:-1] & m2[2:, 1:-1] & m2[1:-1, :-2] & m2[1:-1, 2:]
        )
        m2 = m
    return m2[grid.cell_ix, grid.cell_iy]


def stationarity_residual(state: GLState, params: GLParams, diagnostics: dict = None,
                          interior_margin: float = 0.3) -> float:
    """Discrete residual of the curl-div identity at a full-variant minimizer.

    Per interior plaquette-edge pair the residual is the transverse
    difference of the induced-field curvature against the supercurrent over
    the flux; returns its L2(grid) norm.  Interior means both adjacent
    plaquettes lie at least `interior_margin` length units from the outer
    staircase: the stream function is pinned to zero on that staircase, an
    O(h) geometric perturbation that two discrete derivatives amplify to
    O(1/h) in its vicinity.  At zero flux the unscaled identity is used.
    """
    if diagnostics is not None and not diagnostics.get("converged", False):
        raise NotConverged("state is flagged non-converged")
    grid = state.grid
    _check_state(state, grid, "full")
    ws = _Workspace(grid, params, "full")
    circ = ws.cell_circulation(state.a)
    scale = params.flux if params.flux > 0.0 else 1.0
    # under the hopping-phase sign convention the stream circulation stores
    # the negative of curl(A - F), so the identity pairs it with -j
    C = circ / (ws.h2 * scale)
    j = ws.current(state.psi, state.a)
    ok = _eroded_cell_mask(grid, max(1, int(round(interior_margin / grid.h))))
    cp, cn = grid.edge_cell_pos, grid.edge_cell_neg
    keep = np.flatnonzero((cp >= 0) & (cn >= 0))
    keep = keep[ok[cp[keep]] & ok[cn[keep]]]
    r = (C[cp[keep]] - C[cn[keep]]) / grid.h - j[keep] / scale
    return float(np.sqrt(np.sum(r * r) * ws.h2))


def random_state(grid: Grid, variant: str, seed: int = 1234, amplitude: float = 0.8) -> GLState:
    """Bounded random state respecting the variant masks; for gradient checks."""
    rng = np.random.default_rng(seed)
    mask = psi_dof_mask(grid, variant)
    psi = np.zeros(grid.n_nodes, dtype=np.complex128)
    psi[mask] = amplitude * (rng.standard_normal(int(mask.sum())) + 1j * rng.standard_normal(int(mask.sum())))
    a = np.zeros(grid.n_cells)
    ad = grid.a_dof_mask
    a[ad] = 0.1 * grid.h * rng.standard_normal(int(ad.sum()))
    return GLState(grid=grid, psi=psi, a=a)


def fd_gradient_error(grid: Grid, params: GLParams, variant: str,
                      seed: int = 1234, ndirs: int = 10, eps: float = 1e-5) -> float:
    """Worst relative mismatch between analytic and central-difference
    directional derivatives over random directions."""
    state = random_state(grid, variant, seed)
    grad = gradient(state, params, variant)
    rng = np.random.default_rng(seed + 1)
    mask = psi_dof_mask(grid, variant)
    worst = 0.0
    for _ in range(ndirs):
        dpsi = np.zeros(grid.n_nodes, dtype=np.complex128)
        dpsi[mask] = rng.standard_normal(int(mask.sum())) + 1j * rng.standard_normal(int(mask.sum()))
        da = np.zeros(grid.n_cells)
        da[grid.a_dof_mask] = rng.standard_normal(int(grid.a_dof_mask.sum()))
        scale = math.sqrt(float(np.vdot(dpsi, dpsi).real + da @ da))
        dpsi /= scale
        da /= scale
        deriv = float(np.sum(grad.psi.real * dpsi.real + grad.psi.imag * dpsi.imag) + grad.a @ da)
        plus = GLState(grid=grid, psi=state.psi + eps * dpsi, a=state.a + eps * da)
        minus = GLState(grid=grid, psi=state.psi - eps * dpsi, a=state.a - eps * da)
        fd = (energy(plus, params, variant) - energy(minus, params, variant)) / (2.0 * eps)
        worst = max(worst, abs(deriv - fd) / max(1.0, abs(deriv)))
    return worst


def real_profile(grid: Grid, kappa: float, params: GLParams = None):
    """Positive order-parameter profile at integer flux (zero applied deviation).

    Returns (ScalarField on nodes, subcritical flag).  When kappa^2 does not
    exceed the lowest punctured eigenvalue only the zero solution exists and
    the zero field is returned flagged subcritical.
    """
    if params is None:
        params = GLParams(kappa=kappa, flux=0.0)
    else:
        params = replace(params, kappa=kappa, flux=0.0)
    link = build_link_field(grid, 0.0)
    op = assemble(grid, link, "punctured")
    lam0 = lowest_eigenpair(op, tol=params.eig_tol, seed=params.seed).value
    if kappa**2 <= lam0:
        return ScalarField(grid=grid, location="node", values=np.zeros(grid.n_nodes)), True
    state, _, _ = minimize(grid, params, "effective", init="uniform")
    u = np.abs(state.psi)
    return ScalarField(grid=grid, location="node", values=u), False
