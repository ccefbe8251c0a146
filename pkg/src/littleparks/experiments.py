"""Flux sweeps, oscillation detection, convergence studies, and the surface
superconductivity ratio.

An ExperimentHarness owns one grid plus the solver tolerances and seed, and
caches lowest eigenvalues per (variant, flux).  Workers never mutate shared
state: parallel sweeps compute per-sample results and the cache is merged
afterwards in flux order, so repeated runs produce identical artifacts.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .eigensolve import DEFAULT_SEED, lowest_eigenpair
from .errors import EmptyInput, ResolutionGuard, ValidationFailed
from .fields import build_gauge, build_link_field
from .geometry import Grid
from .gl_energy import (
    GLParams,
    check_resolution,
    minimize,
    omega_mass,
    psi_l2,
    supercurrent,
)
from .operators import assemble

TWO_PI = 2.0 * math.pi
DEGENNES_THETA0 = 0.59      # de Gennes surface constant (literature value)
ENERGY_SLACK = 1e-6         # 10x a practical minimizer tolerance


@dataclass
class SweepRecord:
    phi: float
    lambda_full: float = None
    lambda_punctured: float = None
    energy_full: float = None
    energy_effective: float = None
    psi_l2: float = None
    phase: str = ""
    converged: bool = True
    wall_time: float = 0.0
    error: str = ""

    def validate(self, eig_tol=1e-9):
        if self.lambda_full is not None and self.lambda_punctured is not None:
            if not (self.lambda_full <= self.lambda_punctured + 10.0 * eig_tol):
                raise AssertionError(
                    f"domination violated at phi={self.phi}: "
                    f"{self.lambda_full} > {self.lambda_punctured}"
                )
        if self.energy_full is not None and self.energy_effective is not None:
            if not (self.energy_full <= self.energy_effective + ENERGY_SLACK):
                raise AssertionError(
                    f"energy ordering violated at phi={self.phi}: "
                    f"{self.energy_full} > {self.energy_effective}"
                )
        if self.phase not in ("", "normal", "superconducting"):
            raise AssertionError(f"bad phase label {self.phase!r}")
        return self


@dataclass
class TransitionReport:
    kappa: float
    periods: int
    regime: str                      # oscillating / always-superconducting / always-normal
    phi_normal: list = field(default_factory=list)
    phi_super: list = field(default_factory=list)
    labels_normal: list = field(default_factory=list)
    labels_super: list = field(default_factory=list)

    def __post_init__(self):
        seq = []
        for a, b in zip(self.phi_normal, self.phi_super):
            seq.extend([a, b])
        for a, b in zip(seq[:-1], seq[1:]):
            if not (0.0 < a < b):
                raise AssertionError(f"transition points not interleaved: {seq}")


class ExperimentHarness:
    """Shared grid, tolerances, seed, and eigenvalue cache for one study."""

    def __init__(self, grid: Grid, kappa: float = None, eig_tol: float = 1e-9,
                 seed: int = DEFAULT_SEED, jobs: int = 1,
                 grad_tol: float = 1e-7, energy_tol: float = 1e-10, max_iters: int = 200000):
        self.grid = grid
        self.kappa = kappa
        self.eig_tol = eig_tol
        self.seed = seed
        self.jobs = max(1, int(jobs))
        self.grad_tol = grad_tol
        self.energy_tol = energy_tol
        self.max_iters = max_iters
        self._lambda_cache = {}

    # ---- linear spectral data -------------------------------------------

    def _compute_lambda(self, variant, flux):
        link = build_link_field(self.grid, flux)
        op = assemble(self.grid, link, variant)
        return lowest_eigenpair(op, tol=self.eig_tol, seed=self.seed).value

    def lambda1(self, variant: str, flux: float) -> float:
        key = (variant, float(flux))
        if key not in self._lambda_cache:
            self._lambda_cache[key] = self._compute_lambda(variant, flux)
        return self._lambda_cache[key]

    def kappa_between(self, weight: float = 0.5) -> float:
        """kappa with kappa^2 between the punctured eigenvalues at flux 0 and 1/2."""
        lam0 = self.lambda1("punctured", 0.0)
        lam_half = self.lambda1("punctured", 0.5)
        return math.sqrt(lam0 + weight * (lam_half - lam0))

    def gl_params(self, flux, kappa=None, **overrides):
        kw = dict(grad_tol=self.grad_tol, energy_tol=self.energy_tol,
                  max_iters=self.max_iters, eig_tol=self.eig_tol, seed=self.seed)
        kw.update(overrides)
        return GLParams(kappa=self.kappa if kappa is None else kappa, flux=flux, **kw)

    def minimize(self, variant, flux, kappa=None, init="multi", **overrides):
        return minimize(self.grid, self.gl_params(flux, kappa, **overrides), variant, init=init)

    # ---- sweeps ----------------------------------------------------------

    def _sweep_point(self, phi, variants, with_energies):
        t0 = time.perf_counter()
        rec = SweepRecord(phi=phi)
        new = {}
        try:
            for variant in variants:
                key = (variant, float(phi))
                lam = self._lambda_cache.get(key)
                if lam is None:
                    lam = self._compute_lambda(variant, phi)
                    new[key] = lam
                if variant == "full":
                    rec.lambda_full = lam
                elif variant == "punctured":
                    rec.lambda_punctured = lam
            if with_energies:
                st_f, e_f, d_f = self.minimize("full", phi)
                st_e, e_e, d_e = self.minimize("effective", phi)
                rec.energy_full = e_f
                rec.energy_effective = e_e
                rec.psi_l2 = psi_l2(self.grid, st_f.psi)
                rec.phase = d_f["phase"]
                rec.converged = bool(d_f["converged"] and d_e["converged"])
            elif self.kappa is not None and rec.lambda_punctured is not None:
                rec.phase = "normal" if self.kappa**2 <= rec.lambda_punctured else "superconducting"
        except Exception as exc:  # partial results allowed, flagged
            rec.error = f"{type(exc).__name__}: {exc}"
            rec.converged = False
        rec.wall_time = time.perf_counter() - t0
        return rec.validate(self.eig_tol), new

    def sweep_lambda(self, phi_min, phi_max, step, variants=("full", "punctured"),
                     with_energies=False):
        """One lowest-eigenvalue record per flux sample, sorted by flux."""
        if step <= 0.0:
            raise ValueError("step must be positive")
        check_resolution(self.grid, phi_max)
        count = int(math.floor((phi_max - phi_min) / step + 1e-9)) + 1
        samples = [phi_min + k * step for k in range(count)]
        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                out = list(pool.map(lambda p: self._sweep_point(p, variants, with_energies), samples))
        else:
            out = [self._sweep_point(p, variants, with_energies) for p in samples]
        records = []
        for rec, new in out:
            records.append(rec)
            for key in sorted(new):
                self._lambda_cache.setdefault(key, new[key])
        return records

    def convergence_gap(self, phi0, n_list):
        """(n, lambda_punctured(phi0) - lambda_full(phi0 + n)) per integer shift."""
        if not 0.0 <= phi0 < 1.0:
            raise ValueError("phi0 must lie in [0, 1)")
        check_resolution(self.grid, phi0 + max(n_list))
        lam_ref = self.lambda1("punctured", phi0)
        return [(n, lam_ref - self.lambda1("full", phi0 + n)) for n in n_list]

    def degennes_ratio(self, b_list):
        """(b, lambda_omega / b) for the Neumann operator on the field region."""
        area = self.grid.spec.inner_area
        rows = []
        for b in b_list:
            if b < TWO_PI / area:
                raise ResolutionGuard(f"b={b} is below one flux quantum (2*pi/|inner|)")
            if b * self.grid.h**2 > 0.5:
                raise ResolutionGuard(f"b*h^2 = {b * self.grid.h**2:.3f} > 0.5 at b={b}")
            phi = b * area / TWO_PI
            rows.append((b, self.lambda1("omega", phi) / b))
        return rows

    # ---- oscillations ----------------------------------------------------

    def detect_transitions(self, records, kappa):
        """Normal points at half-integers and superconducting points at integers,
        each confirmed by an effective-variant minimization."""
        if not records:
            raise EmptyInput("no sweep records")
        phis = [r.phi for r in records if r.lambda_punctured is not None]
        if not phis:
            raise EmptyInput("records carry no punctured eigenvalues")
        lam0 = self.lambda1("punctured", 0.0)
        lam_half = self.lambda1("punctured", 0.5)
        if kappa**2 >= lam_half:
            return TransitionReport(kappa=kappa, periods=0, regime="always-superconducting")
        if kappa**2 <= lam0:
            return TransitionReport(kappa=kappa, periods=0, regime="always-normal")

        periods = int(math.floor(max(phis) + 1e-9))
        if periods < 1:
            raise EmptyInput("records cover no complete period")
        phi_normal, phi_super, lab_n, lab_s = [], [], [], []
        for n in range(1, periods + 1):
            for target, want, acc_phi, acc_lab in (
                (n - 0.5, "normal", phi_normal, lab_n),
                (float(n), "superconducting", phi_super, lab_s),
            ):
                lam = self.lambda1("punctured", target)
                eig_label = "normal" if kappa**2 <= lam else "superconducting"
                _, _, diag = self.minimize("effective", target, kappa=kappa)
                if diag["phase"] != eig_label:
                    raise ValidationFailed(
                        f"minimize at phi={target} says {diag['phase']} but the eigenvalue "
                        f"criterion says {eig_label} (lambda={lam}, kappa^2={kappa**2})"
                    )
                if diag["phase"] != want:
                    raise ValidationFailed(
                        f"expected {want} at phi={target}, found {diag['phase']}"
                    )
                acc_phi.append(target)
                acc_lab.append(diag["phase"])
        return TransitionReport(
            kappa=kappa, periods=periods, regime="oscillating",
            phi_normal=phi_normal, phi_super=phi_super,
            labels_normal=lab_n, labels_super=lab_s,
        )

    # ---- nonlinear convergence studies ------------------------------------

    def effective_vs_full_energy(self, phi0, n_list, kappa=None, **overrides):
        """(n, E(phi0+n), G(phi0), gap) with G computed once at phi0."""
        kappa = self.kappa if kappa is None else kappa
        check_resolution(self.grid, phi0 + max(n_list))
        _, G, diag_g = self.minimize("effective", phi0, kappa=kappa, **overrides)
        rows = []
        for n in n_list:
            _, E, diag_e = self.minimize("full", phi0 + n, kappa=kappa, **overrides)
            gap = G - E
            if gap < -ENERGY_SLACK:
                raise AssertionError(f"E(phi0+{n}) = {E} exceeds G(phi0) = {G}")
            rows.append({
                "n": n, "phi": phi0 + n, "energy_full": E, "energy_effective": G,
                "gap": gap, "converged": bool(diag_e["converged"] and diag_g["converged"]),
            })
        return rows

    def minimizer_convergence_probe(self, phi0, n, kappa=None, **overrides):
        """Distance between the gauged-back full minimizer at phi0+n and the
        effective minimizer at phi0, modulo one global phase."""
        kappa = self.kappa if kappa is None else kappa
        check_resolution(self.grid, phi0 + n)
        grid = self.grid
        st_full, e_full, diag_full = self.minimize("full", phi0 + n, kappa=kappa, **overrides)
        st_eff, e_eff, diag_eff = self.minimize("effective", phi0, kappa=kappa, **overrides)
        phases = build_gauge(grid, build_link_field(grid, float(n)), n)
        dofs = phases.dof_nodes
        u_back = np.conj(phases.values) * st_full.psi[dofs]
        u_eff = st_eff.psi[dofs]
        h2 = grid.h**2
        n2_back = float(np.sum(np.abs(u_back) ** 2) * h2)
        n2_eff = float(np.sum(np.abs(u_eff) ** 2) * h2)
        overlap = abs(np.vdot(u_eff, u_back)) * h2
        dist = math.sqrt(max(n2_back + n2_eff - 2.0 * overlap, 0.0))

        j_full = supercurrent(st_full, self.gl_params(phi0 + n, kappa), "full")
        j_eff = supercurrent(st_eff, self.gl_params(phi0, kappa), "effective")
        keep = np.zeros(grid.n_nodes, dtype=bool)
        keep[dofs] = True
        pe = keep[grid.edge_i] & keep[grid.edge_j]
        jdist = float(np.sqrt(np.sum((j_full[pe] - j_eff[pe]) ** 2) * h2))
        return {
            "n": n, "phi": phi0 + n,
            "state_distance": dist,
            "omega_mass": omega_mass(grid, st_full.psi),
            "current_distance": jdist,
            "energy_full": e_full, "energy_effective": e_eff,
            "converged": bool(diag_full["converged"] and diag_eff["converged"]),
        }

    # ---- bookkeeping -------------------------------------------------------

    def manifest(self):
        spec = self.grid.spec
        def shape_dict(s):
            d = {"kind": s.kind, "center": list(s.center)}
            if s.kind == "disk":
                d["radius"] = s.radius
            else:
                d["width"], d["height"] = s.width, s.height
            return d
        return {
            "domain": {"outer": shape_dict(spec.outer), "inner": shape_dict(spec.inner),
                       "eps0": spec.eps0, "inner_area": spec.inner_area},
            "h": self.grid.h,
            "counts": {"nodes": int(self.grid.n_nodes), "edges": int(self.grid.n_edges),
                       "plaquettes": int(self.grid.n_cells)},
            "tolerances": {"eig_tol": self.eig_tol, "grad_tol": self.grad_tol,
                           "energy_tol": self.energy_tol, "max_iters": self.max_iters},
            "seed": self.seed,
            "kappa": self.kappa,
            "cached_eigenvalues": {f"{v}@{phi!r}": lam
                                   for (v, phi), lam in sorted(self._lambda_cache.items())},
        }
