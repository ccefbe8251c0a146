"""Command-line frontend: config parsing, dispatch, artifact writing.

Usage: littleparks <command> --config <path> [--jobs N] [--out DIR]

Commands: potential, eig, sweep, gl-min, converge, oscillate, degennes,
verify.  Exit status 0 on success, 2 on configuration or output errors,
3 on solver or verification failures.  The environment variable LP_SEED
overrides the eigensolver start-vector seed.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import output
from .eigensolve import DEFAULT_SEED
from .errors import ConfigInvalid, LittleParksError, OutputUnwritable
from .experiments import ExperimentHarness
from .fields import build_gauge, build_link_field, omega_indicator_source, solve_dirichlet_poisson
from .geometry import Disk, DomainSpec, Rect, build_grid
from .gl_energy import energy, fd_gradient_error, psi_l2, zero_state
from .operators import assemble, gauge_conjugate

COMMANDS = ("potential", "eig", "sweep", "gl-min", "converge", "oscillate", "degennes", "verify")


def _want(raw, key, kinds, default="__required__"):
    if key not in raw:
        if default == "__required__":
            raise ConfigInvalid(key, "missing required key")
        return default
    val = raw[key]
    if kinds is bool:
        if not isinstance(val, bool):
            raise ConfigInvalid(key, f"expected a boolean, got {val!r}")
        return val
    if kinds is float:
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise ConfigInvalid(key, f"expected a number, got {val!r}")
        return float(val)
    if kinds is int:
        if isinstance(val, bool) or not isinstance(val, int):
            raise ConfigInvalid(key, f"expected an integer, got {val!r}")
        return int(val)
    if kinds is str:
        if not isinstance(val, str):
            raise ConfigInvalid(key, f"expected a string, got {val!r}")
        return val
    if kinds is list:
        if not isinstance(val, list):
            raise ConfigInvalid(key, f"expected a list, got {val!r}")
        return val
    raise AssertionError(kinds)


def _positive(key, val):
    if not val > 0.0:
        raise ConfigInvalid(key, f"must be positive, got {val!r}")
    return val


def _parse_shape(raw, path):
    if not isinstance(raw, dict):
        raise ConfigInvalid(path, "expected an object with a 'kind' key")
    kind = raw.get("kind")
    center = raw.get("center", [0.0, 0.0])
    if (not isinstance(center, list)) or len(center) != 2:
        raise ConfigInvalid(f"{path}.center", "expected [x, y]")
    cx, cy = float(center[0]), float(center[1])
    if kind == "disk":
        if "radius" not in raw:
            raise ConfigInvalid(f"{path}.radius", "missing required key")
        r = float(raw["radius"])
        if r <= 0.0:
            raise ConfigInvalid(f"{path}.radius", f"must be positive, got {r}")
        return Disk(center=(cx, cy), radius=r)
    if kind == "rect":
        for k in ("width", "height"):
            if k not in raw:
                raise ConfigInvalid(f"{path}.{k}", "missing required key")
            if float(raw[k]) <= 0.0:
                raise ConfigInvalid(f"{path}.{k}", f"must be positive, got {raw[k]}")
        return Rect(center=(cx, cy), width=float(raw["width"]), height=float(raw["height"]))
    raise ConfigInvalid(f"{path}.kind", f"expected 'disk' or 'rect', got {kind!r}")


class RunConfig:
    """Validated flat run configuration."""

    def __init__(self, command, raw):
        if command not in COMMANDS:
            raise ConfigInvalid("command", f"expected one of {COMMANDS}, got {command!r}")
        self.command = command
        self.outer = _parse_shape(raw.get("outer"), "outer") if "outer" in raw else None
        self.inner = _parse_shape(raw.get("inner"), "inner") if "inner" in raw else None
        if self.outer is None:
            raise ConfigInvalid("outer", "missing required key")
        if self.inner is None:
            raise ConfigInvalid("inner", "missing required key")
        self.h = _positive("h", _want(raw, "h", float))
        self.kappa = _want(raw, "kappa", float, None)
        if self.kappa is not None:
            _positive("kappa", self.kappa)
        self.phi = _want(raw, "phi", float, 0.0)
        if self.phi < 0.0:
            raise ConfigInvalid("phi", "must be nonnegative")
        self.phi_min = _want(raw, "phi_min", float, 0.0)
        self.phi_max = _want(raw, "phi_max", float, 1.0)
        self.phi_step = _positive("phi_step", _want(raw, "phi_step", float, 0.05))
        if self.phi_max < self.phi_min:
            raise ConfigInvalid("phi_max", "must be >= phi_min")
        self.phi0 = _want(raw, "phi0", float, 0.5)
        n_list = _want(raw, "n_list", list, [0, 2, 4, 8])
        for k, n in enumerate(n_list):
            if isinstance(n, bool) or not isinstance(n, int) or n < 0:
                raise ConfigInvalid(f"n_list[{k}]", f"expected a nonnegative integer, got {n!r}")
        self.n_list = list(n_list)
        b_list = _want(raw, "b_list", list, None)
        if b_list is not None:
            for k, b in enumerate(b_list):
                if isinstance(b, bool) or not isinstance(b, (int, float)) or b <= 0:
                    raise ConfigInvalid(f"b_list[{k}]", f"expected a positive number, got {b!r}")
        self.b_list = b_list
        self.variant = _want(raw, "variant", str, "full")
        if self.variant not in ("full", "effective"):
            raise ConfigInvalid("variant", f"expected 'full' or 'effective', got {self.variant!r}")
        variants = _want(raw, "variants", list, ["full", "punctured"])
        for k, v in enumerate(variants):
            if v not in ("full", "punctured"):
                raise ConfigInvalid(f"variants[{k}]", f"expected 'full' or 'punctured', got {v!r}")
        self.variants = tuple(variants)
        self.with_energies = _want(raw, "with_energies", bool, False)
        self.init = _want(raw, "init", str, "multi")
        self.eig_tol = _positive("eig_tol", _want(raw, "eig_tol", float, 1e-9))
        self.grad_tol = _positive("grad_tol", _want(raw, "grad_tol", float, 1e-7))
        self.energy_tol = _positive("energy_tol", _want(raw, "energy_tol", float, 1e-10))
        self.max_iters = _want(raw, "max_iters", int, 200000)
        if self.max_iters <= 0:
            raise ConfigInvalid("max_iters", "must be positive")
        self.out_dir = _want(raw, "out_dir", str, "out")
        self.jobs = _want(raw, "jobs", int, 1)
        if self.jobs < 1:
            raise ConfigInvalid("jobs", "must be >= 1")
        self.seed = _want(raw, "seed", int, DEFAULT_SEED)


def _spec_and_harness(cfg):
    spec = DomainSpec(outer=cfg.outer, inner=cfg.inner)
    grid = build_grid(spec, cfg.h)
    harness = ExperimentHarness(
        grid, kappa=cfg.kappa, eig_tol=cfg.eig_tol, seed=cfg.seed, jobs=cfg.jobs,
        grad_tol=cfg.grad_tol, energy_tol=cfg.energy_tol, max_iters=cfg.max_iters,
    )
    return grid, harness


def _cmd_potential(cfg, outdir):
    grid, harness = _spec_and_harness(cfg)
    phi = solve_dirichlet_poisson(grid, omega_indicator_source(grid))
    lines = ["index,x,y,value"]
    xs = grid.xs[grid.dual_ix] + 0.5 * grid.h
    ys = grid.ys[grid.dual_iy] + 0.5 * grid.h
    for k in range(phi.values.size):
        lines.append(f"{k},{output.fmt(float(xs[k]))},{output.fmt(float(ys[k]))},{output.fmt(float(phi.values[k]))}")
    output.atomic_write(os.path.join(outdir, "potential.csv"), "\n".join(lines) + "\n")
    output.write_grid_csv(grid, os.path.join(outdir, "grid.csv"))
    output.write_manifest(harness.manifest(), os.path.join(outdir, "manifest.json"))
    print(f"wrote potential.csv with {phi.values.size} dual nodes")
    return 0


def _cmd_eig(cfg, outdir):
    grid, harness = _spec_and_harness(cfg)
    records = harness.sweep_lambda(cfg.phi, cfg.phi, 1.0, variants=cfg.variants,
                                   with_energies=cfg.with_energies)
    output.write_sweep_csv(records, os.path.join(outdir, "sweep.csv"))
    output.write_manifest(harness.manifest(), os.path.join(outdir, "manifest.json"))
    r = records[0]
    print(f"phi={r.phi} lambda_full={r.lambda_full} lambda_punctured={r.lambda_punctured}")
    return 0


def _cmd_sweep(cfg, outdir):
    grid, harness = _spec_and_harness(cfg)
    records = harness.sweep_lambda(cfg.phi_min, cfg.phi_max, cfg.phi_step,
                                   variants=cfg.variants, with_energies=cfg.with_energies)
    output.write_sweep_csv(records, os.path.join(outdir, "sweep.csv"))
    output.write_manifest(harness.manifest(), os.path.join(outdir, "manifest.json"))
    print(f"wrote sweep.csv with {len(records)} records")
    return 0


def _cmd_gl_min(cfg, outdir):
    if cfg.kappa is None:
        raise ConfigInvalid("kappa", "gl-min requires kappa")
    grid, harness = _spec_and_harness(cfg)
    state, e, diag = harness.minimize(cfg.variant, cfg.phi, init=cfg.init)
    meta = {
        "h": grid.h, "phi": cfg.phi, "kappa": cfg.kappa, "variant": cfg.variant,
        "energy": e, "converged": diag["converged"], "phase": diag["phase"],
        "iterations": diag["iterations"], "chosen_start": diag["chosen"],
        "psi_l2": psi_l2(grid, state.psi),
    }
    output.write_state_csv(state, os.path.join(outdir, "state"), meta)
    output.write_manifest(harness.manifest(), os.path.join(outdir, "manifest.json"))
    print(f"energy={e} phase={diag['phase']} converged={diag['converged']}")
    return 0


def _cmd_converge(cfg, outdir):
    grid, harness = _spec_and_harness(cfg)
    gaps = harness.convergence_gap(cfg.phi0, cfg.n_list)
    rows = [{"n": n, "phi": cfg.phi0 + n, "gap_lambda": g, "gap_energy": None} for n, g in gaps]
    if cfg.kappa is not None:
        erows = harness.effective_vs_full_energy(cfg.phi0, cfg.n_list)
        for row, erow in zip(rows, erows):
            row["gap_energy"] = erow["gap"]
    output.write_gaps_csv(rows, os.path.join(outdir, "gaps.csv"))
    output.write_manifest(harness.manifest(), os.path.join(outdir, "manifest.json"))
    print(f"wrote gaps.csv with {len(rows)} shifts")
    return 0


def _cmd_oscillate(cfg, outdir):
    if cfg.kappa is None:
        raise ConfigInvalid("kappa", "oscillate requires kappa")
    grid, harness = _spec_and_harness(cfg)
    records = harness.sweep_lambda(cfg.phi_min, cfg.phi_max, cfg.phi_step, variants=("punctured",))
    report = harness.detect_transitions(records, cfg.kappa)
    output.write_sweep_csv(records, os.path.join(outdir, "sweep.csv"))
    output.write_transitions_csv(report, os.path.join(outdir, "transitions.csv"))
    output.write_manifest(harness.manifest(), os.path.join(outdir, "manifest.json"))
    print(f"regime={report.regime} periods={report.periods}")
    return 0


def _cmd_degennes(cfg, outdir):
    grid, harness = _spec_and_harness(cfg)
    b_list = cfg.b_list
    if b_list is None:
        b_max = 0.5 / grid.h**2
        b_list = [b_max / 4.0, b_max / 2.0, b_max]
    rows = harness.degennes_ratio(b_list)
    area = grid.spec.inner_area
    table = [(b, b * area / (2.0 * math.pi), ratio * b, ratio) for b, ratio in rows]
    output.write_degennes_csv(table, os.path.join(outdir, "degennes.csv"))
    output.write_manifest(harness.manifest(), os.path.join(outdir, "manifest.json"))
    for b, phi, lam, ratio in table:
        print(f"b={b} ratio={ratio}")
    return 0


def verify_properties(cfg):
    """Run the cross-module invariant suite; returns [(name, ok, detail)]."""
    grid, harness = _spec_and_harness(cfg)
    kappa = cfg.kappa if cfg.kappa is not None else 2.0
    checks = []

    w = grid.cell_weight
    checks.append(("weights_sum_bitwise", math.fsum(w) == 1.0, f"fsum={math.fsum(w)!r}"))

    ok = bool(np.all(grid.node_class >= 0))
    checks.append(("classification_partition", ok, f"{grid.n_nodes} nodes classified"))

    link = build_link_field(grid, 0.7)
    circ = link.plaquette_circulation()
    dev = float(np.max(np.abs(circ - 2.0 * math.pi * 0.7 * w)))
    checks.append(("plaquette_flux_exact", dev <= 1e-12 * (1.0 + 2.0 * math.pi * 0.7), f"max dev {dev:.3e}"))

    total = math.fsum(circ)
    dev = abs(total - 2.0 * math.pi * 0.7)
    checks.append(("total_flux", dev <= 1e-9, f"dev {dev:.3e}"))

    op = assemble(grid, link, "punctured")
    herm = abs(op.matrix - op.matrix.getH())
    checks.append(("hermitian_exact", herm.nnz == 0 or herm.max() == 0.0, "H == H^dagger"))

    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(5):
        v = rng.standard_normal(op.dimension) + 1j * rng.standard_normal(op.dimension)
        v /= np.linalg.norm(v)
        worst = min(worst, float(np.real(np.vdot(v, op.matrix @ v))))
    checks.append(("quadratic_form_psd", worst >= -1e-12, f"min form {worst:.3e}"))

    link1 = build_link_field(grid, 1.0)
    try:
        phases = build_gauge(grid, link1, 1)
        op13 = assemble(grid, build_link_field(grid, 1.3), "punctured")
        direct = assemble(grid, build_link_field(grid, 1.3 - 1.0), "punctured")
        conj_op = gauge_conjugate(op13, phases)
        dev = abs(conj_op.matrix - direct.matrix).max() * grid.h**2
        checks.append(("gauge_conjugation", dev <= 1e-12, f"normalized entry dev {dev:.3e}"))
    except LittleParksError as exc:
        checks.append(("gauge_conjugation", False, str(exc)))

    lam_p03 = harness.lambda1("punctured", 0.3)
    lam_p13 = harness.lambda1("punctured", 1.3)
    checks.append(("flux_periodicity", abs(lam_p03 - lam_p13) <= 1e-7, f"dev {abs(lam_p03 - lam_p13):.3e}"))

    lam_f03 = harness.lambda1("full", 0.3)
    checks.append(("domination", lam_f03 <= lam_p03 + 1e-8, f"{lam_f03} <= {lam_p03}"))

    lam_p0 = harness.lambda1("punctured", 0.0)
    checks.append(("diamagnetic", lam_p03 >= lam_p0 - 1e-8, f"{lam_p03} >= {lam_p0}"))

    lam_p07 = harness.lambda1("punctured", 0.7)
    checks.append(("conjugation_symmetry", abs(lam_p03 - lam_p07) <= 1e-7, f"dev {abs(lam_p03 - lam_p07):.3e}"))

    err = fd_gradient_error(grid, harness.gl_params(0.3, kappa), "full", ndirs=3)
    checks.append(("gl_gradient_fd", err <= 1e-6, f"max rel dev {err:.3e}"))

    from .gl_energy import random_state
    st = random_state(grid, "full", seed=11)
    params = harness.gl_params(0.3, kappa)
    e0 = energy(st, params, "full")
    worst = 0.0
    for alpha in rng.uniform(0.0, 2.0 * math.pi, 5):
        st2 = zero_state(grid)
        st2.psi[:] = np.exp(1j * alpha) * st.psi
        st2.a[:] = st.a
        worst = max(worst, abs(energy(st2, params, "full") - e0) / max(1.0, abs(e0)))
    checks.append(("gl_phase_invariance", worst <= 1e-12, f"max rel dev {worst:.3e}"))

    _, e_full, _ = harness.minimize("full", 0.3, kappa=kappa, grad_tol=1e-5, max_iters=40000)
    _, e_eff, _ = harness.minimize("effective", 0.3, kappa=kappa, grad_tol=1e-5, max_iters=40000)
    ok = e_full <= e_eff + 1e-6 and e_eff <= 1e-8
    checks.append(("energy_ordering", ok, f"E={e_full:.6e} G={e_eff:.6e}"))
    return checks


def _cmd_verify(cfg, outdir):
    checks = verify_properties(cfg)
    failed = 0
    for name, ok, detail in checks:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
        if not ok:
            failed += 1
    print(f"{len(checks) - failed}/{len(checks)} properties passed")
    return 0 if failed == 0 else 3


_HANDLERS = {
    "potential": _cmd_potential,
    "eig": _cmd_eig,
    "sweep": _cmd_sweep,
    "gl-min": _cmd_gl_min,
    "converge": _cmd_converge,
    "oscillate": _cmd_oscillate,
    "degennes": _cmd_degennes,
    "verify": _cmd_verify,
}


def run(command, raw_config, jobs=None, out=None):
    """Execute a command against a parsed configuration dict; returns exit status."""
    try:
        if jobs is not None:
            raw_config = dict(raw_config, jobs=jobs)
        if out is not None:
            raw_config = dict(raw_config, out_dir=out)
        if "LP_SEED" in os.environ:
            raw_config = dict(raw_config, seed=int(os.environ["LP_SEED"], 0))
        cfg = RunConfig(command, raw_config)
    except (ConfigInvalid, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        os.makedirs(cfg.out_dir, exist_ok=True)
    except OSError as exc:
        print(f"error: cannot create output directory: {exc}", file=sys.stderr)
        return 2
    try:
        return _HANDLERS[cfg.command](cfg, cfg.out_dir)
    except (ConfigInvalid, OutputUnwritable) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except LittleParksError as exc:
        print(f"solver error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


def main(argv=None):
    parser = argparse.ArgumentParser(prog="littleparks", description=__doc__)
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the JSON run configuration")
    parser.add_argument("--jobs", type=int, default=None, help="worker pool size")
    parser.add_argument("--out", default=None, help="output directory override")
    args = parser.parse_args(argv)
    try:
        with open(args.config) as handle:
            raw = json.load(handle)
        if not isinstance(raw, dict):
            raise ValueError("configuration must be a JSON object")
    except (OSError, ValueError) as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return 2
    return run(args.command, raw, jobs=args.jobs, out=args.out)


if __name__ == "__main__":
    sys.exit(main())
