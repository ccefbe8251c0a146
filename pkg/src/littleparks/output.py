"""Deterministic CSV/JSON artifact writers with atomic replacement.

Floats are rendered with repr (shortest round-trip), optional fields as
empty strings, and files are written to a temporary sibling then renamed,
so identical runs overwrite byte-identical artifacts and failures leave no
partial files.
"""

from __future__ import annotations

import json
import os
import tempfile

import numpy as np

from .errors import OutputUnwritable
from .geometry import CLASS_NAMES

SWEEP_HEADER = "phi,lambda_full,lambda_punctured,energy_full,energy_effective,psi_l2,phase,converged"
GAPS_HEADER = "n,phi,gap_lambda,gap_energy"
TRANSITIONS_HEADER = "period,phi_normal,phi_super,kappa"
DEGENNES_HEADER = "b,phi,lambda_omega,ratio"


def fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def atomic_write(path, text):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    try:
        os.makedirs(directory, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix="~")
    except OSError as exc:
        raise OutputUnwritable(f"cannot write under {directory}: {exc}") from exc
    try:
        with os.fdopen(fd, "w") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except OSError as exc:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise OutputUnwritable(f"cannot write {path}: {exc}") from exc


def write_sweep_csv(records, path):
    lines = [SWEEP_HEADER]
    for r in records:
        lines.append(",".join([
            fmt(r.phi), fmt(r.lambda_full), fmt(r.lambda_punctured),
            fmt(r.energy_full), fmt(r.energy_effective), fmt(r.psi_l2),
            r.phase, fmt(bool(r.converged)),
        ]))
    atomic_write(path, "\n".join(lines) + "\n")


def write_gaps_csv(rows, path):
    lines = [GAPS_HEADER]
    for row in rows:
        lines.append(",".join([fmt(row["n"]), fmt(row["phi"]),
                               fmt(row.get("gap_lambda")), fmt(row.get("gap_energy"))]))
    atomic_write(path, "\n".join(lines) + "\n")


def write_transitions_csv(report, path):
    lines = [TRANSITIONS_HEADER]
    for k, (pn, ps) in enumerate(zip(report.phi_normal, report.phi_super), start=1):
        lines.append(",".join([str(k), fmt(pn), fmt(ps), fmt(report.kappa)]))
    atomic_write(path, "\n".join(lines) + "\n")


def write_degennes_csv(rows, path):
    lines = [DEGENNES_HEADER]
    for b, phi, lam, ratio in rows:
        lines.append(",".join([fmt(b), fmt(phi), fmt(lam), fmt(ratio)]))
    atomic_write(path, "\n".join(lines) + "\n")


def write_grid_csv(grid, path):
    lines = ["index,x,y,class"]
    for k in range(grid.n_nodes):
        lines.append(f"{k},{fmt(grid.node_x[k])},{fmt(grid.node_y[k])},{CLASS_NAMES[int(grid.node_class[k])]}")
    atomic_write(path, "\n".join(lines) + "\n")


def write_scalar_csv(fieldvals, path):
    lines = ["index,value"]
    for k, v in enumerate(np.asarray(fieldvals)):
        lines.append(f"{k},{fmt(float(v))}")
    atomic_write(path, "\n".join(lines) + "\n")


def write_state_csv(state, path_prefix, meta):
    node_lines = ["index,re_psi,im_psi"]
    for k in range(state.psi.size):
        node_lines.append(f"{k},{fmt(float(state.psi[k].real))},{fmt(float(state.psi[k].imag))}")
    atomic_write(path_prefix + "_psi.csv", "\n".join(node_lines) + "\n")
    dual_lines = ["index,a"]
    for k in range(state.a.size):
        dual_lines.append(f"{k},{fmt(float(state.a[k]))}")
    atomic_write(path_prefix + "_a.csv", "\n".join(dual_lines) + "\n")
    atomic_write(path_prefix + "_meta.json", json.dumps(meta, sort_keys=True, indent=2) + "\n")


def write_manifest(manifest, path):
    atomic_write(path, json.dumps(manifest, sort_keys=True, indent=2) + "\n")
