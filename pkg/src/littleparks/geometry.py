"""Domains, the uniform staircase grid, and plaquette overlap weights.

The outer region holds the superconductor; the inner region carries the
applied magnetic field.  Both are approximated on a uniform lattice: nodes
strictly inside the outer boundary are active, and unit cells whose four
corners are all active become plaquettes.  Each plaquette gets an overlap
weight a_p = area(cell & inner)/|inner|; the weights are renormalized so
they sum to 1.0 exactly, which later makes loop circulations of the link
field quantize exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDomain, SpacingTooCoarse

# node classes
INTERIOR_OMEGA0 = 0  # bulk of the punctured region
INTERIOR_OMEGA = 1   # inside the field region
OUTER_BOUNDARY = 2   # active node adjacent to the exterior
INNER_BOUNDARY = 3   # active node just outside the field region (Dirichlet ring)

CLASS_NAMES = {
    INTERIOR_OMEGA0: "interior_omega0",
    INTERIOR_OMEGA: "interior_omega",
    OUTER_BOUNDARY: "outer_boundary",
    INNER_BOUNDARY: "inner_boundary",
}


@dataclass(frozen=True)
class Disk:
    center: tuple
    radius: float

    kind = "disk"

    def contains(self, x, y):
        cx, cy = self.center
        return (x - cx) ** 2 + (y - cy) ** 2 < self.radius**2

    def sdf(self, x, y):
        cx, cy = self.center
        return np.hypot(x - cx, y - cy) - self.radius

    def area(self):
        return math.pi * self.radius**2

    def bbox(self):
        cx, cy = self.center
        r = self.radius
        return (cx - r, cy - r, cx + r, cy + r)

    def boundary_points(self, n=4096):
        t = np.linspace(0.0, 2.0 * math.pi, n, endpoint=False)
        cx, cy = self.center
        return cx + self.radius * np.cos(t), cy + self.radius * np.sin(t)

    def cell_overlap(self, x0, y0, x1, y1):
        """Exact area of [x0,x1]x[y0,y1] intersected with the disk."""
        cx, cy = self.center
        return _disk_strip_area(self.radius, x0 - cx, x1 - cx, y0 - cy, y1 - cy)


@dataclass(frozen=True)
class Rect:
    center: tuple
    width: float
    height: float

    kind = "rect"

    def _bounds(self):
        cx, cy = self.center
        return cx - self.width / 2, cx + self.width / 2, cy - self.height / 2, cy + self.height / 2

    def contains(self, x, y):
        rx0, rx1, ry0, ry1 = self._bounds()
        return (x > rx0) & (x < rx1) & (y > ry0) & (y < ry1)

    def sdf(self, x, y):
        rx0, rx1, ry0, ry1 = self._bounds()
        cx, cy = self.center
        dx = np.abs(np.asarray(x, dtype=float) - cx) - self.width / 2
        dy = np.abs(np.asarray(y, dtype=float) - cy) - self.height / 2
        outside = np.hypot(np.maximum(dx, 0.0), np.maximum(dy, 0.0))
        inside = np.minimum(np.maximum(dx, dy), 0.0)
        return outside + inside

    def area(self):
        return self.width * self.height

    def bbox(self):
        rx0, rx1, ry0, ry1 = self._bounds()
        return (rx0, ry0, rx1, ry1)

    def boundary_points(self, n=4096):
        rx0, rx1, ry0, ry1 = self._bounds()
        per = max(n // 4, 2)
        up_x = np.linspace(rx0, rx1, per, endpoint=False)
        up_y = np.linspace(ry0, ry1, per, endpoint=False)
        dn_x = np.linspace(rx1, rx0, per, endpoint=False)
        dn_y = np.linspace(ry1, ry0, per, endpoint=False)
        xs = np.concatenate([up_x, np.full(per, rx1), dn_x, np.full(per, rx0)])
        ys = np.concatenate([np.full(per, ry0), up_y, np.full(per, ry1), dn_y])
        return xs, ys

    def cell_overlap(self, x0, y0, x1, y1):
        rx0, rx1, ry0, ry1 = self._bounds()
        dx = min(x1, rx1) - max(x0, rx0)
        dy = min(y1, ry1) - max(y0, ry0)
        if dx <= 0.0 or dy <= 0.0:
            return 0.0
        return dx * dy


def _arc_antiderivative(R, u):
    # antiderivative of sqrt(R^2 - u^2)
    s = min(max(u / R, -1.0), 1.0)
    return 0.5 * (u * math.sqrt(max(R * R - u * u, 0.0)) + R * R * math.asin(s))


def _disk_strip_area(R, u0, u1, b0, b1):
    """Area of {u in [u0,u1], v in [b0,b1], u^2+v^2 <= R^2} for a disk at the origin.

    Piecewise closed form: the integrand min(b1,t(u)) - max(b0,-t(u)) with
    t = sqrt(R^2-u^2) changes branch only where t crosses |b0| or |b1|, so
    splitting there makes every subinterval a single analytic case.
    """
    lo, hi = max(u0, -R), min(u1, R)
    if lo >= hi or b1 <= b0:
        return 0.0
    cuts = {lo, hi}
    for b in (b0, b1):
        if abs(b) < R:
            c = math.sqrt(R * R - b * b)
            for u in (-c, c):
                if lo < u < hi:
                    cuts.add(u)
    pts = sorted(cuts)
    area = 0.0
    for p, q in zip(pts[:-1], pts[1:]):
        m = 0.5 * (p + q)
        t = math.sqrt(max(R * R - m * m, 0.0))
        top_arc = t < b1
        bot_arc = -t > b0
        top_m = t if top_arc else b1
        bot_m = -t if bot_arc else b0
        if top_m <= bot_m:
            continue
        dT = _arc_antiderivative(R, q) - _arc_antiderivative(R, p)
        if top_arc and bot_arc:
            area += 2.0 * dT
        elif top_arc:
            area += dT - b0 * (q - p)
        elif bot_arc:
            area += b1 * (q - p) + dT
        else:
            area += (b1 - b0) * (q - p)
    return area


def _bisect_crossing(shape, p_in, p_out, iters=80):
    """Boundary point on the segment p_in (inside) -> p_out (outside)."""
    ax, ay = p_in
    bx, by = p_out
    for _ in range(iters):
        mx, my = 0.5 * (ax + bx), 0.5 * (ay + by)
        if float(shape.sdf(mx, my)) < 0.0:
            ax, ay = mx, my
        else:
            bx, by = mx, my
    return 0.5 * (ax + bx), 0.5 * (ay + by)


def _chord_clip_area(shape, x0, y0, x1, y1):
    """Polygon area of cell & shape with the boundary replaced by chords."""
    corners = [(x0, y0), (x1, y0), (x1, y1), (x0, y1)]
    inside = [float(shape.sdf(x, y)) < 0.0 for (x, y) in corners]
    poly = []
    for k in range(4):
        a, b = corners[k], corners[(k + 1) % 4]
        if inside[k]:
            poly.append(a)
        if inside[k] != inside[(k + 1) % 4]:
            p_in, p_out = (a, b) if inside[k] else (b, a)
            poly.append(_bisect_crossing(shape, p_in, p_out))
    if len(poly) < 3:
        return 0.0
    s = 0.0
    for k in range(len(poly)):
        xa, ya = poly[k]
        xb, yb = poly[(k + 1) % len(poly)]
        s += xa * yb - xb * ya
    return 0.5 * abs(s)


def quadtree_overlap(shape, x0, y0, x1, y1, max_depth=20):
    """Adaptive-subdivision overlap area for shapes exposing only contains/sdf.

    Cells are split while the boundary may cross them; unresolved leaves at
    the depth cap are closed with a chord clip.  Used as the shape-agnostic
    fallback and as a cross-check of the closed-form paths.
    """
    total = 0.0
    stack = [(x0, y0, x1, y1, 0)]
    while stack:
        a0, b0, a1, b1, depth = stack.pop()
        mx, my = 0.5 * (a0 + a1), 0.5 * (b0 + b1)
        half_diag = 0.5 * math.hypot(a1 - a0, b1 - b0)
        d = float(shape.sdf(mx, my))
        if d <= -half_diag:
            total += (a1 - a0) * (b1 - b0)
        elif d >= half_diag:
            continue
        elif depth >= max_depth or depth >= 9:
            total += _chord_clip_area(shape, a0, b0, a1, b1)
        else:
            stack.append((a0, b0, mx, my, depth + 1))
            stack.append((mx, b0, a1, my, depth + 1))
            stack.append((a0, my, mx, b1, depth + 1))
            stack.append((mx, my, a1, b1, depth + 1))
    return total


def cell_overlap_area(shape, x0, y0, x1, y1):
    """Area of an axis-aligned cell intersected with a shape.

    Fast paths classify the cell with the signed distance at its center;
    disks and rectangles then use their closed forms, anything else falls
    back to the adaptive quadtree.
    """
    hx, hy = x1 - x0, y1 - y0
    half_diag = 0.5 * math.hypot(hx, hy)
    d = float(shape.sdf(0.5 * (x0 + x1), 0.5 * (y0 + y1)))
    if d <= -half_diag:
        return hx * hy
    if d >= half_diag:
        return 0.0
    if hasattr(shape, "cell_overlap"):
        return shape.cell_overlap(x0, y0, x1, y1)
    return quadtree_overlap(shape, x0, y0, x1, y1)


def overlap_weight(spec, x0, y0, h):
    """Overlap weight a_p of the unit cell with lower-left corner (x0, y0)."""
    return cell_overlap_area(spec.inner, x0, y0, x0 + h, y0 + h) / spec.inner_area


@dataclass(frozen=True)
class DomainSpec:
    """Outer domain plus the strictly contained inner field region."""

    outer: Disk | Rect
    inner: Disk | Rect
    eps0: float = None          # min distance between the two boundaries
    inner_area: float = None

    def __post_init__(self):
        if self.outer.area() <= 0.0 or self.inner.area() <= 0.0:
            raise DegenerateDomain("both regions need positive area")
        bx, by = self.inner.boundary_points(4096)
        d = self.outer.sdf(bx, by)
        if np.any(d >= 0.0):
            raise DegenerateDomain("inner region is not strictly contained in the outer one")
        eps0 = float(np.min(-d))
        if eps0 <= 0.0:
            raise DegenerateDomain("boundaries touch")
        object.__setattr__(self, "eps0", eps0)
        object.__setattr__(self, "inner_area", float(self.inner.area()))


class Grid:
    """Immutable uniform grid with node classes, edges, and plaquette weights.

    Nodes are indexed in C order over (ix, iy), so ids are sorted by (x, y).
    Edges are stored once, oriented from the lower to the higher node id
    (+x for horizontal, +y for vertical).  `cell_edges`/`cell_edge_signs`
    give the counterclockwise circulation stencil of each plaquette, and
    `edge_cell_pos`/`edge_cell_neg` the two plaquettes adjacent to an edge
    (pos minus neg is the stream-function difference convention).
    """

    def __init__(self, **kw):
        for k, v in kw.items():
            if isinstance(v, np.ndarray):
                v.setflags(write=False)
            setattr(self, k, v)

    @property
    def n_nodes(self):
        return self.node_x.size

    @property
    def n_edges(self):
        return self.edge_i.size

    @property
    def n_cells(self):
        return self.cell_ix.size

    def node_positions(self):
        return self.node_x, self.node_y

    def punctured_dofs(self):
        """Node ids carrying degrees of freedom of the punctured problem."""
        return np.flatnonzero((self.node_class == INTERIOR_OMEGA0) | (self.node_class == OUTER_BOUNDARY))

    def edge_between(self, i, j):
        """(edge id, sign) for adjacent node ids; sign is +1 when traversing i -> j
        follows the stored low-to-high orientation."""
        a, b = (i, j) if i < j else (j, i)
        ix, iy = self.node_ix[a], self.node_iy[a]
        jx, jy = self.node_ix[b], self.node_iy[b]
        if jx == ix + 1 and jy == iy:
            e = self.ex_id2d[ix, iy]
        elif jx == ix and jy == iy + 1:
            e = self.ey_id2d[ix, iy]
        else:
            raise ValueError("nodes are not grid neighbours")
        if e < 0:
            raise ValueError("edge is not active")
        return int(e), (1.0 if i < j else -1.0)

    def omega_nodes(self):
        return np.flatnonzero(self.node_class == INTERIOR_OMEGA)

    def domain_area_h(self):
        return self.n_nodes * self.h**2

    def omega_area_h(self):
        return self.omega_nodes().size * self.h**2


def _exact_unit_sum(w):
    """Rescale w so that math.fsum(w) == 1.0 bitwise."""
    w = np.asarray(w, dtype=float).copy()
    s = math.fsum(w)
    if s <= 0.0:
        raise DegenerateDomain("no overlap between the grid and the inner region")
    w /= s
    k = int(np.argmax(w))
    for _ in range(100):
        gap = 1.0 - math.fsum(w)
        if gap == 0.0:
            return w
        w[k] += gap
    raise AssertionError("unit-sum fixup did not converge")


def build_grid(spec: DomainSpec, h: float) -> Grid:
    """Build the uniform grid for a domain pair at spacing h.

    Raises SpacingTooCoarse unless h < eps0/4, so at least four cells span
    the gap between the two boundaries; that guarantee keeps the Dirichlet
    ring, the field-carrying plaquettes, and the outer staircase disjoint.
    """
    if not h > 0.0:
        raise SpacingTooCoarse("spacing must be positive")
    if not h < spec.eps0 / 4.0:
        raise SpacingTooCoarse(f"h={h} too coarse: need h < eps0/4 = {spec.eps0 / 4.0}")

    bx0, by0, bx1, by1 = spec.outer.bbox()
    cx, cy = 0.5 * (bx0 + bx1), 0.5 * (by0 + by1)
    mx = int(math.ceil((bx1 - bx0) / (2.0 * h))) + 1
    my = int(math.ceil((by1 - by0) / (2.0 * h))) + 1
    xs = (np.arange(2 * mx + 1) - mx) * h + cx   # exact +/- symmetry about the center
    ys = (np.arange(2 * my + 1) - my) * h + cy
    nx, ny = xs.size, ys.size
    X, Y = xs[:, None], ys[None, :]

    active = spec.outer.contains(X, Y)
    in_omega = active & spec.inner.contains(X, Y)

    def shifted_any(mask):
        out = np.zeros((nx, ny), dtype=bool)
        out[:-1, :] |= mask[1:, :]
        out[1:, :] |= mask[:-1, :]
        out[:, :-1] |= mask[:, 1:]
        out[:, 1:] |= mask[:, :-1]
        return out

    near_omega = shifted_any(in_omega)
    inactive = ~active
    near_exterior = shifted_any(inactive)
    # array border counts as exterior
    near_exterior[0, :] = near_exterior[-1, :] = True
    near_exterior[:, 0] = near_exterior[:, -1] = True

    node_class2d = np.full((nx, ny), -1, dtype=np.int8)
    node_class2d[active] = INTERIOR_OMEGA0
    node_class2d[active & near_exterior] = OUTER_BOUNDARY
    node_class2d[active & ~in_omega & near_omega] = INNER_BOUNDARY
    node_class2d[in_omega] = INTERIOR_OMEGA

    ids2d = np.full((nx, ny), -1, dtype=np.int64)
    ids2d[active] = np.arange(int(active.sum()))
    node_ix, node_iy = np.nonzero(active)
    node_x = xs[node_ix]
    node_y = ys[node_iy]
    node_class = node_class2d[active]

    # edges: +x then +y, each in C order
    ex_mask = active[:-1, :] & active[1:, :]
    ey_mask = active[:, :-1] & active[:, 1:]
    ex_id2d = np.full((nx - 1, ny), -1, dtype=np.int64)
    ey_id2d = np.full((nx, ny - 1), -1, dtype=np.int64)
    n_ex = int(ex_mask.sum())
    ex_id2d[ex_mask] = np.arange(n_ex)
    ey_id2d[ey_mask] = np.arange(int(ey_mask.sum())) + n_ex
    exi, exj = np.nonzero(ex_mask)
    eyi, eyj = np.nonzero(ey_mask)
    edge_i = np.concatenate([ids2d[:-1, :][ex_mask], ids2d[:, :-1][ey_mask]])
    edge_j = np.concatenate([ids2d[1:, :][ex_mask], ids2d[:, 1:][ey_mask]])
    edge_vertical = np.concatenate([np.zeros(n_ex, dtype=bool), np.ones(edge_i.size - n_ex, dtype=bool)])
    edge_ix = np.concatenate([exi, eyi])
    edge_iy = np.concatenate([exj, eyj])

    # plaquettes: all four corners active
    cell_act2d = active[:-1, :-1] & active[1:, :-1] & active[:-1, 1:] & active[1:, 1:]
    cell_id2d = np.full((nx - 1, ny - 1), -1, dtype=np.int64)
    cell_id2d[cell_act2d] = np.arange(int(cell_act2d.sum()))
    cell_ix, cell_iy = np.nonzero(cell_act2d)

    cell_edges = np.stack(
        [
            ex_id2d[cell_ix, cell_iy],       # bottom, +x
            ey_id2d[cell_ix + 1, cell_iy],   # right,  +y
            ex_id2d[cell_ix, cell_iy + 1],   # top
            ey_id2d[cell_ix, cell_iy],       # left
        ],
        axis=1,
    )
    if cell_edges.size and cell_edges.min() < 0:
        raise AssertionError("plaquette with a missing edge")
    cell_edge_signs = np.array([1.0, 1.0, -1.0, -1.0])

    # adjacent plaquettes per edge (stream difference: pos minus neg)
    def cell_at(ix, iy):
        ok = (ix >= 0) & (ix < nx - 1) & (iy >= 0) & (iy < ny - 1)
        out = np.full(ix.shape, -1, dtype=np.int64)
        out[ok] = cell_id2d[ix[ok], iy[ok]]
        return out

    pos_x = cell_at(exi, exj - 1)   # below a horizontal edge
    neg_x = cell_at(exi, exj)
    pos_y = cell_at(eyi, eyj)       # right of a vertical edge
    neg_y = cell_at(eyi - 1, eyj)
    edge_cell_pos = np.concatenate([pos_x, pos_y])
    edge_cell_neg = np.concatenate([neg_x, neg_y])

    # overlap areas; only plaquettes can meet the inner region (gap >= 4h)
    ccx = (xs[:-1] + 0.5 * h)[:, None]
    ccy = (ys[:-1] + 0.5 * h)[None, :]
    half_diag = 0.5 * h * math.sqrt(2.0)
    sdf_c = spec.inner.sdf(ccx + 0.0 * ccy, ccy + 0.0 * ccx)
    touches = np.abs(sdf_c) < 2.0 * half_diag
    if np.any(touches & ~cell_act2d):
        raise AssertionError("inner region reaches an inactive cell; spacing gate violated")

    areas = np.zeros(cell_ix.size)
    full_in = (sdf_c <= -half_diag)[cell_ix, cell_iy]
    areas[full_in] = h * h
    for k in np.flatnonzero(~full_in & (sdf_c[cell_ix, cell_iy] < half_diag)):
        x0 = xs[cell_ix[k]]
        y0 = ys[cell_iy[k]]
        areas[k] = cell_overlap_area(spec.inner, x0, y0, x0 + h, y0 + h)

    raw_sum = math.fsum(areas)
    weights = _exact_unit_sum(areas)
    w2d = np.zeros((nx - 1, ny - 1))
    w2d[cell_ix, cell_iy] = weights

    # dual (cell-center) Dirichlet nodes for the Poisson solve
    dual_mask2d = spec.outer.contains(ccx + 0.0 * ccy, ccy + 0.0 * ccx)
    dual_id2d = np.full((nx - 1, ny - 1), -1, dtype=np.int64)
    dual_id2d[dual_mask2d] = np.arange(int(dual_mask2d.sum()))
    dual_ix, dual_iy = np.nonzero(dual_mask2d)

    # stream-function dofs: plaquettes whose four cell neighbours are plaquettes
    inner_cell = cell_act2d.copy()
    inner_cell[0, :] = inner_cell[-1, :] = False
    inner_cell[:, 0] = inner_cell[:, -1] = False
    inner_cell[1:-1, 1:-1] &= (
        cell_act2d[:-2, 1:-1] & cell_act2d[2:, 1:-1] & cell_act2d[1:-1, :-2] & cell_act2d[1:-1, 2:]
    )
    a_dof_mask = inner_cell[cell_ix, cell_iy]

    degree = np.bincount(np.concatenate([edge_i, edge_j]), minlength=node_x.size).astype(np.int64)

    return Grid(
        spec=spec,
        h=float(h),
        origin=(float(xs[0]), float(ys[0])),
        nx=nx,
        ny=ny,
        xs=xs,
        ys=ys,
        ids2d=ids2d,
        node_ix=node_ix,
        node_iy=node_iy,
        node_x=node_x,
        node_y=node_y,
        node_class=node_class,
        node_degree=degree,
        edge_i=edge_i,
        edge_j=edge_j,
        edge_vertical=edge_vertical,
        edge_ix=edge_ix,
        edge_iy=edge_iy,
        ex_id2d=ex_id2d,
        ey_id2d=ey_id2d,
        edge_cell_pos=edge_cell_pos,
        edge_cell_neg=edge_cell_neg,
        cell_id2d=cell_id2d,
        cell_ix=cell_ix,
        cell_iy=cell_iy,
        cell_edges=cell_edges,
        cell_edge_signs=cell_edge_signs,
        cell_area=areas,
        cell_weight=weights,
        cell_weight2d=w2d,
        raw_overlap_sum=raw_sum,
        a_dof_mask=a_dof_mask,
        dual_id2d=dual_id2d,
        dual_ix=dual_ix,
        dual_iy=dual_iy,
    )
