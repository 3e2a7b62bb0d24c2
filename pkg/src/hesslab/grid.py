"""Uniform Cartesian grids on boxes and balls with cut-cell finite differences.

Every interior node carries second-difference stencils along the coordinate
axes and along the diagonals e_a +/- e_b. When a stencil arm leaves the
domain it is shortened to the exact boundary crossing, where the Dirichlet
value is taken from a boundary-data vector. Mixed derivatives come from the
diagonal pair, u_ab = (u_ee - u_ff) / 2 with e, f the unit diagonals; away
from the boundary this is the usual 4-point cross stencil.

The discrete Hessian is affine in (interior values, boundary values) and is
stored as sparse operators, ``H_ab = D_ab @ u + E_ab @ b``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

MAX_NODES_PER_AXIS = {2: 257, 3: 65}
MIN_INTERIOR_PER_AXIS = 8
# nodes closer than this (in units of h) to the boundary are not unknowns
SNAP = 1e-8


@dataclass(frozen=True)
class DomainSpec:
    """A box ``[lo, hi]`` or a ball ``|x - center| < radius`` in dimension 2 or 3."""

    shape: str
    dim: int
    lo: tuple[float, ...] | None = None
    hi: tuple[float, ...] | None = None
    center: tuple[float, ...] | None = None
    radius: float | None = None

    def __post_init__(self):
        if self.dim not in (2, 3):
            raise ValueError(f"dimension must be 2 or 3, got {self.dim}")
        if self.shape == "box":
            if self.lo is None or self.hi is None or len(self.lo) != self.dim or len(self.hi) != self.dim:
                raise ValueError("box needs lo and hi of length dim")
            if any(h <= l for l, h in zip(self.lo, self.hi)):
                raise ValueError("box extents must be positive")
        elif self.shape == "ball":
            if self.center is None or len(self.center) != self.dim:
                raise ValueError("ball needs a center of length dim")
            if self.radius is None or not self.radius > 0:
                raise ValueError("ball radius must be positive")
        else:
            raise ValueError(f"unknown domain shape {self.shape!r}")

    @classmethod
    def unit_ball(cls, dim: int) -> "DomainSpec":
        return cls("ball", dim, center=(0.0,) * dim, radius=1.0)

    @classmethod
    def unit_box(cls, dim: int) -> "DomainSpec":
        return cls("box", dim, lo=(0.0,) * dim, hi=(1.0,) * dim)

    @property
    def diameter(self) -> float:
        if self.shape == "ball":
            return 2.0 * self.radius
        return float(np.linalg.norm(np.subtract(self.hi, self.lo)))

    @property
    def midpoint(self) -> np.ndarray:
        if self.shape == "ball":
            return np.asarray(self.center, dtype=float)
        return 0.5 * (np.asarray(self.lo, dtype=float) + np.asarray(self.hi, dtype=float))

    def signed_distance(self, x: np.ndarray) -> np.ndarray:
        """Positive inside, zero on the boundary (exact for balls, inner distance for boxes)."""
        x = np.atleast_2d(x)
        if self.shape == "ball":
            return self.radius - np.linalg.norm(x - np.asarray(self.center), axis=1)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return np.minimum(x - lo, hi - x).min(axis=1)

    def exit_length(self, x: np.ndarray, d: np.ndarray) -> np.ndarray:
        """Smallest s > 0 with x + s d on the boundary, for interior points x."""
        if self.shape == "ball":
            y = x - np.asarray(self.center)
            dd = np.sum(d * d, axis=-1)
            b = np.sum(y * d, axis=-1)
            c = np.sum(y * y, axis=-1) - self.radius**2
            disc = np.sqrt(np.maximum(b * b - dd * c, 0.0))
            # -c >= 0 inside; this form avoids cancellation for b > 0
            return np.where(b > 0, -c / (b + disc), (disc - b) / dd)
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            s_hi = np.where(d > 0, (hi - x) / d, np.inf)
            s_lo = np.where(d < 0, (lo - x) / d, np.inf)
        return np.minimum(s_hi, s_lo).min(axis=-1)

    def corners(self) -> np.ndarray:
        if self.shape != "box":
            return np.zeros((0, self.dim))
        return np.array(list(itertools.product(*zip(self.lo, self.hi))), dtype=float)

    def to_dict(self) -> dict:
        if self.shape == "ball":
            return {"shape": "ball", "dim": self.dim, "center": list(self.center), "radius": self.radius}
        return {"shape": "box", "dim": self.dim, "lo": list(self.lo), "hi": list(self.hi)}


def _directions(dim: int) -> list[tuple[np.ndarray, tuple[int, int], int]]:
    """(integer offset, axis pair, sign) for axis and diagonal stencils."""
    out = []
    for a in range(dim):
        e = np.zeros(dim, dtype=int)
        e[a] = 1
        out.append((e, (a, a), 0))
    for a, b in itertools.combinations(range(dim), 2):
        for sgn in (1, -1):
            e = np.zeros(dim, dtype=int)
            e[a], e[b] = 1, sgn
            out.append((e, (a, b), sgn))
    return out


@dataclass
class _Arm:
    # per interior node: neighbor id (interior index or boundary-point index) and length
    is_interior: np.ndarray
    index: np.ndarray
    length: np.ndarray


def check_spacing(domain: DomainSpec, h: float) -> list[int]:
    """Nodes per axis for spacing h; raises ValueError if h is out of range."""
    if not h > 0:
        raise ValueError("grid spacing must be positive")
    if domain.shape == "box":
        counts = [int(np.floor((hi - l) / h + 1e-9)) + 1 for l, hi in zip(domain.lo, domain.hi)]
    else:
        m = int(np.floor(domain.radius / h + 1e-9)) + 1
        counts = [2 * m + 1] * domain.dim
    cap = MAX_NODES_PER_AXIS[domain.dim]
    if max(counts) > cap:
        raise ValueError(f"grid has {max(counts)} nodes per axis; cap in {domain.dim}D is {cap}")
    if min(counts) - 2 < MIN_INTERIOR_PER_AXIS:
        raise ValueError(f"spacing {h:g} leaves fewer than {MIN_INTERIOR_PER_AXIS} interior nodes per axis")
    return counts


class Grid:
    """Node-centered grid over a domain with cut-cell stencil operators."""

    def __init__(self, domain: DomainSpec, h: float):
        self.domain = domain
        self.h = float(h)
        dim = domain.dim
        counts = check_spacing(domain, h)
        if domain.shape == "box":
            self.origin = np.asarray(domain.lo, dtype=float)
        else:
            m = (counts[0] - 1) // 2
            self.origin = np.asarray(domain.center, dtype=float) - m * h
        self.shape = tuple(counts)

        axes = [self.origin[a] + h * np.arange(counts[a]) for a in range(dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        self.nodes = np.stack([m.ravel() for m in mesh], axis=1)
        dist = domain.signed_distance(self.nodes)
        inside = dist > SNAP * h
        self.node_id = np.full(self.nodes.shape[0], -1, dtype=np.int64)
        self.interior_flat = np.flatnonzero(inside)
        self.node_id[self.interior_flat] = np.arange(self.interior_flat.size)
        self.on_boundary_flat = np.flatnonzero(np.abs(dist) <= SNAP * h)
        self.points = self.nodes[self.interior_flat]
        self.multi_index = np.stack(np.unravel_index(self.interior_flat, self.shape), axis=1)
        self.distance = dist[self.interior_flat]

        per_axis = [np.unique(self.multi_index[:, a]).size for a in range(dim)]
        if min(per_axis, default=0) < MIN_INTERIOR_PER_AXIS:
            raise ValueError(f"grid resolves only {min(per_axis)} interior nodes along some axis")

        self._bpoints: list[np.ndarray] = []
        self._nb = 0
        self.arms: dict[tuple[int, int], tuple[_Arm, _Arm, np.ndarray]] = {}
        for off, pair, sgn in _directions(dim):
            plus = self._arm(off)
            minus = self._arm(-off)
            self.arms[(pair, sgn)] = (plus, minus, off)
        self.boundary_points = np.concatenate(self._bpoints) if self._bpoints else np.zeros((0, dim))

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_interior(self) -> int:
        return self.points.shape[0]

    @property
    def n_boundary(self) -> int:
        return self.boundary_points.shape[0]

    def _arm(self, off: np.ndarray) -> _Arm:
        n = self.n_interior
        step = off * self.h
        target = self.multi_index + off
        valid = np.all((target >= 0) & (target < np.asarray(self.shape)), axis=1)
        nb_flat = np.full(n, -1, dtype=np.int64)
        nb_flat[valid] = np.ravel_multi_index(tuple(target[valid].T), self.shape)
        nb_id = np.where(nb_flat >= 0, self.node_id[np.maximum(nb_flat, 0)], -1)
        is_int = nb_id >= 0
        full = float(np.linalg.norm(step))
        length = np.full(n, full)
        index = nb_id.copy()
        cut = ~is_int
        if cut.any():
            x = self.points[cut]
            s = self.domain.exit_length(x, np.broadcast_to(step.astype(float), x.shape))
            s = np.minimum(s, 1.0 + SNAP)
            length[cut] = s * full
            pts = x + s[:, None] * step
            index[cut] = self._nb + np.arange(pts.shape[0])
            self._nb += pts.shape[0]
            self._bpoints.append(pts)
        return _Arm(is_int, index, length)

    def _assemble(self, weights: list[tuple[np.ndarray, _Arm | None]]) -> tuple[sp.csr_matrix, sp.csr_matrix]:
        n = self.n_interior
        rows_i, cols_i, vals_i = [], [], []
        rows_b, cols_b, vals_b = [], [], []
        ids = np.arange(n)
        for w, arm in weights:
            if arm is None:
                rows_i.append(ids)
                cols_i.append(ids)
                vals_i.append(w)
                continue
            m = arm.is_interior
            rows_i.append(ids[m])
            cols_i.append(arm.index[m])
            vals_i.append(w[m])
            rows_b.append(ids[~m])
            cols_b.append(arm.index[~m])
            vals_b.append(w[~m])
        d = sp.csr_matrix(
            (np.concatenate(vals_i), (np.concatenate(rows_i), np.concatenate(cols_i))), shape=(n, n)
        )
        cat = lambda xs, dt: np.concatenate(xs) if xs else np.zeros(0, dtype=dt)  # noqa: E731
        e = sp.csr_matrix(
            (cat(vals_b, float), (cat(rows_b, np.int64), cat(cols_b, np.int64))), shape=(n, self.n_boundary)
        )
        return d, e

    def _second_dir(self, plus: _Arm, minus: _Arm):
        a, b = plus.length, minus.length
        wp = 2.0 / (a * (a + b))
        wm = 2.0 / (b * (a + b))
        w0 = -2.0 / (a * b)
        return self._assemble([(wp, plus), (wm, minus), (w0, None)])

    @cached_property
    def hessian_ops(self) -> dict[tuple[int, int], tuple[sp.csr_matrix, sp.csr_matrix]]:
        """Sparse maps for every Hessian entry (a, b) with a <= b."""
        ops = {}
        for a in range(self.dim):
            plus, minus, _ = self.arms[((a, a), 0)]
            ops[(a, a)] = self._second_dir(plus, minus)
        for a, b in itertools.combinations(range(self.dim), 2):
            dp = self._second_dir(*self.arms[((a, b), 1)][:2])
            dm = self._second_dir(*self.arms[((a, b), -1)][:2])
            ops[(a, b)] = ((0.5 * (dp[0] - dm[0])).tocsr(), (0.5 * (dp[1] - dm[1])).tocsr())
        return ops

    @cached_property
    def gradient_ops(self) -> list[tuple[sp.csr_matrix, sp.csr_matrix]]:
        ops = []
        for a in range(self.dim):
            plus, minus, _ = self.arms[((a, a), 0)]
            p, m = plus.length, minus.length
            wp = m / (p * (p + m))
            wm = -p / (m * (p + m))
            w0 = (p - m) / (p * m)
            ops.append(self._assemble([(wp, plus), (wm, minus), (w0, None)]))
        return ops

    def hessians(self, u: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Discrete Hessians at every interior node, shape (N, dim, dim)."""
        out = np.empty((self.n_interior, self.dim, self.dim))
        for (a, c), (d, e) in self.hessian_ops.items():
            v = d @ u + e @ b
            out[:, a, c] = v
            out[:, c, a] = v
        return out

    def gradients(self, u: np.ndarray, b: np.ndarray) -> np.ndarray:
        return np.stack([d @ u + e @ b for d, e in self.gradient_ops], axis=1)

    def locate(self, node) -> int:
        """Interior index of ``node`` given as an interior index or a grid multi-index."""
        if np.ndim(node) == 0:
            i = int(node)
            if not 0 <= i < self.n_interior:
                raise IndexError(f"interior index {i} out of range")
            return i
        idx = tuple(int(v) for v in node)
        if len(idx) != self.dim or any(not 0 <= v < s for v, s in zip(idx, self.shape)):
            raise IndexError(f"grid index {idx} outside the grid")
        i = int(self.node_id[np.ravel_multi_index(idx, self.shape)])
        if i < 0:
            raise IndexError(f"grid node {idx} is not an interior node")
        return i

    def corner_distance(self) -> np.ndarray:
        c = self.domain.corners()
        if c.shape[0] == 0:
            return np.full(self.n_interior, np.inf)
        return np.min(np.linalg.norm(self.points[:, None, :] - c[None], axis=2), axis=1)


@dataclass
class GridField:
    """Node values on a grid: interior unknowns plus boundary data at cut points."""

    grid: Grid
    u: np.ndarray
    boundary: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=float)
        self.boundary = np.asarray(self.boundary, dtype=float)
        if self.u.shape != (self.grid.n_interior,):
            raise ValueError("interior value vector does not match the grid")
        if self.boundary.shape != (self.grid.n_boundary,):
            raise ValueError("boundary value vector does not match the grid")

    @classmethod
    def from_function(cls, grid: Grid, fn, boundary_fn=None) -> "GridField":
        """Sample ``fn`` at interior nodes; boundary data from ``boundary_fn`` (default ``fn``)."""
        bfn = fn if boundary_fn is None else boundary_fn
        return cls(grid, fn(grid.points), bfn(grid.boundary_points))

    @property
    def h(self) -> float:
        return self.grid.h

    def hessians(self) -> np.ndarray:
        return self.grid.hessians(self.u, self.boundary)

    def gradients(self) -> np.ndarray:
        return self.grid.gradients(self.u, self.boundary)

    def copy(self) -> "GridField":
        return GridField(self.grid, self.u.copy(), self.boundary.copy(), dict(self.meta))

    def dump_rows(self) -> tuple[list[str], np.ndarray]:
        """Interior and on-boundary grid nodes in row-major order with their values."""
        g = self.grid
        names = ["x", "y", "z"][: g.dim] + ["u"]
        flat = np.union1d(g.interior_flat, g.on_boundary_flat)
        vals = np.zeros(flat.size)
        ids = g.node_id[flat]
        vals[ids >= 0] = self.u[ids[ids >= 0]]
        return names, np.column_stack([g.nodes[flat], vals])


def hessian_fd(field: GridField, node) -> np.ndarray:
    """Discrete Hessian at one interior node (interior index or grid multi-index)."""
    i = field.grid.locate(node)
    g = field.grid
    out = np.empty((g.dim, g.dim))
    for (a, c), (d, e) in g.hessian_ops.items():
        v = d.getrow(i) @ field.u + e.getrow(i) @ field.boundary
        out[a, c] = out[c, a] = v[0]
    return out


def gradient_fd(field: GridField, node) -> np.ndarray:
    """Discrete gradient at one interior node."""
    i = field.grid.locate(node)
    return np.array([(d.getrow(i) @ field.u + e.getrow(i) @ field.boundary)[0] for d, e in field.grid.gradient_ops])
