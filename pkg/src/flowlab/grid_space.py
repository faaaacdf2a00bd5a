"""Masked rectangular grid domains and graph approximations of planar metrics.

A domain is a rectangular lattice of nodes with spacing ``h``. Each node is
flagged Ambient, InY or Boundary; the Y region is the closed set InY|Boundary.
Two edge sets live on the lattice: the full ambient stencil graph, which
approximates the Euclidean metric of the plane, and the Y-restricted subset,
which approximates the induced length metric of the Y region. Distances are
single-source Dijkstra runs with edge weight = segment length times the
arithmetic mean of a positive per-node conformal factor at the endpoints.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components, dijkstra

from .errors import DisconnectedY, EmptyY, InvalidDomain, Unreachable

AMBIENT = 0
IN_Y = 1
BOUNDARY = 2

# Positive half of each stencil; every undirected edge is generated once.
_HALF_8 = ((1, 0), (0, 1), (1, 1), (1, -1))
_HALF_16 = _HALF_8 + ((2, 1), (2, -1), (1, 2), (-1, 2))

# Lattice points nearest to the midpoint of a non-axis offset. A restricted
# edge needs at least one of them inside Y so that the corridor it shortcuts
# through actually lies in the region.
_FLANKS = {
    (1, 1): ((1, 0), (0, 1)),
    (1, -1): ((1, 0), (0, -1)),
    (2, 1): ((1, 0), (1, 1)),
    (2, -1): ((1, 0), (1, -1)),
    (1, 2): ((0, 1), (1, 1)),
    (-1, 2): ((0, 1), (-1, 1)),
}

_KING = ((1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1))


@dataclass
class DomainSpec:
    """Named fixture plus the numeric knobs needed to realize it on a grid."""

    fixture: str
    h: float
    stencil: int = 16
    params: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path):
        """Read a spec from a TOML or JSON file (keys: fixture, h, stencil, rest)."""
        path = Path(path)
        if path.suffix.lower() == ".toml":
            try:
                import tomllib as toml_reader
            except ImportError:
                import tomli as toml_reader
            data = toml_reader.loads(path.read_text())
        else:
            data = json.loads(path.read_text())
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        fixture = data.pop("fixture")
        h = float(data.pop("h"))
        stencil = int(data.pop("stencil", 16))
        return cls(fixture=fixture, h=h, stencil=stencil, params=data)

    def to_dict(self):
        out = {"fixture": self.fixture, "h": self.h, "stencil": self.stencil}
        out.update(self.params)
        return out


@dataclass
class PathPolyline:
    """Ordered node path with per-segment lengths under a fixed edge weighting."""

    nodes: np.ndarray
    lengths: np.ndarray

    @property
    def total_length(self):
        return float(self.lengths.sum()) if self.lengths.size else 0.0

    def __len__(self):
        return len(self.nodes)


class GridDomain:
    """Immutable masked grid with ambient and Y-restricted connectivity.

    Attributes:
        nx, ny: node counts along x and y.
        h: grid spacing.
        origin: coordinates of node (0, 0).
        mask: flat int8 array in {AMBIENT, IN_Y, BOUNDARY}, index = i * ny + j.
        node_measure: per-node mass, default h^2.
        stencil: 8 or 16.
        edges: (E, 2) array of undirected edges (canonical direction).
        edge_length: exact Euclidean segment length h * ||offset|| per edge.
        y_edge: boolean flag marking edges of the Y-restricted graph.
    """

    def __init__(self, nx, ny, h, origin, mask, stencil, node_measure=None,
                 slit=None, validate=True):
        self.nx = int(nx)
        self.ny = int(ny)
        self.h = float(h)
        self.origin = (float(origin[0]), float(origin[1]))
        self.mask = np.asarray(mask, dtype=np.int8).reshape(self.nx * self.ny)
        self.stencil = int(stencil)
        if self.stencil not in (8, 16):
            raise ValueError(f"stencil must be 8 or 16, got {stencil}")
        if node_measure is None:
            node_measure = np.full(self.nx * self.ny, self.h ** 2)
        self.node_measure = np.asarray(node_measure, dtype=float)
        self.slit = slit

        self._prune_slivers()
        self._classify_boundary()
        self._build_edges()
        if validate:
            self._validate()

    # -- construction ------------------------------------------------------

    def _grid_ij(self):
        return np.meshgrid(np.arange(self.nx), np.arange(self.ny), indexing="ij")

    def _shift_all(self, arr, fill):
        """Yields arr shifted by every king offset, padding with `fill`."""
        for a, b in _KING:
            out = np.full_like(arr, fill)
            xs = slice(max(a, 0), self.nx + min(a, 0))
            xd = slice(max(-a, 0), self.nx + min(-a, 0))
            ys = slice(max(b, 0), self.ny + min(b, 0))
            yd = slice(max(-b, 0), self.ny + min(-b, 0))
            out[xd, yd] = arr[xs, ys]
            yield out

    def _prune_slivers(self):
        """Keep only the discrete closure of the discrete interior.

        Geometric masks can contain Y wedges thinner than one cell (e.g. where
        two circular arcs meet at a shallow angle). Such nodes are not adjacent
        to any interior node, so the grid cannot represent them as part of the
        closure of the interior; they are dropped, layer by layer, until every
        remaining node is interior or touches one.
        """
        in_y = (self.mask != AMBIENT).reshape(self.nx, self.ny)
        while True:
            has_ambient = np.zeros_like(in_y)
            for nb in self._shift_all(in_y, True):
                has_ambient |= ~nb
            interior = in_y & ~has_ambient
            closure = interior.copy()
            for nb in self._shift_all(interior, False):
                closure |= nb
            new = in_y & closure
            if np.array_equal(new, in_y):
                break
            in_y = new
        self.mask = np.where(in_y, IN_Y, AMBIENT).reshape(-1).astype(np.int8)

    def _classify_boundary(self):
        """A Y node with an Ambient king-move neighbor is Boundary."""
        in_y = (self.mask != AMBIENT).reshape(self.nx, self.ny)
        boundary = np.zeros_like(in_y)
        for a, b in _KING:
            # out-of-grid neighbors do not count as Ambient
            nb = np.ones_like(in_y)
            xs = slice(max(a, 0), self.nx + min(a, 0))
            xd = slice(max(-a, 0), self.nx + min(-a, 0))
            ys = slice(max(b, 0), self.ny + min(b, 0))
            yd = slice(max(-b, 0), self.ny + min(-b, 0))
            nb[xd, yd] = in_y[xs, ys]
            boundary |= in_y & ~nb
        mask = np.where(in_y, np.where(boundary, BOUNDARY, IN_Y), AMBIENT)
        self.mask = mask.reshape(-1).astype(np.int8)

    def _build_edges(self):
        half = _HALF_8 if self.stencil == 8 else _HALF_16
        nx, ny = self.nx, self.ny
        iny = (self.mask != AMBIENT)
        I, J = self._grid_ij()
        us, vs, lengths, yflags = [], [], [], []
        for a, b in half:
            ok = (I + a >= 0) & (I + a < nx) & (J + b >= 0) & (J + b < ny)
            Iu, Ju = I[ok], J[ok]
            u = Iu * ny + Ju
            v = (Iu + a) * ny + (Ju + b)
            us.append(u)
            vs.append(v)
            lengths.append(np.full(u.size, self.h * float(np.hypot(a, b))))
            yf = iny[u] & iny[v]
            if (a, b) in _FLANKS:
                # flank nodes sit in the bounding box of the edge, always in-grid
                fl = np.zeros(u.size, dtype=bool)
                for fa, fb in _FLANKS[(a, b)]:
                    fl |= iny[(Iu + fa) * ny + (Ju + fb)]
                yf &= fl
            yflags.append(yf)
        self.edges = np.stack(
            [np.concatenate(us), np.concatenate(vs)], axis=1
        ).astype(np.int64)
        self.edge_length = np.concatenate(lengths)
        y_edge = np.concatenate(yflags)
        if self.slit is not None:
            y_edge &= ~self._slit_crossings()
        self.y_edge = y_edge
        self._csr_cache = {}
        for arr in (self.edges, self.edge_length, self.y_edge, self.mask,
                    self.node_measure):
            arr.setflags(write=False)

    def _slit_crossings(self):
        """Edges whose segment crosses the horizontal ray {y = cy, x >= cx}."""
        cx, cy = self.slit
        xy_u = self.node_xy(self.edges[:, 0])
        xy_v = self.node_xy(self.edges[:, 1])
        dy_u = xy_u[:, 1] - cy
        dy_v = xy_v[:, 1] - cy
        opposite = dy_u * dy_v < 0
        cross = np.zeros(len(self.edges), dtype=bool)
        if opposite.any():
            t = dy_u[opposite] / (dy_u[opposite] - dy_v[opposite])
            x_cross = xy_u[opposite, 0] + t * (xy_v[opposite, 0] - xy_u[opposite, 0])
            cross[opposite] = x_cross >= cx - 1e-12
        return cross

    def _validate(self):
        y_nodes = self.y_nodes
        if y_nodes.size == 0:
            raise EmptyY("domain has no Y node")
        g = self.csr_graph(restrict_to_Y=True)
        n_comp, labels = connected_components(g, directed=False)
        if len(set(labels[y_nodes])) > 1:
            raise DisconnectedY("Y-restricted edge graph is disconnected")
        for b in np.flatnonzero(self.mask == BOUNDARY):
            i, j = divmod(int(b), self.ny)
            has_in_y = False
            for a, c in _KING:
                ii, jj = i + a, j + c
                if 0 <= ii < self.nx and 0 <= jj < self.ny:
                    if self.mask[ii * self.ny + jj] == IN_Y:
                        has_in_y = True
                        break
            if not has_in_y:
                raise InvalidDomain(
                    f"boundary node {int(b)} has no InY neighbor (Y too thin)"
                )

    # -- indexing ----------------------------------------------------------

    @property
    def n_nodes(self):
        return self.nx * self.ny

    @property
    def y_nodes(self):
        return np.flatnonzero(self.mask != AMBIENT)

    @property
    def is_y(self):
        return self.mask != AMBIENT

    def node_xy(self, nodes=None):
        """Coordinates of the given flat node indices (all nodes if None)."""
        if nodes is None:
            nodes = np.arange(self.n_nodes)
        nodes = np.asarray(nodes)
        i, j = np.divmod(nodes, self.ny)
        ox, oy = self.origin
        return np.stack([ox + i * self.h, oy + j * self.h], axis=-1)

    def nearest_node(self, point):
        """Flat index of the lattice node nearest to a continuous point."""
        ox, oy = self.origin
        i = int(np.clip(round((point[0] - ox) / self.h), 0, self.nx - 1))
        j = int(np.clip(round((point[1] - oy) / self.h), 0, self.ny - 1))
        return i * self.ny + j

    @property
    def bbox(self):
        ox, oy = self.origin
        return (ox, ox + (self.nx - 1) * self.h, oy, oy + (self.ny - 1) * self.h)

    def axis_y_edges(self):
        """Y-restricted axis-aligned edges (u, v) used by the PDE stencil."""
        axis = self.edge_length < self.h * 1.0000001
        keep = axis & self.y_edge
        return self.edges[keep, 0], self.edges[keep, 1]

    # -- graphs ------------------------------------------------------------

    def csr_graph(self, field_phi=None, restrict_to_Y=False):
        """Symmetric CSR adjacency with conformally weighted edge lengths."""
        key = (field_phi is None, bool(restrict_to_Y))
        if field_phi is None and key in self._csr_cache:
            return self._csr_cache[key]
        keep = self.y_edge if restrict_to_Y else slice(None)
        u = self.edges[keep, 0]
        v = self.edges[keep, 1]
        w = self.edge_length[keep]
        if field_phi is not None:
            phi = np.asarray(field_phi, dtype=float)
            w = w * 0.5 * (phi[u] + phi[v])
        g = sparse.csr_matrix(
            (np.concatenate([w, w]),
             (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self.n_nodes, self.n_nodes),
        )
        if field_phi is None:
            self._csr_cache[key] = g
        return g

    def king_graph(self):
        """Unweighted 8-neighbor adjacency used for cell-hop distances."""
        if "king" in self._csr_cache:
            return self._csr_cache["king"]
        nx, ny = self.nx, self.ny
        I, J = self._grid_ij()
        flat = I * ny + J
        us, vs = [], []
        for a, b in ((1, 0), (0, 1), (1, 1), (1, -1)):
            I2, J2 = I + a, J + b
            ok = (I2 >= 0) & (I2 < nx) & (J2 >= 0) & (J2 < ny)
            us.append(flat[ok])
            vs.append((I2 * ny + J2)[ok])
        u = np.concatenate(us)
        v = np.concatenate(vs)
        g = sparse.csr_matrix(
            (np.ones(2 * u.size),
             (np.concatenate([u, v]), np.concatenate([v, u]))),
            shape=(self.n_nodes, self.n_nodes),
        )
        self._csr_cache["king"] = g
        return g

    def hops_to_Y(self):
        """Per-node king-move hop count to the nearest Y node (0 on Y)."""
        if "hops" in self._csr_cache:
            return self._csr_cache["hops"]
        hops = dijkstra(self.king_graph(), indices=self.y_nodes,
                        unweighted=True, min_only=True)
        self._csr_cache["hops"] = hops
        return hops


# -- fixtures ----------------------------------------------------------------


def _lattice(x0, x1, y0, y1, h):
    nx = int(round((x1 - x0) / h)) + 1
    ny = int(round((y1 - y0) / h)) + 1
    if abs((x1 - x0) - (nx - 1) * h) > 1e-9 or abs((y1 - y0) - (ny - 1) * h) > 1e-9:
        raise ValueError("extent is not an integer number of cells")
    xs = x0 + np.arange(nx) * h
    ys = y0 + np.arange(ny) * h
    X, Y = np.meshgrid(xs, ys, indexing="ij")
    return nx, ny, X, Y


def _square_mask(spec, discs=()):
    h = spec.h
    size = float(spec.params.get("size", 1.0))
    margin_cells = int(round(float(spec.params.get("margin", 0.0)) / h))
    m = margin_cells * h
    nx, ny, X, Y = _lattice(-m, size + m, -m, size + m, h)
    tol = 1e-12
    in_y = (X >= -tol) & (X <= size + tol) & (Y >= -tol) & (Y <= size + tol)
    for cx, cy, r in discs:
        in_y &= (X - cx) ** 2 + (Y - cy) ** 2 >= r ** 2 - 1e-12
    return nx, ny, (-m, -m), in_y


def _build_fixture(spec):
    h = spec.h
    p = spec.params
    name = spec.fixture
    slit = None
    if name == "square":
        nx, ny, origin, in_y = _square_mask(spec)
    elif name == "square_minus_discs":
        discs = p.get("discs", [(0.5, 0.5, 0.25)])
        discs = [tuple(map(float, d)) for d in discs]
        nx, ny, origin, in_y = _square_mask(spec, discs)
    elif name == "l_shape":
        nx, ny, origin, in_y = _square_mask(spec)
        size = float(p.get("size", 1.0))
        X, Y = np.meshgrid(origin[0] + np.arange(nx) * h,
                           origin[1] + np.arange(ny) * h, indexing="ij")
        in_y &= ~((X > size / 2 + 1e-12) & (Y > size / 2 + 1e-12))
    elif name == "pacman":
        cx, cy = p.get("center", (0.5, 0.5))
        radius = float(p.get("radius", 0.4))
        bite_r = float(p.get("bite_radius", 0.25))
        nx, ny, X, Y = _lattice(0.0, 1.0, 0.0, 1.0, h)
        origin = (0.0, 0.0)
        bite_c = (cx + radius, cy)
        in_y = ((X - cx) ** 2 + (Y - cy) ** 2 <= radius ** 2 + 1e-12) & \
               ((X - bite_c[0]) ** 2 + (Y - bite_c[1]) ** 2 >= bite_r ** 2 - 1e-12)
    elif name in ("disc", "slit_disc"):
        radius = float(p.get("radius", 0.45))
        # center sits half a cell off the lattice rows so the slit ray never
        # passes through a node
        cx = float(p.get("cx", 0.5))
        cy = float(p.get("cy", 0.5)) + h / 2
        nx, ny, X, Y = _lattice(0.0, 1.0, 0.0, 1.0, h)
        origin = (0.0, 0.0)
        in_y = (X - cx) ** 2 + (Y - cy) ** 2 <= radius ** 2 + 1e-12
        if name == "slit_disc":
            slit = (cx, cy)
    elif name == "box":
        x0 = float(p.get("x0", 0.0))
        x1 = float(p.get("x1", 1.0))
        y0 = float(p.get("y0", 0.0))
        y1 = float(p.get("y1", 1.0))
        nx, ny, X, Y = _lattice(x0, x1, y0, y1, h)
        origin = (x0, y0)
        in_y = np.ones_like(X, dtype=bool)
    elif name == "explicit":
        mask2d = np.asarray(p["mask"], dtype=bool)
        nx, ny = mask2d.shape
        origin = tuple(p.get("origin", (0.0, 0.0)))
        in_y = mask2d
    else:
        raise ValueError(f"unknown fixture {name!r}")
    return nx, ny, origin, in_y, slit


def build_domain(spec):
    """Realize a DomainSpec as a validated GridDomain.

    Raises EmptyY / DisconnectedY / InvalidDomain when the mask violates the
    structural invariants of the type.
    """
    if spec.h <= 0:
        raise ValueError("grid spacing must be positive")
    nx, ny, origin, in_y, slit = _build_fixture(spec)
    mask = np.where(in_y, IN_Y, AMBIENT).astype(np.int8)
    return GridDomain(nx, ny, spec.h, origin, mask, spec.stencil, slit=slit)


# -- metric operations --------------------------------------------------------


def _phi_of(field):
    if field is None:
        return None
    phi = np.asarray(getattr(field, "phi", field), dtype=float)
    if np.any(phi <= 0):
        raise ValueError("conformal factor must be strictly positive")
    return phi


def graph_distance(domain, field, source, restrict_to_Y=False):
    """Single-source shortest-path distances under the (optionally) conformal
    edge weighting. Unreachable nodes carry +inf.
    """
    phi = _phi_of(field)
    source = int(source)
    if restrict_to_Y and domain.mask[source] == AMBIENT:
        raise ValueError("source must lie in Y when restrict_to_Y is set")
    g = domain.csr_graph(phi, restrict_to_Y)
    return dijkstra(g, indices=source)


def distance_matrix(domain, field, sources, restrict_to_Y=False):
    """Stacked single-source distance maps, one row per source."""
    phi = _phi_of(field)
    g = domain.csr_graph(phi, restrict_to_Y)
    return dijkstra(g, indices=np.asarray(sources, dtype=int))


def distance_to_set(domain, sources, field=None, restrict_to_Y=False):
    """Distance from each node to the nearest source node."""
    phi = _phi_of(field)
    g = domain.csr_graph(phi, restrict_to_Y)
    return dijkstra(g, indices=np.asarray(sources, dtype=int), min_only=True)


def trace_geodesic(domain, field, x, y, restrict_to_Y=False):
    """Shortest path from x to y as a PathPolyline.

    The polyline length reproduces the Dijkstra distance bit-exactly; ties in
    the predecessor choice are broken toward the lowest node index.
    """
    phi = _phi_of(field)
    x, y = int(x), int(y)
    g = domain.csr_graph(phi, restrict_to_Y)
    dist, pred = dijkstra(g, indices=x, return_predecessors=True)
    if not np.isfinite(dist[y]):
        raise Unreachable(f"node {y} is unreachable from {x}")
    if x == y:
        return PathPolyline(np.array([x]), np.array([]))
    indptr, indices, data = g.indptr, g.indices, g.data
    nodes = [y]
    lengths = []
    v = y
    for _ in range(domain.n_nodes):
        lo, hi = indptr[v], indptr[v + 1]
        nbrs = indices[lo:hi]
        w = data[lo:hi]
        exact = dist[nbrs] + w == dist[v]
        if exact.any():
            pick = int(np.argmin(np.where(exact, nbrs, domain.n_nodes)))
        else:  # numerical safety net; scipy's own predecessor always qualifies
            pick = int(np.flatnonzero(nbrs == pred[v])[0])
        lengths.append(float(w[pick]))
        v = int(nbrs[pick])
        nodes.append(v)
        if v == x:
            break
    else:
        raise Unreachable("predecessor walk failed to reach the source")
    return PathPolyline(np.array(nodes[::-1]), np.array(lengths[::-1]))
