"""Conforming quadrilateral meshes with oriented edge topology.

Cells are strictly convex quadrilaterals listed counterclockwise.  Every edge
stores its two incident cells (the lower cell index is the plus cell), a unit
normal pointing from the plus cell to the minus cell (outward on the
boundary), and a boundary label used to attach boundary conditions.
"""

import numpy as np
from scipy import sparse


class Mesh:
    """Immutable quadrilateral mesh with edge topology and boundary labels.

    Parameters
    ----------
    vertices : array (n_vertices, 2)
        Vertex coordinates.
    cells : array (n_cells, 4)
        Vertex indices per cell, counterclockwise.
    boundary_labels : dict, optional
        Maps a frozenset {v0, v1} of boundary-edge endpoints to a string
        label.  Unlisted boundary edges receive the label "boundary".
    """

    def __init__(self, vertices, cells, boundary_labels=None):
        self.vertices = np.ascontiguousarray(vertices, dtype=float)
        self.cells = np.ascontiguousarray(cells, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 2:
            raise ValueError("vertices must be (n, 2)")
        if self.cells.ndim != 2 or self.cells.shape[1] != 4:
            raise ValueError("cells must be (n, 4)")
        self._check_convexity()
        self._build_edges(boundary_labels or {})
        self.cell_centroids = self.vertices[self.cells].mean(axis=1)

    def _check_convexity(self):
        pts = self.vertices[self.cells]
        cross = np.empty((len(self.cells), 4))
        for k in range(4):
            a = pts[:, (k + 1) % 4] - pts[:, k]
            b = pts[:, (k + 2) % 4] - pts[:, (k + 1) % 4]
            cross[:, k] = a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]
        if np.any(cross <= 0.0):
            bad = np.where((cross <= 0.0).any(axis=1))[0]
            raise ValueError(
                "non-convex or wrongly oriented cells: %s" % bad[:10].tolist()
            )

    def _build_edges(self, boundary_labels):
        nc = len(self.cells)
        index = {}
        # first visit fixes the traversal direction; that cell becomes a
        # candidate for the plus side
        first_cell = []
        first_side = []
        second_cell = []
        verts_ab = []
        for c in range(nc):
            for l in range(4):
                a = self.cells[c, l]
                b = self.cells[c, (l + 1) % 4]
                key = (a, b) if a < b else (b, a)
                if key not in index:
                    index[key] = len(first_cell)
                    first_cell.append(c)
                    first_side.append(l)
                    second_cell.append(-1)
                    verts_ab.append((a, b))
                else:
                    e = index[key]
                    if second_cell[e] != -1:
                        raise ValueError("edge shared by more than two cells")
                    second_cell[e] = c

        ne = len(first_cell)
        edges = np.array(verts_ab, dtype=np.int64)
        cell_pair = np.stack(
            [np.array(first_cell, dtype=np.int64), np.array(second_cell, dtype=np.int64)],
            axis=1,
        )
        # plus cell = lower cell index; cells are visited in order, so the
        # first visitor already has the lower index and its traversal (a, b)
        # is kept
        self.edges = edges
        self.edge_cells = cell_pair
        tang = self.vertices[edges[:, 1]] - self.vertices[edges[:, 0]]
        self.edge_lengths = np.linalg.norm(tang, axis=1)
        if np.any(self.edge_lengths <= 0.0):
            raise ValueError("zero-length edge")
        self.edge_normals = (
            np.stack([tang[:, 1], -tang[:, 0]], axis=1) / self.edge_lengths[:, None]
        )

        self.cell_edges = np.empty((nc, 4), dtype=np.int64)
        self.cell_edge_signs = np.empty((nc, 4), dtype=np.int64)
        for c in range(nc):
            for l in range(4):
                a = self.cells[c, l]
                b = self.cells[c, (l + 1) % 4]
                key = (a, b) if a < b else (b, a)
                e = index[key]
                self.cell_edges[c, l] = e
                self.cell_edge_signs[c, l] = 1 if cell_pair[e, 0] == c else -1

        boundary = cell_pair[:, 1] == -1
        self.boundary_mask = boundary
        self.interior_edges = np.where(~boundary)[0]
        self.boundary_edges = np.where(boundary)[0]

        labels = sorted({str(v) for v in boundary_labels.values()} | {"boundary"})
        self.labels = labels
        name_to_id = {name: i for i, name in enumerate(labels)}
        self.edge_label = np.full(ne, -1, dtype=np.int64)
        default = name_to_id["boundary"]
        for e in self.boundary_edges:
            key = frozenset(edges[e])
            name = boundary_labels.get(key)
            self.edge_label[e] = default if name is None else name_to_id[str(name)]

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_edges(self):
        return len(self.edges)

    def boundary_edges_with(self, label):
        """Indices of boundary edges carrying the given label."""
        if label not in self.labels:
            return np.empty(0, dtype=np.int64)
        lid = self.labels.index(label)
        return np.where(self.edge_label == lid)[0]

    def edge_label_names(self):
        """Label name per boundary edge as a dict edge -> name."""
        return {int(e): self.labels[self.edge_label[e]] for e in self.boundary_edges}

    def cell_areas(self):
        """Exact areas via the shoelace formula (edges are straight)."""
        pts = self.vertices[self.cells]
        x = pts[..., 0]
        y = pts[..., 1]
        return 0.5 * np.abs(
            np.sum(x * np.roll(y, -1, axis=1) - np.roll(x, -1, axis=1) * y, axis=1)
        )

    def cell_diameters(self):
        """Max diagonal length per cell."""
        pts = self.vertices[self.cells]
        d1 = np.linalg.norm(pts[:, 2] - pts[:, 0], axis=1)
        d2 = np.linalg.norm(pts[:, 3] - pts[:, 1], axis=1)
        return np.maximum(d1, d2)


def _grid(nx, ny, domain):
    (x0, x1), (y0, y1) = domain
    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    xx, yy = np.meshgrid(xs, ys)
    vertices = np.stack([xx.ravel(), yy.ravel()], axis=1)

    def vid(i, j):
        return j * (nx + 1) + i

    cells = np.empty((nx * ny, 4), dtype=np.int64)
    k = 0
    for j in range(ny):
        for i in range(nx):
            cells[k] = (vid(i, j), vid(i + 1, j), vid(i + 1, j + 1), vid(i, j + 1))
            k += 1
    return vertices, cells


def _rectangle_labels(vertices, cells, domain, tol=1e-12):
    """Label outer boundary edges of an axis-aligned domain by side."""
    (x0, x1), (y0, y1) = domain
    labels = {}
    probe = Mesh(vertices, cells)
    for e in probe.boundary_edges:
        a, b = probe.edges[e]
        mid = 0.5 * (vertices[a] + vertices[b])
        if abs(mid[0] - x0) < tol:
            name = "left"
        elif abs(mid[0] - x1) < tol:
            name = "right"
        elif abs(mid[1] - y0) < tol:
            name = "bottom"
        elif abs(mid[1] - y1) < tol:
            name = "top"
        else:
            name = "pore"
        labels[frozenset((int(a), int(b)))] = name
    return labels


def build_uniform_quad_mesh(nx, ny, domain=((0.0, 1.0), (0.0, 1.0))):
    """Uniform nx-by-ny quadrilateral mesh of an axis-aligned rectangle.

    Boundary edges are labelled left/right/bottom/top.
    """
    if nx < 1 or ny < 1:
        raise ValueError("cell counts must be positive")
    vertices, cells = _grid(nx, ny, domain)
    return Mesh(vertices, cells, _rectangle_labels(vertices, cells, domain))


def build_trapezoid_mesh(nx, ny, distortion=0.3, domain=((0.0, 1.0), (0.0, 1.0))):
    """Alternating-trapezoid distortion of the uniform mesh.

    Interior vertices on every other vertical mesh line are shifted
    vertically by +/- distortion*h with the sign alternating along the
    column, producing pairs of congruent trapezoids.  Doubling nx, ny at
    fixed distortion refines within the same shape family.
    """
    if not 0.0 <= distortion < 0.5:
        raise ValueError("distortion must lie in [0, 0.5)")
    if nx < 1 or ny < 1:
        raise ValueError("cell counts must be positive")
    vertices, cells = _grid(nx, ny, domain)
    (y0, y1) = domain[1]
    h = (y1 - y0) / ny
    shifted = vertices.copy()
    for j in range(1, ny):
        for i in range(1, nx, 2):
            v = j * (nx + 1) + i
            shifted[v, 1] += distortion * h * (1.0 if j % 2 == 0 else -1.0)
    return Mesh(shifted, cells, _rectangle_labels(shifted, cells, domain))


def build_pore_mesh(nx, ny, holes, domain=((0.0, 1.0), (0.0, 1.0)),
                    smoothing_sweeps=8, smoothing_band=3.0):
    """Uniform mesh with circular holes cut out and tagged "pore".

    Cells whose centroid falls inside a hole are removed.  Each surviving
    vertex that touches the removed region is projected radially onto the
    circle of the hole that claimed its neighbouring cells, so every hole
    boundary is a polygon inscribed in its circle.  Cells that the
    projection would invert are removed as well (they are the cells the
    circle actually crosses), and a few Laplacian smoothing sweeps relax
    the surrounding cells, with projected vertices sliding along their
    circle.  Vertices whose removed neighbours belong to two different
    holes are left in place; they occur only in the narrow gap between
    close holes where no single circle is the right target.

    Holes must be disjoint and strictly inside the domain.  The base grid
    must resolve each hole with a few cells per radius; if the cleanup
    above still cannot produce a convex mesh, a ValueError asks for a
    finer base mesh.

    Parameters
    ----------
    holes : list of ((cx, cy), radius)
    smoothing_sweeps : int
        Jacobi smoothing sweeps applied near the holes after projection.
    smoothing_band : float
        Width, in cells, of the ring around each hole that is smoothed.
    """
    vertices, cells = _grid(nx, ny, domain)
    if not holes:
        return Mesh(vertices, cells, _rectangle_labels(vertices, cells, domain))
    centers = np.array([h[0] for h in holes], dtype=float)
    radii = np.array([h[1] for h in holes], dtype=float)
    (x0, x1), (y0, y1) = domain
    if np.any(centers[:, 0] - radii <= x0) or np.any(centers[:, 0] + radii >= x1):
        raise ValueError("hole touches the domain boundary")
    if np.any(centers[:, 1] - radii <= y0) or np.any(centers[:, 1] + radii >= y1):
        raise ValueError("hole touches the domain boundary")
    for i in range(len(holes)):
        for j in range(i + 1, len(holes)):
            if np.linalg.norm(centers[i] - centers[j]) <= radii[i] + radii[j]:
                raise ValueError("holes intersect")

    nv = len(vertices)
    h = max((x1 - x0) / nx, (y1 - y0) / ny)
    centroids = vertices[cells].mean(axis=1)
    cdist = np.linalg.norm(centroids[:, None, :] - centers[None, :, :], axis=2)
    inside_cell = cdist < radii[None, :]
    cell_hole = np.where(inside_cell.any(axis=1), inside_cell.argmax(axis=1), -1)

    vdist = np.linalg.norm(vertices[:, None, :] - centers[None, :, :], axis=2)
    inside_vert = vdist < radii[None, :]
    vert_hole = np.where(inside_vert.any(axis=1), inside_vert.argmax(axis=1), -1)
    nearest = vdist.argmin(axis=1)
    near = vdist[np.arange(nv), nearest] < radii[nearest] + smoothing_band * h
    eps = 1e-12 * max(x1 - x0, y1 - y0)
    on_outer = ((np.abs(vertices[:, 0] - x0) < eps)
                | (np.abs(vertices[:, 0] - x1) < eps)
                | (np.abs(vertices[:, 1] - y0) < eps)
                | (np.abs(vertices[:, 1] - y1) < eps))

    def snapped(pos, idx, hole):
        d = pos[idx] - centers[hole]
        norm = np.linalg.norm(d, axis=1)
        if np.any(norm == 0.0):
            raise ValueError("vertex coincides with a hole center; refine the base mesh")
        return centers[hole] + d * (radii[hole] / norm)[:, None]

    for _ in range(100):
        keep = cell_hole == -1
        if not keep.any():
            raise ValueError("holes removed every cell; refine the base mesh")
        # hole id per vertex, inherited from adjacent removed cells; a
        # vertex strictly inside a circle always targets that circle, and
        # a vertex between the removed regions of two holes targets none
        lo = np.full(nv, len(holes), dtype=np.int64)
        hi = np.full(nv, -1, dtype=np.int64)
        rverts = cells[~keep].ravel()
        rholes = np.repeat(cell_hole[~keep], 4)
        np.minimum.at(lo, rverts, rholes)
        np.maximum.at(hi, rverts, rholes)
        assign = np.where((hi >= 0) & (lo == hi), hi, -1)
        assign = np.where(vert_hole >= 0, vert_hole, assign)
        kept_vert = np.zeros(nv, dtype=bool)
        kept_vert[cells[keep].ravel()] = True
        assign[~kept_vert] = -1
        project = assign >= 0

        pos = vertices.copy()
        pidx = np.where(project)[0]
        pos[pidx] = snapped(pos, pidx, assign[pidx])

        quads = cells[keep]
        a = quads.ravel()
        b = quads[:, [1, 2, 3, 0]].ravel()
        pairs = np.unique(np.concatenate([np.stack([a, b], 1),
                                          np.stack([b, a], 1)]), axis=0)
        adj = sparse.csr_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                                shape=(nv, nv))
        midx = np.where(kept_vert & near & ~on_outer)[0]
        sidx = midx[project[midx]]
        deg = np.diff(adj.indptr)[midx].astype(float)[:, None]
        for _ in range(smoothing_sweeps):
            pos[midx] = adj[midx].dot(pos) / deg
            if len(sidx):
                pos[sidx] = snapped(pos, sidx, assign[sidx])

        pts = pos[cells[keep]]
        cross = np.empty((len(pts), 4))
        for k in range(4):
            da = pts[:, (k + 1) % 4] - pts[:, k]
            db = pts[:, (k + 2) % 4] - pts[:, (k + 1) % 4]
            cross[:, k] = da[:, 0] * db[:, 1] - da[:, 1] * db[:, 0]
        ok = (cross > 0.0).all(axis=1)
        if ok.all():
            break
        for c in np.where(keep)[0][~ok]:
            hs = assign[cells[c]]
            hs = hs[hs >= 0]
            cell_hole[c] = np.bincount(hs).argmax() if len(hs) else cdist[c].argmin()
    else:
        raise ValueError("hole projection degenerated a cell; refine the base mesh")

    kept_cells = cells[keep]
    used = np.unique(kept_cells)
    remap = -np.ones(nv, dtype=np.int64)
    remap[used] = np.arange(len(used))
    final_vertices = pos[used]
    final_cells = remap[kept_cells]
    labels = _rectangle_labels(final_vertices, final_cells, domain)
    try:
        return Mesh(final_vertices, final_cells, labels)
    except ValueError as err:
        raise ValueError(
            "hole projection degenerated a cell; refine the base mesh (%s)" % err
        ) from None


def write_mesh(mesh, path):
    """Write the plain-text mesh format (vertices / cells / boundary)."""
    with open(path, "w") as fh:
        fh.write("vertices %d\n" % mesh.n_vertices)
        for x, y in mesh.vertices:
            fh.write("%.17g %.17g\n" % (x, y))
        fh.write("cells %d\n" % mesh.n_cells)
        for quad in mesh.cells:
            fh.write("%d %d %d %d\n" % tuple(quad))
        fh.write("boundary %d\n" % len(mesh.boundary_edges))
        for e in mesh.boundary_edges:
            a, b = mesh.edges[e]
            fh.write("%d %d %s\n" % (a, b, mesh.labels[mesh.edge_label[e]]))


def read_mesh(path):
    """Read the plain-text mesh format written by write_mesh."""
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    pos = 0

    def expect(word):
        nonlocal pos
        if pos >= len(tokens) or tokens[pos] != word:
            raise ValueError("malformed mesh file: expected '%s'" % word)
        pos += 1
        n = int(tokens[pos])
        pos += 1
        return n

    nv = expect("vertices")
    vertices = np.array(tokens[pos : pos + 2 * nv], dtype=float).reshape(nv, 2)
    pos += 2 * nv
    nc = expect("cells")
    cells = np.array(tokens[pos : pos + 4 * nc], dtype=np.int64).reshape(nc, 4)
    pos += 4 * nc
    nb = expect("boundary")
    labels = {}
    for _ in range(nb):
        a, b, name = tokens[pos], tokens[pos + 1], tokens[pos + 2]
        labels[frozenset((int(a), int(b)))] = name
        pos += 3
    return Mesh(vertices, cells, labels)
