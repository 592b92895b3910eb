"""Reference-element machinery for the enriched Galerkin discretization.

Provides Gauss quadrature on the reference square and edge, bilinear Q1 shape
functions, the cell mapping with Jacobians, precomputed cell/edge quadrature
data for vectorized assembly, dof layout, and field evaluation with errors.

Velocity dof layout: 2 continuous dofs per vertex (interleaved x, y) followed
by one enrichment coefficient per cell; the enrichment basis on cell T is the
vector field (x - x_T) with x_T the vertex-average centroid.
"""

import numpy as np

REF_VERTICES = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])

MAX_QUAD_DEGREE = 13


def gauss1d(degree):
    """1D Gauss-Legendre rule exact for polynomials of the given degree."""
    if degree < 1 or degree > MAX_QUAD_DEGREE:
        raise ValueError("quadrature degree must be in [1, %d]" % MAX_QUAD_DEGREE)
    n = (degree + 2) // 2
    return np.polynomial.legendre.leggauss(n)


def quadrature_rule(kind, degree):
    """Tensor Gauss rule on the reference cell [-1,1]^2 or edge [-1,1].

    Returns (points, weights); cell points have shape (n, 2).
    """
    x, w = gauss1d(degree)
    if kind == "edge":
        return x, w
    if kind == "cell":
        xx, yy = np.meshgrid(x, x)
        pts = np.stack([xx.ravel(), yy.ravel()], axis=1)
        ww = np.outer(w, w).ravel()
        return pts, ww
    raise ValueError("kind must be 'cell' or 'edge'")


def q1_values(ref_pts):
    """Q1 shape function values; ref_pts (..., 2) -> (..., 4)."""
    xi = ref_pts[..., 0]
    eta = ref_pts[..., 1]
    out = np.empty(ref_pts.shape[:-1] + (4,))
    for i, (xv, yv) in enumerate(REF_VERTICES):
        out[..., i] = 0.25 * (1.0 + xi * xv) * (1.0 + eta * yv)
    return out


def q1_gradients(ref_pts):
    """Reference gradients of the Q1 shape functions; (..., 4, 2)."""
    xi = ref_pts[..., 0]
    eta = ref_pts[..., 1]
    out = np.empty(ref_pts.shape[:-1] + (4, 2))
    for i, (xv, yv) in enumerate(REF_VERTICES):
        out[..., i, 0] = 0.25 * xv * (1.0 + eta * yv)
        out[..., i, 1] = 0.25 * yv * (1.0 + xi * xv)
    return out


def _side_ref_coords(local_side, s):
    """Reference coordinates along a cell side at parameter s in [-1, 1].

    The parameter follows the cell's own counterclockwise traversal of the
    side (local vertex l to l+1).
    """
    shape = np.broadcast(local_side[..., None], s).shape
    ref = np.empty(shape + (2,))
    l = np.broadcast_to(local_side[..., None], shape)
    sv = np.broadcast_to(s, shape)
    ref[..., 0] = np.select([l == 0, l == 1, l == 2, l == 3], [sv, 1.0, -sv, -1.0])
    ref[..., 1] = np.select([l == 0, l == 1, l == 2, l == 3], [-1.0, sv, 1.0, -sv])
    return ref


class FemSpace:
    """Precomputed quadrature data on one mesh for all three fields.

    Parameters
    ----------
    mesh : Mesh
    cell_degree, edge_degree : int
        Polynomial exactness of the cell and edge Gauss rules.
    """

    def __init__(self, mesh, cell_degree=5, edge_degree=5):
        self.mesh = mesh
        nv, nc = mesh.n_vertices, mesh.n_cells
        self.n_u = 2 * nv + nc
        self.n_p = nc
        self.n_theta = nv

        self.qref, self.qw = quadrature_rule("cell", cell_degree)
        self.eref, self.ew = quadrature_rule("edge", edge_degree)
        self.nq = len(self.qw)
        self.nqe = len(self.ew)

        N, dN, xq, J, detJ = self.cell_point_data(self.qref)
        self.N = q1_values(self.qref)
        self.dN_ref = q1_gradients(self.qref)
        self.xq = xq
        self.J = J
        self.detJ = detJ
        if np.any(detJ <= 0.0):
            raise ValueError("non-positive Jacobian determinant")
        Jinv = np.linalg.inv(J)
        self.dN = np.einsum("qib,cqba->cqia", self.dN_ref, Jinv)
        self.wdet = self.qw[None, :] * detJ

        # local velocity dofs per cell: 8 vertex dofs then the enrichment
        cells = mesh.cells
        self.cell_udofs = np.empty((nc, 9), dtype=np.int64)
        self.cell_udofs[:, 0:8:2] = 2 * cells
        self.cell_udofs[:, 1:8:2] = 2 * cells + 1
        self.cell_udofs[:, 8] = 2 * nv + np.arange(nc)

        self._build_edge_sides()
        self._build_edge_traces()

    # ------------------------------------------------------------------
    # mapping
    # ------------------------------------------------------------------
    def cell_point_data(self, ref_pts, cells=None):
        """Map shared reference points into every cell (or a subset).

        Returns (N, dN_phys, x, J, detJ) with leading axes (n_cells, n_pts).
        """
        mesh = self.mesh
        which = slice(None) if cells is None else cells
        verts = mesh.vertices[mesh.cells[which]]
        N = q1_values(ref_pts)
        dN_ref = q1_gradients(ref_pts)
        x = np.einsum("qi,cia->cqa", N, verts)
        J = np.einsum("cia,qib->cqab", verts, dN_ref)
        detJ = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
        Jinv = np.linalg.inv(J)
        dN = np.einsum("qib,cqba->cqia", dN_ref, Jinv)
        return N, dN, x, J, detJ

    def map_to_physical(self, cell, ref_pts):
        """Physical points, Jacobians and determinants for one cell."""
        ref = np.atleast_2d(ref_pts)
        verts = self.mesh.vertices[self.mesh.cells[cell]]
        N = q1_values(ref)
        x = N @ verts
        dN_ref = q1_gradients(ref)
        J = np.einsum("ia,qib->qab", verts, dN_ref)
        detJ = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        return x, J, detJ

    def inverse_map(self, cell, points, tol=1e-13, max_iter=30):
        """Reference coordinates of physical points in a cell (Newton)."""
        pts = np.atleast_2d(points).astype(float)
        verts = self.mesh.vertices[self.mesh.cells[cell]]
        ref = np.zeros_like(pts)
        for _ in range(max_iter):
            N = q1_values(ref)
            res = N @ verts - pts
            if np.max(np.abs(res)) < tol:
                break
            dN_ref = q1_gradients(ref)
            J = np.einsum("ia,qib->qab", verts, dN_ref)
            ref -= np.linalg.solve(J, res[..., None])[..., 0]
        N = q1_values(ref)
        if np.max(np.abs(N @ verts - pts)) > 1e-9:
            raise ValueError("inverse map did not converge; point outside cell?")
        return ref if np.ndim(points) > 1 else ref[0]

    # ------------------------------------------------------------------
    # edge data
    # ------------------------------------------------------------------
    def _build_edge_sides(self):
        mesh = self.mesh
        ne = mesh.n_edges
        self.edge_side_cell = np.full((ne, 2), -1, dtype=np.int64)
        self.edge_side_local = np.zeros((ne, 2), dtype=np.int64)
        self.edge_side_orient = np.ones((ne, 2))
        for c in range(mesh.n_cells):
            for l in range(4):
                e = mesh.cell_edges[c, l]
                slot = 0 if mesh.edge_cells[e, 0] == c else 1
                self.edge_side_cell[e, slot] = c
                self.edge_side_local[e, slot] = l
                self.edge_side_orient[e, slot] = (
                    1.0 if mesh.cells[c, l] == mesh.edges[e, 0] else -1.0
                )

    def _build_edge_traces(self):
        mesh = self.mesh
        ne, nqe = mesh.n_edges, self.nqe
        a = mesh.vertices[mesh.edges[:, 0]]
        b = mesh.vertices[mesh.edges[:, 1]]
        t = 0.5 * (self.eref + 1.0)
        self.exq = a[:, None, :] + t[None, :, None] * (b - a)[:, None, :]
        self.ew_scaled = 0.5 * mesh.edge_lengths[:, None] * self.ew[None, :]

        self.eN = np.zeros((ne, 2, nqe, 4))
        self.edN = np.zeros((ne, 2, nqe, 4, 2))
        self.eref_side = np.zeros((ne, 2, nqe, 2))
        for slot in (0, 1):
            valid = self.edge_side_cell[:, slot] >= 0
            cells = self.edge_side_cell[valid, slot]
            local = self.edge_side_local[valid, slot]
            orient = self.edge_side_orient[valid, slot]
            s = orient[:, None] * self.eref[None, :]
            ref = _side_ref_coords(local, s)
            verts = mesh.vertices[mesh.cells[cells]]
            N = q1_values(ref)
            dN_ref = q1_gradients(ref)
            J = np.einsum("cia,cqib->cqab", verts, dN_ref)
            Jinv = np.linalg.inv(J)
            dN = np.einsum("cqib,cqba->cqia", dN_ref, Jinv)
            self.eN[valid, slot] = N
            self.edN[valid, slot] = dN
            self.eref_side[valid, slot] = ref

    # ------------------------------------------------------------------
    # field evaluation
    # ------------------------------------------------------------------
    def velocity_at_quadrature(self, u):
        """EG velocity at the cell quadrature points, shape (nc, nq, 2)."""
        mesh = self.mesh
        nv = mesh.n_vertices
        vx = u[0 : 2 * nv : 2][mesh.cells]
        vy = u[1 : 2 * nv : 2][mesh.cells]
        cg = np.stack(
            [np.einsum("qi,ci->cq", self.N, vx), np.einsum("qi,ci->cq", self.N, vy)],
            axis=2,
        )
        c_t = u[2 * nv :]
        return cg + c_t[:, None, None] * (self.xq - mesh.cell_centroids[:, None, :])

    def temperature_at_quadrature(self, theta):
        """Q1 temperature at the cell quadrature points, shape (nc, nq)."""
        return np.einsum("qi,ci->cq", self.N, theta[self.mesh.cells])

    def temperature_gradient_at_quadrature(self, theta):
        """Q1 temperature gradient at the quadrature points, (nc, nq, 2)."""
        return np.einsum("cqia,ci->cqa", self.dN, theta[self.mesh.cells])

    def velocity_edge_trace(self, u, slot):
        """One-sided EG velocity trace at edge quadrature points.

        slot 0 is the plus cell, slot 1 the minus cell (zeros on boundary
        edges).  Shape (ne, nqe, 2).
        """
        mesh = self.mesh
        nv = mesh.n_vertices
        cells = np.maximum(self.edge_side_cell[:, slot], 0)
        vx = u[0 : 2 * nv : 2][mesh.cells[cells]]
        vy = u[1 : 2 * nv : 2][mesh.cells[cells]]
        N = self.eN[:, slot]
        cg = np.stack(
            [np.einsum("eqi,ei->eq", N, vx), np.einsum("eqi,ei->eq", N, vy)], axis=2
        )
        c_t = u[2 * nv :][cells]
        enr = c_t[:, None, None] * (self.exq - mesh.cell_centroids[cells][:, None, :])
        out = cg + enr
        out[self.edge_side_cell[:, slot] < 0] = 0.0
        return out

    def evaluate_velocity(self, u, cell, points):
        """EG velocity at physical points inside one cell."""
        pts = np.atleast_2d(points)
        ref = self.inverse_map(cell, pts)
        N = q1_values(np.atleast_2d(ref))
        nv = self.mesh.n_vertices
        verts = self.mesh.cells[cell]
        vx = N @ u[2 * verts]
        vy = N @ u[2 * verts + 1]
        c_t = u[2 * nv + cell]
        enr = c_t * (pts - self.mesh.cell_centroids[cell])
        out = np.stack([vx, vy], axis=1) + enr
        return out if np.ndim(points) > 1 else out[0]

    def evaluate_temperature(self, theta, cell, points):
        """Q1 temperature at physical points inside one cell."""
        pts = np.atleast_2d(points)
        ref = self.inverse_map(cell, pts)
        N = q1_values(np.atleast_2d(ref))
        out = N @ theta[self.mesh.cells[cell]]
        return out if np.ndim(points) > 1 else out[0]

    def interpolate_velocity(self, func, t=0.0):
        """EG coefficients with vertex values of func and zero enrichment."""
        u = np.zeros(self.n_u)
        vals = np.asarray(func(self.mesh.vertices, t), dtype=float)
        u[0 : 2 * self.mesh.n_vertices : 2] = vals[:, 0]
        u[1 : 2 * self.mesh.n_vertices : 2] = vals[:, 1]
        return u

    # ------------------------------------------------------------------
    # norms and errors
    # ------------------------------------------------------------------
    def velocity_l2_error(self, u, exact, t=0.0):
        uh = self.velocity_at_quadrature(u)
        ue = np.asarray(exact(self.xq.reshape(-1, 2), t)).reshape(uh.shape)
        return np.sqrt(np.sum(self.wdet * np.sum((uh - ue) ** 2, axis=2)))

    def velocity_l2_norm(self, u):
        uh = self.velocity_at_quadrature(u)
        return np.sqrt(np.sum(self.wdet * np.sum(uh**2, axis=2)))

    def pressure_l2_error(self, p, exact):
        pe = np.asarray(exact(self.xq.reshape(-1, 2))).reshape(self.wdet.shape)
        return np.sqrt(np.sum(self.wdet * (p[:, None] - pe) ** 2))

    def temperature_l2_error(self, theta, exact, t=0.0):
        th = self.temperature_at_quadrature(theta)
        te = np.asarray(exact(self.xq.reshape(-1, 2), t)).reshape(th.shape)
        return np.sqrt(np.sum(self.wdet * (th - te) ** 2))
