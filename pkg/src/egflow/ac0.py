"""Lowest-order Arbogast-Correa element and the velocity reconstruction.

On each strictly convex quadrilateral the AC0 space is spanned by three
shifted-position fields (x - x_2), (x - x_4), (x - x_1) and one Piola-mapped
field (J/det J)(xi, -eta).  Every member has a constant normal component on
each straight edge, so the four edge fluxes are unisolvent degrees of
freedom.  The reconstruction operator assigns to an EG velocity the unique
piecewise-AC0 field whose edge fluxes are the integrals of the averaged EG
trace (with boundary rules distinguishing the continuous and enriched
parts), which makes the result H(div)-conforming by construction.
"""

import numpy as np
import scipy.sparse as sp

# local vertex whose position shifts generator k (k = 0, 1, 2)
GENERATOR_SHIFT_VERTEX = (1, 3, 0)
# flux of the Piola generator over reference sides (v0v1, v1v2, v2v3, v3v0)
PIOLA_SIDE_FLUX = np.array([-2.0, 2.0, -2.0, 2.0])


def generator_flux_matrix(quad):
    """Edge-flux matrix of the four generators on one quadrilateral.

    Entry (j, k) is the flux of generator k over local edge j = (v_j,
    v_{j+1}) with outward normal.  The shifted-position fluxes are twice the
    signed triangle areas spanned by the shift vertex and the edge; the
    Piola fluxes are +/-2 by flux preservation.
    """
    quad = np.asarray(quad, dtype=float)
    F = np.empty((4, 4))
    for j in range(4):
        a = quad[j]
        b = quad[(j + 1) % 4]
        t = b - a
        n = np.array([t[1], -t[0]])  # outward for a CCW cell, length |e|
        mid = 0.5 * (a + b)
        for k in range(3):
            F[j, k] = np.dot(mid - quad[GENERATOR_SHIFT_VERTEX[k]], n)
        F[j, 3] = PIOLA_SIDE_FLUX[j]
    return F


class AC0Basis:
    """Per-cell AC0 basis with unit outward edge fluxes.

    Basis function i of a cell has flux delta_ij over local edge j
    (outward normal).  Values are precomputed at the cell quadrature points
    of the given FemSpace.
    """

    def __init__(self, space):
        self.space = space
        mesh = space.mesh
        verts = mesh.vertices[mesh.cells]  # (nc, 4, 2)

        mids = 0.5 * (verts + np.roll(verts, -1, axis=1))  # (nc, 4, 2)
        tang = np.roll(verts, -1, axis=1) - verts
        nrm = np.stack([tang[..., 1], -tang[..., 0]], axis=2)  # outward, length |e|
        F = np.empty((mesh.n_cells, 4, 4))
        for k in range(3):
            shift = verts[:, GENERATOR_SHIFT_VERTEX[k], :]
            F[:, :, k] = np.einsum("cja,cja->cj", mids - shift[:, None, :], nrm)
        F[:, :, 3] = PIOLA_SIDE_FLUX[None, :]
        self.dof_matrix = F
        self.coeffs = np.linalg.inv(F)  # column i holds the coefficients of psi_i

        # div Psi_k = 2 for the shifted positions, 0 for the Piola field
        self.div = 2.0 * self.coeffs[:, 0:3, :].sum(axis=1)  # (nc, 4)

        self.psi = self._values(space.qref, space.xq, space.J, space.detJ)

    def _values(self, ref_pts, x, J, detJ):
        """Basis values from precomputed map data; returns (nc, npts, 2, 4)."""
        mesh = self.space.mesh
        verts = mesh.vertices[mesh.cells]
        gen = np.empty(x.shape[:2] + (2, 4))
        for k in range(3):
            gen[..., k] = x - verts[:, None, GENERATOR_SHIFT_VERTEX[k], :]
        ref_vec = np.stack(
            [ref_pts[..., 0], -ref_pts[..., 1]], axis=-1
        )  # (npts, 2)
        gen[..., 3] = np.einsum("cqab,qb->cqa", J, ref_vec) / detJ[..., None]
        return np.einsum("cqak,cki->cqai", gen, self.coeffs)

    def values_at(self, ref_pts):
        """Basis values at shared reference points in all cells."""
        _, _, x, J, detJ = self.space.cell_point_data(np.atleast_2d(ref_pts))
        return self._values(np.atleast_2d(ref_pts), x, J, detJ)

    def values_in_cell(self, cell, points):
        """Basis values at physical points of one cell, (npts, 2, 4)."""
        pts = np.atleast_2d(points)
        ref = np.atleast_2d(self.space.inverse_map(cell, pts))
        verts = self.space.mesh.vertices[self.space.mesh.cells[cell]]
        gen = np.empty((len(pts), 2, 4))
        for k in range(3):
            gen[..., k] = pts - verts[GENERATOR_SHIFT_VERTEX[k]]
        _, J, detJ = self.space.map_to_physical(cell, ref)
        ref_vec = np.stack([ref[:, 0], -ref[:, 1]], axis=1)
        gen[..., 3] = np.einsum("qab,qb->qa", J, ref_vec) / detJ[:, None]
        return gen @ self.coeffs[cell]


class Reconstruction:
    """Edge-flux reconstruction of EG velocities into the AC0 space.

    Parameters
    ----------
    basis : AC0Basis
    dirichlet_edges, neumann_edges : arrays of boundary edge indices
        On Dirichlet edges the enrichment flux is dropped and the continuous
        flux kept; on Neumann edges both are kept.
    """

    def __init__(self, basis, dirichlet_edges=(), neumann_edges=()):
        self.basis = basis
        space = basis.space
        mesh = space.mesh
        self.mesh = mesh
        nv, nc, ne = mesh.n_vertices, mesh.n_cells, mesh.n_edges

        kind = np.zeros(ne, dtype=np.int64)  # 0 interior, 1 Dirichlet, 2 Neumann
        kind[np.asarray(dirichlet_edges, dtype=np.int64)] = 1
        kind[np.asarray(neumann_edges, dtype=np.int64)] = 2
        untagged = set(mesh.boundary_edges) - set(np.where(kind > 0)[0])
        if untagged:
            raise ValueError("boundary edges without a fluid tag: %s" % sorted(untagged)[:5])
        if np.any(kind[mesh.interior_edges] != 0):
            raise ValueError("interior edges must not carry fluid tags")
        self.edge_kind = kind

        rows, cols, vals = [], [], []
        n = mesh.edge_normals
        L = mesh.edge_lengths
        mid = 0.5 * (mesh.vertices[mesh.edges[:, 0]] + mesh.vertices[mesh.edges[:, 1]])
        # continuous part: the trace is single valued, flux = |e|/2 (v(a)+v(b)).n
        for end in (0, 1):
            v = mesh.edges[:, end]
            for d in (0, 1):
                rows.append(np.arange(ne))
                cols.append(2 * v + d)
                vals.append(0.5 * L * n[:, d])
        # enriched part: half flux from each side on interior edges, full on
        # Neumann edges, none on Dirichlet edges
        for slot in (0, 1):
            cells = mesh.edge_cells[:, slot]
            present = cells >= 0
            weight = np.where(kind == 0, 0.5, np.where(kind == 2, 1.0, 0.0))
            cc = np.maximum(cells, 0)
            flux = (
                weight
                * L
                * np.einsum("ea,ea->e", mid - mesh.cell_centroids[cc], n)
            )
            rows.append(np.arange(ne)[present])
            cols.append(2 * nv + cc[present])
            vals.append(flux[present])
        self.G = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(ne, space.n_u),
        )

        gather_rows = np.arange(4 * nc)
        gather_cols = mesh.cell_edges.ravel()
        gather_vals = mesh.cell_edge_signs.ravel().astype(float)
        P = sp.csr_matrix(
            (gather_vals, (gather_rows, gather_cols)), shape=(4 * nc, ne)
        )
        self.QG = (P @ self.G).tocsr()

        W = np.einsum(
            "cqai,cqaj,cq->cij", basis.psi, basis.psi, space.wdet, optimize=True
        )
        self.Wb = sp.bsr_matrix(
            (W, np.arange(nc), np.arange(nc + 1)), shape=(4 * nc, 4 * nc)
        )
        self.mass = (self.QG.T @ (self.Wb @ self.QG)).tocsr()
        self._areas = mesh.cell_areas()

    def fluxes(self, u):
        """Edge fluxes of the reconstructed field (global edge normals)."""
        return self.G @ u

    def cell_fluxes(self, fluxes):
        """Outward-signed fluxes per cell, shape (nc, 4)."""
        return self.mesh.cell_edge_signs * fluxes[self.mesh.cell_edges]

    def cell_divergence(self, fluxes):
        """Constant divergence per cell of the reconstructed field."""
        return self.cell_fluxes(fluxes).sum(axis=1) / self._areas

    def velocity_at_quadrature(self, fluxes):
        """Reconstructed velocity at cell quadrature points, (nc, nq, 2)."""
        return np.einsum("cqai,ci->cqa", self.basis.psi, self.cell_fluxes(fluxes))

    def edge_normal_component(self, fluxes):
        """Constant normal velocity per edge w.r.t. the global normal."""
        return fluxes / self.mesh.edge_lengths

    def evaluate(self, fluxes, cell, points):
        """Reconstructed velocity at physical points of one cell."""
        psi = self.basis.values_in_cell(cell, points)
        out = psi @ self.cell_fluxes(fluxes)[cell]
        return out if np.ndim(points) > 1 else out[0]
