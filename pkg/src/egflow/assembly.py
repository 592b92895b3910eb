"""Assembly of the heat system, the EG fluid saddle system, and its
pressure-robust variant.

The velocity block couples 9 local dofs per cell (8 vertex dofs and the
enrichment coefficient).  Interior and Dirichlet edges carry interior-penalty
viscous terms with symmetrization parameter zeta (zeta = 1 gives the
symmetric interior penalty form) and upwind advection terms; Dirichlet data
enters the right-hand side through the consistent penalty/adjoint terms while
the continuous part of the velocity is additionally constrained strongly at
boundary vertices.  In pressure-robust mode the time, buoyancy, forcing, and
advection velocities are replaced by their H(div) reconstructions; the
viscous, penalty, and pressure-coupling terms are unchanged.
"""

import numpy as np
import scipy.sparse as sp

from .ac0 import AC0Basis, Reconstruction


class AssemblyConfig:
    """Discretization parameters shared by all assembled systems.

    Parameters
    ----------
    dt : float
        Time step of the backward Euler scheme.
    Re, Ri, Pr : floats
        Reynolds, Richardson, and Prandtl numbers.
    kappa : float, optional
        Thermal diffusivity; defaults to 1/(Re*Pr) and must match it.
    zeta : int
        Symmetrization parameter in {-1, 0, 1}; 1 is symmetric.
    alpha : float
        Positive jump penalty weight.
    use_reconstruction : bool
        Pressure-robust mode (reconstructed velocities in mass, advection,
        and forcing terms).
    stabilization_c : float
        Constant c of the artificial diffusion kappa_theta = c*h_T*max|u|.
    e_hat : pair
        Unit buoyancy direction.
    include_advection : bool
        Assemble the convective forms (disable for Stokes-type tests).
    """

    def __init__(
        self,
        dt,
        Re=1.0,
        Ri=0.0,
        Pr=1.0,
        kappa=None,
        zeta=1,
        alpha=6.0,
        use_reconstruction=True,
        stabilization_c=0.0,
        e_hat=(0.0, 1.0),
        include_advection=True,
    ):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        if alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if zeta not in (-1, 0, 1):
            raise ValueError("zeta must be one of -1, 0, 1")
        if stabilization_c < 0.0:
            raise ValueError("stabilization_c must be nonnegative")
        self.dt = float(dt)
        self.Re = float(Re)
        self.Ri = float(Ri)
        self.Pr = float(Pr)
        default_kappa = 1.0 / (self.Re * self.Pr)
        if kappa is None:
            kappa = default_kappa
        elif abs(kappa - default_kappa) > 1e-14 * max(1.0, abs(default_kappa)):
            raise ValueError("kappa must equal 1/(Re*Pr)")
        self.kappa = float(kappa)
        self.zeta = int(zeta)
        self.alpha = float(alpha)
        self.use_reconstruction = bool(use_reconstruction)
        self.stabilization_c = float(stabilization_c)
        self.e_hat = np.asarray(e_hat, dtype=float)
        if abs(np.linalg.norm(self.e_hat) - 1.0) > 1e-12:
            raise ValueError("e_hat must be a unit vector")
        self.include_advection = bool(include_advection)


class BoundaryData:
    """Boundary conditions attached to mesh labels.

    fluid maps label -> ("dirichlet", u_D(x, t)) or ("neumann", t_N(x, t));
    heat maps label -> ("dirichlet", theta_D(x, t)) or ("neumann",
    q_N(x, t)).  A datum of None means zero.  Every label present on the
    mesh must be assigned in both fields.
    """

    def __init__(self, fluid, heat):
        for d in (fluid, heat):
            for label, (kind, _) in d.items():
                if kind not in ("dirichlet", "neumann"):
                    raise ValueError("unknown boundary kind %r on %r" % (kind, label))
        self.fluid = dict(fluid)
        self.heat = dict(heat)

    def validate(self, mesh):
        present = {mesh.labels[l] for l in mesh.edge_label[mesh.boundary_edges]}
        for field, table in (("fluid", self.fluid), ("heat", self.heat)):
            missing = present - set(table)
            if missing:
                raise ValueError(
                    "missing %s boundary data for labels %s" % (field, sorted(missing))
                )

    def edges_by_kind(self, mesh, field, kind):
        """(edge array, datum function) pairs for one field and kind."""
        table = self.fluid if field == "fluid" else self.heat
        out = []
        for label, (k, func) in table.items():
            if k != kind:
                continue
            edges = mesh.boundary_edges_with(label)
            if len(edges):
                out.append((edges, func))
        return out


def _eval2(func, pts, t):
    if func is None:
        return np.zeros(pts.shape)
    return np.asarray(func(pts.reshape(-1, 2), t), dtype=float).reshape(pts.shape)


def _eval1(func, pts, t):
    if func is None:
        return np.zeros(pts.shape[:-1])
    return np.asarray(func(pts.reshape(-1, 2), t), dtype=float).reshape(pts.shape[:-1])


def apply_constraints(A, rhs, dofs, values):
    """Symmetric strong elimination: rows and columns to identity.

    The right-hand side absorbs the constrained columns so the remaining
    block stays symmetric whenever A is.
    """
    A = A.tocsr()
    rhs = rhs.copy()
    if len(dofs) == 0:
        return A, rhs
    z = np.zeros(A.shape[1])
    z[dofs] = values
    rhs -= A @ z
    keep = np.ones(A.shape[0])
    keep[dofs] = 0.0
    D = sp.diags(keep)
    A = (D @ A @ D + sp.diags(1.0 - keep)).tocsr()
    rhs[dofs] = values
    return A, rhs


class Assembler:
    """Assembles all systems on one FemSpace for one configuration."""

    def __init__(self, space, cfg, bc):
        self.space = space
        self.cfg = cfg
        self.bc = bc
        mesh = space.mesh
        bc.validate(mesh)

        self.fluid_dirichlet = bc.edges_by_kind(mesh, "fluid", "dirichlet")
        self.fluid_neumann = bc.edges_by_kind(mesh, "fluid", "neumann")
        self.heat_dirichlet = bc.edges_by_kind(mesh, "heat", "dirichlet")
        self.heat_neumann = bc.edges_by_kind(mesh, "heat", "neumann")
        self.dirichlet_edges = (
            np.concatenate([e for e, _ in self.fluid_dirichlet])
            if self.fluid_dirichlet
            else np.empty(0, dtype=np.int64)
        )
        self.neumann_edges = (
            np.concatenate([e for e, _ in self.fluid_neumann])
            if self.fluid_neumann
            else np.empty(0, dtype=np.int64)
        )
        self.fully_dirichlet = len(self.neumann_edges) == 0

        self.basis = AC0Basis(space)
        self.reconstruction = Reconstruction(
            self.basis, self.dirichlet_edges, self.neumann_edges
        )

        self._build_cell_arrays()
        self._build_edge_arrays()
        self._build_constant_matrices()
        self._collect_strong_dofs()

    # ------------------------------------------------------------------
    # precomputed basis arrays
    # ------------------------------------------------------------------
    def _build_cell_arrays(self):
        space = self.space
        mesh = space.mesh
        nc, nq = mesh.n_cells, space.nq

        uval = np.zeros((nc, nq, 9, 2))
        for lv in range(4):
            for d in range(2):
                uval[:, :, 2 * lv + d, d] = space.N[None, :, lv]
        uval[:, :, 8, :] = space.xq - mesh.cell_centroids[:, None, :]
        self.uval = uval

        # symmetric gradients in Voigt order (e_xx, e_yy, e_xy)
        eps = np.zeros((nc, nq, 9, 3))
        for lv in range(4):
            gx = space.dN[:, :, lv, 0]
            gy = space.dN[:, :, lv, 1]
            eps[:, :, 2 * lv + 0, 0] = gx
            eps[:, :, 2 * lv + 0, 2] = 0.5 * gy
            eps[:, :, 2 * lv + 1, 1] = gy
            eps[:, :, 2 * lv + 1, 2] = 0.5 * gx
        eps[:, :, 8, 0] = 1.0
        eps[:, :, 8, 1] = 1.0
        self.eps = eps

        div = np.zeros((nc, nq, 9))
        for lv in range(4):
            div[:, :, 2 * lv + 0] = space.dN[:, :, lv, 0]
            div[:, :, 2 * lv + 1] = space.dN[:, :, lv, 1]
        div[:, :, 8] = 2.0
        self.udiv = div

    def _build_edge_arrays(self):
        space = self.space
        mesh = space.mesh
        ne, nqe = mesh.n_edges, space.nqe
        n = mesh.edge_normals

        tval = np.zeros((ne, 2, nqe, 9, 2))
        epsn = np.zeros((ne, 2, nqe, 9, 2))
        for slot in (0, 1):
            present = space.edge_side_cell[:, slot] >= 0
            cells = np.maximum(space.edge_side_cell[:, slot], 0)
            for lv in range(4):
                for d in range(2):
                    tval[:, slot, :, 2 * lv + d, d] = space.eN[:, slot, :, lv]
            tval[:, slot, :, 8, :] = (
                space.exq - mesh.cell_centroids[cells][:, None, :]
            )
            gn = np.einsum("eqia,ea->eqi", space.edN[:, slot], n)
            for lv in range(4):
                for d in range(2):
                    epsn[:, slot, :, 2 * lv + d, d] += 0.5 * gn[:, :, lv]
                    epsn[:, slot, :, 2 * lv + d, :] += (
                        0.5 * space.edN[:, slot, :, lv, d][:, :, None] * n[:, None, :]
                    )
            epsn[:, slot, :, 8, :] = n[:, None, :]
            tval[~present, slot] = 0.0
            epsn[~present, slot] = 0.0
        self.tval = tval
        self.epsn = epsn

        udofs = space.cell_udofs
        plus = np.maximum(space.edge_side_cell[:, 0], 0)
        minus = np.maximum(space.edge_side_cell[:, 1], 0)
        self.edofs = np.concatenate([udofs[plus], udofs[minus]], axis=1)

        # 18-dof stacks: jump (plus minus minus trace) and side traces
        self.jump18 = np.concatenate([tval[:, 0], -tval[:, 1]], axis=2)
        self.vplus18 = np.concatenate([tval[:, 0], np.zeros_like(tval[:, 1])], axis=2)
        self.vminus18 = np.concatenate([np.zeros_like(tval[:, 0]), tval[:, 1]], axis=2)
        interior = ~mesh.boundary_mask
        half = np.where(interior, 0.5, 1.0)[:, None, None, None]
        self.avg_epsn18 = half * np.concatenate([epsn[:, 0], epsn[:, 1]], axis=2)

    # ------------------------------------------------------------------
    # constant matrices
    # ------------------------------------------------------------------
    def _scatter(self, blocks, rows, cols, shape):
        return sp.csr_matrix(
            (
                blocks.ravel(),
                (
                    np.broadcast_to(rows[:, :, None], blocks.shape).ravel(),
                    np.broadcast_to(cols[:, None, :], blocks.shape).ravel(),
                ),
            ),
            shape=shape,
        )

    def _build_constant_matrices(self):
        space = self.space
        cfg = self.cfg
        mesh = space.mesh
        nv, nc = mesh.n_vertices, mesh.n_cells
        n_u = space.n_u
        w = space.wdet
        ud = space.cell_udofs

        mass_blk = np.einsum("cqla,cqma,cq->clm", self.uval, self.uval, w, optimize=True)
        self.mass_eg = self._scatter(mass_blk, ud, ud, (n_u, n_u))

        visc_weight = np.array([1.0, 1.0, 2.0])
        visc_blk = (2.0 / cfg.Re) * np.einsum(
            "cqlk,cqmk,k,cq->clm", self.eps, self.eps, visc_weight, w, optimize=True
        )
        self.viscous = self._scatter(visc_blk, ud, ud, (n_u, n_u))

        # interior-penalty edge terms on interior and Dirichlet edges
        sel = np.concatenate([mesh.interior_edges, self.dirichlet_edges])
        wq = space.ew_scaled[sel]
        jump = self.jump18[sel]
        aeps = self.avg_epsn18[sel]
        he = mesh.edge_lengths[sel]
        cons = np.einsum("eqla,eqma,eq->elm", aeps, jump, wq, optimize=True)
        pen = np.einsum("eqla,eqma,eq->elm", jump, jump, wq / he[:, None], optimize=True)
        edge_blk = (
            -(2.0 / cfg.Re) * (cons.transpose(0, 2, 1) + cfg.zeta * cons)
            + (2.0 / cfg.Re) * cfg.alpha * pen
        )
        ed = self.edofs[sel]
        self.edge_viscous = self._scatter(edge_blk, ed, ed, (n_u, n_u))
        self.edge_viscous.eliminate_zeros()

        # pressure coupling c(v, w): volume part and {w} jump terms
        cvol = -np.einsum("cql,cq->cl", self.udiv, w)
        pdof = np.arange(nc)
        C = self._scatter(cvol[:, None, :], pdof[:, None], ud, (nc, n_u))
        jn = np.einsum("eqla,ea->eql", self.jump18, mesh.edge_normals)
        wjn = np.einsum("eql,eq->el", jn, space.ew_scaled)
        ie = mesh.interior_edges
        for slot in (0, 1):
            prow = mesh.edge_cells[ie, slot]
            C += self._scatter(
                0.5 * wjn[ie][:, None, :], prow[:, None], self.edofs[ie], (nc, n_u)
            )
        de = self.dirichlet_edges
        if len(de):
            prow = mesh.edge_cells[de, 0]
            C += self._scatter(
                wjn[de][:, None, :], prow[:, None], self.edofs[de], (nc, n_u)
            )
        self.pressure_coupling = C.tocsr()
        self.pressure_coupling.eliminate_zeros()

        buoy_blk = np.einsum(
            "cqla,a,qm,cq->clm", self.uval, cfg.e_hat, space.N, w, optimize=True
        )
        cell_tdofs = mesh.cells
        self.buoyancy_eg = self._scatter(buoy_blk, ud, cell_tdofs, (n_u, nv))

        rec = self.reconstruction
        self.mass_pr = rec.mass
        psi = self.basis.psi
        bac = np.einsum("cqai,a,qm,cq->cim", psi, cfg.e_hat, space.N, w, optimize=True)
        acrow = np.arange(4 * nc).reshape(nc, 4)
        Bac = self._scatter(bac, acrow, cell_tdofs, (4 * nc, nv))
        self.buoyancy_pr = (rec.QG.T @ Bac).tocsr()

        # heat: Q1 mass and stiffness (unit coefficient) plus per-cell blocks
        mth = np.einsum("ql,qm,cq->clm", space.N, space.N, w, optimize=True)
        kth = np.einsum("cqla,cqma,cq->clm", space.dN, space.dN, w, optimize=True)
        self.heat_mass = self._scatter(mth, cell_tdofs, cell_tdofs, (nv, nv))
        self.heat_stiffness_blocks = kth
        self.heat_stiffness = self._scatter(kth, cell_tdofs, cell_tdofs, (nv, nv))

        if cfg.use_reconstruction:
            self.fluid_mass = self.mass_pr
            self.fluid_buoyancy = self.buoyancy_pr
        else:
            self.fluid_mass = self.mass_eg
            self.fluid_buoyancy = self.buoyancy_eg
        self.fluid_constant = (
            (1.0 / cfg.dt) * self.fluid_mass + self.viscous + self.edge_viscous
        ).tocsr()

    def _collect_strong_dofs(self):
        mesh = self.space.mesh
        self.strong_velocity = []  # (vertex array, datum function)
        for edges, func in self.fluid_dirichlet:
            verts = np.unique(mesh.edges[edges].ravel())
            self.strong_velocity.append((verts, func))
        self.strong_heat = []
        for edges, func in self.heat_dirichlet:
            verts = np.unique(mesh.edges[edges].ravel())
            self.strong_heat.append((verts, func))

    def strong_velocity_constraints(self, t):
        """Constrained velocity dofs and values at time t."""
        dofs, vals = [], []
        for verts, func in self.strong_velocity:
            uv = _eval2(func, self.space.mesh.vertices[verts], t)
            dofs.append(2 * verts)
            vals.append(uv[:, 0])
            dofs.append(2 * verts + 1)
            vals.append(uv[:, 1])
        if not dofs:
            return np.empty(0, dtype=np.int64), np.empty(0)
        return np.concatenate(dofs), np.concatenate(vals)

    def strong_heat_constraints(self, t):
        dofs, vals = [], []
        for verts, func in self.strong_heat:
            dofs.append(verts)
            vals.append(_eval1(func, self.space.mesh.vertices[verts], t))
        if not dofs:
            return np.empty(0, dtype=np.int64), np.empty(0)
        return np.concatenate(dofs), np.concatenate(vals)

    # ------------------------------------------------------------------
    # advection-dependent pieces
    # ------------------------------------------------------------------
    def _advecting_field(self, beta):
        """Cell/edge advection data for the current Picard iterate.

        Returns (volume velocity (nc, nq, 2), edge normal velocity
        weights).  In reconstruction mode the volume field and the edge
        weights come from the H(div) reconstruction, whose normal trace is
        constant per edge; otherwise the EG traces are averaged pointwise.
        """
        space = self.space
        mesh = space.mesh
        if self.cfg.use_reconstruction:
            fluxes = self.reconstruction.fluxes(beta)
            vol = self.reconstruction.velocity_at_quadrature(fluxes)
            s = (fluxes / mesh.edge_lengths)[:, None] * np.ones(space.nqe)
        else:
            vol = space.velocity_at_quadrature(beta)
            tp = space.velocity_edge_trace(beta, 0)
            tm = space.velocity_edge_trace(beta, 1)
            avg = np.where(mesh.boundary_mask[:, None, None], tp, 0.5 * (tp + tm))
            s = np.einsum("eqa,ea->eq", avg, mesh.edge_normals)
        return vol, s

    def advection_matrix(self, beta):
        """Convective matrix b(beta, ., .) for the frozen iterate beta."""
        space = self.space
        mesh = space.mesh
        cfg = self.cfg
        n_u = space.n_u
        vol, s = self._advecting_field(beta)

        bg = np.einsum("cqa,cqla->cql", vol, space.dN)
        adv_trial = np.zeros((mesh.n_cells, space.nq, 9, 2))
        for lv in range(4):
            for d in range(2):
                adv_trial[:, :, 2 * lv + d, d] = bg[:, :, lv]
        adv_trial[:, :, 8, :] = vol

        ud = space.cell_udofs
        if cfg.use_reconstruction:
            nc = mesh.n_cells
            kblk = np.einsum(
                "cqai,cqla,cq->cil", self.basis.psi, adv_trial, space.wdet, optimize=True
            )
            acrow = np.arange(4 * nc).reshape(nc, 4)
            K = self._scatter(kblk, acrow, ud, (4 * nc, n_u))
            A = (self.reconstruction.QG.T @ K).tocsr()
        else:
            ablk = np.einsum(
                "cqma,cqla,cq->cml", self.uval, adv_trial, space.wdet, optimize=True
            )
            A = self._scatter(ablk, ud, ud, (n_u, n_u))

        # interior upwind: |s| (u_dw - u_up) . v_dw, downwind = receiving cell
        ie = mesh.interior_edges
        wq = space.ew_scaled[ie]
        sp_ = s[ie]
        to_minus = wq * np.maximum(sp_, 0.0)
        to_plus = wq * np.maximum(-sp_, 0.0)
        blk = np.einsum(
            "eqla,eqma,eq->elm", self.vminus18[ie], -self.jump18[ie], to_minus,
            optimize=True,
        )
        blk += np.einsum(
            "eqla,eqma,eq->elm", self.vplus18[ie], self.jump18[ie], to_plus,
            optimize=True,
        )
        A = A + self._scatter(blk, self.edofs[ie], self.edofs[ie], (n_u, n_u))

        # inflow closure on boundary edges: |s| u . v where s < 0
        be = mesh.boundary_edges
        win = space.ew_scaled[be] * np.maximum(-s[be], 0.0)
        if np.any(win > 0.0):
            tb = self.tval[be, 0]
            bblk = np.einsum("eqla,eqma,eq->elm", tb, tb, win, optimize=True)
            bd = space.cell_udofs[mesh.edge_cells[be, 0]]
            A = A + self._scatter(bblk, bd, bd, (n_u, n_u))
        return A.tocsr(), s

    def inflow_rhs(self, beta, s, t):
        """Upwind data term on inflow boundary edges.

        Dirichlet edges use the prescribed velocity, Neumann edges the trace
        of the previous iterate.
        """
        space = self.space
        mesh = space.mesh
        rhs = np.zeros(space.n_u)
        beta_trace = space.velocity_edge_trace(beta, 0)
        groups = [(e, f, True) for e, f in self.fluid_dirichlet]
        groups += [(e, None, False) for e, _ in self.fluid_neumann]
        for edges, func, is_dirichlet in groups:
            win = space.ew_scaled[edges] * np.maximum(-s[edges], 0.0)
            if not np.any(win > 0.0):
                continue
            if is_dirichlet:
                d = _eval2(func, space.exq[edges], t)
            else:
                d = beta_trace[edges]
            vals = np.einsum("eqa,eqla,eq->el", d, self.tval[edges, 0], win)
            np.add.at(rhs, space.cell_udofs[mesh.edge_cells[edges, 0]], vals)
        return rhs

    # ------------------------------------------------------------------
    # right-hand sides
    # ------------------------------------------------------------------
    def fluid_rhs(self, u_old, theta, t, f=None, beta=None, s=None):
        """Momentum right-hand side at time t for the current iterate."""
        space = self.space
        cfg = self.cfg
        rhs = (1.0 / cfg.dt) * (self.fluid_mass @ u_old)
        rhs += cfg.Ri * (self.fluid_buoyancy @ theta)
        if f is not None:
            fq = _eval2(f, space.xq, t)
            if cfg.use_reconstruction:
                r = np.einsum("cqai,cqa,cq->ci", self.basis.psi, fq, space.wdet)
                rhs += self.reconstruction.QG.T @ r.ravel()
            else:
                r = np.einsum("cqla,cqa,cq->cl", self.uval, fq, space.wdet)
                np.add.at(rhs, space.cell_udofs, r)

        # traction data on Neumann edges
        for edges, func in self.fluid_neumann:
            tn = _eval2(func, space.exq[edges], t)
            vals = np.einsum(
                "eqa,eqla,eq->el", tn, self.tval[edges, 0], space.ew_scaled[edges]
            )
            np.add.at(rhs, space.cell_udofs[space.mesh.edge_cells[edges, 0]], vals)

        # consistent penalty/adjoint data on Dirichlet edges
        for edges, func in self.fluid_dirichlet:
            ud_q = _eval2(func, space.exq[edges], t)
            he = space.mesh.edge_lengths[edges]
            w = space.ew_scaled[edges]
            vals = (2.0 / cfg.Re) * np.einsum(
                "eqa,eqla,eq->el",
                ud_q,
                cfg.alpha * self.tval[edges, 0] / he[:, None, None, None]
                - cfg.zeta * self.epsn[edges, 0],
                w,
            )
            np.add.at(rhs, space.cell_udofs[space.mesh.edge_cells[edges, 0]], vals)

        if cfg.include_advection and beta is not None:
            rhs += self.inflow_rhs(beta, s, t)
        return rhs

    def constraint_rhs(self, t):
        """Divergence constraint data: sum over Dirichlet edges of
        (w, u_D . n).

        The data enters through its nodal interpolant, matching the
        strongly imposed vertex values, so the reconstructed velocity is
        exactly divergence free in every cell including those on inflow
        boundaries.
        """
        space = self.space
        mesh = space.mesh
        g = np.zeros(space.n_p)
        for edges, func in self.fluid_dirichlet:
            ends = mesh.vertices[mesh.edges[edges]]
            ud = 0.5 * (_eval2(func, ends[:, 0], t) + _eval2(func, ends[:, 1], t))
            un = np.einsum("ea,ea->e", ud, mesh.edge_normals[edges])
            np.add.at(g, mesh.edge_cells[edges, 0], un * mesh.edge_lengths[edges])
        return g

    # ------------------------------------------------------------------
    # systems
    # ------------------------------------------------------------------
    def assemble_fluid(self, beta, u_old, theta, t, f=None):
        """Saddle system [[A, C^T], [C, 0]] and rhs for one Picard solve.

        Returns (K, rhs, constrained dofs, constrained values); the strong
        velocity constraints and the pressure pin (on fully Dirichlet
        boundaries) are not yet eliminated.
        """
        space = self.space
        cfg = self.cfg
        n_u, n_p = space.n_u, space.n_p
        A = self.fluid_constant
        s = None
        if cfg.include_advection:
            Badv, s = self.advection_matrix(beta)
            A = A + Badv
        C = self.pressure_coupling
        K = sp.bmat([[A, C.T], [C, None]], format="csr")
        rhs = np.concatenate(
            [self.fluid_rhs(u_old, theta, t, f=f, beta=beta, s=s), self.constraint_rhs(t)]
        )
        dofs, vals = self.strong_velocity_constraints(t)
        if self.fully_dirichlet:
            dofs = np.concatenate([dofs, [n_u]])
            vals = np.concatenate([vals, [0.0]])
        return K, rhs, dofs, vals

    def shift_pressure(self, p):
        """Area-weighted zero-mean shift (fully Dirichlet gauge)."""
        if not self.fully_dirichlet:
            raise ValueError("pressure gauge only applies without Neumann boundaries")
        areas = self.space.mesh.cell_areas()
        return p - np.sum(p * areas) / np.sum(areas)

    def assemble_heat(self, beta, theta_old, t, gamma=None):
        """Heat system (A, rhs) for the frozen advecting velocity beta.

        The advecting field matches the fluid convective form (reconstructed
        in pressure-robust mode); the artificial diffusion uses the same
        field.  Strong Dirichlet values are not yet eliminated.
        """
        space = self.space
        cfg = self.cfg
        mesh = space.mesh
        nv = space.n_theta
        A = (1.0 / cfg.dt) * self.heat_mass + cfg.kappa * self.heat_stiffness

        if cfg.include_advection and beta is not None:
            vol, _ = self._advecting_field(beta)
            bg = np.einsum("cqa,cqla->cql", vol, space.dN)
            adv = np.einsum("qm,cql,cq->cml", space.N, bg, space.wdet, optimize=True)
            A = A + self._scatter(adv, mesh.cells, mesh.cells, (nv, nv))
            if cfg.stabilization_c > 0.0:
                corners = self._corner_speeds(beta)
                speeds = np.maximum(
                    np.linalg.norm(vol, axis=2).max(axis=1), corners
                )
                kappa_t = cfg.stabilization_c * mesh.cell_diameters() * speeds
                stab = kappa_t[:, None, None] * self.heat_stiffness_blocks
                A = A + self._scatter(stab, mesh.cells, mesh.cells, (nv, nv))

        rhs = (1.0 / cfg.dt) * (self.heat_mass @ theta_old)
        if gamma is not None:
            gq = _eval1(gamma, space.xq, t)
            np.add.at(
                rhs, mesh.cells, np.einsum("cq,qm,cq->cm", gq, space.N, space.wdet)
            )
        for edges, func in self.heat_neumann:
            qn = _eval1(func, space.exq[edges], t)
            vals = np.einsum(
                "eq,eqm,eq->em", qn, space.eN[edges, 0], space.ew_scaled[edges]
            )
            np.add.at(rhs, mesh.cells[mesh.edge_cells[edges, 0]], vals)
        return A.tocsr(), rhs

    def _corner_speeds(self, beta):
        """Max advecting speed over cell corners (stabilization helper)."""
        from .fem import REF_VERTICES

        if self.cfg.use_reconstruction:
            fluxes = self.reconstruction.fluxes(beta)
            psi_c = self.basis.values_at(REF_VERTICES)
            vals = np.einsum(
                "cqai,ci->cqa", psi_c, self.reconstruction.cell_fluxes(fluxes)
            )
        else:
            mesh = self.space.mesh
            nv = mesh.n_vertices
            vx = beta[0 : 2 * nv : 2][mesh.cells]
            vy = beta[1 : 2 * nv : 2][mesh.cells]
            cg = np.stack([vx, vy], axis=2)
            enr = beta[2 * nv :][:, None, None] * (
                mesh.vertices[mesh.cells] - mesh.cell_centroids[:, None, :]
            )
            vals = cg + enr
        return np.linalg.norm(vals, axis=2).max(axis=1)
