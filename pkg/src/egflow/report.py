"""Output writers: legacy VTK snapshots, delimited tables, and figures.

All delimited output is comma separated with 12 significant digits so runs
can be diffed across machines.
"""

import numpy as np

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt


FMT = "%.12g"


def write_vtk(path, space, state, reconstruction=None, title="egflow fields"):
    """Legacy ASCII VTK snapshot of one (u, p, theta) state.

    Point data: temperature and the continuous velocity part.  Cell data:
    pressure, the enrichment coefficient, and (when a reconstruction is
    supplied) the cell divergence of the reconstructed velocity.
    """
    mesh = space.mesh
    u, p, theta = state
    nv, nc = mesh.n_vertices, mesh.n_cells
    with open(path, "w") as fh:
        fh.write("# vtk DataFile Version 3.0\n%s\nASCII\n" % title)
        fh.write("DATASET UNSTRUCTURED_GRID\n")
        fh.write("POINTS %d double\n" % nv)
        for x, y in mesh.vertices:
            fh.write("%.12g %.12g 0\n" % (x, y))
        fh.write("CELLS %d %d\n" % (nc, 5 * nc))
        for quad in mesh.cells:
            fh.write("4 %d %d %d %d\n" % tuple(quad))
        fh.write("CELL_TYPES %d\n" % nc)
        fh.write("9\n" * nc)
        fh.write("POINT_DATA %d\n" % nv)
        fh.write("SCALARS temperature double 1\nLOOKUP_TABLE default\n")
        for v in theta:
            fh.write("%.12g\n" % v)
        fh.write("VECTORS velocity double\n")
        for vx, vy in zip(u[0 : 2 * nv : 2], u[1 : 2 * nv : 2]):
            fh.write("%.12g %.12g 0\n" % (vx, vy))
        fh.write("CELL_DATA %d\n" % nc)
        fh.write("SCALARS pressure double 1\nLOOKUP_TABLE default\n")
        for v in p:
            fh.write("%.12g\n" % v)
        fh.write("SCALARS enrichment double 1\nLOOKUP_TABLE default\n")
        for v in u[2 * nv :]:
            fh.write("%.12g\n" % v)
        if reconstruction is not None:
            div = reconstruction.cell_divergence(reconstruction.fluxes(u))
            fh.write("SCALARS reconstruction_divergence double 1\n")
            fh.write("LOOKUP_TABLE default\n")
            for v in div:
                fh.write("%.12g\n" % v)


def write_csv(path, header, rows):
    """Comma separated table; numbers go out with 12 significant digits."""
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            cells = []
            for v in row:
                if isinstance(v, str):
                    cells.append(v)
                else:
                    cells.append(FMT % v)
            fh.write(",".join(cells) + "\n")


def write_summary(path, lines):
    with open(path, "w") as fh:
        for line in lines:
            fh.write(line.rstrip() + "\n")


def save_convergence_figure(path, tables):
    """Log-log error plot; tables maps a series name to run_convergence rows."""
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    for name, rows in tables.items():
        h = [r["h"] for r in rows]
        axes[0].loglog(h, [r["velocity_error"] for r in rows], "o-", label=name)
        axes[1].loglog(h, [r["pressure_error"] for r in rows], "s-", label=name)
    href = np.array(sorted({r["h"] for rows in tables.values() for r in rows}))
    for ax, order, what in ((axes[0], 2, "velocity"), (axes[1], 1, "pressure")):
        anchor = ax.get_lines()[0].get_ydata()[-1]
        ax.loglog(href, anchor * (href / href.min()) ** order, "k--", lw=0.8,
                  label="order %d" % order)
        ax.set_xlabel("h")
        ax.set_ylabel("L2 error (%s)" % what)
        ax.legend(fontsize=8)
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_iterations_figure(path, records, label=""):
    """Nonlinear iterations per time step."""
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    ax.plot([r["t"] for r in records], [r["iterations"] for r in records], "o-",
            ms=3, label=label or None)
    ax.set_xlabel("t")
    ax.set_ylabel("iterations per step")
    ax.grid(True, alpha=0.3)
    if label:
        ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_flux_figure(path, series_by_name):
    """Outflow heat flux versus time for one or more runs."""
    fig, ax = plt.subplots(figsize=(6.0, 3.2))
    for name, series in series_by_name.items():
        ax.plot([s["t"] for s in series], [s["flux"] for s in series], "-",
                label=name)
    ax.set_xlabel("t")
    ax.set_ylabel("outflow heat flux")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def save_cavity_figure(path, space, state):
    """Temperature field with midline velocity profiles."""
    mesh = space.mesh
    u, _, theta = state
    fig, axes = plt.subplots(1, 2, figsize=(9.0, 3.6))
    tc = axes[0].tripcolor(
        mesh.vertices[:, 0], mesh.vertices[:, 1],
        _as_triangles(mesh), theta, shading="gouraud"
    )
    fig.colorbar(tc, ax=axes[0], label="temperature")
    axes[0].set_aspect("equal")
    axes[0].set_title("temperature")

    ys = np.linspace(0.0, 1.0, 201)
    prof = _line_profile(space, u, axis=0, line=0.5, coords=ys)
    axes[1].plot(prof[:, 0], ys, label="u_x on x=0.5")
    xs = np.linspace(0.0, 1.0, 201)
    prof = _line_profile(space, u, axis=1, line=0.5, coords=xs)
    axes[1].plot(xs, prof[:, 1], label="u_y on y=0.5")
    axes[1].set_xlabel("coordinate / velocity")
    axes[1].grid(True, alpha=0.3)
    axes[1].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def _as_triangles(mesh):
    quads = mesh.cells
    return np.concatenate([quads[:, [0, 1, 2]], quads[:, [0, 2, 3]]], axis=0)


def _line_profile(space, u, axis, line, coords):
    """EG velocity sampled along a mesh-aligned line (cavity meshes)."""
    mesh = space.mesh
    out = np.zeros((len(coords), 2))
    pts = np.empty((len(coords), 2))
    pts[:, axis] = line
    pts[:, 1 - axis] = coords
    lo = mesh.vertices[mesh.cells].min(axis=1)
    hi = mesh.vertices[mesh.cells].max(axis=1)
    for k, pt in enumerate(pts):
        inside = np.where(
            (lo[:, 0] <= pt[0] + 1e-12) & (pt[0] <= hi[:, 0] + 1e-12)
            & (lo[:, 1] <= pt[1] + 1e-12) & (pt[1] <= hi[:, 1] + 1e-12)
        )[0]
        out[k] = space.evaluate_velocity(u, inside[0], pt)
    return out
