"""Ready-made problem setups: buoyant cavity, manufactured convergence
cases on distorted meshes, and the heated pore channel.

Each setup returns an Assembler plus whatever exact data the case carries.
The manufactured solutions are divergence free and linear in time, so the
backward Euler step commits no time error and the measured errors are purely
spatial.
"""

import numpy as np

from .mesh import build_uniform_quad_mesh, build_trapezoid_mesh, build_pore_mesh
from .fem import FemSpace
from .assembly import AssemblyConfig, BoundaryData, Assembler


def _zeros2(pts, t):
    return np.zeros((len(pts), 2))


def _ones(pts, t):
    return np.ones(len(pts))


def cavity_problem(n, Ra=1e3, Re=1.408, Pr=0.71, dt=0.01,
                   use_reconstruction=True, distortion=0.0):
    """Differentially heated square cavity.

    No-slip walls, hot left wall (theta = 1), cold right wall (theta = 0),
    insulated top and bottom.  The Richardson number encodes the Rayleigh
    number through Ri = Ra/(Re^2 Pr).

    Returns
    -------
    asm : Assembler
    state0 : (u, p, theta) zero initial state
    """
    if distortion > 0.0:
        mesh = build_trapezoid_mesh(n, n, distortion)
    else:
        mesh = build_uniform_quad_mesh(n, n)
    space = FemSpace(mesh)
    cfg = AssemblyConfig(
        dt=dt, Re=Re, Ri=Ra / (Re ** 2 * Pr), Pr=Pr,
        use_reconstruction=use_reconstruction,
    )
    fluid = {lab: ("dirichlet", None) for lab in ("left", "right", "bottom", "top")}
    heat = {
        "left": ("dirichlet", _ones),
        "right": ("dirichlet", None),
        "bottom": ("neumann", None),
        "top": ("neumann", None),
    }
    asm = Assembler(space, cfg, BoundaryData(fluid, heat))
    state0 = (np.zeros(space.n_u), np.zeros(space.n_p), np.zeros(space.n_theta))
    return asm, state0


# ----------------------------------------------------------------------
# manufactured solutions (divergence free, linear in t)
# ----------------------------------------------------------------------
def _poly_exact(Re):
    """Vortex with homogeneous boundary values on the unit square."""

    def X(x):
        return x ** 2 * (x - 1) ** 2

    def dX(x):
        return 2.0 * x * (x - 1) * (2 * x - 1)

    def ddX(x):
        return 2.0 * (6 * x ** 2 - 6 * x + 1)

    def Y(y):
        return y * (y - 1) * (2 * y - 1)

    def dY(y):
        return 6 * y ** 2 - 6 * y + 1

    def ddY(y):
        return 12 * y - 6

    # u2 factors: G = x(x-1)(2x-1), H = y^2(y-1)^2
    G, dG, ddG = Y, dY, ddY
    H, dH, ddH = X, dX, ddX

    def velocity(pts, t):
        x, y = pts[:, 0], pts[:, 1]
        return t * np.stack([X(x) * Y(y), -G(x) * H(y)], axis=1)

    def pressure(pts):
        return (pts[:, 0] - 1) * (pts[:, 1] - 1)

    def forcing(pts, t):
        x, y = pts[:, 0], pts[:, 1]
        u1 = X(x) * Y(y)
        u2 = -G(x) * H(y)
        conv1 = u1 * dX(x) * Y(y) + u2 * X(x) * dY(y)
        conv2 = -u1 * dG(x) * H(y) - u2 * G(x) * dH(y)
        lap1 = ddX(x) * Y(y) + X(x) * ddY(y)
        lap2 = -(ddG(x) * H(y) + G(x) * ddH(y))
        f1 = u1 + t ** 2 * conv1 - (t / Re) * lap1 + (y - 1)
        f2 = u2 + t ** 2 * conv2 - (t / Re) * lap2 + (x - 1)
        return np.stack([f1, f2], axis=1)

    def traction(pts, t):
        y = pts[:, 1]
        return np.stack([np.zeros_like(y), -t * y ** 2 * (y - 1) ** 2 / Re], axis=1)

    return velocity, pressure, forcing, traction


def _trig_exact(Re):
    """Smooth flow with nonzero boundary values on the unit square."""
    a = 0.1

    def velocity(pts, t):
        x, y = pts[:, 0], pts[:, 1]
        return a * t * np.stack([np.sin(x) * np.sin(y), np.cos(x) * np.cos(y)], axis=1)

    def pressure(pts):
        return np.sin(np.pi * pts[:, 0]) * np.cos(np.pi * pts[:, 1])

    def forcing(pts, t):
        x, y = pts[:, 0], pts[:, 1]
        sx, cx = np.sin(x), np.cos(x)
        sy, cy = np.sin(y), np.cos(y)
        f1 = (a * sx * sy + a ** 2 * t ** 2 * sx * cx + (2 * a * t / Re) * sx * sy
              + np.pi * np.cos(np.pi * x) * np.cos(np.pi * y))
        f2 = (a * cx * cy - a ** 2 * t ** 2 * sy * cy + (2 * a * t / Re) * cx * cy
              - np.pi * np.sin(np.pi * x) * np.sin(np.pi * y))
        return np.stack([f1, f2], axis=1)

    def traction(pts, t):
        y = pts[:, 1]
        tn1 = (2 * a * t / Re) * np.cos(1.0) * np.sin(y)
        return np.stack([tn1, np.zeros_like(y)], axis=1)

    return velocity, pressure, forcing, traction


def convergence_case(variant, n, Re=1.0, dt=0.1, use_reconstruction=True,
                     distortion=0.25):
    """Manufactured flow on an n-by-n trapezoidal mesh.

    variant is "poly" (homogeneous boundary velocity) or "trig" (nonzero
    boundary velocity).  Velocity Dirichlet data is imposed on the left,
    bottom, and top sides; the right side carries the exact traction.

    Returns
    -------
    asm : Assembler
    state0 : initial state interpolating the exact velocity at t = 0
    exact : dict with velocity, pressure, forcing, traction callables
    """
    builders = {"poly": _poly_exact, "trig": _trig_exact}
    if variant not in builders:
        raise ValueError("variant must be 'poly' or 'trig'")
    velocity, pressure, forcing, traction = builders[variant](Re)

    mesh = build_trapezoid_mesh(n, n, distortion)
    space = FemSpace(mesh)
    cfg = AssemblyConfig(dt=dt, Re=Re, Ri=0.0, use_reconstruction=use_reconstruction)
    fluid = {
        "left": ("dirichlet", velocity),
        "bottom": ("dirichlet", velocity),
        "top": ("dirichlet", velocity),
        "right": ("neumann", traction),
    }
    heat = {lab: ("neumann", None) for lab in ("left", "right", "bottom", "top")}
    asm = Assembler(space, cfg, BoundaryData(fluid, heat))
    # exact velocity vanishes at t = 0; start from the zero state
    state0 = (np.zeros(space.n_u), np.zeros(space.n_p), np.zeros(space.n_theta))
    exact = {
        "velocity": velocity,
        "pressure": pressure,
        "forcing": forcing,
        "traction": traction,
    }
    return asm, state0, exact


DEFAULT_HOLES = tuple(
    ((cx, cy), 0.1)
    for cy, xs in (
        (0.25, (0.25, 0.5, 0.75)),
        (0.5, (0.35, 0.6, 0.85)),
        (0.75, (0.25, 0.5, 0.75)),
    )
    for cx in xs
)


def pore_inflow(pts, t):
    y = pts[:, 1]
    return np.stack([4.0 * y * (1.0 - y), np.zeros_like(y)], axis=1)


def channel_problem(mesh, Re=10.0, Ri=0.0, dt=0.05, Pr=1.0,
                    use_reconstruction=True, stabilization_c=0.1):
    """Heated channel boundary setup on a given labelled mesh.

    Parabolic inflow on the left, traction-free outflow on the right,
    no-slip elsewhere.  Inflow temperature is zero, edges labelled "pore"
    release unit heat flux, and the remaining walls are insulated.
    """
    space = FemSpace(mesh)
    cfg = AssemblyConfig(
        dt=dt, Re=Re, Ri=Ri, Pr=Pr,
        use_reconstruction=use_reconstruction,
        stabilization_c=stabilization_c,
    )
    # Sorted so the assembly order of boundary terms does not depend on
    # the per-process string hash seed; the iteration trajectory of
    # borderline nonlinear solves is sensitive to last-bit summation order.
    present = sorted({mesh.labels[l]
                      for l in mesh.edge_label[mesh.boundary_edges]})
    fluid = {
        "left": ("dirichlet", pore_inflow),
        "right": ("neumann", None),
    }
    heat = {
        "left": ("dirichlet", None),
        "right": ("neumann", None),
        "pore": ("neumann", _ones),
    }
    for lab in present:
        fluid.setdefault(lab, ("dirichlet", None))
        heat.setdefault(lab, ("neumann", None))
    fluid = {lab: fluid[lab] for lab in present}
    heat = {lab: heat[lab] for lab in present}
    asm = Assembler(space, cfg, BoundaryData(fluid, heat))
    state0 = (np.zeros(space.n_u), np.zeros(space.n_p), np.zeros(space.n_theta))
    return asm, state0


def pore_problem(Re=10.0, Ri=0.0, n=48, dt=0.05, Pr=1.0,
                 use_reconstruction=True, stabilization_c=0.1, holes=None):
    """Channel with heated circular obstructions (see channel_problem)."""
    if holes is None:
        holes = DEFAULT_HOLES
    mesh = build_pore_mesh(n, n, holes)
    return channel_problem(
        mesh, Re=Re, Ri=Ri, dt=dt, Pr=Pr,
        use_reconstruction=use_reconstruction, stabilization_c=stabilization_c,
    )
