"""Time stepping and nonlinear iteration.

Each backward Euler step freezes the advecting velocity and solves the heat
equation followed by the fluid saddle system, repeating until the relative
increment of the stacked (velocity, pressure, temperature) vector drops
below tolerance.  The fixed-point update is either damped Picard or
Anderson acceleration with bounded history; Anderson with zero history
reduces exactly to the damped update.
"""

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import apply_constraints


class PicardConfig:
    """Nonlinear iteration controls.

    mode is "picard" or "anderson"; m and beta are the Anderson window and
    damping factor.  With absolute=True the stopping test uses the plain
    increment norm instead of the relative one.  With predict=True the time
    march starts each step's iteration from the linear extrapolation of the
    two previous time levels instead of the last one; the converged solution
    is unchanged, but on advection-dominated transients the better guess
    can cut the iteration count severalfold.
    """

    def __init__(self, tol=1e-8, max_iters=100, mode="picard", m=10, beta=1.0,
                 absolute=False, predict=False):
        if mode not in ("picard", "anderson"):
            raise ValueError("mode must be 'picard' or 'anderson'")
        if m < 0:
            raise ValueError("m must be nonnegative")
        self.tol = float(tol)
        self.max_iters = int(max_iters)
        self.mode = mode
        self.m = int(m)
        self.beta = float(beta)
        self.absolute = bool(absolute)
        self.predict = bool(predict)

    def window(self):
        return self.m if self.mode == "anderson" else 0


def solve_linear(A, b, tol=1e-10):
    """Sparse direct solve with iterative refinement and a residual check.

    A couple of refinement passes cost one triangular solve each and pull
    the residual well below plain factor-and-solve roundoff, which matters
    for the divergence rows of the saddle system where the residual is
    amplified by the inverse cell area.  The final check bounds the
    backward error ||Ax - b|| / (||A|| ||x|| + ||b||), the solve quality
    measure that stays meaningful when the matrix is badly scaled.
    """
    A = sp.csc_matrix(A)
    lu = spla.splu(A)
    x = lu.solve(b)
    small = max(1.0, np.linalg.norm(b))
    res = np.linalg.norm(A @ x - b)
    for _ in range(2):
        if not np.isfinite(res) or res <= 1e-15 * small:
            break
        x_new = x + lu.solve(b - A @ x)
        res_new = np.linalg.norm(A @ x_new - b)
        if not np.isfinite(res_new) or res_new >= res:
            break
        x, res = x_new, res_new
    scale = abs(A).sum(axis=0).max() * np.linalg.norm(x) + np.linalg.norm(b)
    if not np.isfinite(res) or res > tol * max(1.0, scale):
        raise RuntimeError("linear solve residual %.3e exceeds tolerance" % res)
    return x


def anderson_solve(g, x0, tol=1e-8, max_iters=100, m=0, beta=1.0, absolute=False):
    """Anderson-accelerated fixed-point iteration for x = g(x).

    The update at step k uses the least squares fit of the last m residual
    differences; rank-deficient histories are truncated from the oldest
    column.  m = 0 gives the damped iterate x + beta*(g(x) - x).

    Returns
    -------
    x : ndarray
        Last iterate.
    residuals : list of float
        Stopping indicator per iteration (relative increment norm unless
        absolute=True or the iterate vanishes).
    converged : bool
    """
    x_prev = np.array(x0, dtype=float, copy=True)
    residuals = []
    dx_hist = []   # x_j - x_{j-1}, oldest first
    dw_hist = []   # w_{j+1} - w_j, oldest first
    w_old = None
    for _ in range(max_iters):
        w = g(x_prev) - x_prev
        if w_old is not None:
            dw_hist.append(w - w_old)
            if len(dw_hist) > m:
                dw_hist.pop(0)
        w_old = w

        if m > 0 and dw_hist:
            F = np.column_stack(dw_hist[::-1])
            E = np.column_stack(dx_hist[-len(dw_hist):][::-1])
            while F.shape[1] > F.shape[0]:
                F = F[:, :-1]
                E = E[:, :-1]
            R = None
            while F.shape[1] > 0:
                Q, R = np.linalg.qr(F)
                if np.min(np.abs(np.diag(R))) > 1e-12 * np.linalg.norm(F):
                    break
                F = F[:, :-1]
                E = E[:, :-1]
            if F.shape[1] > 0:
                gamma = np.linalg.solve(R, Q.T @ w)
                x = x_prev + beta * w - (E + beta * F) @ gamma
            else:
                x = x_prev + beta * w
        else:
            x = x_prev + beta * w

        dx = x - x_prev
        dx_hist.append(dx)
        if len(dx_hist) > max(m, 1):
            dx_hist.pop(0)
        nx = np.linalg.norm(x)
        nd = np.linalg.norm(dx)
        nr = nd if (absolute or nx == 0.0) else nd / nx
        residuals.append(nr)
        x_prev = x
        if nr <= tol:
            return x, residuals, True
    return x_prev, residuals, False


def initial_state(space, velocity=None, temperature=None, t=0.0):
    """Interpolated (u, p, theta) start vector; missing fields are zero."""
    u = np.zeros(space.n_u)
    if velocity is not None:
        u = space.interpolate_velocity(velocity, t)
    p = np.zeros(space.n_p)
    theta = np.zeros(space.n_theta)
    if temperature is not None:
        theta = np.asarray(temperature(space.mesh.vertices, t), dtype=float)
    return u, p, theta


def backward_euler_step(asm, state, t, picard, f=None, gamma=None,
                        guess=None):
    """One implicit time step to time t by fixed-point iteration.

    The map solves heat with the frozen velocity iterate, then the fluid
    system with the fresh temperature.  The iteration starts from guess
    when given and the previous time step otherwise; a guess is only
    adopted if its fixed-point residual beats the previous state's, which
    protects against extrapolation overshoot on fast transients.  The
    equations always use state as the previous time level.  Returns
    (state, info) where info records the iteration history; convergence
    failure is reported in info, not raised.
    """
    space = asm.space
    n_u, n_p = space.n_u, space.n_p
    u_old, p_old, theta_old = state

    def gmap(x):
        u_k = x[:n_u]
        A_th, b_th = asm.assemble_heat(u_k, theta_old, t, gamma=gamma)
        hd, hv = asm.strong_heat_constraints(t)
        A_th, b_th = apply_constraints(A_th, b_th, hd, hv)
        theta = solve_linear(A_th, b_th)
        K, rhs, kd, kv = asm.assemble_fluid(u_k, u_old, theta, t, f=f)
        K, rhs = apply_constraints(K, rhs, kd, kv)
        y = solve_linear(K, rhs)
        u, p = y[:n_u], y[n_u:]
        if asm.fully_dirichlet:
            p = asm.shift_pressure(p)
        return np.concatenate([u, p, theta])

    x0 = np.concatenate([u_old, p_old, theta_old])
    warm = False
    if guess is not None:
        x1 = np.concatenate(guess)
        r0 = np.linalg.norm(gmap(x0) - x0)
        try:
            if np.linalg.norm(gmap(x1) - x1) < r0:
                x0 = x1
                warm = True
        except RuntimeError:
            pass
    x, residuals, converged = anderson_solve(
        gmap, x0, tol=picard.tol, max_iters=picard.max_iters,
        m=picard.window(), beta=picard.beta, absolute=picard.absolute,
    )
    state = (x[:n_u], x[n_u:n_u + n_p], x[n_u + n_p:])
    info = {
        "t": t,
        "iterations": len(residuals),
        "residuals": residuals,
        "converged": converged,
        "warm_start": warm,
    }
    return state, info


def simulate(asm, state0, n_steps, picard, t0=0.0, f=None, gamma=None,
             on_step=None):
    """March n_steps backward Euler steps from t0.

    Raises on nonlinear failure.  Returns the final state and the per-step
    iteration records.
    """
    state = state0
    older = None
    records = []
    for n in range(n_steps):
        t = t0 + (n + 1) * asm.cfg.dt
        guess = None
        if picard.predict and older is not None:
            guess = tuple(2.0 * a - b for a, b in zip(state, older))
        older = state
        state, info = backward_euler_step(asm, state, t, picard, f=f,
                                          gamma=gamma, guess=guess)
        records.append(info)
        if not info["converged"]:
            raise RuntimeError(
                "fixed-point iteration stalled at t=%g: %d iterations, last "
                "increment %.3e" % (t, info["iterations"], info["residuals"][-1])
            )
        if on_step is not None:
            on_step(state, info)
    return state, records
