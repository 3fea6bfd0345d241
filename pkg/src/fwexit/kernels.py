"""
Hot inner loops, compiled with numba when available
===================================================

Every kernel is written once, in scalar style, and compiled with
``numba.njit(cache=True, nogil=True)`` at import time.  Setting the
environment variable ``FWEXIT_DISABLE_NUMBA=1`` (or running without numba
installed) selects the uncompiled pure NumPy/Python path instead; both paths
execute the identical statements, so results agree bit for bit.
``benchmarks/benchmark_kernels.py`` compares the two.

Integer switches shared by the kernels:

==========  =========================================================
f_mode      0 zero, 1 linear damping, 2 cubic, 3 anticubic (control)
b_mode      0 additive, 1 b=1, 2 b=r, 3 b=sin r, 4 b=cos r
norm_mode   0 euclidean on coefficients, 1 sup over the grid
use_grid    1 when the pointwise frame is a collocation grid
==========  =========================================================

Gaussian rows are consumed strictly in order, so chunk size never changes a
path's sample stream.
"""
from __future__ import annotations

import math
import os

import numpy as np

try:
    from numba import njit as _njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAS_NUMBA = False

NUMBA_DISABLED = os.environ.get("FWEXIT_DISABLE_NUMBA", "").strip() not in ("", "0")
USE_NUMBA = _HAS_NUMBA and not NUMBA_DISABLED
BACKEND = "numba" if USE_NUMBA else "numpy"


def _drift_coeffs(x, vx, fc, f_mode, lam, pinv, use_grid):
    # fc <- drift coefficients F(x); vx holds the frame values of x.
    n = x.shape[0]
    if f_mode == 0:
        for k in range(n):
            fc[k] = 0.0
    elif f_mode == 1:
        for k in range(n):
            fc[k] = -lam * x[k]
    else:
        m = vx.shape[0]
        sign = -1.0 if f_mode == 2 else 1.0
        fv = np.empty(m)
        for j in range(m):
            fv[j] = sign * vx[j] * vx[j] * vx[j]
        if use_grid == 1:
            w = np.dot(pinv, fv)
            for k in range(n):
                fc[k] = w[k]
        else:
            for k in range(n):
                fc[k] = fv[k]


def _b_values(vx, bx, b_mode):
    m = vx.shape[0]
    if b_mode == 2:
        for j in range(m):
            bx[j] = vx[j]
    elif b_mode == 3:
        for j in range(m):
            bx[j] = math.sin(vx[j])
    elif b_mode == 4:
        for j in range(m):
            bx[j] = math.cos(vx[j])
    else:
        for j in range(m):
            bx[j] = 1.0


def _exit_evolve_chunk(x, g, sg, fdt, anoise, snoise, q, phi, pinv,
                       f_mode, lam, b_mode, use_grid, norm_mode, radius,
                       record, out):
    """Advance one path through a block of gaussian rows.

    x is updated in place.  Returns the 0-based row index of the first step
    whose new state lies outside the domain, or -1 if the whole block stays
    inside.  With record=1 every new state is written to out.
    """
    nsteps = g.shape[0]
    n = x.shape[0]
    needs_frame = f_mode >= 2 or (b_mode > 0) or norm_mode == 1
    vx = np.empty(phi.shape[0])
    fc = np.empty(n)
    xn = np.empty(n)
    bx = np.empty(phi.shape[0])
    r2 = radius * radius
    for i in range(nsteps):
        if needs_frame:
            if use_grid == 1:
                tmp = np.dot(phi, x)
                for j in range(vx.shape[0]):
                    vx[j] = tmp[j]
            else:
                for j in range(n):
                    vx[j] = x[j]
        _drift_coeffs(x, vx, fc, f_mode, lam, pinv, use_grid)
        for k in range(n):
            xn[k] = sg[k] * x[k] + fdt[k] * fc[k]
        if b_mode == 0:
            for k in range(n):
                xn[k] += anoise[k] * g[i, k]
        else:
            _b_values(vx, bx, b_mode)
            if use_grid == 1:
                v = np.empty(n)
                for k in range(n):
                    v[k] = snoise[k] * g[i, k]
                vv = np.dot(phi, v)
                for j in range(vv.shape[0]):
                    vv[j] *= bx[j]
                w = np.dot(pinv, vv)
                for k in range(n):
                    xn[k] += q[k] * w[k]
            else:
                for k in range(n):
                    xn[k] += q[k] * bx[k] * snoise[k] * g[i, k]
        for k in range(n):
            x[k] = xn[k]
        if record == 1:
            for k in range(n):
                out[i, k] = x[k]
        if norm_mode == 0:
            s = 0.0
            for k in range(n):
                s += x[k] * x[k]
            outside = s >= r2
        else:
            vn = np.dot(phi, x)
            mx = 0.0
            for j in range(vn.shape[0]):
                a = abs(vn[j])
                if a > mx:
                    mx = a
            outside = mx >= radius
        if outside:
            return i
    return -1


def _control_forward(x0, psi, sg, fdt, cfac, q, phi, pinv,
                     f_mode, lam, b_mode, use_grid, xs):
    """Deterministic controlled sweep; states written to xs (nt+1 rows)."""
    nt = psi.shape[0]
    n = x0.shape[0]
    vx = np.empty(phi.shape[0])
    fc = np.empty(n)
    bx = np.empty(phi.shape[0])
    for k in range(n):
        xs[0, k] = x0[k]
    for i in range(nt):
        x = xs[i]
        if f_mode >= 2 or b_mode > 0:
            if use_grid == 1:
                tmp = np.dot(phi, x)
                for j in range(vx.shape[0]):
                    vx[j] = tmp[j]
            else:
                for j in range(n):
                    vx[j] = x[j]
        _drift_coeffs(x, vx, fc, f_mode, lam, pinv, use_grid)
        # control action u = Q B(x) psi_i, entered with the exact one-step
        # convolution weight cfac_k = (1 - exp(mu_k dt)) / (-mu_k)
        if b_mode == 0:
            for k in range(n):
                xs[i + 1, k] = sg[k] * x[k] + fdt[k] * fc[k] \
                    + cfac[k] * q[k] * psi[i, k]
        else:
            _b_values(vx, bx, b_mode)
            if use_grid == 1:
                vp = np.dot(phi, psi[i])
                for j in range(vp.shape[0]):
                    vp[j] *= bx[j]
                u = np.dot(pinv, vp)
                for k in range(n):
                    xs[i + 1, k] = sg[k] * x[k] + fdt[k] * fc[k] \
                        + cfac[k] * q[k] * u[k]
            else:
                for k in range(n):
                    xs[i + 1, k] = sg[k] * x[k] + fdt[k] * fc[k] \
                        + cfac[k] * q[k] * bx[k] * psi[i, k]


def _control_adjoint(xs, psi, lam_term, sg, fdt, cfac, q, phi, pinv,
                     f_mode, lam, b_mode, use_grid, dt, grad):
    """Backward sweep through the linearized dynamics.

    Fills grad with the derivative of
    0.5 dt sum|psi_i|^2 + (terminal cost whose state-gradient is lam_term)
    with respect to the sampled control.
    """
    nt = psi.shape[0]
    n = lam_term.shape[0]
    lm = lam_term.copy()
    vx = np.empty(phi.shape[0])
    bx = np.empty(phi.shape[0])
    for i in range(nt - 1, -1, -1):
        x = xs[i]
        if f_mode >= 2 or b_mode > 0:
            if use_grid == 1:
                tmp = np.dot(phi, x)
                for j in range(vx.shape[0]):
                    vx[j] = tmp[j]
            else:
                for j in range(n):
                    vx[j] = x[j]
        # gradient in the control slot: dt psi_i + (QB(x))^T (cfac * lm)
        if b_mode == 0:
            for k in range(n):
                grad[i, k] = dt * psi[i, k] + q[k] * cfac[k] * lm[k]
        else:
            _b_values(vx, bx, b_mode)
            if use_grid == 1:
                t1 = np.empty(n)
                for k in range(n):
                    t1[k] = q[k] * cfac[k] * lm[k]
                t2 = np.dot(t1, pinv)
                for j in range(t2.shape[0]):
                    t2[j] *= bx[j]
                t3 = np.dot(t2, phi)
                for k in range(n):
                    grad[i, k] = dt * psi[i, k] + t3[k]
            else:
                for k in range(n):
                    grad[i, k] = dt * psi[i, k] + q[k] * cfac[k] * bx[k] * lm[k]
        # costate update lm <- J^T lm with J = d x_{i+1} / d x_i
        new = np.empty(n)
        for k in range(n):
            new[k] = sg[k] * lm[k]
        if f_mode == 1:
            for k in range(n):
                new[k] += -lam * fdt[k] * lm[k]
        elif f_mode >= 2:
            sign = -3.0 if f_mode == 2 else 3.0
            if use_grid == 1:
                fl = np.empty(n)
                for k in range(n):
                    fl[k] = fdt[k] * lm[k]
                s1 = np.dot(fl, pinv)
                for j in range(s1.shape[0]):
                    s1[j] *= sign * vx[j] * vx[j]
                s2 = np.dot(s1, phi)
                for k in range(n):
                    new[k] += s2[k]
            else:
                for k in range(n):
                    new[k] += sign * vx[k] * vx[k] * fdt[k] * lm[k]
        if b_mode >= 2:
            # state dependence of the control action through b
            if use_grid == 1:
                u = np.empty(n)
                for k in range(n):
                    u[k] = q[k] * cfac[k] * lm[k]
                s1 = np.dot(u, pinv)
                vp = np.dot(phi, psi[i])
                for j in range(s1.shape[0]):
                    if b_mode == 2:
                        db = 1.0
                    elif b_mode == 3:
                        db = math.cos(vx[j])
                    else:
                        db = -math.sin(vx[j])
                    s1[j] *= db * vp[j]
                s2 = np.dot(s1, phi)
                for k in range(n):
                    new[k] += s2[k]
            else:
                for k in range(n):
                    if b_mode == 2:
                        db = 1.0
                    elif b_mode == 3:
                        db = math.cos(vx[k])
                    else:
                        db = -math.sin(vx[k])
                    new[k] += db * psi[i, k] * q[k] * cfac[k] * lm[k]
        lm = new


PYTHON_IMPLS = {
    "exit_evolve_chunk": _exit_evolve_chunk,
    "control_forward": _control_forward,
    "control_adjoint": _control_adjoint,
}

if USE_NUMBA:
    _jit = _njit(cache=True, nogil=True)
    _drift_coeffs = _jit(_drift_coeffs)
    _b_values = _jit(_b_values)
    exit_evolve_chunk = _jit(_exit_evolve_chunk)
    control_forward = _jit(_control_forward)
    control_adjoint = _jit(_control_adjoint)
else:
    exit_evolve_chunk = _exit_evolve_chunk
    control_forward = _control_forward
    control_adjoint = _control_adjoint

F_MODES = {"zero": 0, "linear_damping": 1, "cubic": 2, "anticubic": 3}
B_MODES = {"one": 1, "identity": 2, "sin": 3, "cos": 4}


def mode_switches(spec):
    """(f_mode, lam, b_mode, use_grid, norm_mode) switches for a spec."""
    f_mode = F_MODES[spec.f_kind.kind]
    lam = spec.f_kind.lam
    b_mode = 0 if spec.b_kind.kind == "additive" else B_MODES[spec.b_kind.b]
    use_grid = 1 if spec.norm_kind.kind == "sup_on_grid" else 0
    norm_mode = 1 if spec.norm_kind.kind == "sup_on_grid" else 0
    return f_mode, lam, b_mode, use_grid, norm_mode
