"""Finite-difference oracles and small fixtures shared by the tests."""
import numpy as np

from smoothcontact.geometry import Polyline

FD_STEP = 1e-6


def fd_gradient(f, x, step=FD_STEP):
    x = np.asarray(x, dtype=float)
    g = np.zeros_like(x)
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        g[i] = (f(x + e) - f(x - e)) / (2.0 * step)
    return g


def fd_jacobian(grad, x, step=FD_STEP):
    """Columns are central differences of ``grad``; symmetrized for Hessians."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(len(x)):
        e = np.zeros_like(x)
        e[i] = step
        cols.append((grad(x + e) - grad(x - e)) / (2.0 * step))
    J = np.column_stack(cols)
    return 0.5 * (J + J.T)


def rel_err(a, b):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-12))


def dense(h):
    return h.toarray() if hasattr(h, "toarray") else np.asarray(h)


def rotation(angle):
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s], [s, c]])


def bumpy_line(rng, n=8, spacing=0.5, amp=0.05):
    """Open polyline along +x with small random vertical jitter (normals up)."""
    xs = np.arange(n + 1) * spacing + rng.uniform(-0.1, 0.1, n + 1) * spacing
    xs.sort()
    ys = rng.uniform(-amp, amp, n + 1)
    return Polyline(np.column_stack([xs, ys]))
