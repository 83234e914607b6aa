"""Pure-Python implementations of the hot loops.

Mirrors ``_accel.pyx`` function for function; selected by ``multimean._backend``
when the compiled module is unavailable.
"""

import numpy as np

BIG = 1e300
REJECT_SLACK = 1e-13


def subsample_terms(k, idx):
    """Sums of ``K[i1, i2] K[i1, i3]`` and ``K[i1, i2] K[i3, i4]`` over index rows."""
    i1, i2, i3, i4 = idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]
    k12 = k[i1, i2]
    return float(np.dot(k12, k[i1, i3])), float(np.dot(k12, k[i3, i4]))


def egd_propose(g, w, free_idx, eta, clip):
    """Multiplicative update of ``w`` on the free coordinates; returns a new vector."""
    with np.errstate(invalid="ignore", over="ignore"):
        e = -eta * g[free_idx]
    # NaN counts as the worst coordinate; infinities are bounded before the shift
    e = np.clip(np.where(np.isnan(e), -BIG, e), -BIG, BIG)
    e -= e.max()
    np.clip(e, -clip, 0.0, out=e)
    new = w.copy()
    new[free_idx] = w[free_idx] * np.exp(e)
    new[free_idx] /= new[free_idx].sum()
    return new


def egd_loop(a, b, w, free, eta0, n_bags, t_max, tol, gap_tol, scale, clip, record=None):
    """Exponentiated gradient on the simplex for ``f(w) = w'Aw/2 + b'w``.

    ``w`` is modified in place and must already be normalized over ``free``.
    The exponent is shifted by its maximum over the free coordinates and then
    clipped to ``[-clip, 0]``; NaN entries are treated as the smallest value.
    A step that increases ``f`` is rejected and the next, smaller, scheduled
    rate is tried from the same point. The loop stops once an accepted step
    moves ``w`` by at most ``tol`` in squared l2 norm while the duality gap
    ``w'g - min_free g``, an upper bound on ``f(w) - min f``, is at most
    ``gap_tol |f|``. Accepted iterates are appended to ``record`` when given.
    Returns the number of iterations performed.
    """
    free_idx = np.flatnonzero(free)
    g = a @ w + b
    f = 0.5 * float(w @ (g + b))
    t = 0
    while t < t_max:
        t += 1
        new = egd_propose(g, w, free_idx, eta0 / (1.0 + t / n_bags) / scale, clip)
        g_new = a @ new + b
        f_new = 0.5 * float(new @ (g_new + b))
        if not f_new <= f + REJECT_SLACK * abs(f):
            continue
        change = float(np.sum((new - w) ** 2))
        w[:] = new
        g, f = g_new, f_new
        if record is not None:
            record.append(w.copy())
        if change <= tol:
            gf = g[free_idx]
            if float(w[free_idx] @ gf) - float(gf.min()) <= gap_tol * abs(f):
                break
    return t
