"""Pure-numpy majorize-minimize sweep, used when the compiled kernel is absent.

Same contract as ``covsel._sweep.mm_sweep``: loops over columns and rows in
Python, vectorized across subjects.
"""
import numpy as np


def _group_update(c, h, kold, lam, eps, exact):
    cn = np.sqrt(c @ c)
    if cn <= lam:
        return np.zeros_like(c)
    if not exact:
        a = max(np.sqrt(kold @ kold), eps)
        return -c / (h + lam / a)
    if c.shape[0] == 1:
        r = (cn - lam) / h[0]
    else:
        r = 0.0
        c2 = c * c
        for _ in range(100):
            d = h * r + lam
            q = c2 / (d * d)
            f = q.sum()
            fp = -2.0 * (q * h / d).sum()
            g = 1.0 / np.sqrt(f)
            step = (g - 1.0) / (-0.5 * g * fp / f)
            r = max(r - step, 0.0)
            if abs(step) <= 1e-15 * r:
                break
    return -c * r / (h * r + lam)


def mm_sweep(K, W, C, lam, eps, exact, max_passes=1, pass_tol=1e-9):
    n_subjects, p, _ = K.shape
    for j in range(p):
        wj = W[:, :, j]
        A = W - wj[:, :, None] * (wj / W[:, j, j][:, None])[:, None, :]
        kvec = K[:, :, j].copy()
        kvec[:, j] = 0.0
        u = np.einsum("sab,sb->sa", A, kvec)
        s22 = C[:, j, j]
        limit = (pass_tol / s22).max()
        for _ in range(max_passes):
            moved = 0.0
            for t in range(p):
                if t == j:
                    continue
                kold = K[:, t, j].copy()
                att = A[:, t, t]
                c = C[:, t, j] + s22 * (u[:, t] - att * kold)
                x = _group_update(c, s22 * att, kold, lam, eps, exact)
                dx = x - kold
                if np.any(dx != 0.0):
                    moved = max(moved, np.abs(dx).max())
                    u += A[:, :, t] * dx[:, None]
                    K[:, t, j] = x
                    K[:, j, t] = x
            if moved <= limit:
                break
        u[:, j] = 0.0
        kvec = K[:, :, j].copy()
        kvec[:, j] = 0.0
        K[:, j, j] = 1.0 / s22 + np.einsum("sa,sa->s", kvec, u)
        W[:] = A + s22[:, None, None] * u[:, :, None] * u[:, None, :]
        W[:, :, j] = -s22[:, None] * u
        W[:, j, :] = -s22[:, None] * u
        W[:, j, j] = s22
