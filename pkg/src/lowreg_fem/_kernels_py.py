"""Pure-numpy implementations of the compiled kernels (import-time fallback)."""
import numpy as np


def pair_sums(X, Y, GX, GY, w, power, nthreads=1):
    """Per-cell ``sum_p w_p |GX - GY|^2 / |X - Y|^power``.

    ``X, Y, GX, GY`` have shape ``(nc, np, d)``; ``w`` has shape ``(np,)``.
    ``nthreads`` is accepted for signature compatibility and ignored.
    """
    dg = GX - GY
    dx = X - Y
    num = np.einsum("kpd,kpd->kp", dg, dg)
    dist2 = np.einsum("kpd,kpd->kp", dx, dx)
    return (num * dist2 ** (-0.5 * power)) @ w


def weighted_sq_sums(A, B, w, nthreads=1):
    """Per-cell ``sum_p w[k, p] |A - B|^2`` for ``(nc, np, m)`` arrays."""
    diff = A - B
    return np.einsum("kp,kpd,kpd->k", w, diff, diff)
