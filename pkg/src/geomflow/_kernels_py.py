"""Pure numpy versions of the pointwise kernels.

Arrays are laid out component-first: a point set of ``N`` vectors in R^m is an
``(m, N)`` array; a set of ``d`` such vectors per point (a gradient) is
``(m, d, N)``.
"""

import numpy as np

BACKEND = "python"


def sphere_sff(y, a, b):
    """``-D^2 pi(y)(a, b)`` for ``pi(y) = y / |y|``."""
    r2 = np.einsum("ij,ij->j", y, y)
    r = np.sqrt(r2)
    ya = np.einsum("ij,ij->j", y, a)
    yb = np.einsum("ij,ij->j", y, b)
    ab = np.einsum("ij,ij->j", a, b)
    inv3 = 1.0 / (r2 * r)
    inv5 = inv3 / r2
    return (a * yb + b * ya + y * ab) * inv3 - 3.0 * y * (ya * yb * inv5)


def sphere_sff_contract(y, a, b):
    """``sum_k A(y)(a[:, k], b[:, k])`` for gradient-shaped ``a``, ``b``."""
    out = np.zeros_like(y)
    for k in range(a.shape[1]):
        out += sphere_sff(y, a[:, k], b[:, k])
    return out


def sphere_sff_deriv(y, c, a, b):
    """Directional derivative of ``A(y)(a, b)`` in the base point along ``c``."""
    r2 = np.einsum("ij,ij->j", y, y)
    r = np.sqrt(r2)
    s = np.einsum("ij,ij->j", y, a)
    t = np.einsum("ij,ij->j", y, b)
    yc = np.einsum("ij,ij->j", y, c)
    ca = np.einsum("ij,ij->j", c, a)
    cb = np.einsum("ij,ij->j", c, b)
    ab = np.einsum("ij,ij->j", a, b)
    inv3 = 1.0 / (r2 * r)
    inv5 = inv3 / r2
    inv7 = inv5 / r2
    return (
        (a * cb + b * ca + c * ab) * inv3
        - 3.0 * (a * t + b * s + y * ab) * (yc * inv5)
        - 3.0 * (c * (s * t) + y * (ca * t + s * cb)) * inv5
        + 15.0 * y * (s * t * yc * inv7)
    )


def sphere_sff_deriv_contract(y, c, a, b):
    out = np.zeros_like(y)
    for k in range(a.shape[1]):
        out += sphere_sff_deriv(y, c, a[:, k], b[:, k])
    return out


def normalize(u):
    return u / np.sqrt(np.einsum("ij,ij->j", u, u))


def ball_sums(values, order, cuts):
    """Sums of ``values`` over nested balls.

    ``order[c]`` lists grid indices by increasing distance from centre ``c``;
    ``cuts[c, j]`` is the number of points inside the ``j``-th radius.
    """
    out = np.empty(cuts.shape)
    for c in range(order.shape[0]):
        csum = np.concatenate(([0.0], np.cumsum(values[order[c]])))
        out[c] = csum[cuts[c]]
    return out
