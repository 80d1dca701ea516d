"""Shared test oracles.

The gradient oracle uses central finite differences in double precision and
never touches the backward pass it is checking.
"""

import numpy as np

FD_STEP = 1e-3
FD_RTOL = 1e-4
FD_ATOL = 1e-6


def fd_gradient(forward, array, step=FD_STEP):
    """d(forward())/d(array) by central differences, perturbing in place.

    ``forward`` must return a python float recomputed from current array
    contents; ``array`` must be float64.
    """
    assert array.dtype == np.float64, "finite differences need float64"
    grad = np.zeros_like(array)
    flat = array.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fp = forward()
        flat[i] = orig - step
        fm = forward()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2.0 * step)
    return grad


def assert_grads_close(analytic, numeric, rtol=FD_RTOL, atol=FD_ATOL):
    np.testing.assert_allclose(analytic, numeric, rtol=rtol, atol=atol)
