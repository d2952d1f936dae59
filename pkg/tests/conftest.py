import numpy as np


def fd_jacobian(system, x, h=1e-6):
    """Central finite differences of a system's residual."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((system.evaluate(x + e) - system.evaluate(x - e)) / (2.0 * h))
    return np.stack(cols, axis=1)


def assert_jacobian_matches_fd(system, x, rel=1e-5, h=1e-6):
    analytic = system.jacobian(np.asarray(x, dtype=float))
    numeric = fd_jacobian(system, x, h=h)
    scale = np.maximum(1.0, np.abs(analytic))
    err = np.abs(analytic - numeric) / scale
    assert err.max() <= rel, f"jacobian mismatch: max rel err {err.max():.3e}"
