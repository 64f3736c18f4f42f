"""Shared numeric test utilities: finite-difference gradient checking.

Checks run in float64 so central differences with h=1e-3 resolve
gradients to ~1e-7 relative; float32 forwards would drown the comparison
in rounding noise.
"""

import numpy as np

from gestigo.nn import Tensor


def leaf(rng, shape, scale=1.0):
    """A float64 requires-grad leaf with normal entries."""
    return Tensor(rng.normal(scale=scale, size=shape), requires_grad=True,
                  dtype=np.float64)


def distinct_leaf(rng, shape, step=0.01):
    """A leaf whose entries are pairwise separated by at least ``step``.

    Keeps max-pool argmaxes stable under the +-h probe perturbation, so
    the finite difference stays on one smooth branch.
    """
    n = int(np.prod(shape))
    vals = rng.permutation(n).astype(np.float64) * step
    return Tensor(vals.reshape(shape), requires_grad=True, dtype=np.float64)


def offzero_leaf(rng, shape, low=0.1, high=1.0):
    """A leaf with |entries| in [low, high]: clear of the ReLU kink."""
    mag = rng.uniform(low, high, size=shape)
    sign = rng.choice([-1.0, 1.0], size=shape)
    return Tensor(mag * sign, requires_grad=True, dtype=np.float64)


def fd_gradcheck(forward, leaves, *, h=1e-3, rtol=1e-4, atol=1e-6,
                 probes_per=5, seed=0, reset=None):
    """Compare analytic gradients with central finite differences.

    ``forward()`` rebuilds the graph from the shared float64 ``leaves``
    and returns a scalar Tensor. ``reset``, when given, runs before every
    forward call so stochastic layers (dropout) replay the same mask.
    Returns the number of probes checked.
    """
    rng = np.random.default_rng(seed)
    for t in leaves:
        t.grad = None
    if reset is not None:
        reset()
    loss = forward()
    assert loss.data.dtype == np.float64, "gradcheck must run in float64"
    loss.backward()
    checked = 0
    for t in leaves:
        assert t.grad is not None, f"no gradient reached {t!r}"
        analytic = np.array(t.grad, dtype=np.float64).reshape(-1)
        flat = t.data.reshape(-1)
        count = min(probes_per, flat.size)
        for i in rng.choice(flat.size, size=count, replace=False):
            orig = flat[i]
            flat[i] = orig + h
            if reset is not None:
                reset()
            hi = float(forward().data)
            flat[i] = orig - h
            if reset is not None:
                reset()
            lo = float(forward().data)
            flat[i] = orig
            fd = (hi - lo) / (2.0 * h)
            an = float(analytic[i])
            tol = atol + rtol * max(abs(fd), abs(an))
            assert abs(fd - an) <= tol, (
                f"{t!r}[{i}]: analytic {an:.10g} vs finite-diff {fd:.10g}"
                f" (tol {tol:.3g})")
            checked += 1
    return checked


def weighted(out, w):
    """Scalar readout (out * w).sum() against a fixed weight array.

    Wraps ``w`` as a float64 tensor up front — plain arrays would be
    coerced to the engine's float32 default.
    """
    return (out * Tensor(np.asarray(w, dtype=np.float64), dtype=np.float64)).sum()
