"""Shared test utilities: central-difference gradient oracle.

The finite-difference reference is always evaluated in float64 so it
measures the true derivative; the graph under test runs in the precision
being checked (float32 storage, or float64 for the tight debug mode).
"""

import numpy as np

from camfield.tensor import Tensor


def numeric_grad(fn, arrays, index, step):
    """Central-difference gradient of scalar ``fn(arrays)`` w.r.t. one input."""
    base = [np.array(a, dtype=np.float64) for a in arrays]
    flat = base[index].ravel()
    grad = np.zeros_like(flat)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        fplus = fn(base)
        flat[i] = orig - step
        fminus = fn(base)
        flat[i] = orig
        grad[i] = (fplus - fminus) / (2.0 * step)
    return grad.reshape(base[index].shape)


def gradcheck(build, arrays, dtype=np.float32, step=1e-3, tol=1e-3, atol=None):
    """Assert autodiff gradients match central differences for every input.

    ``build`` maps a list of Tensors to a scalar Tensor. Agreement per
    element is |ad - fd| / (|fd| + 1e-6) < tol, with an absolute escape
    hatch ``atol`` covering components whose true derivative is so small
    that the difference quotient is pure rounding noise. Defaults follow
    the single-precision contract (step 1e-3, tol 1e-3); pass float64 with
    step 1e-5 and tol 1e-6 for the tight debug mode.
    """
    if atol is None:
        # float32 forward/backward noise sits near 1e-6 absolute for O(1)
        # intermediates; below that a difference is indistinguishable from
        # rounding (real backward bugs err at the gradient's own scale)
        atol = 1e-9 if dtype == np.float64 else 1e-5
    tensors = [Tensor(np.asarray(a, dtype=dtype), requires_grad=True) for a in arrays]
    root = build(tensors)
    assert root.shape == (), f"gradcheck roots must be scalar, got {root.shape}"
    root.backward()

    def scalar_fn(arrs):
        ts = [Tensor(a) for a in arrs]
        return float(build(ts).data)

    worst = 0.0
    for k, t in enumerate(tensors):
        fd = numeric_grad(scalar_fn, arrays, k, step)
        ad = np.zeros_like(fd) if t.grad is None else np.asarray(t.grad, dtype=np.float64)
        diff = np.abs(ad - fd)
        rel = diff / (np.abs(fd) + 1e-6)
        bad = (rel >= tol) & (diff >= atol)
        significant = rel[diff >= atol]
        if significant.size:
            worst = max(worst, float(significant.max()))
        assert not bad.any(), (
            f"gradient mismatch on input {k}: max rel err {rel[bad].max():.3e} "
            f"(ad={ad[bad].ravel()[0]}, fd={fd[bad].ravel()[0]})"
        )
    return worst
