"""Central finite-difference oracle used by the gradient tests.

Perturbations are applied in the array's own dtype and the divisor is the
actually-applied step (float32 storage quantizes the nominal step, which
would otherwise dominate the error budget). The step default of 3e-5 keeps
truncation error well under the 1e-3/1e-4 tolerances for the sharp-softplus
networks used here.
"""

import numpy as np

FD_STEP = 3e-5


def fd_grad_entries(loss_fn, arr: np.ndarray, entries, h: float = FD_STEP):
    """Finite-difference d(loss)/d(arr[i]) for the given flat indices."""
    flat = arr.reshape(-1)
    out = np.zeros(len(entries))
    for j, i in enumerate(entries):
        orig = flat[i]
        p_hi = flat.dtype.type(float(orig) + h)
        p_lo = flat.dtype.type(float(orig) - h)
        flat[i] = p_hi
        hi = float(loss_fn())
        flat[i] = p_lo
        lo = float(loss_fn())
        flat[i] = orig
        out[j] = (hi - lo) / (float(p_hi) - float(p_lo))
    return out


def assert_grads_match(
    loss_fn,
    arrays_and_grads,
    rng: np.random.Generator,
    rel_tol: float = 1e-3,
    samples_per_array: int = 12,
    h: float = FD_STEP,
    grad_floor: float = 1e-4,
):
    """Spot-check analytic grads against finite differences.

    arrays_and_grads: iterable of (parameter array, analytic grad array).
    Checks the largest-magnitude entries plus random ones per array.
    """
    for arr, grad in arrays_and_grads:
        gflat = np.asarray(grad).reshape(-1)
        n = gflat.size
        take = min(samples_per_array, n)
        top = np.argsort(-np.abs(gflat))[: max(take // 2, 1)]
        rand = rng.integers(0, n, size=take - top.size)
        entries = np.unique(np.concatenate([top, rand]))
        fd = fd_grad_entries(loss_fn, arr, entries, h=h)
        ana = gflat[entries]
        denom = np.maximum(np.abs(fd), grad_floor)
        rel = np.abs(ana - fd) / denom
        assert rel.max() < rel_tol, (
            f"gradient mismatch: worst rel err {rel.max():.3e} "
            f"(analytic {ana[np.argmax(rel)]:.6e}, fd {fd[np.argmax(rel)]:.6e})"
        )
