"""Scaled hinge loss and the single closed-form gradient step.

Sign convention: ``G`` is the *negative* gradient of the empirical loss
``L(W) = mean_i (ln d - y_i h_W(x_i))_+``, so ``W + eta * G`` is a descent
step. The per-example term is

    G^i = (1 / (m sqrt(q))) * y_i * diag(a) sigma'(W x_i) x_i^T

and it only contributes while example ``i``'s hinge is active.
"""

import math
from dataclasses import dataclass

import numpy as np

from .linalg import rank1_accumulate
from .model import outputs

__all__ = [
    "BreakpointProximityError",
    "GradStepResult",
    "count_active",
    "default_step_size",
    "empirical_loss",
    "finite_diff_gradient",
    "full_gradient",
    "gradient_by_rank1",
    "gradient_oracle_error",
    "gradient_step",
    "held_out_term",
    "leave_one_out_gradient",
    "per_example_gradient",
    "scaled_hinge",
]

MODES = ("paper", "exact")


class BreakpointProximityError(ValueError):
    """A preactivation sits too close to a kink for a finite difference."""

    def __init__(self, offending):
        self.offending = offending
        i, j = offending[0]
        super().__init__(
            f"{len(offending)} preactivation(s) within 10h of a breakpoint, first at example {i}, neuron {j}"
        )


@dataclass(frozen=True)
class GradStepResult:
    G: np.ndarray
    eta: float
    active_count: int
    W_plus: np.ndarray


def _log_d(d):
    if d < 2:
        raise ValueError(f"d must be at least 2, got {d}")
    return math.log(d)


def scaled_hinge(yhat, y, d):
    """``max(0, ln d - yhat * y)``."""
    return max(0.0, _log_d(d) - yhat * y)


def default_step_size(m, d):
    """``m ln(d) / d``."""
    if m < 1:
        raise ValueError("m must be at least 1")
    return m * _log_d(d) / d


def empirical_loss(net, data):
    """``(1/m) sum_i (ln d - y_i h_W(x_i))_+``; zero for an empty dataset."""
    if data.m == 0:
        return 0.0
    h = outputs(net, data.inputs)
    return float(np.mean(np.maximum(0.0, _log_d(net.d) - data.labels * h)))


def per_example_gradient(net, x, y, m):
    """``G^i`` for a single example, ignoring hinge activity."""
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != net.d:
        raise ValueError(f"x must have dim {net.d}, got shape {x.shape}")
    if m < 1:
        raise ValueError("m must be at least 1")
    s = net.a * net.activation.derivative(net.W @ x)
    return (y / (m * math.sqrt(net.q))) * np.outer(s, x)


def _active(net, X, y, Z):
    h = net.activation.value(Z) @ net.a / math.sqrt(net.q)
    # the kink ln d - yh = 0 counts as inactive
    return _log_d(net.d) - y * h > 0


def count_active(net, data):
    """Number of examples whose hinge loss is strictly positive."""
    if data.m == 0:
        return 0
    Z = net.preactivations(data.inputs)
    return int(np.count_nonzero(_active(net, data.inputs, data.labels, Z)))


def _gradient(net, X, y, norm_m, mode):
    if mode not in MODES:
        raise ValueError(f"unknown gradient mode {mode!r}")
    if X.shape[0] == 0:
        return np.zeros_like(net.W), 0
    Z = net.preactivations(X)
    active = _active(net, X, y, Z)
    coef = y if mode == "paper" else y * active
    S = net.activation.derivative(Z) * coef[:, None].astype(Z.dtype)
    G = (S.T @ X) * (net.a[:, None] / (norm_m * math.sqrt(net.q)))
    return G, int(np.count_nonzero(active))


def full_gradient(net, data, mode="exact"):
    """``(G, active_count)``.

    ``exact`` sums ``G^i`` over examples with positive loss (the true
    subgradient). ``paper`` sums over every example, which coincides with
    ``exact`` whenever all hinges are active. ``active_count`` is reported
    in both modes.
    """
    if data.d != net.d:
        raise ValueError(f"dataset has d={data.d}, network has d={net.d}")
    return _gradient(net, data.inputs, data.labels, data.m, mode)


def leave_one_out_gradient(net, data, hold_out, mode="exact"):
    """Gradient over every example except ``hold_out``, still scaled by ``1/m``."""
    if not 0 <= hold_out < data.m:
        raise IndexError(f"hold_out {hold_out} out of range for m={data.m}")
    rest = data.without(hold_out)
    G, _ = _gradient(net, rest.inputs, rest.labels, data.m, mode)
    return G


def held_out_term(net, data, hold_out, mode="exact"):
    """Contribution of example ``hold_out`` to ``G``; zero when ``exact`` skips it.

    ``G - held_out_term(...)`` equals :func:`leave_one_out_gradient` up to
    rounding, at the cost of one rank-1 update instead of a full product.
    """
    if mode not in MODES:
        raise ValueError(f"unknown gradient mode {mode!r}")
    if not 0 <= hold_out < data.m:
        raise IndexError(f"hold_out {hold_out} out of range for m={data.m}")
    x = data.inputs[hold_out]
    y = data.labels[hold_out]
    if mode == "exact":
        z = net.preactivations(x[None, :])
        if not _active(net, x[None, :], y, z)[0]:
            return np.zeros_like(net.W)
    return per_example_gradient(net, x, y, data.m).astype(net.W.dtype, copy=False)


def gradient_by_rank1(net, data, mode="exact"):
    """Reference path: ``G`` built from ``m`` separate rank-1 updates."""
    G = np.zeros_like(net.W)
    if data.m == 0:
        return G
    Z = net.preactivations(data.inputs)
    active = _active(net, data.inputs, data.labels, Z)
    scale = 1.0 / (data.m * math.sqrt(net.q))
    for i in range(data.m):
        if mode == "exact" and not active[i]:
            continue
        s = net.a * net.activation.derivative(Z[i])
        G = rank1_accumulate(G, scale * data.labels[i], s, data.inputs[i])
    return G


def gradient_step(net, data, eta=None, mode="exact"):
    """One step ``W+ = W + eta * G``; ``eta`` defaults to ``m ln(d) / d``."""
    if eta is None:
        eta = default_step_size(data.m, net.d)
    if eta < 0:
        raise ValueError("eta must be nonnegative")
    G, active = full_gradient(net, data, mode)
    return GradStepResult(G=G, eta=float(eta), active_count=active, W_plus=net.W + eta * G)


def finite_diff_gradient(net, data, h=1e-5):
    """Central-difference gradient of :func:`empirical_loss` w.r.t. ``W``.

    Should approximate ``-G``. Refuses to run when any preactivation lies
    within ``10 h`` of an activation breakpoint, since the difference
    quotient would straddle the kink.
    """
    if data.m and net.activation.breakpoints:
        Z = net.preactivations(data.inputs)
        near = np.zeros(Z.shape, dtype=bool)
        for b in net.activation.breakpoints:
            near |= np.abs(Z - b) <= 10 * h
        if near.any():
            raise BreakpointProximityError([tuple(map(int, ij)) for ij in np.argwhere(near)])
    W = np.array(net.W, dtype=np.float64)
    out = np.zeros_like(W)
    for j in range(W.shape[0]):
        for k in range(W.shape[1]):
            Wp = W.copy()
            Wp[j, k] += h
            Wm = W.copy()
            Wm[j, k] -= h
            out[j, k] = (
                empirical_loss(net.with_weights(Wp), data)
                - empirical_loss(net.with_weights(Wm), data)
            ) / (2 * h)
    return out


def gradient_oracle_error(net, data, h=1e-5, mode="exact"):
    """``max|FD + G| / max|G|``: closed-form gradient against central differences."""
    G, _ = full_gradient(net, data, mode)
    fd = finite_diff_gradient(net, data, h)
    scale = np.abs(G).max()
    err = np.abs(fd + G).max()
    return float(err / scale) if scale > 0 else float(err)
