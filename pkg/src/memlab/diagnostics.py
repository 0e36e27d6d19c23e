"""Empirical checks of the concentration lemmas behind one-step memorization.

Unnamed universal constants are replaced by the frozen thresholds in
:data:`THRESHOLDS`; every report carries the raw measurement next to the
threshold it was compared against.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .linalg import row_norms_squared, spectral_norm
from .model import expected_sq_derivative, forward, outputs
from .training import (
    count_active,
    default_step_size,
    full_gradient,
    held_out_term,
    leave_one_out_gradient,
)

__all__ = [
    "THRESHOLDS",
    "LemmaReport",
    "OrliczEstimate",
    "RowNormSection",
    "check_lemmas",
    "margin_decomposition",
    "orlicz_norm_estimate",
    "prestep_output_check",
    "row_norm_check",
    "spectral_check",
    "tail_exceedance",
]

THRESHOLDS = {
    "pre_h_ratio_max": 6.0,
    "spec_norm_eta_Gtilde_max": 2.0,
    "decomposition_identity_atol": 1e-10,
    "self_term_ratio_min": 0.6,
    "self_term_ratio_max": 1.4,
    "base_over_sqrtlogd_max": 6.0,
}


def prestep_output_check(net, data):
    """``(max_i |h_W(x_i)|, that / sqrt(ln d))``; the max of nothing is 0."""
    if data.m == 0:
        return 0.0, 0.0
    max_abs_h = float(np.max(np.abs(outputs(net, data.inputs))))
    return max_abs_h, max_abs_h / math.sqrt(math.log(net.d))


def spectral_check(G, eta, tol=1e-8):
    """``||eta G||`` in spectral norm, to be compared against 2."""
    return abs(eta) * spectral_norm(G, tol=tol)


@dataclass
class RowNormSection:
    """Row-norm measurements.

    ``row_norm_*`` summarize ``||w_i + eta g_i||**2``; ``gtilde_sq_max`` is
    ``max ||eta g_i||**2`` and ``gtilde_row_norm_max`` its square root.
    """

    row_norm_min: float
    row_norm_max: float
    row_norm_mean: float
    row_norm_lower_bound: float
    row_norm_upper_bound: float
    gtilde_sq_max: float
    gtilde_sq_bound: float
    gtilde_row_norm_max: float
    deviation: float
    passed: bool


def row_norm_check(W, Gtilde, eta, m, d, q, sup_deriv):
    """Compare row norms of ``W + eta Gtilde`` and ``eta Gtilde`` with their bounds.

    The expected squared row norm lies in ``[1, 1 + B]`` with
    ``B = m ln(d)**2 sup_deriv**2 / (d q)``, and each row is allowed to
    deviate from its expectation by ``1/sqrt(d)``. Passes iff every
    ``||w_i + eta g_i||**2`` is in ``[1 - 1/sqrt(d), 1 + B + 1/sqrt(d)]``
    and every ``||eta g_i||**2 <= B + 1/sqrt(d)``.
    """
    bound = m * math.log(d) ** 2 * sup_deriv**2 / (d * q)
    dev = 1.0 / math.sqrt(d)
    step = eta * np.asarray(Gtilde, dtype=np.float64)
    full = row_norms_squared(np.asarray(W, dtype=np.float64) + step)
    own = row_norms_squared(step)
    lower, upper = 1.0 - dev, 1.0 + bound + dev
    passed = bool(
        np.all(full >= lower) and np.all(full <= upper) and np.all(own <= bound + dev)
    )
    return RowNormSection(
        row_norm_min=float(full.min()),
        row_norm_max=float(full.max()),
        row_norm_mean=float(full.mean()),
        row_norm_lower_bound=lower,
        row_norm_upper_bound=1.0 + bound,
        gtilde_sq_max=float(own.max()),
        gtilde_sq_bound=bound,
        gtilde_row_norm_max=float(math.sqrt(own.max())),
        deviation=dev,
        passed=passed,
    )


def margin_decomposition(net0, data, eta, hold_out, mode="exact", G=None):
    """Split the held-out example's post-step margin into base and self terms.

    Returns ``(base, self_term, predicted)`` where ``base`` is the output
    at ``W + eta Gtilde`` (every other example's step),
    ``self_term = y (h_{W + eta G}(x) - base)`` is what the example's own
    gradient adds, and ``predicted = ln(d) E sigma'(X)**2``. By
    construction ``y h_{W + eta G}(x) = y base + self_term``.

    When ``G`` is supplied, ``Gtilde`` is obtained by removing the held-out
    example's rank-1 term from it rather than by a fresh product.
    """
    if G is None:
        G, _ = full_gradient(net0, data, mode)
        Gtilde = leave_one_out_gradient(net0, data, hold_out, mode)
    else:
        Gtilde = G - held_out_term(net0, data, hold_out, mode)
    x = data.inputs[hold_out]
    y = float(data.labels[hold_out])
    base = forward(net0.with_weights(net0.W + eta * Gtilde), x)
    post = forward(net0.with_weights(net0.W + eta * G), x)
    self_term = y * (post - base)
    predicted = math.log(net0.d) * expected_sq_derivative(net0.activation)
    return base, self_term, predicted


@dataclass
class LemmaReport:
    m: int
    d: int
    q: int
    eta: float
    active_count: int
    max_pre_h: float
    pre_h_over_sqrtlogd: float
    spec_norm_eta_G: float
    spec_norm_eta_Gtilde: float
    row_norm_min: float
    row_norm_max: float
    row_norm_mean: float
    row_norm_lower_bound: float
    row_norm_upper_bound: float
    gtilde_sq_max: float
    gtilde_sq_bound: float
    gtilde_row_norm_max: float
    decomposition: list = field(default_factory=list)
    flags: dict = field(default_factory=dict)
    thresholds: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.flags.values())

    def to_dict(self):
        return asdict(self)


def check_lemmas(net, data, eta=None, mode="exact", hold_outs=(), spectral_tol=1e-6, G=None):
    """Run every lemma check on one (network, dataset) pair.

    ``Gtilde`` for the spectral and row-norm checks leaves out the last
    example. ``hold_outs`` lists the indices for the margin decomposition.
    """
    m, d, q = data.m, net.d, net.q
    if m == 0:
        raise ValueError("lemma checks need at least one example")
    if eta is None:
        eta = default_step_size(m, d)
    if G is None:
        G, active = full_gradient(net, data, mode)
    else:
        active = count_active(net, data)
    Gtilde = leave_one_out_gradient(net, data, m - 1, mode)

    max_pre_h, ratio = prestep_output_check(net, data)
    rows = row_norm_check(net.W, Gtilde, eta, m, d, q, net.activation.lipschitz_bound)
    logd = math.log(d)

    decomposition = []
    for k in hold_outs:
        base, self_term, predicted = margin_decomposition(net, data, eta, k, mode, G=G)
        y = float(data.labels[k])
        post = forward(net.with_weights(net.W + eta * G), data.inputs[k])
        decomposition.append(
            {
                "hold_out": int(k),
                "base": base,
                "self_term": self_term,
                "predicted": predicted,
                "identity_error": abs(y * post - (y * base + self_term)),
            }
        )

    t = THRESHOLDS
    thresholds = dict(t)
    thresholds.update(
        row_norm_lower=rows.row_norm_lower_bound,
        row_norm_upper=rows.row_norm_upper_bound + rows.deviation,
        gtilde_sq_upper=rows.gtilde_sq_bound + rows.deviation,
        base_abs_max=t["base_over_sqrtlogd_max"] * math.sqrt(logd),
    )
    spec_G = spectral_check(G, eta, spectral_tol)
    spec_Gt = spectral_check(Gtilde, eta, spectral_tol)
    flags = {
        "prestep_bound": ratio <= t["pre_h_ratio_max"],
        "all_hinges_active": active == m,
        "spectral_bound": spec_Gt <= t["spec_norm_eta_Gtilde_max"],
        "row_norms": rows.passed,
    }
    if decomposition:
        flags["decomposition_identity"] = all(
            e["identity_error"] <= t["decomposition_identity_atol"] for e in decomposition
        )
        flags["self_term"] = all(
            t["self_term_ratio_min"] <= e["self_term"] / e["predicted"] <= t["self_term_ratio_max"]
            for e in decomposition
        )
        flags["base_bound"] = all(abs(e["base"]) <= thresholds["base_abs_max"] for e in decomposition)

    return LemmaReport(
        m=m,
        d=d,
        q=q,
        eta=float(eta),
        active_count=int(active),
        max_pre_h=max_pre_h,
        pre_h_over_sqrtlogd=ratio,
        spec_norm_eta_G=spec_G,
        spec_norm_eta_Gtilde=spec_Gt,
        row_norm_min=rows.row_norm_min,
        row_norm_max=rows.row_norm_max,
        row_norm_mean=rows.row_norm_mean,
        row_norm_lower_bound=rows.row_norm_lower_bound,
        row_norm_upper_bound=rows.row_norm_upper_bound,
        gtilde_sq_max=rows.gtilde_sq_max,
        gtilde_sq_bound=rows.gtilde_sq_bound,
        gtilde_row_norm_max=rows.gtilde_row_norm_max,
        decomposition=decomposition,
        flags={k: bool(v) for k, v in flags.items()},
        thresholds=thresholds,
    )


@dataclass(frozen=True)
class OrliczEstimate:
    p: int
    t_hat: float
    n_samples: int


def _log_mean_exp(u):
    top = u.max()
    return top + math.log(np.mean(np.exp(u - top)))


def orlicz_norm_estimate(samples, p=2, rel_width=1e-6):
    """Empirical ``||X||_{Psi_p} = inf{t : mean exp(|x|**p / t**p) <= 2}``.

    Bisects geometrically on ``t / max|x|`` so the estimate scales exactly
    with the samples. Returns the feasible end of the final bracket.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    x = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    n = x.size
    if n < 100:
        raise ValueError("need at least 100 samples")
    top = x.max()
    if top == 0:
        return OrliczEstimate(p, 0.0, n)
    r = (x / top) ** p
    log2 = math.log(2.0)

    def feasible(s):
        return _log_mean_exp(r / s**p) <= log2

    lo, hi = 1e-12, 1.001 * log2 ** (-1.0 / p)
    while hi / lo - 1 > rel_width:
        mid = math.sqrt(lo * hi)
        if feasible(mid):
            hi = mid
        else:
            lo = mid
    return OrliczEstimate(p, hi * top, n)


def tail_exceedance(samples, t):
    """Fraction of samples with ``|x| >= t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    x = np.abs(np.asarray(samples, dtype=np.float64).ravel())
    if x.size == 0:
        return 0.0
    return float(np.count_nonzero(x >= t)) / x.size
