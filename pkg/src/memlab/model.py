"""The depth-two network, its activations, and Gaussian expectations of them."""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh_tridiagonal

__all__ = [
    "Activation",
    "Network",
    "activation_value_and_derivative",
    "check_centered_derivative",
    "expected_sq_derivative",
    "forward",
    "gaussian_expectation",
    "margins",
    "outputs",
]

KINDS = ("abs", "smoothed_abs", "relu")
CENTERED_TOL = 1e-8
DEFAULT_QUAD_ORDER = 64


@dataclass(frozen=True)
class Activation:
    """One of ``abs``, ``smoothed_abs`` (needs ``epsilon > 0``) or ``relu``.

    ``smoothed_abs`` is ``sqrt(z**2 + eps**2) - eps``, shifted so that
    ``sigma(0) = 0``. ``abs`` uses ``sign(0) = 0`` as its derivative at the
    kink, which keeps the derivative odd pointwise.
    """

    kind: str
    epsilon: float = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown activation kind {self.kind!r}")
        if self.kind == "smoothed_abs":
            if self.epsilon is None or not self.epsilon > 0:
                raise ValueError("smoothed_abs needs epsilon > 0")
        elif self.epsilon is not None:
            raise ValueError(f"{self.kind} takes no epsilon")

    @classmethod
    def from_config(cls, spec):
        spec = dict(spec)
        kind = spec.pop("kind", None)
        eps = spec.pop("epsilon", None)
        if spec:
            raise ValueError(f"unknown activation keys: {sorted(spec)}")
        return cls(kind, None if eps is None else float(eps))

    def to_config(self):
        if self.kind == "smoothed_abs":
            return {"kind": self.kind, "epsilon": self.epsilon}
        return {"kind": self.kind}

    @property
    def name(self):
        if self.kind == "smoothed_abs":
            return f"smoothed_abs({self.epsilon:g})"
        return self.kind

    @property
    def lipschitz_bound(self):
        """``sup |sigma'|``; equal to 1 for every supported kind."""
        return 1.0

    @property
    def second_derivative_bound(self):
        """``sup |sigma''|`` away from the breakpoints."""
        if self.kind == "smoothed_abs":
            return 1.0 / self.epsilon
        return 0.0

    @property
    def breakpoints(self):
        return () if self.kind == "smoothed_abs" else (0.0,)

    def value(self, z):
        z = np.asarray(z)
        if self.kind == "abs":
            return np.abs(z)
        if self.kind == "relu":
            return np.maximum(z, 0)
        eps = self.epsilon
        return np.sqrt(z * z + eps * eps) - eps

    def derivative(self, z):
        z = np.asarray(z)
        if self.kind == "abs":
            return np.sign(z)
        if self.kind == "relu":
            return (z > 0).astype(z.dtype if z.dtype.kind == "f" else np.float64)
        eps = self.epsilon
        return z / np.sqrt(z * z + eps * eps)


def activation_value_and_derivative(act, z):
    """``(sigma(z), sigma'(z))`` as floats."""
    return float(act.value(z)), float(act.derivative(z))


@lru_cache(maxsize=None)
def _half_line_rule(order):
    """Half-range Gauss-Hermite rule: weight exp(-x**2/2)/sqrt(2 pi) on (0, inf).

    Recurrence coefficients come from the discretized Stieltjes procedure on
    a fine piecewise Gauss-Legendre grid over [0, 40] (the weight beyond 40
    is below 1e-340); nodes and weights then follow from Golub-Welsch.
    """
    t, w = np.polynomial.legendre.leggauss(400)
    edges = np.linspace(0.0, 40.0, 9)
    half = 0.5 * (edges[1:] - edges[:-1])
    x = (half[:, None] * t + (0.5 * (edges[1:] + edges[:-1]))[:, None]).ravel()
    w = (half[:, None] * w).ravel() * np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)

    alpha = np.empty(order)
    beta = np.empty(order)
    p_prev = np.zeros_like(x)
    p = np.full_like(x, 1.0 / math.sqrt(w.sum()))
    b_prev = 0.0
    for k in range(order):
        alpha[k] = np.dot(w, x * p * p)
        r = (x - alpha[k]) * p - b_prev * p_prev
        beta[k] = math.sqrt(np.dot(w, r * r))
        p_prev, p, b_prev = p, r / beta[k], beta[k]
    nodes, vecs = eigh_tridiagonal(alpha, beta[:-1])
    # total mass of the half-normal weight is exactly 1/2
    return nodes, 0.5 * vecs[0] ** 2


def gaussian_expectation(f, quad_order=DEFAULT_QUAD_ORDER, breakpoints=(0.0,)):
    """``E f(X)`` for ``X ~ N(0, 1)`` by Gaussian quadrature split at 0.

    Each half-line gets its own ``quad_order``-point half-range
    Gauss-Hermite rule, so integrands with a kink or jump at 0 are
    integrated without loss of order. The two rules are mirror images of
    each other, which makes the result exactly zero for odd ``f``.
    """
    if quad_order < 16:
        raise ValueError("quad_order must be at least 16")
    if any(b != 0.0 for b in breakpoints):
        raise NotImplementedError("only breakpoints at 0 are supported")
    x, w = _half_line_rule(quad_order)
    return float(np.dot(w, f(x)) + np.dot(w, f(-x)))


def check_centered_derivative(act, quad_order=DEFAULT_QUAD_ORDER):
    """Estimate ``E sigma'(X)`` and report whether it vanishes (``|.| <= 1e-8``)."""
    value = gaussian_expectation(act.derivative, quad_order, act.breakpoints or (0.0,))
    return value, abs(value) <= CENTERED_TOL


def expected_sq_derivative(act, quad_order=DEFAULT_QUAD_ORDER):
    """``E sigma'(X)**2``, the predicted margin coefficient per unit ``ln d``."""
    return gaussian_expectation(
        lambda z: act.derivative(z) ** 2, quad_order, act.breakpoints or (0.0,)
    )


@dataclass(frozen=True)
class Network:
    """``h_W(x) = q**-0.5 * sum_i a_i sigma(<w_i, x>)``, no biases.

    ``W`` and ``a`` are stored as read-only copies.
    """

    W: np.ndarray
    a: np.ndarray
    activation: Activation = field(default_factory=lambda: Activation("abs"))

    def __post_init__(self):
        W = np.array(self.W, copy=True)
        a = np.array(self.a, dtype=W.dtype if W.dtype.kind == "f" else np.float64, copy=True)
        if W.ndim != 2:
            raise ValueError("W must be a (q, d) matrix")
        if a.shape != (W.shape[0],):
            raise ValueError(f"a must have length q={W.shape[0]}, got shape {a.shape}")
        if not np.all(np.abs(a) == 1):
            raise ValueError("output signs must be +1 or -1")
        W.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "a", a)

    @property
    def q(self):
        return self.W.shape[0]

    @property
    def d(self):
        return self.W.shape[1]

    def with_weights(self, W):
        return Network(W, self.a, self.activation)

    def preactivations(self, X):
        """``X @ W.T``: row ``i`` holds ``<w_j, x_i>`` for every neuron ``j``."""
        X = np.asarray(X)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise ValueError(f"inputs must have {self.d} columns, got shape {X.shape}")
        return X @ self.W.T


def outputs(net, X):
    """``h_W`` at every row of ``X``."""
    Z = net.preactivations(X)
    return net.activation.value(Z) @ net.a / math.sqrt(net.q)


def forward(net, x):
    x = np.asarray(x)
    if x.ndim != 1 or x.shape[0] != net.d:
        raise ValueError(f"x must have dim {net.d}, got shape {x.shape}")
    return float(outputs(net, x[None, :])[0])


def margins(net, data):
    """``y_i * h_W(x_i)`` for every example."""
    if data.d != net.d:
        raise ValueError(f"dataset has d={data.d}, network has d={net.d}")
    if data.m == 0:
        return np.zeros(0)
    return data.labels * outputs(net, data.inputs)
