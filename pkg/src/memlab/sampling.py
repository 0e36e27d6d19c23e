"""Seeded, reproducible sampling of datasets, output signs and initial weights.

Every random quantity comes from a :class:`RngStream`, a SplitMix64
generator. SplitMix64 is counter based (output ``k`` is
``mix(state + k * GAMMA)``), so blocks of outputs are produced with
vectorized numpy arithmetic and the sequence is bit-identical to the
scalar reference generator.

Independent sub-streams are derived with :func:`derive_stream`; the
harness uses one per replicate and then separate children for weights,
signs, inputs and labels, so e.g. changing ``m`` never perturbs ``W``.
"""

from dataclasses import dataclass

import numpy as np

from .linalg import basis_rows, orthonormal_rows

__all__ = [
    "Dataset",
    "RngStream",
    "derive_stream",
    "sample_dataset",
    "sample_signs",
    "sample_weights",
    "splitmix64",
]

GAMMA = 0x9E3779B97F4A7C15
MASK64 = (1 << 64) - 1

_GAMMA_U64 = np.uint64(GAMMA)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)

# child stream ids
WEIGHTS, SIGNS, DATA = 0, 1, 2
INPUTS, LABELS = 0, 1


def _mix64_scalar(z):
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def splitmix64(state):
    """One step of the reference SplitMix64 generator.

    Returns ``(new_state, output)`` as Python ints.
    """
    state = (state + GAMMA) & MASK64
    return state, _mix64_scalar(state)


def derive_stream(seed, replicate):
    """Stream for ``replicate`` under a 64-bit ``seed``.

    The state is one SplitMix64 step applied to
    ``seed ^ (replicate * GAMMA)`` (all arithmetic mod 2**64).
    """
    x = (seed & MASK64) ^ ((replicate * GAMMA) & MASK64)
    _, state = splitmix64(x)
    return RngStream(state=state, stream_id=replicate)


@dataclass
class RngStream:
    """A SplitMix64 stream. Not thread safe; give each worker its own."""

    state: int
    stream_id: int = 0
    position: int = 0

    def child(self, stream_id):
        return derive_stream(self.state, stream_id)

    def next_u64(self, n):
        """The next ``n`` 64-bit outputs as a uint64 array."""
        k = np.arange(self.position + 1, self.position + n + 1, dtype=np.uint64)
        self.position += n
        return _mix64(np.uint64(self.state) + k * _GAMMA_U64)

    def uniform(self, n):
        """``n`` doubles in [0, 1) built from the top 53 bits."""
        return (self.next_u64(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53

    def normal(self, n):
        """``n`` standard normals by Box-Muller, consumed in pairs."""
        pairs = (n + 1) // 2
        u = self.uniform(2 * pairs)
        radius = np.sqrt(-2.0 * np.log1p(-u[0::2]))
        angle = 2.0 * np.pi * u[1::2]
        z = np.empty(2 * pairs)
        z[0::2] = radius * np.cos(angle)
        z[1::2] = radius * np.sin(angle)
        return z[:n]

    def signs(self, n):
        """``n`` independent uniform signs in {-1.0, +1.0} (top bit)."""
        bits = self.next_u64(n) >> np.uint64(63)
        return np.where(bits == 1, 1.0, -1.0)

    def permutation(self, n):
        return np.argsort(self.next_u64(n), kind="stable")


@dataclass(frozen=True)
class Dataset:
    """``m`` inputs (rows of ``inputs``) and their labels in {-1, +1}."""

    inputs: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        if self.inputs.ndim != 2:
            raise ValueError("inputs must be an (m, d) matrix")
        if self.labels.shape != (self.inputs.shape[0],):
            raise ValueError("need one label per input row")
        if not np.all(np.abs(self.labels) == 1):
            raise ValueError("labels must be +1 or -1")

    @property
    def m(self):
        return self.inputs.shape[0]

    @property
    def d(self):
        return self.inputs.shape[1]

    def without(self, index):
        keep = np.arange(self.m) != index
        return Dataset(self.inputs[keep], self.labels[keep])


def sample_dataset(rng, m, d):
    """``m`` rows ``x_i ~ N(0, I_d)`` and independent Rademacher labels.

    Inputs and labels come from separate children of ``rng``; the inputs
    are drawn in row-major order, so the first rows do not depend on ``m``.
    """
    if d < 1:
        raise ValueError("d must be at least 1")
    if m < 0:
        raise ValueError("m must be nonnegative")
    inputs = rng.child(INPUTS).normal(m * d).reshape(m, d)
    labels = rng.child(LABELS).signs(m)
    return Dataset(inputs, labels)


def sample_signs(rng, q, mode="iid"):
    """Output-layer signs ``a``.

    ``iid`` draws independent uniform signs. ``balanced`` puts exactly
    ``q // 2`` minus signs at random positions, so ``|sum(a)| <= 1``.
    """
    if q < 1:
        raise ValueError("q must be at least 1")
    if mode == "iid":
        return rng.signs(q)
    if mode == "balanced":
        a = np.ones(q)
        a[rng.permutation(q)[: q // 2]] = -1.0
        return a
    raise ValueError(f"unknown sign mode {mode!r}")


def sample_weights(rng, q, d, init="haar"):
    """Initial ``q x d`` weight matrix with orthonormal rows."""
    if init == "haar":
        return orthonormal_rows(rng.normal(q * d).reshape(q, d))
    if init == "basis":
        return basis_rows(q, d)
    raise ValueError(f"unknown init {init!r}")
