"""Finite probability primitives: pmfs, joint triples, types, typicality.

Conventions used throughout the package:

* natural logarithms everywhere, so divergences are in nats;
* 0 * ln(0/q) = 0, and P(x) > 0 with Q(x) = 0 is an error rather than inf;
* axes of a three-way joint are numbered U1 = 0, U2 = 1, V = 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AbsoluteContinuityViolation, LengthMismatch, OutOfAlphabet

U1, U2, V = 0, 1, 2

_SUM_TOL = 1e-12


def _as_prob_array(values, ndim, what):
    arr = np.asarray(values, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{what} must be {ndim}-dimensional, got shape {arr.shape}")
    if arr.size == 0:
        raise ValueError(f"{what} must not be empty")
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} entries must be finite and nonnegative")
    total = float(arr.sum())
    if abs(total - 1.0) > _SUM_TOL:
        raise ValueError(f"{what} must sum to 1 within {_SUM_TOL}, got {total!r}")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class Pmf:
    """Probability mass function on a finite alphabet {0, ..., K-1}."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_prob_array(self.probs, 1, "Pmf"))

    @property
    def alphabet_size(self) -> int:
        return self.probs.shape[0]

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs > 0)

    def __eq__(self, other):
        return isinstance(other, Pmf) and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True, eq=False)
class Joint3Pmf:
    """Joint pmf of a source triple (U1, U2, V) as a three-axis tensor."""

    probs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probs", _as_prob_array(self.probs, 3, "Joint3Pmf"))

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.probs.shape

    def marginal(self, axis: int) -> Pmf:
        return marginal(self, axis)

    def __eq__(self, other):
        return isinstance(other, Joint3Pmf) and np.array_equal(self.probs, other.probs)


@dataclass(frozen=True)
class SequenceType:
    """Empirical type of a length-n sequence: symbol counts plus n."""

    counts: np.ndarray
    n: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.ndim != 1 or counts.size == 0:
            raise ValueError("counts must be a nonempty 1-d integer array")
        if np.any(counts < 0):
            raise ValueError("counts must be nonnegative")
        if int(counts.sum()) != self.n:
            raise ValueError(f"counts sum to {int(counts.sum())}, expected n={self.n}")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        counts = counts.copy()
        counts.flags.writeable = False
        object.__setattr__(self, "counts", counts)

    def empirical(self) -> np.ndarray:
        """Empirical distribution counts/n (an array, not a Pmf, since it
        lives on the 1/n lattice and may not pass strict Pmf validation)."""
        return self.counts / self.n


def _probs_of(dist) -> np.ndarray:
    if isinstance(dist, (Pmf, Joint3Pmf)):
        return dist.probs
    return np.asarray(dist, dtype=float)


def kl_divergence(p, q) -> float:
    """D(P || Q) in nats, with the 0 ln 0 = 0 convention.

    Raises AbsoluteContinuityViolation if P charges a cell that Q does not;
    the result is therefore always finite and nonnegative.
    """
    pa, qa = _probs_of(p), _probs_of(q)
    if pa.shape != qa.shape:
        raise ValueError(f"shape mismatch: {pa.shape} vs {qa.shape}")
    mask = pa > 0
    bad = mask & (qa == 0)
    if np.any(bad):
        cell = np.unravel_index(int(np.flatnonzero(bad.ravel())[0]), pa.shape)
        raise AbsoluteContinuityViolation(tuple(int(c) for c in cell))
    val = float(np.sum(pa[mask] * np.log(pa[mask] / qa[mask])))
    # Gibbs guarantees >= 0; rounding can leave a tiny negative residue.
    return max(val, 0.0)


def marginal(joint, axis: int) -> Pmf:
    """Marginal pmf of one axis of a three-way joint (Joint3Pmf or array)."""
    if not isinstance(joint, Joint3Pmf):
        joint = Joint3Pmf(joint)
    if axis not in (U1, U2, V):
        raise ValueError(f"axis must be one of {U1}, {U2}, {V}, got {axis}")
    other = tuple(a for a in range(3) if a != axis)
    return Pmf(joint.probs.sum(axis=other))


def empirical_type(seq, alphabet_size: int) -> SequenceType:
    """Count symbol occurrences of an integer sequence."""
    arr = np.asarray(seq)
    if arr.ndim != 1:
        raise ValueError("sequence must be one-dimensional")
    if arr.size == 0:
        raise ValueError("sequence must have length >= 1")
    if not np.issubdtype(arr.dtype, np.integer):
        if np.any(arr != np.floor(arr)):
            raise OutOfAlphabet("sequence symbols must be integers")
        arr = arr.astype(np.int64)
    if alphabet_size < 1:
        raise ValueError("alphabet_size must be >= 1")
    if arr.min() < 0 or arr.max() >= alphabet_size:
        raise OutOfAlphabet(
            f"symbol {int(arr.min() if arr.min() < 0 else arr.max())} outside "
            f"alphabet of size {alphabet_size}"
        )
    counts = np.bincount(arr, minlength=alphabet_size)
    return SequenceType(counts, int(arr.size))


def is_strongly_typical(seq, p: Pmf, mu: float) -> bool:
    """Strong typicality: every symbol frequency within mu of its
    probability, and symbols of probability zero never occur."""
    if mu < 0:
        raise ValueError("mu must be >= 0")
    t = empirical_type(seq, p.alphabet_size)
    pi = t.empirical()
    if np.any(pi[p.probs == 0] > 0):
        return False
    return bool(np.all(np.abs(pi - p.probs) <= mu))


def sample_iid(dist, n: int, rng_state):
    """Draw n iid symbols (Pmf) or triples (Joint3Pmf).

    rng_state may be an integer seed or a numpy Generator; identical state
    gives identical output. Sampling is inverse-cdf on uniforms, so two
    distributions sampled against the same uniforms are coupled.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(rng_state)
    u = rng.random(n)
    if isinstance(dist, Pmf):
        return quantile_map(dist.probs, u)
    if isinstance(dist, Joint3Pmf):
        flat = quantile_map(dist.probs.ravel(), u)
        return np.stack(np.unravel_index(flat, dist.dims), axis=1)
    raise TypeError("dist must be a Pmf or Joint3Pmf")


def quantile_map(probs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Map uniforms in [0,1) to symbols via the inverse cdf of probs."""
    cdf = np.cumsum(probs)
    idx = np.searchsorted(cdf, u, side="right")
    return np.minimum(idx, probs.size - 1).astype(np.int64)


def require_length(seq, n: int, what: str = "sequence") -> np.ndarray:
    arr = np.asarray(seq)
    if arr.ndim != 1 or arr.size != n:
        raise LengthMismatch(f"{what} must have length {n}, got shape {arr.shape}")
    return arr
