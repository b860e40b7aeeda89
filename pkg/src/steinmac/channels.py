"""Channels: discrete memoryless MACs and the generalized Gaussian MAC.

A discrete two-sender channel is classified by which sensors can gate an
output on and off. Sensor 1 can toggle when some output is impossible
under one of its inputs yet possible under another, with the partner
input held fixed; sensor 2 symmetrically. Both toggles, one, or neither
give four classes, and the toggle witnesses double as marker symbols for
the communication schemes.

The continuous channel is Y = h1 x1 + h2 x2 + Z with Z generalized
Gaussian of shape p and scale sigma. Its density normalizer, sampler,
and the likelihood-ratio bound certifying that sublinear input budgets
cannot move the output distribution are all here.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import gamma as _gamma_fn

from .errors import (
    BlocklengthTooSmall,
    EmptyOutputAlphabet,
    LengthMismatch,
    MarkerMismatch,
    NoMarkers,
    OutOfAlphabet,
    ParseError,
)
from .prob import require_length

_ROW_TOL = 1e-12
_FILE_ROW_TOL = 1e-9


class ChannelClass(enum.Enum):
    FULL = "full"
    SPARSE = "sparse"
    SPARSE_FULL = "sparse_full"
    FULL_SPARSE = "full_sparse"

    @property
    def label(self) -> str:
        return self.value


@dataclass(frozen=True, eq=False)
class Dmmac:
    """Discrete memoryless MAC kernel, indexed [x1, x2, y]."""

    kernel: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.kernel, dtype=float)
        if k.ndim != 3:
            raise ValueError(f"kernel must be 3-dimensional, got shape {k.shape}")
        if min(k.shape) < 1:
            raise ValueError("kernel axes must be nonempty")
        if np.any(k < 0) or not np.all(np.isfinite(k)):
            raise ValueError("kernel entries must be finite and nonnegative")
        rows = k.sum(axis=2)
        if np.any(np.abs(rows - 1.0) > _ROW_TOL):
            bad = np.unravel_index(int(np.argmax(np.abs(rows - 1.0))), rows.shape)
            raise ValueError(
                f"kernel row {bad} sums to {rows[bad]!r}, expected 1 within {_ROW_TOL}"
            )
        k = k.copy()
        k.flags.writeable = False
        object.__setattr__(self, "kernel", k)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.kernel.shape

    def __eq__(self, other):
        return isinstance(other, Dmmac) and np.array_equal(self.kernel, other.kernel)


def prune_unreachable_outputs(ch: Dmmac) -> Dmmac:
    """Drop outputs with zero probability under every input pair.

    A dead output column would make the no-toggle condition look like full
    connectivity even though the surviving kernel has zeros, so
    classification is stated on the pruned kernel.
    """
    reach = ch.kernel.sum(axis=(0, 1)) > 0
    if not np.any(reach):
        raise EmptyOutputAlphabet("every output is unreachable")
    if np.all(reach):
        return ch
    return Dmmac(ch.kernel[:, :, reach])


def toggle_predicate(ch: Dmmac, sensor: int) -> bool:
    """Whether the sensor can make some output impossible or possible by
    switching its own input, for some fixed partner input."""
    if sensor not in (1, 2):
        raise ValueError("sensor must be 1 or 2")
    axis = 0 if sensor == 1 else 1
    impossible = np.any(ch.kernel == 0, axis=axis)
    possible = np.any(ch.kernel > 0, axis=axis)
    return bool(np.any(impossible & possible))


def classify(ch: Dmmac) -> ChannelClass:
    pruned = prune_unreachable_outputs(ch)
    a1 = toggle_predicate(pruned, 1)
    a2 = toggle_predicate(pruned, 2)
    if a1 and a2:
        return ChannelClass.SPARSE
    if a1:
        return ChannelClass.SPARSE_FULL
    if a2:
        return ChannelClass.FULL_SPARSE
    return ChannelClass.FULL


@dataclass(frozen=True)
class ToggleWitness:
    """One sensor's marker symbols.

    off_input makes marker_output impossible, on_input makes it possible,
    both with the partner sensor pinned to partner_pilot.
    """

    off_input: int
    on_input: int
    partner_pilot: int
    marker_output: int

    def holds_for(self, ch: Dmmac, sensor: int) -> bool:
        k = ch.kernel
        if sensor == 1:
            off = k[self.off_input, self.partner_pilot, self.marker_output]
            on = k[self.on_input, self.partner_pilot, self.marker_output]
        else:
            off = k[self.partner_pilot, self.off_input, self.marker_output]
            on = k[self.partner_pilot, self.on_input, self.marker_output]
        return off == 0 and on > 0

    def marker_prob(self, ch: Dmmac, sensor: int) -> float:
        k = ch.kernel
        if sensor == 1:
            return float(k[self.on_input, self.partner_pilot, self.marker_output])
        return float(k[self.partner_pilot, self.on_input, self.marker_output])


@dataclass(frozen=True)
class MarkerSet:
    """Witnesses for whichever sensors can toggle; None where they cannot."""

    sensor1: ToggleWitness | None
    sensor2: ToggleWitness | None


def _first_witness(ch: Dmmac, sensor: int) -> ToggleWitness | None:
    # scan outputs first: the witness is "the first output some input of
    # this sensor can switch off", then pilot, then the off/on inputs
    k = ch.kernel
    n_own = k.shape[0] if sensor == 1 else k.shape[1]
    n_partner = k.shape[1] if sensor == 1 else k.shape[0]
    n_out = k.shape[2]

    def entry(own, partner, y):
        return k[own, partner, y] if sensor == 1 else k[partner, own, y]

    for y in range(n_out):
        for pilot in range(n_partner):
            for off in range(n_own):
                if entry(off, pilot, y) != 0:
                    continue
                for on in range(n_own):
                    if entry(on, pilot, y) > 0:
                        return ToggleWitness(off, on, pilot, y)
    return None


def find_markers(ch: Dmmac, cls: ChannelClass) -> MarkerSet:
    """First witnesses in lexicographic scan order for the class's sensors."""
    if cls is ChannelClass.FULL:
        raise NoMarkers("a fully connected channel admits no markers")
    w1 = _first_witness(ch, 1) if cls in (ChannelClass.SPARSE, ChannelClass.SPARSE_FULL) else None
    w2 = _first_witness(ch, 2) if cls in (ChannelClass.SPARSE, ChannelClass.FULL_SPARSE) else None
    if cls is ChannelClass.SPARSE and (w1 is None or w2 is None):
        raise NoMarkers("channel has no toggle witness for a required sensor")
    if cls is ChannelClass.SPARSE_FULL and w1 is None:
        raise NoMarkers("channel has no sensor-1 toggle witness")
    if cls is ChannelClass.FULL_SPARSE and w2 is None:
        raise NoMarkers("channel has no sensor-2 toggle witness")
    return MarkerSet(w1, w2)


def verify_markers(ch: Dmmac, markers: MarkerSet) -> None:
    """Re-check a marker set against a kernel; raises MarkerMismatch."""
    if markers.sensor1 is not None and not markers.sensor1.holds_for(ch, 1):
        raise MarkerMismatch("sensor-1 witness does not hold for this kernel")
    if markers.sensor2 is not None and not markers.sensor2.holds_for(ch, 2):
        raise MarkerMismatch("sensor-2 witness does not hold for this kernel")


@dataclass(frozen=True)
class BudgetLaw:
    """Sublinear cost budget Gamma(n): a*n**b (0<b<1) or a*ln(1+n).

    Both families grow without bound while Gamma(n)/n -> 0.
    """

    kind: str
    a: float
    b: float = 0.0

    def __post_init__(self):
        if self.kind not in ("power", "log"):
            raise ValueError(f"unknown budget law {self.kind!r}")
        if self.a <= 0:
            raise ValueError("budget coefficient a must be positive")
        if self.kind == "power" and not (0 < self.b < 1):
            raise ValueError("power-law exponent must satisfy 0 < b < 1")

    def gamma(self, n: int) -> float:
        if n < 1:
            raise ValueError("n must be >= 1")
        if self.kind == "power":
            return self.a * float(n) ** self.b
        return self.a * math.log1p(n)

    @classmethod
    def power(cls, a: float, b: float) -> "BudgetLaw":
        return cls("power", a, b)

    @classmethod
    def log(cls, a: float) -> "BudgetLaw":
        return cls("log", a)


@dataclass(frozen=True, eq=False)
class CostModel:
    """Per-symbol input costs and a budget law for each sensor.

    Symbol 0 is the designated free symbol; every other symbol costs a
    strictly positive amount.
    """

    costs1: np.ndarray
    costs2: np.ndarray
    law1: BudgetLaw
    law2: BudgetLaw

    def __post_init__(self):
        for name in ("costs1", "costs2"):
            c = np.asarray(getattr(self, name), dtype=float)
            if c.ndim != 1 or c.size < 1:
                raise ValueError(f"{name} must be a nonempty 1-d array")
            if c[0] != 0:
                raise ValueError(f"{name}[0] must be 0 (the free symbol)")
            if np.any(c[1:] <= 0):
                raise ValueError(f"{name} must be positive for symbols >= 1")
            c = c.copy()
            c.flags.writeable = False
            object.__setattr__(self, name, c)

    @classmethod
    def unit(cls, n1: int, n2: int, law: BudgetLaw) -> "CostModel":
        """Unit cost for every nonzero symbol, same law for both sensors."""
        c1 = np.zeros(n1)
        c1[1:] = 1.0
        c2 = np.zeros(n2)
        c2[1:] = 1.0
        return cls(c1, c2, law, law)

    def costs(self, sensor: int) -> np.ndarray:
        return self.costs1 if sensor == 1 else self.costs2

    def law(self, sensor: int) -> BudgetLaw:
        return self.law1 if sensor == 1 else self.law2

    def c_min(self, sensor: int) -> float:
        c = self.costs(sensor)
        if c.size < 2:
            return math.inf
        return float(c[1:].min())

    def gamma(self, sensor: int, n: int) -> float:
        return self.law(sensor).gamma(n)


@dataclass(frozen=True)
class CostBudget:
    """Derived per-blocklength budget arithmetic."""

    n: int
    k_max1: int
    k_max2: int
    tau_max: int
    k: int


def cost_budget(cm: CostModel, n: int) -> CostBudget:
    """Largest usable marker-block length for blocklength n.

    k_max per sensor is how many cheapest nonzero symbols the budget buys;
    the scheme spends two blocks of k symbols, so k is half the smaller
    k_max, and there must be room for both blocks inside n.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    k_maxes = []
    for sensor in (1, 2):
        cmin = cm.c_min(sensor)
        k_maxes.append(0 if math.isinf(cmin) else int(cm.gamma(sensor, n) // cmin))
    k_max1, k_max2 = k_maxes
    tau_max = 2 * k_max1 + 2 * k_max2
    k = min(k_max1, k_max2) // 2
    if k < 1 or 2 * k >= n:
        raise BlocklengthTooSmall(
            f"budget at n={n} gives k={k}; need 1 <= k and 2k < n"
        )
    return CostBudget(n, k_max1, k_max2, tau_max, k)


def admissible(x_seq, sensor: int, cm: CostModel, n: int) -> bool:
    """Whether a length-n input sequence fits the sensor's cost budget."""
    if sensor not in (1, 2):
        raise ValueError("sensor must be 1 or 2")
    arr = require_length(x_seq, n, f"sensor-{sensor} input")
    costs = cm.costs(sensor)
    arr = np.asarray(arr, dtype=np.int64)
    if arr.min() < 0 or arr.max() >= costs.size:
        raise OutOfAlphabet(
            f"input symbol outside alphabet of size {costs.size}"
        )
    return float(costs[arr].sum()) <= cm.gamma(sensor, n)


# --- generalized Gaussian MAC ---


@dataclass(frozen=True)
class GgMac:
    """Y = h1 x1 + h2 x2 + Z, Z generalized Gaussian (shape p, scale sigma)."""

    p: float
    sigma: float
    h1: float
    h2: float

    def __post_init__(self):
        if not (self.p > 0):
            raise ValueError("shape p must be positive")
        if not (self.sigma > 0):
            raise ValueError("scale sigma must be positive")
        if self.h1 == 0 or self.h2 == 0:
            raise ValueError("channel gains must be nonzero")


def gg_constant(p: float) -> float:
    """Density normalizer c_p = p / (2^((p+1)/p) Gamma(1/p)).

    c_2 = 1/sqrt(2 pi) recovers the standard normal and c_1 = 1/4 the
    Laplace density with this scale convention.
    """
    if not (p > 0):
        raise ValueError("shape p must be positive")
    return p / (2 ** ((p + 1) / p) * float(_gamma_fn(1 / p)))


def gg_log_density(z, p: float, sigma: float):
    """Log density ln(c_p / sigma) - |z|^p / (2 sigma^p), elementwise."""
    if not (sigma > 0):
        raise ValueError("scale sigma must be positive")
    z = np.asarray(z, dtype=float)
    out = math.log(gg_constant(p) / sigma) - np.abs(z) ** p / (2 * sigma**p)
    return out if out.ndim else float(out)


def gg_sample(p: float, sigma: float, n: int, rng_state) -> np.ndarray:
    """Draw n iid generalized Gaussian variates.

    |Z|^p / (2 sigma^p) is Gamma(1/p, 1) distributed, so a gamma draw
    powered back and given a uniform sign has exactly the target density.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (p > 0 and sigma > 0):
        raise ValueError("p and sigma must be positive")
    rng = np.random.default_rng(rng_state)
    g = rng.gamma(1.0 / p, 1.0, size=n)
    magnitude = (2 * sigma**p * g) ** (1.0 / p)
    sign = rng.integers(0, 2, size=n) * 2 - 1
    return magnitude * sign


def gg_channel_output(mac: GgMac, x1_seq, x2_seq, rng_state) -> np.ndarray:
    x1 = np.asarray(x1_seq, dtype=float)
    x2 = np.asarray(x2_seq, dtype=float)
    if x1.shape != x2.shape or x1.ndim != 1:
        raise LengthMismatch("input sequences must be 1-d and of equal length")
    z = gg_sample(mac.p, mac.sigma, x1.size, rng_state)
    return mac.h1 * x1 + mac.h2 * x2 + z


@dataclass(frozen=True)
class GgRatioBound:
    """Output-set threshold nu and the log-likelihood-ratio floor on it."""

    nu: float
    log_ratio_lower_bound: float


def gg_ratio_bound(mac: GgMac, cm: CostModel, n: int, delta: float) -> GgRatioBound:
    """Uniform lower bound on ln p(y|x,x') - ln p(y|x~,x~') over admissible
    inputs, valid for all y when p <= 1 and on {||y||_p^p <= nu} when p > 1.

    Only the budget laws of the cost model enter; the input cost on this
    channel is the p-th moment itself. The bound is o(n) because the
    budgets are sublinear, which is what drives the exponent result.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    if n < 1:
        raise ValueError("n must be >= 1")
    p, sigma = mac.p, mac.sigma
    s = abs(mac.h1) ** p * cm.gamma(1, n) + abs(mac.h2) ** p * cm.gamma(2, n)
    if p <= 1:
        return GgRatioBound(math.inf, -(2**p) * s / sigma**p)
    nu = 2 ** (2 * p - 2) * s + 2 ** (p - 1) * (n * 2 * sigma**p / p + delta * n)
    bound = -(2 ** (p - 2) * p / sigma**p) * (
        4 * 2**p * s + 2 * s ** (1 / p) * nu ** ((p - 1) / p)
    )
    return GgRatioBound(nu, bound)


def gg_dn_tail(
    mac: GgMac, cm: CostModel, n: int, delta: float, trials: int, rng_state
) -> float:
    """Monte-Carlo estimate of P[||Y||_p^p > nu] under hypothesis 0.

    Inputs are the all-zero (cost-free, always admissible) sequences, so
    Y = Z. For p <= 1 the set is all of R^n and the tail is exactly 0.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    bound = gg_ratio_bound(mac, cm, n, delta)
    if math.isinf(bound.nu):
        return 0.0
    rng = np.random.default_rng(rng_state)
    hits = 0
    block = max(1, min(trials, 2**22 // max(n, 1)))
    done = 0
    while done < trials:
        b = min(block, trials - done)
        z = gg_sample(mac.p, mac.sigma, b * n, rng).reshape(b, n)
        hits += int(np.count_nonzero((np.abs(z) ** mac.p).sum(axis=1) > bound.nu))
        done += b
    return hits / trials


# --- kernel file format ---


def parse_dmmac(text: str, path=None) -> Dmmac:
    """Parse the kernel text format: a dims line "|X1| |X2| |Y|" then one
    probability row per (x1, x2) pair in row-major order.

    Rows may be off by up to 1e-9 from unit mass (they are renormalized to
    satisfy the stricter in-memory invariant); anything worse is an error.
    """
    lines = text.splitlines()
    entries = []
    for i, raw in enumerate(lines, start=1):
        stripped = raw.strip()
        if not stripped or stripped.startswith("#"):
            continue
        entries.append((i, stripped))
    if not entries:
        raise ParseError("empty kernel file", path=path)
    ln, dims_line = entries[0]
    parts = dims_line.split()
    if len(parts) != 3:
        raise ParseError(f"expected three alphabet sizes, got {len(parts)}", path, ln)
    try:
        nx1, nx2, ny = (int(p) for p in parts)
    except ValueError:
        raise ParseError(f"alphabet sizes must be integers: {dims_line!r}", path, ln)
    if min(nx1, nx2, ny) < 1:
        raise ParseError("alphabet sizes must be >= 1", path, ln)
    rows = entries[1:]
    if len(rows) != nx1 * nx2:
        raise ParseError(
            f"expected {nx1 * nx2} kernel rows, found {len(rows)}", path, ln
        )
    kernel = np.empty((nx1, nx2, ny))
    for idx, (ln, row) in enumerate(rows):
        vals = row.split()
        if len(vals) != ny:
            raise ParseError(f"expected {ny} probabilities, got {len(vals)}", path, ln)
        try:
            probs = np.array([float(v) for v in vals])
        except ValueError:
            raise ParseError(f"non-numeric probability in row: {row!r}", path, ln)
        if np.any(probs < 0):
            raise ParseError("negative probability", path, ln)
        total = probs.sum()
        if abs(total - 1.0) > _FILE_ROW_TOL:
            raise ParseError(
                f"row for (x1={idx // nx2}, x2={idx % nx2}) sums to {total!r}",
                path,
                ln,
            )
        kernel[idx // nx2, idx % nx2] = probs / total
    return Dmmac(kernel)


def load_dmmac(path) -> Dmmac:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_dmmac(fh.read(), path=str(path))
