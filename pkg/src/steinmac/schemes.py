"""Testing schemes built from marker symbols under sublinear cost budgets.

Each sensor that can toggle an output spends one length-k block signaling
a single bit: whether its observed sequence looks like the null marginal.
The partner sensor holds the witness pilot during that block, everything
else is the free symbol, and the decision center accepts the null when
every signaled bit arrives and its own side sequence is typical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channels import (
    ChannelClass,
    CostBudget,
    CostModel,
    Dmmac,
    MarkerSet,
    classify,
    cost_budget,
    find_markers,
    verify_markers,
)
from .errors import BlocklengthTooSmall, CostBudgetExceeded, MarkerMismatch
from .exponents import local_stein_exponent, min_kl_fixed_marginals
from .prob import Joint3Pmf, Pmf, is_strongly_typical, marginal, require_length


def _as_pmf(p, what: str) -> Pmf:
    if isinstance(p, Pmf):
        return p
    try:
        return Pmf(p)
    except ValueError as exc:
        raise ValueError(f"{what}: {exc}") from exc


def _joint_array(p) -> np.ndarray:
    if isinstance(p, Joint3Pmf):
        return p.probs
    return Joint3Pmf(p).probs


@dataclass(frozen=True)
class Scheme:
    """A concrete encoder pair plus decision rule for one blocklength.

    k is the signaling block length; sensors that signal use slots [0, k)
    (sensor 1) and, when both signal, [k, 2k) (sensor 2); a lone sensor-2
    signaler uses [0, k). Decision 0 accepts the null hypothesis.
    """

    cls: ChannelClass
    n: int
    k: int
    mu: float
    ref_v: Pmf
    ref_u1: Pmf | None = None
    ref_u2: Pmf | None = None
    markers: MarkerSet | None = None
    budget: CostBudget | None = None
    p_marker1: float | None = None
    p_marker2: float | None = None

    @property
    def signals1(self) -> bool:
        return self.cls in (ChannelClass.SPARSE, ChannelClass.SPARSE_FULL)

    @property
    def signals2(self) -> bool:
        return self.cls in (ChannelClass.SPARSE, ChannelClass.FULL_SPARSE)

    def _block(self, sensor: int) -> slice:
        if sensor == 1:
            return slice(0, self.k)
        start = self.k if self.signals1 else 0
        return slice(start, start + self.k)

    def encode1(self, u1_seq) -> np.ndarray:
        u1 = require_length(u1_seq, self.n, "sensor-1 observation")
        x = np.zeros(self.n, dtype=np.int64)
        if self.signals1:
            w = self.markers.sensor1
            typical = is_strongly_typical(u1, self.ref_u1, self.mu)
            x[self._block(1)] = w.on_input if typical else w.off_input
        if self.signals2:
            x[self._block(2)] = self.markers.sensor2.partner_pilot
        return x

    def encode2(self, u2_seq) -> np.ndarray:
        u2 = require_length(u2_seq, self.n, "sensor-2 observation")
        x = np.zeros(self.n, dtype=np.int64)
        if self.signals2:
            w = self.markers.sensor2
            typical = is_strongly_typical(u2, self.ref_u2, self.mu)
            x[self._block(2)] = w.on_input if typical else w.off_input
        if self.signals1:
            x[self._block(1)] = self.markers.sensor1.partner_pilot
        return x

    def decide(self, y_seq, v_seq) -> int:
        """0 accepts the null, 1 rejects."""
        y = require_length(y_seq, self.n, "channel output")
        v = require_length(v_seq, self.n, "side observation")
        if self.signals1:
            if not np.any(y[self._block(1)] == self.markers.sensor1.marker_output):
                return 1
        if self.signals2:
            if not np.any(y[self._block(2)] == self.markers.sensor2.marker_output):
                return 1
        return 0 if is_strongly_typical(v, self.ref_v, self.mu) else 1

    def accept_prob_given_flags(self, t1: bool, t2: bool, t3: bool) -> float:
        """P(decide 0) given which typicality checks pass.

        Signaled markers are the only channel randomness the rule looks
        at: an on-block misses the marker in all k slots with probability
        (1 - p)^k, and an off-block can never produce it.
        """
        if not t3:
            return 0.0
        prob = 1.0
        if self.signals1:
            if not t1:
                return 0.0
            prob *= 1.0 - (1.0 - self.p_marker1) ** self.k
        if self.signals2:
            if not t2:
                return 0.0
            prob *= 1.0 - (1.0 - self.p_marker2) ** self.k
        return prob


def build_local_scheme(p_v, mu: float, n: int) -> Scheme:
    """Side-information-only rule: accept iff the observed v sequence is
    strongly typical for the null V marginal. Used when neither sensor
    can move the output distribution within a sublinear budget."""
    _check_n_mu(n, mu)
    return Scheme(
        cls=ChannelClass.FULL,
        n=n,
        k=0,
        mu=mu,
        ref_v=_as_pmf(p_v, "p_v"),
    )


def build_sparse_scheme(
    ch: Dmmac, markers: MarkerSet, budget: CostBudget, mu: float, p_u1, p_u2, p_v
) -> Scheme:
    """Both sensors signal: sensor 1 in slots [0, k), sensor 2 in [k, 2k),
    each holding the other's witness pilot during the partner's block."""
    _require_class(ch, ChannelClass.SPARSE)
    if markers.sensor1 is None or markers.sensor2 is None:
        raise MarkerMismatch("both sensors need a witness for this scheme")
    verify_markers(ch, markers)
    _check_budget(budget)
    _check_n_mu(budget.n, mu)
    w1, w2 = markers.sensor1, markers.sensor2
    return Scheme(
        cls=ChannelClass.SPARSE,
        n=budget.n,
        k=budget.k,
        mu=mu,
        ref_v=_as_pmf(p_v, "p_v"),
        ref_u1=_as_pmf(p_u1, "p_u1"),
        ref_u2=_as_pmf(p_u2, "p_u2"),
        markers=markers,
        budget=budget,
        p_marker1=w1.marker_prob(ch, 1),
        p_marker2=w2.marker_prob(ch, 2),
    )


def build_sparse_full_scheme(
    ch: Dmmac, markers: MarkerSet, budget: CostBudget, mu: float, p_u1, p_v
) -> Scheme:
    """Only sensor 1 signals, in slots [0, k); sensor 2 holds the pilot."""
    _require_class(ch, ChannelClass.SPARSE_FULL)
    if markers.sensor1 is None:
        raise MarkerMismatch("scheme needs a sensor-1 witness")
    verify_markers(ch, markers)
    _check_budget(budget)
    _check_n_mu(budget.n, mu)
    w1 = markers.sensor1
    return Scheme(
        cls=ChannelClass.SPARSE_FULL,
        n=budget.n,
        k=budget.k,
        mu=mu,
        ref_v=_as_pmf(p_v, "p_v"),
        ref_u1=_as_pmf(p_u1, "p_u1"),
        markers=MarkerSet(w1, None),
        budget=budget,
        p_marker1=w1.marker_prob(ch, 1),
    )


def build_full_sparse_scheme(
    ch: Dmmac, markers: MarkerSet, budget: CostBudget, mu: float, p_u2, p_v
) -> Scheme:
    """Mirror image: only sensor 2 signals, in slots [0, k)."""
    _require_class(ch, ChannelClass.FULL_SPARSE)
    if markers.sensor2 is None:
        raise MarkerMismatch("scheme needs a sensor-2 witness")
    verify_markers(ch, markers)
    _check_budget(budget)
    _check_n_mu(budget.n, mu)
    w2 = markers.sensor2
    return Scheme(
        cls=ChannelClass.FULL_SPARSE,
        n=budget.n,
        k=budget.k,
        mu=mu,
        ref_v=_as_pmf(p_v, "p_v"),
        ref_u2=_as_pmf(p_u2, "p_u2"),
        markers=MarkerSet(None, w2),
        budget=budget,
        p_marker2=w2.marker_prob(ch, 2),
    )


def build_scheme_for_class(
    cls: ChannelClass,
    ch: Dmmac | None,
    p,
    cm: CostModel | None,
    n: int,
    mu: float,
) -> Scheme:
    """Convenience path used by the command line: derive markers, budget,
    and reference marginals from a joint null distribution, then run the
    class-appropriate builder. Also checks that the worst-case encoder
    output actually fits the budget, since the marker symbols need not be
    the cheapest ones the budget arithmetic assumed."""
    pa = _joint_array(p)
    p_u1, p_u2, p_v = (marginal(pa, axis) for axis in (0, 1, 2))
    if cls is ChannelClass.FULL:
        return build_local_scheme(p_v, mu, n)
    if ch is None or cm is None:
        raise ValueError("marker schemes need a channel and a cost model")
    if not isinstance(ch, Dmmac):
        raise TypeError("marker schemes need a discrete channel kernel")
    _check_costs_match(ch, cm)
    markers = find_markers(ch, cls)
    budget = cost_budget(cm, n)
    _check_worst_costs(cls, markers, budget.k, cm, n)
    if cls is ChannelClass.SPARSE:
        return build_sparse_scheme(ch, markers, budget, mu, p_u1, p_u2, p_v)
    if cls is ChannelClass.SPARSE_FULL:
        return build_sparse_full_scheme(ch, markers, budget, mu, p_u1, p_v)
    return build_full_sparse_scheme(ch, markers, budget, mu, p_u2, p_v)


def _require_class(ch: Dmmac, wanted: ChannelClass) -> None:
    got = classify(ch)
    if got is not wanted:
        raise ValueError(
            f"channel classifies as {got.label}, scheme needs {wanted.label}"
        )


def _check_budget(budget: CostBudget) -> None:
    if budget.k < 1 or 2 * budget.k >= budget.n:
        raise BlocklengthTooSmall(
            f"budget has k={budget.k} at n={budget.n}; need 1 <= k and 2k < n"
        )


def _check_n_mu(n: int, mu: float) -> None:
    if n < 1:
        raise ValueError("n must be >= 1")
    if not (0 < mu < 1):
        raise ValueError("mu must lie in (0, 1)")


def _check_costs_match(ch: Dmmac, cm: CostModel) -> None:
    if cm.costs(1).size != ch.dims[0] or cm.costs(2).size != ch.dims[1]:
        raise ValueError(
            "cost tables sized "
            f"({cm.costs(1).size}, {cm.costs(2).size}) do not match input "
            f"alphabets ({ch.dims[0]}, {ch.dims[1]})"
        )


def _check_worst_costs(
    cls: ChannelClass, markers: MarkerSet, k: int, cm: CostModel, n: int
) -> None:
    c1, c2 = cm.costs(1), cm.costs(2)
    w1, w2 = markers.sensor1, markers.sensor2
    worst1 = worst2 = 0.0
    if w1 is not None:
        worst1 += k * max(c1[w1.off_input], c1[w1.on_input])
        worst2 += k * c2[w1.partner_pilot]
    if w2 is not None:
        worst1 += k * c1[w2.partner_pilot]
        worst2 += k * max(c2[w2.off_input], c2[w2.on_input])
    for sensor, worst in ((1, worst1), (2, worst2)):
        budget = cm.gamma(sensor, n)
        if worst > budget:
            raise CostBudgetExceeded(
                f"sensor-{sensor} worst-case cost {worst:g} exceeds "
                f"budget {budget:g} at n={n}"
            )


def class_exponent(cls: ChannelClass, p, q, tol: float = 1e-10) -> float:
    """Type-2 exponent the class's scheme achieves against (p, q).

    Full connectivity pins only the V marginal; each toggle a class adds
    pins that sensor's marginal too, and the exponent is the divergence
    from q to the nearest joint with the pinned marginals of p.
    """
    pa = _joint_array(p)
    qa = _joint_array(q)
    if cls is ChannelClass.FULL:
        return local_stein_exponent(marginal(pa, 2), marginal(qa, 2))
    axes = {
        ChannelClass.SPARSE: (0, 1, 2),
        ChannelClass.SPARSE_FULL: (0, 2),
        ChannelClass.FULL_SPARSE: (1, 2),
    }[cls]
    cons = {axis: marginal(pa, axis) for axis in axes}
    return min_kl_fixed_marginals(qa, cons, tol=tol).value


# --- derandomization ---


def gamma_schedule(n: int) -> float:
    """Threshold sequence 1/ln(2+n): vanishes, but so slowly that the
    ln(1/gamma) penalty on the type-2 exponent is o(n)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return 1.0 / math.log(2.0 + n)


@dataclass(frozen=True)
class RandomizedDecider:
    """Wraps a map (v_seq, y_seq) -> acceptance probability in [0, 1]."""

    accept_prob: Callable

    def __call__(self, v_seq, y_seq) -> float:
        val = float(self.accept_prob(v_seq, y_seq))
        if not (0.0 <= val <= 1.0):
            raise ValueError(f"acceptance probability {val!r} outside [0, 1]")
        return val


def derandomize(decider, gamma: float):
    """Deterministic rule from a randomized one: accept iff the randomized
    acceptance probability strictly exceeds gamma (a tie rejects).

    For any pair of distributions this costs at most +gamma in type-1
    error and a 1/gamma factor in type-2 error, both harmless for
    exponents once gamma shrinks like gamma_schedule.
    """
    if not (0.0 < gamma < 1.0):
        raise ValueError("gamma must lie in (0, 1)")

    def decide(v_seq, y_seq) -> int:
        return 0 if decider(v_seq, y_seq) > gamma else 1

    return decide
