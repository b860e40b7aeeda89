"""Error-probability estimation for (problem, channel, scheme) triples.

Three estimators with one reproducibility contract:

* direct Monte-Carlo, trial-coupled across hypotheses through shared
  uniforms, so identical P and Q give alpha + beta = 1 exactly;
* exact enumeration over joint types of the axes the decision rule
  actually reads, with multinomial weights and the closed-form marker
  acceptance factor;
* importance sampling of the type-2 error, tilted by the I-projection
  minimizer, which is the source type that dominates the error event.

All randomness is derived from (seed, block index), never from thread
scheduling, and block results are reduced in block order, so reports are
byte-identical for any worker count.
"""

from __future__ import annotations

import io
import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .channels import Dmmac, GgMac, gg_sample
from .errors import (
    DegenerateFit,
    InstanceTooLarge,
    ZeroTiltOnSupport,
)
from .exponents import min_kl_fixed_marginals
from .prob import Joint3Pmf, quantile_map
from .schemes import Scheme, build_scheme_for_class, class_exponent

_BLOCK = 2048
_MAX_COMPOSITIONS = 4_000_000
_WILSON_Z = 1.959963984540054  # two-sided 95%


@dataclass(frozen=True)
class TestProblem:
    """Null joint P against alternative joint Q, P absolutely continuous
    w.r.t. Q (otherwise no finite exponent statement makes sense)."""

    __test__ = False  # the Test prefix is statistical, not a pytest case

    p: Joint3Pmf
    q: Joint3Pmf

    def __post_init__(self):
        p = self.p if isinstance(self.p, Joint3Pmf) else Joint3Pmf(self.p)
        q = self.q if isinstance(self.q, Joint3Pmf) else Joint3Pmf(self.q)
        if p.dims != q.dims:
            raise ValueError(f"dims mismatch: {p.dims} vs {q.dims}")
        from .prob import kl_divergence

        kl_divergence(p, q)  # raises AbsoluteContinuityViolation if P not << Q
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)


_ESTIMATORS = ("direct", "importance", "exact")


@dataclass(frozen=True)
class SimConfig:
    n_ladder: tuple
    trials: int
    master_seed: int
    mu: float
    cost_model: object = None
    estimator: str = "direct"
    workers: int = 1

    def __post_init__(self):
        ladder = tuple(int(n) for n in self.n_ladder)
        if not ladder or any(b <= a for a, b in zip(ladder, ladder[1:])):
            raise ValueError("n_ladder must be a nonempty strictly increasing list")
        if any(n < 1 for n in ladder):
            raise ValueError("blocklengths must be >= 1")
        object.__setattr__(self, "n_ladder", ladder)
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.estimator not in _ESTIMATORS:
            raise ValueError(f"estimator must be one of {_ESTIMATORS}")
        if not (0 < self.mu < 1):
            raise ValueError("mu must lie in (0, 1)")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass(frozen=True)
class LadderPoint:
    n: int
    estimator: str
    alpha_hat: float
    alpha_lo: float
    alpha_hi: float
    beta_hat: float
    beta_lo: float
    beta_hi: float
    beta_variance: float | None = None


@dataclass(frozen=True)
class SimReport:
    points: tuple
    fitted_exponent: float | None
    theoretical_exponent: float
    seed: int

    def to_csv(self) -> str:
        out = io.StringIO()
        out.write(
            "n,estimator,alpha_hat,alpha_lo,alpha_hi,"
            "beta_hat,beta_lo,beta_hi,"
            "fitted_exponent,theoretical_exponent,seed\n"
        )
        fitted = self.fitted_exponent
        fit_str = _fmt(fitted) if fitted is not None else "nan"
        for pt in self.points:
            cols = [
                str(pt.n),
                pt.estimator,
                _fmt(pt.alpha_hat),
                _fmt(pt.alpha_lo),
                _fmt(pt.alpha_hi),
                _fmt(pt.beta_hat),
                _fmt(pt.beta_lo),
                _fmt(pt.beta_hi),
                fit_str,
                _fmt(self.theoretical_exponent),
                str(self.seed),
            ]
            out.write(",".join(cols) + "\n")
        return out.getvalue()


def _fmt(x: float) -> str:
    return "%.12g" % float(x)


def wilson_interval(successes: int, trials: int) -> tuple:
    """95% Wilson score interval; behaves sensibly at 0 and n successes."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not (0 <= successes <= trials):
        raise ValueError("successes must lie in [0, trials]")
    z = _WILSON_Z
    phat = successes / trials
    denom = 1.0 + z * z / trials
    center = (phat + z * z / (2 * trials)) / denom
    half = (
        z
        * math.sqrt(phat * (1.0 - phat) / trials + z * z / (4.0 * trials * trials))
        / denom
    )
    # the score bound touches the boundary exactly at 0 and n successes;
    # keep it exact instead of leaving cancellation residue
    lo = 0.0 if successes == 0 else max(0.0, center - half)
    hi = 1.0 if successes == trials else min(1.0, center + half)
    return (lo, hi)


def _block_seeds(seed, blocks: int):
    entropy = seed if isinstance(seed, (tuple, list)) else (int(seed),)
    return [np.random.SeedSequence(entropy, spawn_key=(i,)) for i in range(blocks)]


def _channel_draw(channel, x1, x2, rng):
    """One channel use per slot. Uniforms and noise are drawn from rng in a
    fixed order, so coupled hypothesis runs must share the rng stream by
    drawing before branching (the callers below do)."""
    if channel is None:
        return np.zeros(x1.size)
    if isinstance(channel, Dmmac):
        rows = channel.kernel[x1, x2]
        cdf = np.cumsum(rows, axis=1)
        u = rng.random(x1.size)
        return (u[:, None] < cdf).argmax(axis=1)
    if isinstance(channel, GgMac):
        z = gg_sample(channel.p, channel.sigma, x1.size, rng)
        return channel.h1 * x1 + channel.h2 * x2 + z
    raise TypeError(f"unsupported channel type {type(channel).__name__}")


def _direct_block(problem, channel, scheme, seed_seq, count, sides):
    rng = np.random.default_rng(seed_seq)
    n = scheme.n
    dims = problem.p.dims
    u_src = rng.random((count, n))
    flat_p = quantile_map(problem.p.probs.ravel(), u_src.ravel()).reshape(count, n)
    flat_q = quantile_map(problem.q.probs.ravel(), u_src.ravel()).reshape(count, n)
    rejects = accepts = 0
    for i in range(count):
        # channel randomness is drawn once per trial and replayed for the
        # alternative, coupling the two hypothesis runs
        state = rng.bit_generator.state
        if "null" in sides:
            u1, u2, v = np.unravel_index(flat_p[i], dims)
            y = _channel_draw(channel, scheme.encode1(u1), scheme.encode2(u2), rng)
            rejects += scheme.decide(y, v)
        if "alt" in sides:
            rng.bit_generator.state = state
            u1, u2, v = np.unravel_index(flat_q[i], dims)
            y = _channel_draw(channel, scheme.encode1(u1), scheme.encode2(u2), rng)
            accepts += 1 - scheme.decide(y, v)
    return rejects, accepts


@dataclass(frozen=True)
class TrialEstimate:
    trials: int
    alpha_hat: float
    alpha_lo: float
    alpha_hi: float
    beta_hat: float
    beta_lo: float
    beta_hi: float


def run_trials(
    problem: TestProblem,
    channel,
    scheme: Scheme,
    n: int,
    trials: int,
    seed,
    workers: int = 1,
    sides: tuple = ("null", "alt"),
) -> TrialEstimate:
    """Direct Monte-Carlo of both error probabilities.

    Source draws are inverse-cdf through uniforms shared across the two
    hypotheses, and the channel replays the same randomness for both, so
    the estimates are trial-coupled: with P = Q every trial rejects under
    exactly one hypothesis and alpha_hat + beta_hat = 1 exactly.
    """
    if n != scheme.n:
        raise ValueError(f"scheme was built for n={scheme.n}, got n={n}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    bad = set(sides) - {"null", "alt"}
    if bad or not sides:
        raise ValueError(f"sides must be a nonempty subset of ('null','alt')")
    blocks = [(i * _BLOCK, min(_BLOCK, trials - i * _BLOCK))
              for i in range((trials + _BLOCK - 1) // _BLOCK)]
    seeds = _block_seeds(seed, len(blocks))

    def work(idx):
        return _direct_block(
            problem, channel, scheme, seeds[idx], blocks[idx][1], sides
        )

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(len(blocks))))
    else:
        results = [work(i) for i in range(len(blocks))]
    rejects = sum(r for r, _ in results)
    accepts = sum(a for _, a in results)
    a_hat = rejects / trials if "null" in sides else math.nan
    b_hat = accepts / trials if "alt" in sides else math.nan
    a_lo, a_hi = wilson_interval(rejects, trials) if "null" in sides else (math.nan,) * 2
    b_lo, b_hi = wilson_interval(accepts, trials) if "alt" in sides else (math.nan,) * 2
    return TrialEstimate(trials, a_hat, a_lo, a_hi, b_hat, b_lo, b_hi)


# --- exact enumeration ---


def _scheme_axes(scheme: Scheme) -> tuple:
    axes = []
    if scheme.signals1:
        axes.append(0)
    if scheme.signals2:
        axes.append(1)
    axes.append(2)
    return tuple(axes)


def _compositions(n: int, m: int) -> np.ndarray:
    """All ways to split n items into m ordered nonnegative parts."""
    if m == 1:
        return np.array([[n]], dtype=np.int64)
    total = math.comb(n + m - 1, m - 1)
    if total > _MAX_COMPOSITIONS:
        raise InstanceTooLarge(
            f"{total} joint types exceed the {_MAX_COMPOSITIONS} enumeration cap"
        )
    bars = np.fromiter(
        itertools.chain.from_iterable(
            itertools.combinations(range(n + m - 1), m - 1)
        ),
        dtype=np.int64,
        count=total * (m - 1),
    ).reshape(total, m - 1)
    left = np.concatenate([np.full((total, 1), -1, dtype=np.int64), bars], axis=1)
    right = np.concatenate(
        [bars, np.full((total, 1), n + m - 1, dtype=np.int64)], axis=1
    )
    return right - left - 1


def _typicality_flags(counts: np.ndarray, ref, mu: float, n: int) -> np.ndarray:
    pi = counts / n
    within = np.all(np.abs(pi - ref.probs) <= mu, axis=1)
    zeros_ok = np.all(counts[:, ref.probs == 0] == 0, axis=1)
    return within & zeros_ok


def _exact_accept_prob(joint: Joint3Pmf, scheme: Scheme) -> float:
    """P(decide 0) when the source triple is iid from `joint`, summing the
    multinomial weight of every joint type of the axes the rule reads."""
    axes = _scheme_axes(scheme)
    drop = tuple(a for a in range(3) if a not in axes)
    reduced = joint.probs.sum(axis=drop) if drop else joint.probs
    flat = reduced.ravel()
    support = np.flatnonzero(flat > 0)
    n = scheme.n
    comps = _compositions(n, support.size)
    logw = (
        gammaln(n + 1)
        - gammaln(comps + 1).sum(axis=1)
        + comps @ np.log(flat[support])
    )
    weights = np.exp(logw)

    cell_axis_symbol = np.unravel_index(support, reduced.shape)
    refs = {0: scheme.ref_u1, 1: scheme.ref_u2, 2: scheme.ref_v}
    flags = {}
    for pos, axis in enumerate(axes):
        size = reduced.shape[pos]
        onehot = np.zeros((support.size, size))
        onehot[np.arange(support.size), cell_axis_symbol[pos]] = 1.0
        counts = comps @ onehot
        flags[axis] = _typicality_flags(counts, refs[axis], scheme.mu, n)

    acc = flags[2].astype(float)
    if scheme.signals1:
        acc *= np.where(flags[0], 1.0 - (1.0 - scheme.p_marker1) ** scheme.k, 0.0)
    if scheme.signals2:
        acc *= np.where(flags[1], 1.0 - (1.0 - scheme.p_marker2) ** scheme.k, 0.0)
    return float(weights @ acc)


def exact_error_probs(problem: TestProblem, channel, scheme: Scheme, n: int) -> tuple:
    """Exact (alpha, beta) for schemes whose decision factors through the
    typicality flags and marker presence; every scheme built here does.

    The channel enters only through the marker probabilities already baked
    into the scheme, so it is accepted for signature symmetry with the
    sampling estimators and otherwise unused.
    """
    if n != scheme.n:
        raise ValueError(f"scheme was built for n={scheme.n}, got n={n}")
    alpha = 1.0 - _exact_accept_prob(problem.p, scheme)
    beta = _exact_accept_prob(problem.q, scheme)
    return (min(max(alpha, 0.0), 1.0), min(max(beta, 0.0), 1.0))


# --- importance sampling ---


def default_tilt(problem: TestProblem, scheme: Scheme) -> Joint3Pmf:
    """I-projection of Q onto the scheme's pinned marginals: the source
    distribution that dominates the type-2 error event."""
    cons = {}
    if scheme.signals1:
        cons[0] = scheme.ref_u1
    if scheme.signals2:
        cons[1] = scheme.ref_u2
    cons[2] = scheme.ref_v
    res = min_kl_fixed_marginals(problem.q.probs, cons)
    argmin = np.maximum(res.argmin, 0.0)
    return Joint3Pmf(argmin / argmin.sum())


def _check_tilt(problem: TestProblem, scheme: Scheme, tilt: Joint3Pmf) -> None:
    """A tilt may place zero mass on a Q-supported cell only if any sequence
    containing that cell is rejected outright (a pinned marginal gives the
    cell's symbol probability zero, so typicality fails)."""
    qa = problem.q.probs
    ta = tilt.probs
    if ta.shape != qa.shape:
        raise ValueError(f"tilt dims {ta.shape} do not match problem dims {qa.shape}")
    for cell in zip(*np.nonzero((ta == 0) & (qa > 0))):
        a, b, c = (int(i) for i in cell)
        forced = scheme.ref_v.probs[c] == 0
        if scheme.signals1:
            forced = forced or scheme.ref_u1.probs[a] == 0
        if scheme.signals2:
            forced = forced or scheme.ref_u2.probs[b] == 0
        if not forced:
            raise ZeroTiltOnSupport(
                f"tilt is zero at cell {(a, b, c)} where Q is positive and "
                "acceptance is possible"
            )


def _is_block(problem, scheme, tilt_flat, log_ratio, seed_seq, count):
    """Returns (logsumexp of contributions, logsumexp of squared ones)."""
    rng = np.random.default_rng(seed_seq)
    n = scheme.n
    m = tilt_flat.size
    flat = quantile_map(tilt_flat, rng.random((count, n)).ravel()).reshape(count, n)
    counts = np.zeros((count, m))
    np.add.at(counts, (np.repeat(np.arange(count), n), flat.ravel()), 1.0)

    dims = problem.q.dims
    cell_symbols = np.unravel_index(np.arange(m), dims)
    refs = ((0, scheme.ref_u1), (1, scheme.ref_u2), (2, scheme.ref_v))
    acc = np.ones(count)
    factors = {
        0: 1.0 - (1.0 - scheme.p_marker1) ** scheme.k if scheme.signals1 else None,
        1: 1.0 - (1.0 - scheme.p_marker2) ** scheme.k if scheme.signals2 else None,
    }
    for axis, ref in refs:
        if axis == 0 and not scheme.signals1:
            continue
        if axis == 1 and not scheme.signals2:
            continue
        onehot = np.zeros((m, dims[axis]))
        onehot[np.arange(m), cell_symbols[axis]] = 1.0
        axis_counts = counts @ onehot
        flag = _typicality_flags(axis_counts, ref, scheme.mu, n)
        factor = 1.0 if axis == 2 else factors[axis]
        acc *= np.where(flag, factor, 0.0)

    with np.errstate(divide="ignore", invalid="ignore"):
        logw = counts @ log_ratio
        contrib = np.where(acc > 0, logw + np.log(acc, where=acc > 0,
                                                  out=np.full(count, -np.inf)), -np.inf)
    contrib = contrib[np.isfinite(contrib)]
    if contrib.size == 0:
        return -np.inf, -np.inf
    hi = contrib.max()
    lse = hi + math.log(np.exp(contrib - hi).sum())
    hi2 = 2 * hi
    lse2 = hi2 + math.log(np.exp(2 * contrib - hi2).sum())
    return lse, lse2


def importance_sample_beta(
    problem: TestProblem,
    channel,
    scheme: Scheme,
    n: int,
    trials: int,
    tilt=None,
    seed=None,
    workers: int = 1,
) -> tuple:
    """Estimate beta by sampling sources from `tilt` and weighting each
    accepted trial by prod Q/tilt; unbiased for the true beta.

    The marker randomness is integrated out with the same closed form the
    exact oracle uses, which only reduces variance. Returns (beta_hat,
    variance of the estimator); aggregation is streaming log-sum-exp over
    blocks, reduced in block order for worker-count invariance.
    """
    if n != scheme.n:
        raise ValueError(f"scheme was built for n={scheme.n}, got n={n}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if seed is None:
        raise ValueError("seed is required for a reproducible estimate")
    if tilt is None:
        tilt = default_tilt(problem, scheme)
    elif not isinstance(tilt, Joint3Pmf):
        tilt = Joint3Pmf(tilt)
    _check_tilt(problem, scheme, tilt)

    tilt_flat = tilt.probs.ravel()
    q_flat = problem.q.probs.ravel()
    with np.errstate(divide="ignore"):
        log_ratio = np.where(
            tilt_flat > 0,
            np.log(np.where(q_flat > 0, q_flat, 1.0))
            - np.log(np.where(tilt_flat > 0, tilt_flat, 1.0)),
            0.0,
        )
        # a tilt-sampled cell outside Q's support contributes weight zero
        log_ratio = np.where((tilt_flat > 0) & (q_flat == 0), -np.inf, log_ratio)

    blocks = [(i * _BLOCK, min(_BLOCK, trials - i * _BLOCK))
              for i in range((trials + _BLOCK - 1) // _BLOCK)]
    seeds = _block_seeds(seed, len(blocks))

    def work(idx):
        return _is_block(problem, scheme, tilt_flat, log_ratio, seeds[idx], blocks[idx][1])

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(work, range(len(blocks))))
    else:
        results = [work(i) for i in range(len(blocks))]

    lse = lse2 = -np.inf
    for b_lse, b_lse2 in results:  # block order, not completion order
        lse = np.logaddexp(lse, b_lse)
        lse2 = np.logaddexp(lse2, b_lse2)
    beta_hat = float(np.exp(lse - math.log(trials)))
    second_moment = float(np.exp(lse2 - math.log(trials)))
    variance = max(second_moment - beta_hat * beta_hat, 0.0) / trials
    return beta_hat, variance


# --- exponent fitting and campaign orchestration ---


def fit_exponent(points) -> float:
    """Least-squares slope of -ln(beta) against n; the intercept absorbs
    any constant factor, so synthetic c*exp(-t*n) recovers t exactly."""
    pts = [(int(n), float(b)) for n, b in points]
    if len(pts) < 3:
        raise ValueError("need at least 3 (n, beta) points")
    if any(b < 0 or b > 1 for _, b in pts):
        raise ValueError("beta estimates must lie in [0, 1]")
    zeros = [n for n, b in pts if b == 0.0]
    if zeros:
        alive = [(n, b) for n, b in pts if b > 0]
        if len(alive) >= 2 and len({n for n, _ in alive}) >= 2:
            lower = _ls_slope(alive)
        elif alive:
            n0, b0 = alive[0]
            lower = -math.log(b0) / n0
        else:
            lower = None
        raise DegenerateFit(
            f"beta estimate is exactly 0 at n={zeros}; the decay outran the "
            "sampling resolution and only a lower bound is available",
            lower_bound=lower,
        )
    return _ls_slope(pts)


def _ls_slope(pts) -> float:
    ns = np.array([n for n, _ in pts], dtype=float)
    ys = -np.log(np.array([b for _, b in pts]))
    slope, _ = np.polyfit(ns, ys, 1)
    return float(slope)


def run_ladder(problem: TestProblem, channel, cls, config: SimConfig) -> SimReport:
    """Build the class's scheme at every blocklength of the ladder, estimate
    both error probabilities with the configured estimator, then fit the
    empirical type-2 exponent and attach the theoretical one."""
    points = []
    for n in config.n_ladder:
        dm = channel if isinstance(channel, Dmmac) else None
        scheme = build_scheme_for_class(
            cls, dm, problem.p, config.cost_model, n, config.mu
        )
        est = config.estimator
        if est == "exact":
            alpha, beta = exact_error_probs(problem, channel, scheme, n)
            pt = LadderPoint(n, est, alpha, alpha, alpha, beta, beta, beta, 0.0)
        elif est == "direct":
            r = run_trials(
                problem, channel, scheme, n, config.trials,
                (config.master_seed, n, 0), workers=config.workers,
            )
            pt = LadderPoint(
                n, est, r.alpha_hat, r.alpha_lo, r.alpha_hi,
                r.beta_hat, r.beta_lo, r.beta_hi,
            )
        else:
            r = run_trials(
                problem, channel, scheme, n, config.trials,
                (config.master_seed, n, 0), workers=config.workers,
                sides=("null",),
            )
            beta_hat, variance = importance_sample_beta(
                problem, channel, scheme, n, config.trials,
                seed=(config.master_seed, n, 1), workers=config.workers,
            )
            half = _WILSON_Z * math.sqrt(variance)
            pt = LadderPoint(
                n, est, r.alpha_hat, r.alpha_lo, r.alpha_hi,
                beta_hat, max(0.0, beta_hat - half), min(1.0, beta_hat + half),
                variance,
            )
        points.append(pt)

    fitted = None
    if len(points) >= 3:
        try:
            fitted = fit_exponent([(pt.n, pt.beta_hat) for pt in points])
        except DegenerateFit:
            fitted = None
    theoretical = class_exponent(cls, problem.p, problem.q)
    return SimReport(tuple(points), fitted, theoretical, config.master_seed)
