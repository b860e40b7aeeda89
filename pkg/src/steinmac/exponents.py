"""Stein exponents as constrained KL minimizations.

The local exponent is a plain divergence. The richer exponents fix one or
more marginals of a joint and minimize D(. || Q) over that affine family,
computed by cyclic iterative proportional fitting. A grid-search oracle
over the same feasible set, with the equality constraints eliminated
exactly, backs the iterative answer in tests.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionTooLarge, NoFeasiblePoint, NonConvergence
from .prob import Joint3Pmf, Pmf, kl_divergence

_MAX_BRUTE_CELLS = 8


@dataclass(frozen=True)
class MarginalConstraintSet:
    """Targets for a subset of axes, at most one per axis."""

    constraints: tuple

    def __post_init__(self):
        cons = self.constraints
        if isinstance(cons, dict):
            cons = sorted(cons.items())
        norm = []
        seen = set()
        for axis, target in cons:
            axis = int(axis)
            if axis < 0:
                raise ValueError("axis must be nonnegative")
            if axis in seen:
                raise ValueError(f"axis {axis} constrained twice")
            seen.add(axis)
            if not isinstance(target, Pmf):
                target = Pmf(target)
            norm.append((axis, target))
        object.__setattr__(self, "constraints", tuple(norm))

    def __iter__(self):
        return iter(self.constraints)

    def __len__(self):
        return len(self.constraints)


@dataclass(frozen=True)
class IProjectionResult:
    value: float
    argmin: np.ndarray
    iterations: int
    residual: float
    trace: tuple = field(default=(), repr=False)


def local_stein_exponent(p_v: Pmf, q_v: Pmf) -> float:
    """Best error exponent with no channel help: D(P_V || Q_V)."""
    if not isinstance(p_v, Pmf):
        p_v = Pmf(p_v)
    if not isinstance(q_v, Pmf):
        q_v = Pmf(q_v)
    return kl_divergence(p_v, q_v)


def _unwrap_joint(q):
    if isinstance(q, Joint3Pmf):
        return q.probs
    arr = np.asarray(q, dtype=float)
    if arr.ndim not in (2, 3):
        raise ValueError(f"joint must have 2 or 3 axes, got {arr.ndim}")
    return arr


def _normalize_constraints(q: np.ndarray, constraints) -> list:
    if not isinstance(constraints, MarginalConstraintSet):
        constraints = MarginalConstraintSet(constraints)
    out = []
    for axis, target in constraints:
        if axis >= q.ndim:
            raise ValueError(f"axis {axis} out of range for {q.ndim}-axis joint")
        if target.alphabet_size != q.shape[axis]:
            raise ValueError(
                f"target on axis {axis} has size {target.alphabet_size}, "
                f"joint axis has size {q.shape[axis]}"
            )
        out.append((axis, target.probs))
    return out


def _axis_marginal(p: np.ndarray, axis: int) -> np.ndarray:
    other = tuple(a for a in range(p.ndim) if a != axis)
    return p.sum(axis=other)


def min_kl_fixed_marginals(
    q,
    constraints,
    tol: float = 1e-10,
    max_iters: int = 10**6,
    trace: bool = False,
) -> IProjectionResult:
    """I-projection of Q onto the set of joints with the given marginals.

    Returns the minimizing joint, the divergence value, the number of full
    sweeps, and the final residual (largest L1 gap between a constrained
    marginal and its target). Cells where Q vanishes stay zero, since the
    updates are multiplicative. With trace=True the per-sweep iterates are
    kept, which tests use to confirm the distance to the final point is
    non-increasing sweep over sweep.
    """
    qa = _unwrap_joint(q)
    cons = _normalize_constraints(qa, constraints)
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")

    if not cons:
        return IProjectionResult(0.0, qa.copy(), 0, 0.0)

    p = qa.copy()
    iterates = []
    residual = np.inf
    sweeps = 0
    while sweeps < max_iters:
        for axis, target in cons:
            m = _axis_marginal(p, axis)
            dead = m == 0
            if np.any(dead & (target > 0)):
                sym = int(np.flatnonzero(dead & (target > 0))[0])
                raise NoFeasiblePoint(
                    f"target puts mass {target[sym]:.6g} on symbol {sym} of "
                    f"axis {axis}, but no feasible joint can reach it"
                )
            factor = np.divide(target, m, out=np.zeros_like(target), where=~dead)
            shape = [1] * p.ndim
            shape[axis] = -1
            p = p * factor.reshape(shape)
        sweeps += 1
        if trace:
            iterates.append(p.copy())
        residual = max(
            float(np.abs(_axis_marginal(p, axis) - target).sum())
            for axis, target in cons
        )
        if residual <= tol:
            break
    else:
        raise NonConvergence(residual, sweeps)
    if residual > tol:
        raise NonConvergence(residual, sweeps)

    value = kl_divergence(p, qa)
    return IProjectionResult(value, p, sweeps, residual, tuple(iterates))


def _constraint_rows(shape, cons, qflat):
    """Equality system A x = b over flattened cells: total mass, one row per
    constrained symbol, and a pin-to-zero row per unsupported cell of Q."""
    cells = int(np.prod(shape))
    rows = [np.ones(cells)]
    rhs = [1.0]
    grids = np.indices(shape).reshape(len(shape), cells)
    for axis, target in cons:
        for sym in range(shape[axis]):
            rows.append((grids[axis] == sym).astype(float))
            rhs.append(float(target[sym]))
    for cell in np.flatnonzero(qflat == 0):
        row = np.zeros(cells)
        row[cell] = 1.0
        rows.append(row)
        rhs.append(0.0)
    return np.array(rows), np.array(rhs)


def _reduce_system(a, b, tol=1e-11):
    """Gauss-Jordan elimination; returns reduced rows, rhs, pivot columns."""
    a = a.copy()
    b = b.copy()
    nrows, ncols = a.shape
    pivots = []
    r = 0
    for c in range(ncols):
        if r >= nrows:
            break
        lead = r + int(np.argmax(np.abs(a[r:, c])))
        if abs(a[lead, c]) <= tol:
            continue
        a[[r, lead]] = a[[lead, r]]
        b[[r, lead]] = b[[lead, r]]
        b[r] /= a[r, c]
        a[r] /= a[r, c]
        others = np.flatnonzero(np.abs(a[:, c]) > 0)
        others = others[others != r]
        if others.size:
            b[others] -= a[others, c] * b[r]
            a[others] -= np.outer(a[others, c], a[r])
        pivots.append(c)
        r += 1
    for i in range(r, nrows):
        if np.all(np.abs(a[i]) <= tol) and abs(b[i]) > 1e-9:
            raise NoFeasiblePoint("marginal targets are mutually inconsistent")
    return a[:r], b[:r], pivots


def brute_force_min_kl(q, constraints, grid_step: float, refine: int = 0) -> float:
    """Exhaustive grid search over the same feasible set, used as a test
    oracle for min_kl_fixed_marginals.

    The equality constraints are eliminated exactly: a subset of cells
    (grid variables) is enumerated on a grid of the given step, the rest
    are solved from the linear system, and candidates with any negative
    solved cell are discarded. refine > 0 re-grids a shrinking box around
    the incumbent with a tenth of the step, which is sound here because
    the objective is convex over a polytope.
    """
    qa = _unwrap_joint(q)
    if qa.size > _MAX_BRUTE_CELLS:
        raise DimensionTooLarge(
            f"{qa.size} cells exceed the {_MAX_BRUTE_CELLS}-cell limit"
        )
    if not (0 < grid_step < 1):
        raise ValueError("grid_step must lie in (0, 1)")
    if refine < 0:
        raise ValueError("refine must be >= 0")
    cons = _normalize_constraints(qa, constraints)
    qflat = qa.ravel()
    a, b = _constraint_rows(qa.shape, cons, qflat)
    ared, bred, pivots = _reduce_system(a, b)
    free = [c for c in range(qflat.size) if c not in pivots]

    # each cell is capped by the smallest budget of a constraint row it
    # belongs to (all row coefficients are 0/1)
    caps = np.ones(qflat.size)
    for row, rhs in zip(a, b):
        members = row > 0
        caps[members] = np.minimum(caps[members], rhs)

    pos = qflat > 0
    logq = np.log(qflat[pos])

    def evaluate(points):
        """points: per-free-cell 1-d grids; returns (best value, best free
        assignment) over all feasible combinations, or (inf, None)."""
        if not free:
            grids = [np.zeros(1)]
            lens = [1]
        else:
            grids = points
            lens = [len(g) for g in grids]
        total = int(np.prod(lens))
        best_val, best_x = np.inf, None
        mfree = ared[:, free] if free else np.zeros((ared.shape[0], 0))
        batch = 1 << 17
        for start in range(0, total, batch):
            idx = np.arange(start, min(start + batch, total))
            xf = np.empty((idx.size, len(free)))
            rem = idx
            for j in range(len(free) - 1, -1, -1):
                rem, digit = np.divmod(rem, lens[j])
                xf[:, j] = grids[j][digit]
            solved = bred[None, :] - xf @ mfree.T
            full = np.empty((idx.size, qflat.size))
            if free:
                full[:, free] = xf
            full[:, pivots] = solved
            feas = np.all(full >= -1e-9, axis=1) & np.all(full <= 1 + 1e-9, axis=1)
            if not np.any(feas):
                continue
            cand = np.clip(full[feas], 0.0, None)
            terms = np.zeros_like(cand[:, pos])
            cp = cand[:, pos]
            nz = cp > 0
            terms[nz] = (cp * (np.log(cp, where=nz, out=np.zeros_like(cp)) - logq))[nz]
            vals = terms.sum(axis=1)
            # any mass on an unsupported cell of Q is pinned to zero by the
            # constraint rows, so no infinite term can appear here
            j = int(np.argmin(vals))
            if vals[j] < best_val:
                best_val = float(vals[j])
                best_x = cand[j, free].astype(float) if free else np.zeros(0)
        return best_val, best_x

    step = grid_step
    base_points = [np.arange(0.0, min(1.0, caps[c]) + step / 2, step) for c in free]
    best_val, best_x = evaluate(base_points)
    if not np.isfinite(best_val):
        # a thin polytope can slip between coarse grid points, but the outer
        # product of the pinned marginals (uniform on free axes) satisfies
        # every constraint, so refinement can start from there
        pinned = dict(cons)
        seed = np.ones(())
        for axis, size in enumerate(qa.shape):
            seed = np.multiply.outer(
                seed, pinned.get(axis, np.full(size, 1.0 / size))
            )
        seed = seed.ravel()
        if np.any(seed[~pos] > 0):
            raise NoFeasiblePoint(
                "constraints put mass outside the support of q"
            )
        best_val, best_x = evaluate([np.array([seed[c]]) for c in free])
        if not np.isfinite(best_val):
            raise NoFeasiblePoint("no feasible point on the search grid")

    for _ in range(refine):
        finer = step / 10
        # re-center the window until no improvement: on a coarse grid the
        # feasibility filter can strand the incumbent a few boxes away from
        # the true basin, and convexity guarantees each re-centering that
        # improves the value walks toward it
        while True:
            points = []
            for j, c in enumerate(free):
                lo = max(0.0, best_x[j] - step)
                hi = min(min(1.0, caps[c]), best_x[j] + step)
                points.append(np.arange(lo, hi + finer / 2, finer))
            val, x = evaluate(points)
            if np.isfinite(val) and val < best_val - 1e-13:
                best_val, best_x = val, x
            else:
                break
        step = finer

    return best_val
