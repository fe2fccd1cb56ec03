# src/shtlab/operators.py
"""
Maximal operators, commutators and sparse-form operators on a finite
space, plus probe-based operator norm estimation.

Evaluation strategy
-------------------
Every supremum ranges over the canonical ball family.  Two exact
reorganizations keep desk-scale evaluation fast:

* Balls at a fixed center are nested, so the balls containing a point
  form a suffix of the center's radius-sorted list.  The maximal
  function is a per-center suffix maximum of ball averages followed by
  a max over centers (``maximal_function``).
* For the maximal commutator the integrand splits around the rank of
  b(x) in the sorted symbol values, so per-ball sums over
  |b(x) - b(y)| |f(y)| are two cumulative sums over the sorted order
  (``CommutatorKernel``).

Both paths are exact reorganizations of the defining finite sums, not
approximations.

Sign conventions
----------------
The commutator is [b, M]f = b * Mf - M(bf).  The pointwise domination
|[b, M]f| <= C_b(|f|) holds for nonnegative symbols b (for signed b it
fails already for constant negative b); the generators in this package
produce b >= 0 and the check is asserted under that convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .space import Ball, QuasiMetricSpace, scale_ball


@dataclass
class OperatorResult:
    """Values per point plus, when the operator is a supremum, the
    canonical ball id attaining it at each point (lowest id on ties)."""

    values: np.ndarray
    witnesses: Optional[np.ndarray] = None


def _members_of(obj) -> np.ndarray:
    return obj.members if hasattr(obj, "members") else np.asarray(obj, dtype=np.int64)


# -- maximal function --------------------------------------------------------


def _ball_averages(space: QuasiMetricSpace, g: np.ndarray) -> np.ndarray:
    return (space.ball_fmask() @ (g * space.mass)) / space.ball_measures()


def _suffix_max(space: QuasiMetricSpace, avg: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Per center, running max (and earliest argmax) over the radius-sorted
    suffix of that center's canonical balls."""
    suf = avg.copy()
    arg = np.arange(len(avg), dtype=np.int64)
    for s, e in space.ball_slices():
        for i in range(e - 2, s - 1, -1):
            # strict: ties keep the lower ball id, which is i itself
            if suf[i + 1] > suf[i]:
                suf[i] = suf[i + 1]
                arg[i] = arg[i + 1]
    return suf, arg


def maximal_function(space: QuasiMetricSpace, f: np.ndarray) -> OperatorResult:
    """M f(x) = max over balls containing x of avg_B |f|."""
    f = np.asarray(f, dtype=np.float64)
    avg = _ball_averages(space, np.abs(f))
    suf, arg = _suffix_max(space, avg)
    ptr = space.ball_pointers()
    cand = suf[ptr]  # (n points, n centers)
    values = cand.max(axis=1)
    wit = arg[ptr]
    masked = np.where(cand == values[:, None], wit, np.iinfo(np.int64).max)
    witnesses = masked.min(axis=1)
    return OperatorResult(values, witnesses)


def maximal_function_batch(space: QuasiMetricSpace, fs: np.ndarray) -> np.ndarray:
    """M applied to each column of fs; returns values only."""
    fs = np.asarray(fs, dtype=np.float64)
    fmask = space.ball_fmask()
    mu = space.ball_measures()
    ptr = space.ball_pointers()
    out = np.empty_like(fs)
    avgs = (fmask @ (np.abs(fs) * space.mass[:, None])) / mu[:, None]
    slices = space.ball_slices()
    for j in range(fs.shape[1]):
        suf = avgs[:, j]
        # in-place reversed running max per center slice
        for s, e in slices:
            np.maximum.accumulate(suf[s:e][::-1], out=suf[s:e][::-1])
        out[:, j] = suf[ptr].max(axis=1)
    return out


# -- maximal commutator ------------------------------------------------------


class CommutatorKernel:
    """Reusable evaluator for C_b f(x) = sup_{B owns x} avg_B |b(x)-b(.)| |f|.

    Holds the symbol-sorted ball membership and two cumulative-sum
    buffers so repeated probe evaluations do not reallocate.
    """

    def __init__(self, space: QuasiMetricSpace, b: np.ndarray) -> None:
        self.space = space
        self.b = np.asarray(b, dtype=np.float64)
        # a constant symbol annihilates the kernel exactly; shortcut it
        # so cancellation noise from the cumsum identity cannot leak
        # nonzero values into exact-zero comparisons
        self.constant = bool(np.ptp(self.b) == 0.0)
        self.order = np.argsort(self.b, kind="stable")
        self.rank = np.empty(space.n, dtype=np.int64)
        self.rank[self.order] = np.arange(space.n)
        self.b_s = self.b[self.order]
        mask = space.ball_mask()
        # the sup only sees member sets, so collapse duplicate balls;
        # ball_ids maps each surviving row back to the lowest canonical
        # id sharing its member set, keeping witness ids canonical
        packed = np.packbits(mask, axis=1)
        _, first = np.unique(packed, axis=0, return_index=True)
        self.ball_ids = np.sort(first).astype(np.int64)
        self.mask_s = mask[self.ball_ids][:, self.order]
        self.mu = space.ball_measures()[self.ball_ids]
        nb = self.mask_s.shape[0]
        self._bufA = np.empty((nb, space.n), dtype=np.float64)
        self._bufB = np.empty((nb, space.n), dtype=np.float64)

    def apply(self, f: np.ndarray, want_witness: bool = False) -> OperatorResult:
        space = self.space
        if self.constant:
            values = np.zeros(space.n)
            if not want_witness:
                return OperatorResult(values)
            wits_sorted = self.mask_s.argmax(axis=0)  # lowest ball id owning x
            witnesses = np.empty(space.n, dtype=np.int64)
            witnesses[self.order] = self.ball_ids[wits_sorted]
            return OperatorResult(values, witnesses)
        u = (space.mass * np.abs(np.asarray(f, dtype=np.float64)))[self.order]
        A, B = self._bufA, self._bufB
        np.multiply(self.mask_s, u[None, :], out=A)
        np.cumsum(A, axis=1, out=A)
        np.multiply(self.mask_s, (self.b_s * u)[None, :], out=B)
        np.cumsum(B, axis=1, out=B)
        TA = A[:, -1].copy()
        TB = B[:, -1].copy()
        # sum_{y in B} |b(x)-b(y)| u(y) = b(x)(2 cA - TA) + (TB - 2 cB)
        A *= 2.0
        A -= TA[:, None]
        A *= self.b_s[None, :]
        B *= 2.0
        np.subtract(TB[:, None], B, out=B)
        A += B
        A /= self.mu[:, None]
        A[~self.mask_s] = -np.inf
        vals_sorted = A.max(axis=0)
        values = np.empty(space.n)
        values[self.order] = vals_sorted
        if not want_witness:
            return OperatorResult(np.maximum(values, 0.0))
        args_sorted = A.argmax(axis=0)
        witnesses = np.empty(space.n, dtype=np.int64)
        witnesses[self.order] = self.ball_ids[args_sorted]
        return OperatorResult(np.maximum(values, 0.0), witnesses)


def maximal_commutator(space: QuasiMetricSpace, b: np.ndarray, f: np.ndarray) -> OperatorResult:
    return CommutatorKernel(space, b).apply(f, want_witness=True)


def maximal_commutator_batch(
    space: QuasiMetricSpace, b: np.ndarray, fs: np.ndarray
) -> np.ndarray:
    kernel = CommutatorKernel(space, b)
    fs = np.asarray(fs, dtype=np.float64)
    out = np.empty_like(fs)
    for j in range(fs.shape[1]):
        out[:, j] = kernel.apply(fs[:, j]).values
    return out


def commutator_bM(space: QuasiMetricSpace, b: np.ndarray, f: np.ndarray) -> np.ndarray:
    """[b, M]f = b * Mf - M(bf) (signed values)."""
    b = np.asarray(b, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    mf = maximal_function(space, f).values
    mbf = maximal_function(space, b * f).values
    return b * mf - mbf


# -- local grand maximal -----------------------------------------------------


def _sub_balls(space: QuasiMetricSpace, region: np.ndarray) -> np.ndarray:
    """Ids of canonical balls whose member set lies inside the region."""
    outside = np.ones(space.n, dtype=bool)
    outside[region] = False
    overflow = space.ball_mask() @ outside  # counts of members outside
    return np.flatnonzero(overflow == 0)


def region_grand_maximal(
    space: QuasiMetricSpace,
    region: np.ndarray,
    trunc: np.ndarray,
    fs: Sequence[np.ndarray],
) -> Tuple[List[np.ndarray], List[np.ndarray], np.ndarray]:
    """Grand maximal values on a region for several functions at once.

    For each sub-ball B of the region, the inner quantity is
    max over balls B' meeting B of avg_{B'}(|f| restricted to
    trunc minus the 4 A0 enlargement of B); the outer sup is over
    sub-balls containing x.  Returns per-function value arrays (full
    length, zero off the region), per-function witness arrays (the
    outer sub-ball id, -1 off the region), and the sub-ball id list.
    """
    region = np.asarray(region, dtype=np.int64)
    a0 = space.a0
    balls = space.canonical_balls()
    fmask = space.ball_fmask()
    mu = space.ball_measures()
    sub_ids = _sub_balls(space, region)
    trunc_ind = np.zeros(space.n, dtype=np.float64)
    trunc_ind[np.asarray(trunc, dtype=np.int64)] = 1.0

    # enlarged member indicators for each sub-ball (4 A0 scaling)
    centers = np.array([balls[i].center for i in sub_ids], dtype=np.int64)
    radii = np.array([balls[i].radius for i in sub_ids])
    enlarged = (space.dist[centers] < (4.0 * a0 * radii)[:, None]).astype(np.float64)
    sub_member = space.ball_mask()[sub_ids]  # bool (L, n)

    # which space balls meet which sub-balls (shared across functions)
    meets = (fmask @ sub_member.T.astype(np.float64)) > 0.0  # (nballs, L)

    values_out: List[np.ndarray] = []
    witness_out: List[np.ndarray] = []
    for f in fs:
        w = space.mass * np.abs(np.asarray(f, dtype=np.float64))
        w_t = w * trunc_ind
        s_full = fmask @ w_t  # per space-ball mass of |f| inside trunc
        # per (space ball, sub-ball): mass of |f| inside trunc AND enlargement
        s_cut = fmask @ (enlarged.T * w_t[:, None])
        v = (s_full[:, None] - s_cut) / mu[:, None]
        v[~meets] = -np.inf
        m_b = v.max(axis=0)  # best over B' per sub-ball
        m_b = np.maximum(m_b, 0.0)
        # outer sup over sub-balls containing x, ties to the lowest ball id
        vals = np.zeros(space.n)
        wits = np.full(space.n, -1, dtype=np.int64)
        col = np.where(sub_member, m_b[:, None], -np.inf)
        if len(sub_ids):
            best = col.max(axis=0)
            arg = col.argmax(axis=0)
            on = best > -np.inf
            vals[on] = np.maximum(best[on], 0.0)
            wits[on] = sub_ids[arg[on]]
        values_out.append(vals)
        witness_out.append(wits)
    return values_out, witness_out, sub_ids


def local_grand_maximal(space: QuasiMetricSpace, b0: Ball, f: np.ndarray) -> OperatorResult:
    """Grand maximal function localized to the ball b0.

    Values are meaningful on b0's members and zero elsewhere; queries
    off the ball are not defined by the operator.
    """
    trunc = scale_ball(space, b0, 4.0 * space.a0).members
    vals, wits, _ = region_grand_maximal(space, b0.members, trunc, [f])
    return OperatorResult(vals[0], wits[0])


def local_split_check(space: QuasiMetricSpace, b0: Ball, f: np.ndarray) -> Dict[str, object]:
    """Minimal c with M(f 1_{4A0 b0}) <= c |f| + (grand maximal) on b0.

    On atoms the constant is honestly +inf when f vanishes at a point
    where the truncated maximal function does not: the enlargement of a
    singleton ball always swallows its neighbors, so no excision keeps
    nearby support.  Suites drive this with strictly positive f.
    """
    f = np.asarray(f, dtype=np.float64)
    big = scale_ball(space, b0, 4.0 * space.a0)
    ind = np.zeros(space.n)
    ind[big.members] = 1.0
    lhs = maximal_function(space, f * ind).values
    grand = local_grand_maximal(space, b0, f).values
    c_emp = 0.0
    for x in b0.members:
        excess = lhs[x] - grand[x]
        if excess <= 1e-15:
            continue
        if f[x] == 0.0:
            c_emp = math.inf
            break
        c_emp = max(c_emp, excess / abs(f[x]))
    return {
        "c_emp": float(c_emp),
        "weak11": weak_type_11_constant(space),
        "pass": bool(math.isfinite(c_emp)),
    }


def weak_type_11_constant(space: QuasiMetricSpace, probes: int = 100, seed: int = 0) -> float:
    """Probe lower bound for the weak (1,1) constant of M.

    max over probes f of sup_t t * mu{M f >= t} / ||f||_1, the sup over
    t running through the distinct values of M f.
    """
    key = ("weak11", probes, seed)
    if key in space._cache:
        return space._cache[key]  # type: ignore[return-value]
    rng = np.random.default_rng(seed)
    F = np.concatenate(
        [np.eye(space.n), rng.lognormal(0.0, 1.0, size=(space.n, probes))], axis=1
    )
    MF = maximal_function_batch(space, F)
    best = 0.0
    l1 = np.abs(F).T @ space.mass
    for j in range(F.shape[1]):
        mf = MF[:, j]
        order = np.argsort(mf)
        tail = np.cumsum(space.mass[order][::-1])[::-1]  # mu{Mf >= mf[order[i]]}
        best = max(best, float((mf[order] * tail).max()) / float(l1[j]))
    space._cache[key] = best
    return best


# -- sparse-form operators ---------------------------------------------------


def sparse_operator(space: QuasiMetricSpace, cubes: Sequence, f: np.ndarray) -> OperatorResult:
    """A_S f = sum over cubes Q of avg_Q(f) 1_Q."""
    f = np.asarray(f, dtype=np.float64)
    values = np.zeros(space.n)
    for cube in cubes:
        members = _members_of(cube)
        values[members] += space.average(f, members)
    return OperatorResult(values)


def sparse_commutator(
    space: QuasiMetricSpace, cubes: Sequence, b: np.ndarray, f: np.ndarray
) -> OperatorResult:
    """T_{S,b} f(x) = sum over Q of |b(x) - b_Q| avg_Q(f) 1_Q(x)."""
    b = np.asarray(b, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    values = np.zeros(space.n)
    for cube in cubes:
        members = _members_of(cube)
        b_q = space.average(b, members)
        values[members] += np.abs(b[members] - b_q) * space.average(f, members)
    return OperatorResult(values)


def sparse_commutator_adjoint(
    space: QuasiMetricSpace, cubes: Sequence, b: np.ndarray, f: np.ndarray
) -> OperatorResult:
    """T*_{S,b} f(x) = sum over Q of avg_Q(|b - b_Q| f) 1_Q(x)."""
    b = np.asarray(b, dtype=np.float64)
    f = np.asarray(f, dtype=np.float64)
    values = np.zeros(space.n)
    for cube in cubes:
        members = _members_of(cube)
        b_q = space.average(b, members)
        values[members] += space.average(np.abs(b - b_q) * f, members)
    return OperatorResult(values)


# -- norms and norm estimation ------------------------------------------------


def weighted_lp_norm(space: QuasiMetricSpace, f: np.ndarray, w: np.ndarray, p: float) -> float:
    """(sum |f|^p w mass)^{1/p}."""
    f = np.asarray(f, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    if p <= 0:
        raise ValueError("p must be positive")
    return float((np.abs(f) ** p * w * space.mass).sum() ** (1.0 / p))


def build_probes(
    space: QuasiMetricSpace,
    random_count: int = 16,
    seed: int = 0,
    ball_cap: Optional[int] = 4096,
) -> Tuple[np.ndarray, List[str]]:
    """Deterministic probe matrix: all singleton indicators, canonical
    ball indicators (an even-stride subsample when capped), then seeded
    signed lognormal draws.  Adding probes never lowers the estimate.
    """
    cols: List[np.ndarray] = []
    labels: List[str] = []
    eye = np.eye(space.n)
    for i in range(space.n):
        cols.append(eye[:, i])
        labels.append(f"point:{i}")
    mask = space.ball_mask()
    nb = mask.shape[0]
    if ball_cap is None or nb <= ball_cap:
        ball_ids = np.arange(nb)
    else:
        stride = int(math.ceil(nb / ball_cap))
        ball_ids = np.arange(0, nb, stride)
    for i in ball_ids:
        cols.append(mask[i].astype(np.float64))
        labels.append(f"ball:{i}")
    rng = np.random.default_rng(seed)
    for j in range(random_count):
        vals = rng.lognormal(0.0, 1.0, size=space.n)
        signs = rng.integers(0, 2, size=space.n) * 2 - 1
        cols.append(vals * signs)
        labels.append(f"random:{j}")
    return np.stack(cols, axis=1), labels


def estimate_from_values(
    space: QuasiMetricSpace,
    op_values: np.ndarray,
    probe_matrix: np.ndarray,
    lam1: np.ndarray,
    lam2: np.ndarray,
    p: float,
) -> Tuple[float, int]:
    """max over probe columns of ||op f||_{lambda2,p} / ||f||_{lambda1,p}."""
    lam1 = np.asarray(lam1, dtype=np.float64)
    lam2 = np.asarray(lam2, dtype=np.float64)
    num = ((np.abs(op_values) ** p * (lam2 * space.mass)[:, None]).sum(axis=0)) ** (1.0 / p)
    den = ((np.abs(probe_matrix) ** p * (lam1 * space.mass)[:, None]).sum(axis=0)) ** (1.0 / p)
    ratios = num / den
    best = int(np.argmax(ratios))
    return float(ratios[best]), best


def operator_norm_estimate(
    space: QuasiMetricSpace,
    apply_op: Callable[[np.ndarray], np.ndarray],
    lam1: np.ndarray,
    lam2: np.ndarray,
    p: float,
    probes: int = 16,
    seed: int = 0,
    ball_cap: Optional[int] = 4096,
) -> Dict[str, object]:
    """Probe lower bound for the L^p(lambda1) -> L^p(lambda2) norm."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    F, labels = build_probes(space, probes, seed, ball_cap)
    out = np.empty_like(F)
    for j in range(F.shape[1]):
        out[:, j] = apply_op(F[:, j])
    est, idx = estimate_from_values(space, out, F, lam1, lam2, p)
    return {"estimate": est, "witness": labels[idx], "probes": F.shape[1]}
