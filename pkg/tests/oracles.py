"""Independent brute-force reference implementations.

Everything here is written as plain loops straight from the
definitions, deliberately ignoring the library's vectorized code paths,
so tests can compare the two implementations on small spaces.
"""

from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np


def ball_members(space, center: int, radius: float) -> np.ndarray:
    """Open ball by definition: strict inequality."""
    return np.array(
        [x for x in range(space.n) if space.dist[center, x] < radius], dtype=np.int64
    )


def quasi_triangle_constant(space) -> float:
    """max d(x,y)/(d(x,z)+d(z,y)) over all triples with x != y."""
    best = 1.0
    d = space.dist
    for x in range(space.n):
        for y in range(space.n):
            if x == y:
                continue
            for z in range(space.n):
                den = d[x, z] + d[z, y]
                if den > 0:
                    best = max(best, d[x, y] / den)
    return best


def doubling_constant(space) -> float:
    """max mu(B(x, 2r))/mu(B(x, r)) over centers and every radius that
    can change a member set (all pairwise distances and midpoints)."""
    d = space.dist
    best = 0.0
    for c in range(space.n):
        thresholds = sorted(set(d[c].tolist()))
        radii = set()
        for i, t in enumerate(thresholds):
            if t > 0:
                radii.add(t)
            if i + 1 < len(thresholds):
                radii.add(t + (thresholds[i + 1] - t) / 2.0)
        radii.add(thresholds[-1] * 1.5)
        for r in radii:
            if r <= 0:
                continue
            small = ball_members(space, c, r)
            big = ball_members(space, c, 2.0 * r)
            if len(small):
                best = max(best, space.measure(big) / space.measure(small))
    return best


def maximal_function(space, f: np.ndarray) -> np.ndarray:
    """Mf(x) = sup over canonical balls containing x of avg |f|."""
    out = np.zeros(space.n)
    for ball in space.canonical_balls():
        mem = ball.members
        avg = float(np.sum(np.abs(f[mem]) * space.mass[mem])) / space.measure(mem)
        for x in mem:
            out[x] = max(out[x], avg)
    return out


def commutator_kernel(space, b: np.ndarray, f: np.ndarray) -> np.ndarray:
    """C_b f(x) = sup over balls containing x of avg |b(x)-b(.)||f|."""
    out = np.zeros(space.n)
    for ball in space.canonical_balls():
        mem = ball.members
        mu = space.measure(mem)
        for x in mem:
            s = 0.0
            for y in mem:
                s += abs(b[x] - b[y]) * abs(f[y]) * space.mass[y]
            out[x] = max(out[x], s / mu)
    return out


def ap_characteristic(space, w: np.ndarray, p: float) -> Tuple[float, int]:
    """sup_B avg_B(w) * (avg_B w^{-1/(p-1)})^{p-1}, with the ball id."""
    best, best_ball = 0.0, -1
    for bid, ball in enumerate(space.canonical_balls()):
        mem = ball.members
        mu = space.measure(mem)
        a1 = float(np.sum(w[mem] * space.mass[mem])) / mu
        a2 = float(np.sum(w[mem] ** (-1.0 / (p - 1.0)) * space.mass[mem])) / mu
        val = a1 * a2 ** (p - 1.0)
        if val > best:
            best, best_ball = val, bid
    return best, best_ball


def bmo_norm(space, b: np.ndarray, w: np.ndarray) -> float:
    """sup_B (1/w(B)) integral_B |b - b_B| dmu."""
    best = 0.0
    for ball in space.canonical_balls():
        mem = ball.members
        mu = space.measure(mem)
        bB = float(np.sum(b[mem] * space.mass[mem])) / mu
        osc = float(np.sum(np.abs(b[mem] - bB) * space.mass[mem]))
        wB = float(np.sum(w[mem] * space.mass[mem]))
        if wB > 0:
            best = max(best, osc / wB)
    return best


def sparse_operator(space, cubes: Sequence, f: np.ndarray) -> np.ndarray:
    """A_S f = sum over cubes of avg_Q f times the indicator of Q."""
    out = np.zeros(space.n)
    for cube in cubes:
        mem = cube.members
        avg = float(np.sum(f[mem] * space.mass[mem])) / space.measure(mem)
        out[mem] += avg
    return out


def sparse_commutator(space, cubes: Sequence, b: np.ndarray, f: np.ndarray) -> np.ndarray:
    """T_{S,b} f = sum over cubes of |b(x) - b_Q| avg_Q(f) chi_Q(x)."""
    out = np.zeros(space.n)
    for cube in cubes:
        mem = cube.members
        mu = space.measure(mem)
        b_q = float(np.sum(b[mem] * space.mass[mem])) / mu
        avg_f = float(np.sum(f[mem] * space.mass[mem])) / mu
        for x in mem:
            out[x] += abs(b[x] - b_q) * avg_f
    return out


def sparse_commutator_adjoint(space, cubes: Sequence, b: np.ndarray, f: np.ndarray) -> np.ndarray:
    """T*_{S,b} f = sum over cubes of avg_Q(|b - b_Q| f) chi_Q(x)."""
    out = np.zeros(space.n)
    for cube in cubes:
        mem = cube.members
        mu = space.measure(mem)
        b_q = float(np.sum(b[mem] * space.mass[mem])) / mu
        avg = float(np.sum(np.abs(b[mem] - b_q) * f[mem] * space.mass[mem])) / mu
        for x in mem:
            out[x] += avg
    return out


def packing_constant(system, cubes: Sequence) -> float:
    """eta = 1 / max over tree cubes Q of sum_{P in S, P inside Q}
    mu(P)/mu(Q); a single cube family yields 1."""
    worst = 0.0
    fam = [(set(c.members.tolist()), system.space.measure(c.members)) for c in cubes]
    for k in system.levels:
        for q in system.cubes[k]:
            qset = set(q.members.tolist())
            muq = system.space.measure(q.members)
            tot = sum(mu for mem, mu in fam if mem <= qset)
            worst = max(worst, tot / muq)
    return 1.0 / worst if worst > 0 else 1.0


def cz_select(system, g: np.ndarray, height: float, root=None) -> List:
    """Maximal cubes with avg_Q g > height inside the root's subtree,
    found by a top-down scan that stops at the first crossing."""
    levels = system.levels
    if root is None:
        root = system.cubes[levels[0]][0]
    chosen = []

    def descend(cube):
        mem = cube.members
        avg = float(np.sum(g[mem] * system.space.mass[mem])) / system.space.measure(mem)
        if avg > height:
            chosen.append(cube)
            return
        idx = levels.index(cube.k)
        if idx + 1 >= len(levels):
            return
        nxt = levels[idx + 1]
        memset = set(mem.tolist())
        for child in system.cubes[nxt]:
            if set(child.members.tolist()) <= memset:
                descend(child)

    descend(root)
    return chosen


def weighted_lp_norm(space, f: np.ndarray, w: np.ndarray, p: float) -> float:
    return float(np.sum(np.abs(f) ** p * w * space.mass) ** (1.0 / p))
