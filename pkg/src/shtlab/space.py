# src/shtlab/space.py
"""
Finite metric-measure spaces with a quasi-metric and strictly positive
atomic masses, together with the canonical ball family that every
supremum-over-balls quantity in this package ranges over.

Provides:

* ``QuasiMetricSpace`` -- validated (dist, mass) container with cached
  geometry (canonical balls, ball membership matrices, measured
  constants).
* ``Ball`` -- a (center, radius, member set) triple.  Balls are open:
  ``B(x, r) = {y : d(x, y) < r}``.
* ``build_space`` -- the five reference generators (line, sqline,
  grid2d, tree, pair).
* ``canonical_balls`` -- per center, one ball per distinct member set;
  the stored radius is the midpoint between the realizing distance
  threshold and the next distinct distance, so strict comparisons are
  exact in floating point.
* ``measured_constants`` -- quasi-triangle constant, measured doubling
  constant and upper dimension.  These are *measured* suprema over the
  finite ball family, reported rather than assumed.
* JSON (de)serialization that round-trips bit-exactly.

Notes
-----
The doubling scan probes radii at both the stored midpoint radii and
the exact distance thresholds.  Probing midpoints alone underestimates
the supremum over all radii: the worst ratio mu(B(x, 2r))/mu(B(x, r))
is attained with r equal to a distance value (the inner ball stays
closed under the strict inequality while the doubled ball jumps).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

MAX_POINTS = 4096

WEIGHT_ROLES = ("w", "lambda1", "lambda2", "nu")
FUNCTION_ROLES = ("f", "b") + WEIGHT_ROLES


@dataclass
class Ball:
    """An open ball: center point id, radius, sorted member ids."""

    center: int
    radius: float
    members: np.ndarray
    index: int = -1  # position in the canonical list; -1 for ad hoc balls

    def __post_init__(self) -> None:
        self.members = np.asarray(self.members, dtype=np.int64)

    def __contains__(self, point: int) -> bool:
        return bool(np.isin(point, self.members))

    def member_key(self) -> Tuple[int, ...]:
        return tuple(int(i) for i in self.members)


@dataclass
class PointFunction:
    """A function on the points of a space, tagged with its role.

    Weight-tagged roles (w, lambda1, lambda2, nu) must be strictly
    positive everywhere; plain functions (f, b) may take any real
    values.
    """

    values: np.ndarray
    role: str = "f"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.role not in FUNCTION_ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("point function values must be finite")
        if self.role in WEIGHT_ROLES and not np.all(self.values > 0):
            raise ValueError(f"role {self.role!r} requires strictly positive values")


class QuasiMetricSpace:
    """A finite space of homogeneous type at desk scale.

    Parameters
    ----------
    dist : (n, n) array
        Symmetric, zero diagonal, strictly positive off the diagonal.
    mass : (n,) array
        Strictly positive atom masses.
    coords : optional (n, d) array
        Point coordinates when the generator has them; used by the
        coordinate-based weight generators.
    meta : optional dict
        Generator provenance, stored verbatim in serialized files.
    """

    def __init__(
        self,
        dist: np.ndarray,
        mass: np.ndarray,
        coords: Optional[np.ndarray] = None,
        meta: Optional[dict] = None,
    ) -> None:
        dist = np.asarray(dist, dtype=np.float64)
        mass = np.asarray(mass, dtype=np.float64)
        if dist.ndim != 2 or dist.shape[0] != dist.shape[1]:
            raise ValueError("dist must be a square matrix")
        n = dist.shape[0]
        if n < 2:
            raise ValueError("a space needs at least two points")
        if n > MAX_POINTS:
            raise ValueError(f"n={n} exceeds the supported cap {MAX_POINTS}")
        if mass.shape != (n,):
            raise ValueError("mass must have one entry per point")
        if not np.allclose(dist, dist.T, rtol=0, atol=0):
            raise ValueError("dist must be exactly symmetric")
        if np.any(np.diag(dist) != 0.0):
            raise ValueError("dist must vanish on the diagonal")
        off = dist[~np.eye(n, dtype=bool)]
        if not np.all(off > 0):
            raise ValueError("distinct points must have positive distance")
        if not np.all(np.isfinite(dist)):
            raise ValueError("distances must be finite")
        if not np.all(mass > 0):
            raise ValueError("masses must be strictly positive")

        self.n = n
        self.dist = dist
        self.mass = mass
        self.coords = None if coords is None else np.asarray(coords, dtype=np.float64)
        self.meta = dict(meta or {})
        self._cache: Dict[str, object] = {}

    # -- basic measure helpers -------------------------------------------

    @property
    def total_mass(self) -> float:
        return float(self.mass.sum())

    def measure(self, members: np.ndarray) -> float:
        members = np.asarray(members, dtype=np.int64)
        if members.size == 0:
            raise ValueError("member set must be nonempty")
        return float(self.mass[members].sum())

    def average(self, f: np.ndarray, members: np.ndarray) -> float:
        """Integral average of f over a member set."""
        members = np.asarray(members, dtype=np.int64)
        if members.size == 0:
            raise ValueError("member set must be nonempty")
        m = self.mass[members]
        return float((np.asarray(f)[members] * m).sum() / m.sum())

    def ball_at(self, center: int, radius: float) -> Ball:
        """The open ball {y : d(center, y) < radius} as an ad hoc Ball."""
        members = np.flatnonzero(self.dist[center] < radius)
        return Ball(int(center), float(radius), members)

    # -- canonical balls ---------------------------------------------------

    def canonical_balls(self) -> List[Ball]:
        """One ball per (center, member set) pair, center then radius order.

        Per center the distinct distance thresholds 0 = t_0 < t_1 < ...
        give strictly growing member sets {y : d(c, y) <= t_j}; the
        stored radius is t_j + (t_{j+1} - t_j)/2, and 1.5 * t_max for
        the full ball.
        """
        if "balls" not in self._cache:
            balls: List[Ball] = []
            for c in range(self.n):
                row = self.dist[c]
                order = np.argsort(row, kind="stable")
                sorted_d = row[order]
                # distinct thresholds and the cumulative member prefix sizes
                distinct = np.unique(sorted_d)
                counts = np.searchsorted(sorted_d, distinct, side="right")
                for j, t in enumerate(distinct):
                    if j + 1 < len(distinct):
                        radius = float(t + (distinct[j + 1] - t) / 2.0)
                    else:
                        radius = float(1.5 * t) if t > 0 else 1.0
                    members = np.sort(order[: counts[j]])
                    balls.append(Ball(c, radius, members, index=len(balls)))
            self._cache["balls"] = balls
        return self._cache["balls"]  # type: ignore[return-value]

    def ball_mask(self) -> np.ndarray:
        """Boolean membership matrix, one row per canonical ball."""
        if "ball_mask" not in self._cache:
            balls = self.canonical_balls()
            mask = np.zeros((len(balls), self.n), dtype=bool)
            for i, ball in enumerate(balls):
                mask[i, ball.members] = True
            self._cache["ball_mask"] = mask
        return self._cache["ball_mask"]  # type: ignore[return-value]

    def ball_fmask(self) -> np.ndarray:
        """Float64 copy of the membership matrix for matrix products."""
        if "ball_fmask" not in self._cache:
            self._cache["ball_fmask"] = self.ball_mask().astype(np.float64)
        return self._cache["ball_fmask"]  # type: ignore[return-value]

    def ball_measures(self) -> np.ndarray:
        if "ball_mu" not in self._cache:
            self._cache["ball_mu"] = self.ball_fmask() @ self.mass
        return self._cache["ball_mu"]  # type: ignore[return-value]

    def ball_slices(self) -> List[Tuple[int, int]]:
        """Per center, the [start, end) range of its canonical balls."""
        if "ball_slices" not in self._cache:
            balls = self.canonical_balls()
            slices: List[Tuple[int, int]] = []
            start = 0
            for c in range(self.n):
                end = start
                while end < len(balls) and balls[end].center == c:
                    end += 1
                slices.append((start, end))
                start = end
            self._cache["ball_slices"] = slices
        return self._cache["ball_slices"]  # type: ignore[return-value]

    def ball_pointers(self) -> np.ndarray:
        """ptr[x, c] = index of the smallest canonical ball at c containing x.

        Used by the suffix-max evaluation of the maximal function: the
        balls at a fixed center are nested, so the balls containing x
        form a suffix of the center's radius-sorted list.
        """
        if "ball_ptr" not in self._cache:
            slices = self.ball_slices()
            ptr = np.zeros((self.n, self.n), dtype=np.int64)
            for c in range(self.n):
                s, e = slices[c]
                distinct = np.unique(self.dist[c])
                # ball j at center c has member set {y : d(c,y) <= distinct[j]}
                ranks = np.searchsorted(distinct, self.dist[c], side="left")
                ptr[:, c] = s + ranks
            self._cache["ball_ptr"] = ptr
        return self._cache["ball_ptr"]  # type: ignore[return-value]

    def smallest_covering_ball(self, support: np.ndarray) -> Ball:
        """The minimum-measure canonical ball containing the given ids."""
        support = np.asarray(support, dtype=np.int64)
        if support.size == 0:
            support = np.arange(self.n)
        mask = self.ball_mask()
        mu = self.ball_measures()
        contains = np.all(mask[:, support], axis=1)
        if not np.any(contains):  # cannot happen: full balls exist per center
            raise ValueError("no canonical ball covers the support")
        ids = np.flatnonzero(contains)
        best = ids[np.argmin(mu[ids])]
        return self.canonical_balls()[int(best)]

    # -- measured geometric constants --------------------------------------

    def measured_constants(self) -> Tuple[float, float, float]:
        """(a0, c_mu, updim): quasi-triangle constant, doubling constant
        and upper dimension, all measured exhaustively.

        a0 is the max over pairs x != y of d(x,y)/min_z(d(x,z)+d(z,y)),
        clamped to >= 1.  c_mu is the max of mu(B(x,2r))/mu(B(x,r)) over
        the doubling probe radii.  updim is the smallest real n with
        mu(B(x, lr)) <= c_mu * l**n * mu(B(x, r)) over sampled
        l in {2, 4, 8}.
        """
        if "constants" not in self._cache:
            a0 = self._measure_a0()
            c_mu, updim = self._measure_doubling()
            self._cache["constants"] = (a0, c_mu, updim)
        return self._cache["constants"]  # type: ignore[return-value]

    @property
    def a0(self) -> float:
        return self.measured_constants()[0]

    @property
    def c_mu(self) -> float:
        return self.measured_constants()[1]

    @property
    def updim(self) -> float:
        return self.measured_constants()[2]

    def _measure_a0(self) -> float:
        d = self.dist
        best = d.copy()  # min over z of d(x,z) + d(z,y)
        for z in range(self.n):
            detour = d[:, z][:, None] + d[z, :][None, :]
            np.minimum(best, detour, out=best)
        off = ~np.eye(self.n, dtype=bool)
        ratios = d[off] / best[off]
        return float(max(1.0, ratios.max()))

    def _doubling_probe_radii(self, center: int) -> np.ndarray:
        """Distance thresholds plus canonical midpoints for one center."""
        distinct = np.unique(self.dist[center])
        pos = distinct[distinct > 0]
        mids = (distinct[:-1] + distinct[1:]) / 2.0
        top = np.array([1.5 * distinct[-1]]) if distinct[-1] > 0 else np.array([1.0])
        return np.unique(np.concatenate([pos, mids[mids > 0], top]))

    def _measure_doubling(self) -> Tuple[float, float]:
        lams = (2.0, 4.0, 8.0)
        c_mu = 1.0
        worst: List[Tuple[float, float]] = []  # (lambda, ratio) pairs
        for c in range(self.n):
            row = self.dist[c]
            order = np.argsort(row, kind="stable")
            sorted_d = row[order]
            cum = np.cumsum(self.mass[order])
            radii = self._doubling_probe_radii(c)

            def mu_ball(rs: np.ndarray) -> np.ndarray:
                idx = np.searchsorted(sorted_d, rs, side="left")
                return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

            base = mu_ball(radii)
            for lam in lams:
                ratio = mu_ball(lam * radii) / base
                peak = float(ratio.max())
                worst.append((lam, peak))
                if lam == 2.0:
                    c_mu = max(c_mu, peak)
        n_req = 0.0
        for lam, peak in worst:
            if peak > c_mu:
                n_req = max(n_req, math.log(peak / c_mu) / math.log(lam))
        return c_mu, max(n_req, 1e-9)

    def strong_doubling_exponent(self, lams: Sequence[float] = (2.0, 4.0, 8.0)) -> float:
        """Smallest n with mu(B(x, lr)) <= l**n * mu(B(x, r)) over canonical
        balls and the sampled scale factors (no c_mu prefactor)."""
        key = ("strong_n", tuple(lams))
        if key not in self._cache:
            n_req = 0.0
            for c in range(self.n):
                row = self.dist[c]
                order = np.argsort(row, kind="stable")
                sorted_d = row[order]
                cum = np.cumsum(self.mass[order])
                radii = np.array([b.radius for b in self.canonical_balls()[slice(*self.ball_slices()[c])]])

                def mu_ball(rs: np.ndarray) -> np.ndarray:
                    idx = np.searchsorted(sorted_d, rs, side="left")
                    return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)

                base = mu_ball(radii)
                for lam in lams:
                    ratio = mu_ball(lam * radii) / base
                    peak = float(ratio.max())
                    if peak > 1.0:
                        n_req = max(n_req, math.log(peak) / math.log(lam))
            self._cache[key] = n_req
        return self._cache[key]  # type: ignore[return-value]


def scale_ball(space: QuasiMetricSpace, ball: Ball, factor: float) -> Ball:
    """Same center, radius scaled by factor, members recomputed."""
    radius = float(factor) * ball.radius
    members = np.flatnonzero(space.dist[ball.center] < radius)
    return Ball(ball.center, radius, members)


def canonical_balls(space: QuasiMetricSpace) -> List[Ball]:
    return space.canonical_balls()


def measured_constants(space: QuasiMetricSpace) -> Tuple[float, float, float]:
    return space.measured_constants()


def ball_measure(space: QuasiMetricSpace, ball_or_members) -> float:
    members = ball_or_members.members if isinstance(ball_or_members, Ball) else ball_or_members
    return space.measure(members)


def ball_average(space: QuasiMetricSpace, f: np.ndarray, ball_or_members) -> float:
    members = ball_or_members.members if isinstance(ball_or_members, Ball) else ball_or_members
    return space.average(f, members)


# -- generators -------------------------------------------------------------


def build_space(
    kind: str,
    n: Optional[int] = None,
    params: Optional[dict] = None,
    seed: int = 0,
) -> QuasiMetricSpace:
    """Build one of the reference spaces.

    kind:
      line    -- points i/n on [0, 1), absolute-difference metric, mass 1/n
      sqline  -- same points, squared-difference quasi-metric (a0 = 2)
      grid2d  -- n x n grid (i/n, j/n), Euclidean metric, mass 1/n^2
      tree    -- complete binary tree on n nodes, path metric, mass 1/n
      pair    -- two points at distance 1, mass 1/2 each
    """
    params = dict(params or {})
    meta = {"kind": kind, "n": n, "params": params, "seed": seed}
    if kind == "pair":
        dist = np.array([[0.0, 1.0], [1.0, 0.0]])
        mass = np.array([0.5, 0.5])
        coords = np.array([[0.0], [1.0]])
        return QuasiMetricSpace(dist, mass, coords, meta)
    if n is None or n < 2:
        raise ValueError(f"kind {kind!r} needs n >= 2")
    if kind in ("line", "sqline"):
        x = np.arange(n, dtype=np.float64) / n
        diff = np.abs(x[:, None] - x[None, :])
        dist = diff if kind == "line" else diff**2
        mass = np.full(n, 1.0 / n)
        return QuasiMetricSpace(dist, mass, x[:, None], meta)
    if kind == "grid2d":
        side = n
        if side * side > MAX_POINTS:
            raise ValueError(f"grid2d side {side} exceeds the point cap")
        ii, jj = np.meshgrid(np.arange(side), np.arange(side), indexing="ij")
        pts = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.float64) / side
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff**2).sum(axis=2))
        mass = np.full(side * side, 1.0 / (side * side))
        return QuasiMetricSpace(dist, mass, pts, meta)
    if kind == "tree":
        # complete binary tree in heap order: parent of i is (i-1)//2
        depth = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            depth[i] = depth[(i - 1) // 2] + 1
        # ancestor walk gives exact path distances
        dist = np.zeros((n, n), dtype=np.float64)
        for i in range(n):
            for j in range(i + 1, n):
                a, b_ = i, j
                da, db = depth[a], depth[b_]
                hops = 0
                while da > db:
                    a = (a - 1) // 2
                    da -= 1
                    hops += 1
                while db > da:
                    b_ = (b_ - 1) // 2
                    db -= 1
                    hops += 1
                while a != b_:
                    a = (a - 1) // 2
                    b_ = (b_ - 1) // 2
                    hops += 2
                dist[i, j] = dist[j, i] = float(hops)
        mass = np.full(n, 1.0 / n)
        coords = (depth / max(1, depth.max())).astype(np.float64)[:, None]
        return QuasiMetricSpace(dist, mass, coords, meta)
    raise ValueError(f"unknown space kind {kind!r}")


# -- serialization -----------------------------------------------------------


def space_to_dict(space: QuasiMetricSpace) -> dict:
    out = {
        "n": space.n,
        "dist": [float(v) for v in space.dist.ravel()],
        "mass": [float(v) for v in space.mass],
        "meta": space.meta,
    }
    if space.coords is not None:
        out["coords"] = [[float(v) for v in row] for row in space.coords]
    return out


def space_from_dict(doc: dict) -> QuasiMetricSpace:
    n = int(doc["n"])
    dist = np.array(doc["dist"], dtype=np.float64).reshape(n, n)
    mass = np.array(doc["mass"], dtype=np.float64)
    coords = np.array(doc["coords"], dtype=np.float64) if "coords" in doc else None
    return QuasiMetricSpace(dist, mass, coords, doc.get("meta"))


def save_space(space: QuasiMetricSpace, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(space_to_dict(space), fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_space(path: str) -> QuasiMetricSpace:
    with open(path) as fh:
        return space_from_dict(json.load(fh))
