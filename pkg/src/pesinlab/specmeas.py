"""Weak-specification machinery: covers, transits, gluing, periodic measures.

The pipeline mirrors the constructive route from recurrence to invariant
measures: cover the working region with small balls, record minimal transit
times between balls along sampled orbits, splice orbit segments into a
periodic pseudo-orbit using stored transit witnesses as connectors, shadow
it, and compare the resulting periodic measure with a Birkhoff target in
the weak-* sense via trigonometric test functions.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from . import systems as dyn
from ._serialize import fmt_float, write_csv
from .errors import DimensionMismatchError, UnresolvedTransitionError
from .shadow import PseudoOrbit, solve_shadow

__all__ = [
    "Cover",
    "build_cover",
    "TransitionTable",
    "transition_times",
    "GluePlan",
    "glue_segments",
    "specification_shadow",
    "EmpiricalMeasure",
    "weak_star_distance",
    "approximate_invariant_measure",
    "transition_table_csv",
    "measure_csv",
]


@dataclass(frozen=True)
class Cover:
    """Finite family of open balls with diameters below the mesh."""

    centers: np.ndarray
    radii: np.ndarray
    mesh: float

    def __post_init__(self):
        centers = np.atleast_2d(np.asarray(self.centers, dtype=float))
        radii = np.atleast_1d(np.asarray(self.radii, dtype=float))
        object.__setattr__(self, "centers", centers)
        object.__setattr__(self, "radii", radii)
        if len(centers) != len(radii) or len(centers) == 0:
            raise ValueError("cover needs matching nonempty centers and radii")
        if not self.mesh > 0.0:
            raise ValueError(f"mesh must be positive, got {self.mesh}")
        if np.any(radii <= 0.0) or np.any(radii > self.mesh / 2.0):
            raise ValueError("radii must lie in (0, mesh/2]")

    @property
    def size(self):
        return len(self.centers)

    def locate(self, points):
        """Index of the first ball strictly containing each point, else -1."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        out = np.full(len(pts), -1, dtype=np.int64)
        for lo in range(0, len(pts), 4096):
            chunk = pts[lo:lo + 4096]
            diff = dyn.torus_diff(chunk[:, None, :], self.centers[None, :, :])
            inside = np.linalg.norm(diff, axis=-1) < self.radii
            hit = inside.any(axis=1)
            out[lo:lo + 4096][hit] = np.argmax(inside[hit], axis=1)
        return out

    def members(self, points):
        """All (point index, ball index) membership pairs, point-major order."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        t_all, b_all = [], []
        for lo in range(0, len(pts), 4096):
            chunk = pts[lo:lo + 4096]
            diff = dyn.torus_diff(chunk[:, None, :], self.centers[None, :, :])
            inside = np.linalg.norm(diff, axis=-1) < self.radii
            tt, bb = np.nonzero(inside)
            t_all.append(tt + lo)
            b_all.append(bb)
        return np.concatenate(t_all), np.concatenate(b_all)


def build_cover(samples, delta):
    """Greedy cover: first uncovered sample becomes a center of radius delta/2."""
    pts = dyn.wrap(np.atleast_2d(np.asarray(samples, dtype=float)))
    if len(pts) == 0:
        raise ValueError("samples must be nonempty")
    if not delta > 0.0:
        raise ValueError(f"delta must be positive, got {delta}")
    radius = delta / 2.0
    centers = []
    uncovered = np.ones(len(pts), dtype=bool)
    while uncovered.any():
        c = pts[int(np.argmax(uncovered))]
        centers.append(c)
        dist = np.linalg.norm(dyn.torus_diff(pts[uncovered], c), axis=-1)
        idx = np.flatnonzero(uncovered)
        uncovered[idx[dist < radius]] = False
    centers = np.array(centers)
    return Cover(centers=centers, radii=np.full(len(centers), radius), mesh=float(delta))


@dataclass(frozen=True)
class TransitionTable:
    """Minimal observed transit times X[i, j] from ball j into ball i.

    Entries are -1 where no transit was observed within the horizon
    (unresolved: possibly an obstruction, possibly undersampling).  Witness
    points realize the recorded transits and seed connector segments.
    """

    X: np.ndarray
    witnesses: np.ndarray
    min_n: int
    horizon: int
    budget: int
    seed: int

    @property
    def resolved(self):
        return self.X >= 0

    @property
    def X1(self):
        if not self.resolved.any():
            raise ValueError("no resolved transitions")
        return int(self.X[self.resolved].min())

    @property
    def X2(self):
        if not self.resolved.any():
            raise ValueError("no resolved transitions")
        return int(self.X[self.resolved].max())


def transition_times(system, cover, min_n, horizon, budget, seed=0):
    """Scan sampled orbits for the least transit >= min_n between ball pairs.

    Orbits are seeded independently from (seed, orbit index); the merge
    keeps the smallest transit per pair, breaking ties in favor of earlier
    orbits and earlier witness times, so growing the budget only refines.
    """
    if min_n < 1 or horizon < min_n:
        raise ValueError(f"need 1 <= min_n <= horizon, got {min_n}, {horizon}")
    if budget < 1:
        raise ValueError(f"need budget >= 1, got {budget}")
    m = cover.size
    d = cover.centers.shape[1]
    X = np.full((m, m), -1, dtype=np.int64)
    witnesses = np.full((m, m, d), np.nan)
    sentinel = horizon + 1

    for orbit_idx in range(budget):
        rng = np.random.default_rng([seed, orbit_idx])
        orbit = dyn.orbit_points(system, rng.random(system.dim), horizon)
        t_mem, b_mem = cover.members(orbit)
        early = t_mem + min_n <= horizon
        t_src, j_src = t_mem[early], b_mem[early]
        if t_src.size == 0:
            continue
        for i in np.unique(b_mem):
            nxt = np.full(horizon + 2, sentinel, dtype=np.int64)
            hits = t_mem[b_mem == i]
            nxt[hits] = hits
            nxt = np.minimum.accumulate(nxt[::-1])[::-1]
            arrive = nxt[t_src + min_n]
            good = arrive <= horizon
            if not good.any():
                continue
            cand = arrive[good] - t_src[good]
            src_t = t_src[good]
            src_lab = j_src[good]
            order = np.lexsort((src_t, cand, src_lab))
            _, first = np.unique(src_lab[order], return_index=True)
            for pos in order[first]:
                j, n_best, t_wit = int(src_lab[pos]), int(cand[pos]), int(src_t[pos])
                if X[i, j] < 0 or n_best < X[i, j]:
                    X[i, j] = n_best
                    witnesses[i, j] = orbit[t_wit]
    return TransitionTable(X=X, witnesses=witnesses, min_n=int(min_n),
                           horizon=int(horizon), budget=int(budget), seed=int(seed))


@dataclass(frozen=True)
class GluePlan:
    """Cyclic splice of orbit segments and transit connectors.

    The assembled pseudo-orbit alternates segment i with the connector
    realizing the recorded transit from segment i's end ball to segment
    i+1's start ball; c_times[i] is the chain time after segment i+1 and
    its connector.
    """

    segments: tuple
    connectors: tuple
    pseudo: PseudoOrbit
    period: int
    c_times: tuple
    delta: float

    def to_dict(self):
        return {
            "period": self.period,
            "delta": self.delta,
            "c_times": list(self.c_times),
            "segments": [
                {"x": [float(v) for v in x], "n": int(n)} for x, n in self.segments
            ],
            "connectors": [
                {"y": [float(v) for v in y], "transit": int(t)}
                for y, t in self.connectors
            ],
        }


def glue_segments(system, segments, cover, table):
    """Assemble the periodic pseudo-orbit segment_1, connector_1, ....

    Endpoints of every segment must lie in the cover; consecutive gluing
    uses the stored witness of the transit from the end ball of segment i
    to the start ball of segment i+1 (cyclically).  Gaps stay below the
    cover mesh because seam partners share a ball.
    """
    if not segments:
        raise ValueError("need at least one segment")
    seg_data = []
    for x, n in segments:
        if n < 1:
            raise ValueError(f"segment length must be >= 1, got {n}")
        pts = dyn.orbit_points(system, np.asarray(x, dtype=float), int(n))
        b0, b1 = cover.locate(np.array([pts[0], pts[-1]]))
        if b0 < 0 or b1 < 0:
            raise ValueError(
                f"segment endpoint not covered (start ball {b0}, end ball {b1})")
        seg_data.append((pts, int(b0), int(b1)))

    connectors = []
    chain = []
    for i, (pts, _, b_end) in enumerate(seg_data):
        b_next = seg_data[(i + 1) % len(seg_data)][1]
        transit = int(table.X[b_next, b_end])
        if transit < 0:
            raise UnresolvedTransitionError(
                f"transit from ball {b_end} to ball {b_next} unresolved")
        y = table.witnesses[b_next, b_end]
        conn = dyn.orbit_points(system, y, transit)
        connectors.append((y, transit))
        chain.extend([pts, conn])

    pseudo = PseudoOrbit(segments=tuple(chain), periodic=True, delta=cover.mesh)
    n_list = [n for _, n in segments]
    x_list = [t for _, t in connectors]
    c_times = np.cumsum([n + t for n, t in zip(n_list, x_list)])
    return GluePlan(
        segments=tuple((pts[0], len(pts) - 1) for pts, _, _ in seg_data),
        connectors=tuple(connectors),
        pseudo=pseudo,
        period=int(c_times[-1]),
        c_times=tuple(int(c) for c in c_times),
        delta=cover.mesh,
    )


def specification_shadow(system, plan, tol=1e-12):
    """Shadow the glued plan into a genuine periodic orbit."""
    result = solve_shadow(system, plan.pseudo, tol=tol)
    if result.period != plan.period:
        raise RuntimeError(
            f"solver period {result.period} != plan period {plan.period}")
    return result


@dataclass(frozen=True)
class EmpiricalMeasure:
    """Finitely supported probability measure on the torus."""

    points: np.ndarray
    weights: np.ndarray | None = None

    def __post_init__(self):
        pts = dyn.wrap(np.atleast_2d(np.asarray(self.points, dtype=float)))
        object.__setattr__(self, "points", pts)
        if len(pts) == 0:
            raise ValueError("measure needs at least one support point")
        if self.weights is None:
            w = np.full(len(pts), 1.0 / len(pts))
        else:
            w = np.asarray(self.weights, dtype=float)
            if w.shape != (len(pts),) or np.any(w <= 0.0):
                raise ValueError("weights must be positive, one per point")
            total = w.sum()
            if abs(total - 1.0) > 1e-9:
                raise ValueError(f"weights must sum to 1, got {total}")
            w = w / total
        object.__setattr__(self, "weights", w)

    @property
    def dim(self):
        return self.points.shape[1]

    @classmethod
    def from_orbit(cls, system, x, n):
        """Birkhoff measure of the first n orbit points of x."""
        if n < 1:
            raise ValueError(f"need n >= 1, got {n}")
        pts = dyn.orbit_points(system, np.asarray(x, dtype=float), int(n) - 1)
        return cls(points=pts)

    def character_moments(self, freqs):
        """(cos, sin) moments of the characters exp(2 pi i k.x), k in freqs."""
        re = np.zeros(len(freqs))
        im = np.zeros(len(freqs))
        for lo in range(0, len(self.points), 8192):
            chunk = self.points[lo:lo + 8192]
            w = self.weights[lo:lo + 8192]
            phase = 2.0 * np.pi * chunk @ freqs.T
            re += w @ np.cos(phase)
            im += w @ np.sin(phase)
        return re, im


def _character_grid(dim, degree):
    rng = range(-degree, degree + 1)
    ks = np.array([k for k in itertools.product(rng, repeat=dim) if any(k)])
    return ks.astype(float)


def weak_star_distance(m1, m2, degree):
    """Max character-moment discrepancy over 0 < ||k||_inf <= degree.

    A pseudometric whose vanishing for all degrees is weak-* equality;
    Lebesgue has all nonzero moments equal to 0, giving clean anchors.
    """
    if m1.dim != m2.dim:
        raise DimensionMismatchError(f"measure dims {m1.dim} != {m2.dim}")
    if degree < 1:
        raise ValueError(f"need degree >= 1, got {degree}")
    freqs = _character_grid(m1.dim, int(degree))
    re1, im1 = m1.character_moments(freqs)
    re2, im2 = m2.character_moments(freqs)
    return float(max(np.abs(re1 - re2).max(), np.abs(im1 - im2).max()))


def approximate_invariant_measure(system, target, delta, budget, tol=1e-12,
                                  degree=3, n_segments=3, min_n=2,
                                  horizon=4000, sample_orbits=4, seed=0):
    """Periodic measure approximating a Birkhoff target, with its distance.

    Consumes the first ``budget`` steps of the target orbit, cuts them into
    ``n_segments`` consecutive segments, glues them through a mesh-delta
    cover of the target support, shadows the splice, and returns the
    periodic measure of the solved cycle together with its weak-*
    distance to the target.
    """
    pts = target.points
    if budget < 2 * n_segments or budget >= len(pts):
        raise ValueError(
            f"budget must lie in [{2 * n_segments}, {len(pts) - 1}], got {budget}")
    step_gap = dyn.torus_distance(system.step_many(pts[:budget]), pts[1:budget + 1])
    if float(np.max(step_gap)) > 1e-9:
        raise ValueError("target points are not a consecutive orbit of the system")

    cuts = np.unique(np.linspace(0, budget, n_segments + 1).astype(int))
    segments = [(pts[a], int(b - a)) for a, b in zip(cuts, cuts[1:])]
    cover = build_cover(pts, delta)
    table = transition_times(system, cover, min_n, horizon, sample_orbits, seed=seed)
    plan = glue_segments(system, segments, cover, table)
    result = specification_shadow(system, plan, tol=tol)
    approx = EmpiricalMeasure(points=result.points)
    return approx, weak_star_distance(target, approx, degree)


def transition_table_csv(table, path):
    """CSV rows (i, j, X, resolved, witness coordinates)."""
    d = table.witnesses.shape[2]
    header = ["i", "j", "X", "resolved"] + [f"y{a}" for a in range(d)]
    rows = []
    for i in range(table.X.shape[0]):
        for j in range(table.X.shape[1]):
            ok = table.X[i, j] >= 0
            wit = [fmt_float(v) for v in table.witnesses[i, j]] if ok else [""] * d
            rows.append([i, j, int(table.X[i, j]), int(ok)] + wit)
    write_csv(path, header, rows)


def measure_csv(measure, path):
    """CSV rows (weight, support point coordinates)."""
    d = measure.dim
    header = ["weight"] + [f"x{a}" for a in range(d)]
    rows = [
        [fmt_float(w)] + [fmt_float(v) for v in p]
        for w, p in zip(measure.weights, measure.points)
    ]
    write_csv(path, header, rows)
