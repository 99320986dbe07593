"""Pseudo-orbits, shadowing verification, and Newton orbit realization.

A pseudo-orbit is a chain of true orbit segments with small jumps at the
seams.  The solver realizes a nearby true orbit (periodic when the window
is a cycle) by Newton iteration on the concatenated orbit equation; each
step solves the block-bidiagonal linearization sparsely.  Open windows are
underdetermined by one block and are solved in the minimum-norm sense.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from . import systems as dyn
from ._serialize import fmt_float
from .errors import ConvergenceError, PseudoOrbitFormatError

__all__ = [
    "PseudoOrbit",
    "make_pseudo_orbit",
    "read_pseudo_orbit",
    "write_pseudo_orbit",
    "cumulative_times",
    "verify_shadowing",
    "ShadowResult",
    "solve_shadow",
    "close_orbit",
    "ShadowingConstants",
    "estimate_shadowing_constant",
    "periodic_density_probe",
]

_MAX_TOTAL = 10 ** 6


@dataclass(frozen=True)
class PseudoOrbit:
    """Chain of orbit segments with seam gaps below delta.

    Each segment is the (n_i + 1, d) array of points x_i, f(x_i), ...,
    f^{n_i}(x_i).  A periodic window represents one full period: the last
    seam wraps to the first segment.
    """

    segments: tuple
    periodic: bool
    delta: float

    def __post_init__(self):
        segs = tuple(np.asarray(s, dtype=float) for s in self.segments)
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValueError("pseudo-orbit needs at least one segment")
        if not self.delta > 0.0:
            raise ValueError(f"delta must be positive, got {self.delta}")
        d = segs[0].shape[1] if segs[0].ndim == 2 else 0
        for s in segs:
            if s.ndim != 2 or s.shape[1] != d or s.shape[0] < 2:
                raise ValueError("each segment must be an (n_i + 1, d) array, n_i >= 1")
        for i, gap in enumerate(self.gaps):
            if not gap < self.delta:
                raise ValueError(
                    f"seam {i} has gap {gap:.3e}, not below delta={self.delta:.3e}")

    @property
    def m(self):
        return len(self.segments)

    @property
    def dim(self):
        return self.segments[0].shape[1]

    @property
    def n_list(self):
        return tuple(len(s) - 1 for s in self.segments)

    @property
    def x_list(self):
        return tuple(s[0] for s in self.segments)

    @property
    def total_length(self):
        return sum(self.n_list)

    @property
    def gaps(self):
        """Seam distances rho(end of segment i, start of segment i+1)."""
        ends = [s[-1] for s in self.segments]
        starts = [s[0] for s in self.segments[1:]]
        if self.periodic:
            starts.append(self.segments[0][0])
        return tuple(
            float(dyn.torus_distance(e, s)) for e, s in zip(ends, starts))


def make_pseudo_orbit(system, starts, n_list, periodic, delta=None):
    """Build a pseudo-orbit by iterating each start for its segment length.

    With delta=None the gap bound is set just above the largest seam gap.
    """
    starts = [np.asarray(x, dtype=float) for x in starts]
    if len(starts) != len(n_list):
        raise ValueError(f"{len(starts)} starts but {len(n_list)} lengths")
    segs = tuple(dyn.orbit_points(system, x, int(n)) for x, n in zip(starts, n_list))
    if delta is None:
        ends = [s[-1] for s in segs]
        nxt = [s[0] for s in segs[1:]] + ([segs[0][0]] if periodic else [])
        worst = max((float(dyn.torus_distance(e, s)) for e, s in zip(ends, nxt)),
                    default=0.0)
        delta = max(worst * (1.0 + 1e-9), 1e-15)
    return PseudoOrbit(segments=segs, periodic=bool(periodic), delta=float(delta))


def write_pseudo_orbit(pseudo, path):
    """Write the text form: header, then SEG blocks separated by blank lines."""
    lines = [
        f"PSEUDO d={pseudo.dim} periodic={int(pseudo.periodic)} "
        f"delta={fmt_float(pseudo.delta)}"
    ]
    for i, seg in enumerate(pseudo.segments):
        if i:
            lines.append("")
        lines.append(f"SEG n={len(seg) - 1}")
        for row in seg:
            lines.append(" ".join(fmt_float(v) for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _header_fields(line):
    parts = line.split()
    if len(parts) != 4 or parts[0] != "PSEUDO":
        raise PseudoOrbitFormatError(f"bad header line: {line!r}")
    out = {}
    for tok in parts[1:]:
        key, _, val = tok.partition("=")
        out[key] = val
    if set(out) != {"d", "periodic", "delta"}:
        raise PseudoOrbitFormatError(f"bad header fields: {line!r}")
    return out


def read_pseudo_orbit(path):
    """Parse the text form written by :func:`write_pseudo_orbit`."""
    with open(path) as fh:
        raw = fh.read().splitlines()
    lines = [ln.strip() for ln in raw]
    if not lines:
        raise PseudoOrbitFormatError("empty pseudo-orbit file")
    head = _header_fields(lines[0])
    try:
        d = int(head["d"])
        periodic = bool(int(head["periodic"]))
        delta = float(head["delta"])
    except ValueError as exc:
        raise PseudoOrbitFormatError(f"bad header values: {lines[0]!r}") from exc

    segments = []
    pos = 1
    while pos < len(lines):
        if not lines[pos]:
            pos += 1
            continue
        if not lines[pos].startswith("SEG n="):
            raise PseudoOrbitFormatError(f"expected SEG line, got {lines[pos]!r}")
        try:
            n = int(lines[pos][len("SEG n="):])
        except ValueError as exc:
            raise PseudoOrbitFormatError(f"bad SEG line: {lines[pos]!r}") from exc
        if n < 1:
            raise PseudoOrbitFormatError(f"segment length must be >= 1, got {n}")
        block = lines[pos + 1: pos + n + 2]
        if len(block) < n + 1 or any(not ln for ln in block):
            raise PseudoOrbitFormatError(
                f"segment at line {pos + 1} truncated: need {n + 1} point lines")
        try:
            pts = np.array([[float(v) for v in ln.split()] for ln in block])
        except ValueError as exc:
            raise PseudoOrbitFormatError(
                f"non-numeric point in segment at line {pos + 1}") from exc
        if pts.shape[1] != d:
            raise PseudoOrbitFormatError(
                f"point dimension {pts.shape[1]} does not match header d={d}")
        segments.append(pts)
        pos += n + 2
    if not segments:
        raise PseudoOrbitFormatError("no segments in pseudo-orbit file")
    return PseudoOrbit(segments=tuple(segments), periodic=periodic, delta=delta)


def cumulative_times(n_list, i):
    """Signed cumulative step count c_i of a window of segment lengths.

    c_0 = 0; positive i sums the first i lengths; negative i sums the last
    |i| lengths with a minus sign (Python-style window indexing).
    """
    seq = [int(n) for n in n_list]
    if any(n < 1 for n in seq):
        raise ValueError(f"segment lengths must be >= 1, got {seq}")
    if i == 0:
        return 0
    if i > len(seq) or i < -len(seq):
        raise ValueError(f"index {i} outside window of {len(seq)} segments")
    return sum(seq[:i]) if i > 0 else -sum(seq[i:])


def _worst_deviation(chain_at, pseudo):
    """Worst distance between chain points and the stored pseudo points.

    ``chain_at(c, count)`` returns the candidate orbit points at chain
    indices c..c+count-1; segments are compared against their own stored
    rows (the data being shadowed), so no long re-iteration is involved.
    """
    worst, where = 0.0, (0, 0)
    c = 0
    for i, seg in enumerate(pseudo.segments):
        n_i = len(seg) - 1
        dev = dyn.torus_distance(chain_at(c, n_i + 1), seg)
        j = int(np.argmax(dev))
        if dev[j] > worst:
            worst, where = float(dev[j]), (i, j)
        c += n_i
    return worst, where


def _deviation(system, x, pseudo):
    """Worst rho(f^{c_i+j}(x), stored point j of segment i) and its (i, j)."""
    orbit = dyn.orbit_points(system, np.asarray(x, dtype=float), pseudo.total_length)
    return _worst_deviation(lambda c, count: orbit[c:c + count], pseudo)


def verify_shadowing(system, x, pseudo, epsilon):
    """(within, worst deviation, worst (segment, offset)) for a candidate point."""
    worst, where = _deviation(system, x, pseudo)
    return worst < epsilon, worst, where


@dataclass(frozen=True)
class ShadowResult:
    """Solved orbit with its verified deviation and Newton diagnostics.

    ``points`` lists the solved orbit: one point per step for a periodic
    window (period = total length), plus the final endpoint when open.
    """

    points: np.ndarray
    periodic: bool
    period: int | None
    epsilon_achieved: float
    residual: float
    iterations: int

    @property
    def z(self):
        return self.points[0]

    def to_dict(self):
        return {
            "periodic": self.periodic,
            "period": self.period,
            "epsilon_achieved": self.epsilon_achieved,
            "residual": self.residual,
            "iterations": self.iterations,
            "points": [[float(v) for v in row] for row in self.points],
        }


def _residual(system, z, periodic):
    """Per-step defects z_{j+1} (-) f(z_j); rows j = 0..len-1(-1 if open)."""
    if periodic:
        fz = system.step_many(z)
        return dyn.torus_diff(np.roll(z, -1, axis=0), fz)
    fz = system.step_many(z[:-1])
    return dyn.torus_diff(z[1:], fz)


def _newton_matrix(system, z, periodic):
    """Sparse block matrix of the linearized orbit equation at z."""
    pts = z if periodic else z[:-1]
    p, d = pts.shape
    jac = system.jacobian_many(pts)
    eye = np.broadcast_to(np.eye(d), (p, d, d))
    if periodic:
        data = np.empty((2 * p, d, d))
        indices = np.empty(2 * p, dtype=np.int32)
        for j in range(p):
            lo, hi = ((j + 1) % p, j) if j == p - 1 else (j, j + 1)
            pair = ((eye[j], -jac[j]) if j == p - 1 else (-jac[j], eye[j]))
            data[2 * j], data[2 * j + 1] = pair
            indices[2 * j], indices[2 * j + 1] = lo, hi
        shape = (p * d, p * d)
    else:
        data = np.empty((2 * p, d, d))
        indices = np.empty(2 * p, dtype=np.int32)
        data[0::2], data[1::2] = -jac, eye
        indices[0::2] = np.arange(p)
        indices[1::2] = np.arange(1, p + 1)
        shape = (p * d, (p + 1) * d)
    indptr = np.arange(0, 2 * p + 1, 2, dtype=np.int32)
    return sparse.bsr_matrix((data, indices, indptr), shape=shape).tocsr()


def solve_shadow(system, pseudo, tol=1e-12, max_iter=50):
    """Newton realization of an orbit through the pseudo-orbit window.

    The unknowns are the concatenated orbit points, seeded by the
    pseudo-orbit itself.  Raises ConvergenceError (with diagnostics
    attached) when the residual fails to reach tol; nothing is returned
    in that case.
    """
    if pseudo.total_length > _MAX_TOTAL:
        raise ValueError(f"window too long: {pseudo.total_length} > {_MAX_TOTAL}")
    if system.dim != pseudo.dim:
        raise ValueError(f"system dim {system.dim} != pseudo-orbit dim {pseudo.dim}")
    if pseudo.periodic:
        z = np.concatenate([s[:-1] for s in pseudo.segments], axis=0)
    else:
        z = np.concatenate(
            [s[:-1] for s in pseudo.segments] + [pseudo.segments[-1][-1:]], axis=0)

    history = []
    for it in range(max_iter + 1):
        r = _residual(system, z, pseudo.periodic)
        res = float(np.abs(r).max())
        history.append(res)
        if res < tol:
            break
        if len(history) >= 3 and history[-1] > history[-2] > history[-3]:
            raise ConvergenceError(
                f"Newton residual grew twice in a row at iteration {it}: "
                f"{history[-3]:.3e} -> {history[-1]:.3e}",
                result={"residual_history": history, "iterations": it},
            )
        if it == max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} iterations "
                f"(residual {res:.3e}, tol {tol:.3e})",
                result={"residual_history": history, "iterations": it},
            )
        mat = _newton_matrix(system, z, pseudo.periodic)
        rhs = -r.ravel()
        if pseudo.periodic:
            delta = spsolve(mat, rhs)
        else:
            gram = (mat @ mat.T).tocsc()
            delta = mat.T @ spsolve(gram, rhs)
        z = dyn.wrap(z + delta.reshape(z.shape))

    p = pseudo.total_length
    if pseudo.periodic:
        eps, _ = _worst_deviation(
            lambda c, count: z[np.arange(c, c + count) % p], pseudo)
    else:
        eps, _ = _worst_deviation(lambda c, count: z[c:c + count], pseudo)
    return ShadowResult(
        points=z,
        periodic=pseudo.periodic,
        period=pseudo.total_length if pseudo.periodic else None,
        epsilon_achieved=eps,
        residual=history[-1],
        iterations=len(history) - 1,
    )


def close_orbit(system, x, n, tol=1e-12):
    """Periodic orbit near an almost-returning segment (single-seam window)."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    seg = dyn.orbit_points(system, np.asarray(x, dtype=float), int(n))
    gap = float(dyn.torus_distance(seg[-1], seg[0]))
    pseudo = PseudoOrbit(segments=(seg,), periodic=True,
                         delta=max(gap * (1.0 + 1e-9), 1e-15))
    return solve_shadow(system, pseudo, tol=tol)


@dataclass(frozen=True)
class ShadowingConstants:
    """Empirical response of the solver to seam size.

    L_hat is the worst observed deviation-to-delta ratio; d0_hat the
    largest tested delta at which every trial converged.
    """

    L_hat: float
    d0_hat: float
    trials: int
    per_delta: tuple

    def to_dict(self):
        return {
            "L_hat": self.L_hat,
            "d0_hat": self.d0_hat,
            "trials": self.trials,
            "per_delta": [dict(row) for row in self.per_delta],
        }


def _perturbed_chain(system, rng_spec, delta, length_range):
    """Open pseudo-orbit: true orbit pieces re-seeded with jumps of size delta/2."""
    rng = np.random.default_rng(rng_spec)
    lo, hi = length_range
    m = int(rng.integers(2, 6))
    lengths = rng.integers(lo, hi + 1, size=m)
    x = rng.random(system.dim)
    segs = []
    for n in lengths:
        seg = dyn.orbit_points(system, x, int(n))
        segs.append(seg)
        eta = rng.standard_normal(system.dim)
        eta *= 0.5 / np.linalg.norm(eta)
        x = dyn.wrap(seg[-1] + delta * eta)
    return PseudoOrbit(segments=tuple(segs), periodic=False,
                       delta=max(delta, 1e-15))


def estimate_shadowing_constant(system, deltas, trials, length_range,
                                seed=0, tol=1e-12):
    """Probe the linear response deviation ~ L * delta over random windows.

    For each trial index the segment lengths and jump directions are fixed
    across all deltas (only the jump size is scaled), so the per-trial
    ratios are directly comparable along the delta list.
    """
    deltas = [float(dv) for dv in deltas]
    if any(dv < 0.0 for dv in deltas):
        raise ValueError(f"deltas must be nonnegative, got {deltas}")
    if any(a < b for a, b in zip(deltas, deltas[1:])):
        raise ValueError(f"deltas must be nonincreasing, got {deltas}")
    lo, hi = length_range
    if not 1 <= lo <= hi:
        raise ValueError(f"bad segment length range {length_range}")

    per_delta = []
    L_hat = 0.0
    d0_hat = 0.0
    for dv in deltas:
        ratios = []
        converged = 0
        for t in range(trials):
            pseudo = _perturbed_chain(system, [seed, t], dv, (lo, hi))
            try:
                result = solve_shadow(system, pseudo, tol=tol)
            except ConvergenceError:
                continue
            converged += 1
            if dv > 0.0:
                ratios.append(result.epsilon_achieved / dv)
        if converged == trials and dv > 0.0:
            d0_hat = max(d0_hat, dv)
        if ratios:
            L_hat = max(L_hat, max(ratios))
        per_delta.append({
            "delta": dv,
            "converged": converged,
            "trials": trials,
            "max_ratio": max(ratios) if ratios else 0.0,
        })
    return ShadowingConstants(L_hat=L_hat, d0_hat=d0_hat,
                              trials=trials * len(deltas),
                              per_delta=tuple(per_delta))


def periodic_density_probe(system, sample, n_max, epsilon, gap_cap=0.05,
                           domain=None, tol=1e-12, return_report=False):
    """Fraction of sample points with a certified periodic orbit within epsilon.

    Each point's best recurrence up to n_max seeds close_orbit; success
    means the solver converged and the periodic point lies within epsilon
    of the sample point.  Points outside ``domain`` (a predicate) or with
    no recurrence gap below gap_cap are skipped: they leave the denominator
    rather than count as failures.
    """
    sample = [np.asarray(x, dtype=float) for x in sample]
    if not sample:
        raise ValueError("sample must be nonempty")
    if n_max < 1:
        raise ValueError(f"need n_max >= 1, got {n_max}")
    outcomes = []
    for x in sample:
        if domain is not None and not domain(x):
            outcomes.append("skipped")
            continue
        orbit = dyn.orbit_points(system, x, int(n_max))
        dists = dyn.torus_distance(orbit[1:], x)
        n_best = int(np.argmin(dists)) + 1
        if float(dists[n_best - 1]) > gap_cap:
            outcomes.append("skipped")
            continue
        try:
            result = close_orbit(system, x, n_best, tol=tol)
        except ConvergenceError:
            outcomes.append("failed")
            continue
        near = float(dyn.torus_distance(result.z, x))
        outcomes.append("passed" if near <= epsilon else "failed")
    attempted = sum(o != "skipped" for o in outcomes)
    passed = sum(o == "passed" for o in outcomes)
    fraction = passed / attempted if attempted else 0.0
    if return_report:
        return fraction, {
            "fraction": fraction,
            "attempted": attempted,
            "skipped": len(sample) - attempted,
            "outcomes": outcomes,
        }
    return fraction
