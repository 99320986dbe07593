"""Quasi-hyperbolic certificates for orbit segments and pseudo-orbits.

A segment of length n with a partition 0 = t_0 < ... < t_m = n is
quasi-hyperbolic at rate zeta when prefix-averaged E norms contract, the
suffix averages of F minimal norms anchored at the right end expand, and
each piece dominates at twice the rate.  The gap bound e is recorded from
the partition rather than imposed, so the certificate stays usable for
non-canonical partitions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import subspace_angles

from . import systems as dyn
from .cocycle import OrbitData, _chord
from .errors import DimensionMismatchError

__all__ = [
    "PartitionScheme",
    "canonical_partition",
    "QuasiHypCertificate",
    "check_quasi_hyperbolic",
    "check_qh_pseudo_orbit",
    "subspace_gap",
]


@dataclass(frozen=True)
class PartitionScheme:
    """Strictly increasing integer times from 0 to the segment length."""

    times: tuple
    k: int
    K: int

    def __post_init__(self):
        times = tuple(int(t) for t in self.times)
        object.__setattr__(self, "times", times)
        if len(times) < 2 or times[0] != 0:
            raise ValueError(f"partition must start at 0 with >= 2 times, got {times}")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"partition times must strictly increase, got {times}")
        if self.k < 1 or self.K < 1:
            raise ValueError(f"need k >= 1 and K >= 1, got k={self.k}, K={self.K}")

    @property
    def n(self):
        return self.times[-1]

    @property
    def m(self):
        return len(self.times) - 1

    @property
    def q(self):
        """First-gap excess over kK; the remainder of the decomposition."""
        return self.times[1] - self.k * self.K

    @property
    def l(self):
        return (self.n - self.q) // self.K

    @property
    def gaps(self):
        return tuple(b - a for a, b in zip(self.times, self.times[1:]))

    @property
    def max_gap(self):
        return max(self.gaps)

    def to_list(self):
        return list(self.times)


def canonical_partition(n, k, K):
    """Partition with first gap kK+q, interior gaps K, last gap kK.

    Requires n >= 2kK.  Writing n = lK + q, the partition has m = l - 2k + 2
    pieces with interior times (k+i-1)K + q; every gap is at most (k+1)K.
    The remainder is taken positive (q = K rather than 0) whenever enough
    blocks remain, so the first piece absorbs a full extra block; n = 2kK
    keeps q = 0, the only representation with l >= 2k.
    """
    if k < 1 or K < 1:
        raise ValueError(f"need k >= 1 and K >= 1, got k={k}, K={K}")
    if n < 2 * k * K:
        raise ValueError(f"segment too short: n={n} < 2kK = {2 * k * K}")
    l, q = divmod(n, K)
    if q == 0 and l - 1 >= 2 * k:
        l, q = l - 1, K
    m = l - 2 * k + 2
    times = [0] + [(k + i - 1) * K + q for i in range(1, m)] + [n]
    return PartitionScheme(times=tuple(times), k=k, K=K)


@dataclass(frozen=True)
class QuasiHypCertificate:
    """Signed slacks of the three segment inequalities at rate zeta.

    slack_prefix[k-1] is the margin of the k-th prefix-averaged contraction
    bound, slack_suffix[k-1] of the k-th suffix-averaged expansion bound
    (anchored at t_m, read right to left), slack_ratio[j-1] of the per-piece
    domination bound.  e is the max partition gap; q_dim = dim E.
    """

    zeta: float
    e: int
    q_dim: int
    slack_prefix: tuple
    slack_suffix: tuple
    slack_ratio: tuple

    @property
    def passed(self):
        return all(
            s >= 0.0
            for s in self.slack_prefix + self.slack_suffix + self.slack_ratio
        )

    def to_dict(self):
        return {
            "zeta": self.zeta,
            "e": self.e,
            "q_dim": self.q_dim,
            "slack_prefix": list(self.slack_prefix),
            "slack_suffix": list(self.slack_suffix),
            "slack_ratio": list(self.slack_ratio),
            "passed": self.passed,
        }


def _piece_logs(system, x, splitting, partition):
    """Per-piece E log norms and F log minimal norms along the segment."""
    times = np.asarray(partition.times)
    starts, gaps = times[:-1], np.diff(times)
    data = OrbitData(system, np.asarray(x, dtype=float)[None, :], splitting,
                     n_fwd=int(times[-1]))
    a = np.empty(len(gaps))
    b = np.empty(len(gaps))
    for g in np.unique(gaps):
        sel = np.flatnonzero(gaps == g)
        st = starts[sel].tolist()
        a[sel] = data.block_logs("e", st, int(g))[:, 0]
        b[sel] = data.block_logs("f", st, int(g))[:, 0]
    return a, b


def check_quasi_hyperbolic(system, x, n, splitting_at_x, zeta, partition):
    """Evaluate the three segment inequalities over the given partition.

    The splitting is carried along the orbit by the derivative; pieces are
    measured between consecutive partition times.
    """
    if not zeta > 0.0:
        raise ValueError(f"zeta must be positive, got {zeta}")
    if partition.n != n:
        raise ValueError(f"partition covers {partition.n} steps, segment has {n}")
    a, b = _piece_logs(system, x, splitting_at_x, partition)
    times = np.asarray(partition.times, dtype=float)
    gaps = np.diff(times)

    prefix = np.cumsum(a) / times[1:]
    suffix = np.cumsum(b[::-1])[::-1] / (times[-1] - times[:-1])
    ratio = (a - b) / gaps
    return QuasiHypCertificate(
        zeta=zeta,
        e=int(partition.max_gap),
        q_dim=splitting_at_x.e_basis.shape[1],
        slack_prefix=tuple(-zeta - prefix),
        slack_suffix=tuple(suffix - zeta),
        slack_ratio=tuple(-2.0 * zeta - ratio),
    )


def check_qh_pseudo_orbit(system, segments, zeta, e, delta, k, K):
    """Pseudo-orbit check: every segment certified, consecutive gaps < delta.

    Each segment (x_i, n_i, splitting_i) is checked against its canonical
    partition at (k, K); e defaults to (k+1)K, the canonical gap bound, and
    segments whose partition exceeds e fail.  Returns (ok, report) with the
    first offending segment or gap index in the report.
    """
    if not segments:
        raise ValueError("need at least one segment")
    if e is None:
        e = (k + 1) * K
    seg_pass = []
    certs = []
    for x, n, splitting in segments:
        part = canonical_partition(n, k, K)
        cert = check_quasi_hyperbolic(system, x, n, splitting, zeta, part)
        certs.append(cert)
        seg_pass.append(cert.passed and cert.e <= e)

    gap_sizes = []
    for (x, n, _), (x_next, _, _) in zip(segments, segments[1:]):
        end = dyn.orbit_points(system, np.asarray(x, dtype=float), n)[-1]
        gap_sizes.append(float(dyn.torus_distance(end, np.asarray(x_next, dtype=float))))
    gap_ok = [g < delta for g in gap_sizes]

    failures = [i for i, ok in enumerate(seg_pass) if not ok]
    failures += [i for i, ok in enumerate(gap_ok) if not ok]
    ok = not failures
    report = {
        "passed": ok,
        "zeta": zeta,
        "e": int(e),
        "delta": delta,
        "segment_pass": seg_pass,
        "gaps": gap_sizes,
        "first_failure": None if ok else min(failures),
        "certificates": [c.to_dict() for c in certs],
    }
    return ok, report


def subspace_gap(image_basis, target_basis):
    """Worst distance from a unit vector of one subspace to the other.

    Computed from the largest principal angle as sqrt(2 - 2 cos theta); 0
    exactly when the subspaces coincide.
    """
    u = np.atleast_2d(np.asarray(image_basis, dtype=float))
    v = np.atleast_2d(np.asarray(target_basis, dtype=float))
    if u.shape != v.shape:
        raise DimensionMismatchError(
            f"subspace bases must match in shape, got {u.shape} and {v.shape}")
    theta = subspace_angles(u, v)
    return float(_chord(theta[0])) if theta.size else 0.0
