"""Derivative cocycles along orbits: restricted norms, exponents, domination.

The splitting is treated as a constant field in the given coordinates (true
for every builtin system), so bundles are re-evaluated at each orbit point
rather than numerically transported; transporting a non-dominant bundle is
exponentially unstable.  Minimal norms on F are computed with forward
products, which is stable when F dominates forward.  Operator norms on E use
the identity ||Df^n|E(x)|| = 1 / m(Df^{-n}|E(f^n x)) and backward inverse
products, stable because E dominates backward.  Both directions only need
invertible derivatives, not an inverse formula for the map.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import systems as dyn
from .errors import (
    DegenerateSplittingError,
    DimensionMismatchError,
    NotInvertibleError,
    SingularRestrictionError,
)

__all__ = [
    "orthonormalize",
    "operator_norm",
    "minimal_norm",
    "OrbitData",
    "log_norm_blocks",
    "MeanExponentReport",
    "mean_exponents",
    "mean_exponents_many",
    "LyapunovSpectrum",
    "lyapunov_spectrum",
    "subbundle_angle",
    "AngleReport",
    "angle_report",
    "alpha_constant",
    "upgrade_limit_domination",
    "domination_upgrade_n0",
]


def orthonormalize(basis):
    """Orthonormal basis with the same span; rejects rank-deficient input."""
    b = np.atleast_2d(np.asarray(basis, dtype=float))
    if b.shape[0] < b.shape[1]:
        raise DimensionMismatchError(f"basis of shape {b.shape} has too many columns")
    q, r = np.linalg.qr(b)
    if np.any(np.abs(np.diag(r)) < 1e-12 * max(1.0, float(np.abs(b).max()))):
        raise SingularRestrictionError("basis is numerically rank deficient")
    return q


def operator_norm(jac, basis=None):
    """Largest singular value of ``jac`` restricted to the span of ``basis``."""
    jac = np.asarray(jac, dtype=float)
    m = jac if basis is None else jac @ orthonormalize(basis)
    return float(np.linalg.svd(m, compute_uv=False)[0])


def minimal_norm(jac, basis=None):
    """Smallest singular value of ``jac`` restricted to the span of ``basis``.

    For an invertible restriction this equals 1 / ||(jac|_V)^{-1}||.
    """
    jac = np.asarray(jac, dtype=float)
    m = jac if basis is None else jac @ orthonormalize(basis)
    return float(np.linalg.svd(m, compute_uv=False)[-1])


def _inverted(jacs):
    try:
        return np.linalg.inv(jacs)
    except np.linalg.LinAlgError as exc:
        raise SingularRestrictionError(f"derivative not invertible along orbit: {exc}")


def _min_sv(m):
    """Smallest singular value over the last two axes; cheap for one column."""
    if m.shape[-1] == 1:
        return np.sqrt(np.sum(m * m, axis=(-2, -1)))
    return np.linalg.svd(m, compute_uv=False)[..., -1]


def _min_sv_pos(m, n):
    """_min_sv of a max-abs-rescaled product, rejecting float-range underflow.

    A window whose restricted condition number passes 1/tiny leaves no bits
    for the small direction; the caller must shorten the window.
    """
    sv = _min_sv(m)
    if np.any(sv == 0.0):
        raise SingularRestrictionError(
            f"restricted product over {n} steps underflows the float range; "
            "use a shorter window")
    return sv


class OrbitData:
    """Orbit points and derivatives for a batch of initial conditions.

    Forward data covers times 0..n_fwd, backward times 0..-n_back; arrays
    are indexed [time, batch, ...] and ``jac_at(t)`` is the derivative at
    f^t(x).  Restricted norms are read off with :meth:`block_logs` (local
    windows) and :meth:`full_e_logs` / :meth:`full_f_logs` (products from
    time 0).
    """

    def __init__(self, system, xs, splitting, n_fwd, n_back=0):
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if xs.shape[1] != system.dim:
            raise DimensionMismatchError(
                f"points of dimension {xs.shape[1]} for system of dimension {system.dim}")
        if splitting.dim != system.dim:
            raise DimensionMismatchError("splitting does not match system dimension")
        if n_back and not system.invertible:
            raise NotInvertibleError(f"{system.name} has no inverse for backward data")
        self.system = system
        self.splitting = splitting
        self.batch = xs.shape[0]
        self.n_fwd = int(n_fwd)
        self.n_back = int(n_back)
        self.e0 = orthonormalize(splitting.e_basis)
        self.f0 = orthonormalize(splitting.f_basis)

        d = system.dim
        self.pts_fwd = dyn.orbit_many(system, xs, self.n_fwd)
        self.jac_fwd = system.jacobian_many(self.pts_fwd[:-1]) if self.n_fwd \
            else np.zeros((0, self.batch, d, d))
        self._inv_fwd = None

        if self.n_back:
            back = np.empty((self.n_back + 1, self.batch, d))
            back[0] = self.pts_fwd[0]
            for t in range(self.n_back):
                back[t + 1] = system.inverse_many(back[t])
            self.pts_bwd = back
            self.jac_bwd = system.jacobian_many(back)
        else:
            self.pts_bwd = self.pts_fwd[:1]
            self.jac_bwd = None
        self._inv_bwd = None

    def point_at(self, t):
        return self.pts_fwd[t] if t >= 0 else self.pts_bwd[-t]

    def jac_at(self, t):
        if t >= 0:
            if t >= self.n_fwd:
                raise ValueError(f"time {t} beyond forward horizon {self.n_fwd}")
            return self.jac_fwd[t]
        if -t > self.n_back:
            raise ValueError(f"time {t} beyond backward horizon {self.n_back}")
        return self.jac_bwd[-t]

    def inv_at(self, t):
        if t >= 0:
            if t >= self.n_fwd:
                raise ValueError(f"time {t} beyond forward horizon {self.n_fwd}")
            if self._inv_fwd is None:
                self._inv_fwd = _inverted(self.jac_fwd)
            return self._inv_fwd[t]
        if -t > self.n_back:
            raise ValueError(f"time {t} beyond backward horizon {self.n_back}")
        if self._inv_bwd is None:
            self._inv_bwd = _inverted(self.jac_bwd)
        return self._inv_bwd[-t]

    def _stacked(self, times, inverse):
        """Derivatives (or their inverses) at many signed times: (len, batch, d, d)."""
        times = np.asarray(times, dtype=int)
        if times.size and (times.max() >= self.n_fwd or times.min() < -self.n_back):
            raise ValueError("time outside the computed horizon")
        if inverse:
            if self._inv_fwd is None:
                self._inv_fwd = _inverted(self.jac_fwd)
            fwd = self._inv_fwd
            if np.any(times < 0) and self._inv_bwd is None:
                self._inv_bwd = _inverted(self.jac_bwd)
            bwd = self._inv_bwd
        else:
            fwd, bwd = self.jac_fwd, self.jac_bwd
        d = self.system.dim
        out = np.empty((len(times), self.batch, d, d))
        pos = times >= 0
        if pos.any():
            out[pos] = fwd[times[pos]]
        if (~pos).any():
            out[~pos] = bwd[-times[~pos]]
        return out

    def block_logs(self, bundle, starts, K):
        """Restricted log norms over windows [t, t+K] at each start time t.

        Bundle 'e' gives log ||Df^K|E|| (via backward inverse products),
        bundle 'f' gives log m(Df^K|F) (forward).  Shape (len(starts), batch).
        """
        if bundle not in ("e", "f"):
            raise ValueError(f"bundle must be 'e' or 'f', got {bundle!r}")
        starts = np.asarray(list(starts), dtype=int)
        if starts.size == 0 or K == 0:
            return np.zeros((len(starts), self.batch))
        if bundle == "f":
            m = np.broadcast_to(self.f0, (len(starts), self.batch) + self.f0.shape).copy()
            for s in range(K):
                m = self._stacked(starts + s, inverse=False) @ m
            return np.log(_min_sv(m))
        m = np.broadcast_to(self.e0, (len(starts), self.batch) + self.e0.shape).copy()
        for s in reversed(range(K)):
            m = self._stacked(starts + s, inverse=True) @ m
        return -np.log(_min_sv(m))

    def full_f_logs(self, n_max):
        """(n_max+1, batch) array of log m(Df^n|F(x)) for n = 0..n_max."""
        m = np.broadcast_to(self.f0, (self.batch,) + self.f0.shape).copy()
        scale = np.zeros(self.batch)
        out = np.empty((n_max + 1, self.batch))
        out[0] = 0.0
        for n in range(n_max):
            m = self.jac_fwd[n] @ m
            mag = np.abs(m).max(axis=(-2, -1))
            if np.any(mag == 0.0):
                raise SingularRestrictionError("restricted product vanished")
            m /= mag[:, None, None]
            scale += np.log(mag)
            out[n + 1] = scale + np.log(_min_sv_pos(m, n + 1))
        return out

    def full_e_logs(self, ns):
        """log ||Df^n|E(x)|| for each n in ``ns``; shape (len(ns), batch).

        Each value comes from one backward inverse product anchored at f^n(x);
        anchors advance together, the next joining when the sweep reaches it.
        """
        ns = [int(n) for n in ns]
        if any(n < 0 or n > self.n_fwd for n in ns):
            raise ValueError(f"head lengths must lie in [0, {self.n_fwd}]")
        out = np.zeros((len(ns), self.batch))
        order = sorted(range(len(ns)), key=lambda i: -ns[i])
        live = []          # indices into ns, in activation order
        mats = None        # (len(live), batch, d, de)
        scales = None
        nxt = 0
        base = np.broadcast_to(self.e0, (self.batch,) + self.e0.shape)
        for t in range(max(ns, default=0) - 1, -1, -1):
            while nxt < len(order) and ns[order[nxt]] == t + 1:
                live.append(order[nxt])
                add = base[None].copy()
                mats = add if mats is None else np.concatenate([mats, add])
                zero = np.zeros((1, self.batch))
                scales = zero if scales is None else np.concatenate([scales, zero])
                nxt += 1
            mats = self.inv_at(t) @ mats
            mag = np.abs(mats).max(axis=(-2, -1))
            mats /= mag[..., None, None]
            scales += np.log(mag)
        if mats is not None:
            vals = -(scales + np.log(_min_sv_pos(mats, max(ns))))
            for row, i in enumerate(live):
                out[i] = vals[row]
        return out


def log_norm_blocks(system, x, splitting, bundle, K, l, r, direction="fwd"):
    """Per-window log norms entering the block-averaged conditions.

    Forward: a remainder window of length r at time 0 (when r > 0), then
    windows of length K at times jK + r for j = 0..l-1.  Backward: the
    remainder window at time -(lK + r), then windows at times jK for
    j = -l..-1.  Bundle 'e' uses operator norms, 'f' minimal norms.  The
    entries are in ascending time order and sum to the full numerator of
    the corresponding averaged condition.
    """
    if direction not in ("fwd", "bwd"):
        raise ValueError(f"direction must be 'fwd' or 'bwd', got {direction!r}")
    if K < 1 or l < 0 or not 0 <= r < K:
        raise ValueError(f"need K >= 1, l >= 0, 0 <= r < K; got K={K}, l={l}, r={r}")
    span = l * K + r
    if direction == "fwd":
        data = OrbitData(system, x, splitting, n_fwd=span)
        starts = [j * K + r for j in range(l)]
        rem_start = 0
    else:
        data = OrbitData(system, x, splitting, n_fwd=0, n_back=span)
        starts = [j * K for j in range(-l, 0)]
        rem_start = -span
    blocks = [float(v) for v in data.block_logs(bundle, starts, K)[:, 0]]
    if r > 0:
        blocks.insert(0, float(data.block_logs(bundle, [rem_start], r)[0, 0]))
    return blocks


@dataclass(frozen=True)
class MeanExponentReport:
    """Finite-horizon exponent summary along one orbit.

    ``lambda_s_hat``/``lambda_u_hat`` are per-step exponents of the full
    products over horizon * block steps (operator norm on E, minimal norm
    on F); ``lambda_sup_s_hat``/``lambda_sup_u_hat`` are the per-step block
    Birkhoff means; ``limdom_hat`` is the largest per-step block domination
    ratio over the tail half-window, the finite surrogate for its limsup.
    """

    lambda_s_hat: float
    lambda_u_hat: float
    lambda_sup_s_hat: float
    lambda_sup_u_hat: float
    limdom_hat: float
    block: int
    horizon: int

    def to_dict(self):
        return {
            "lambda_s_hat": self.lambda_s_hat,
            "lambda_u_hat": self.lambda_u_hat,
            "lambda_sup_s_hat": self.lambda_sup_s_hat,
            "lambda_sup_u_hat": self.lambda_sup_u_hat,
            "limdom_hat": self.limdom_hat,
            "block": self.block,
            "horizon": self.horizon,
        }


def mean_exponents_many(system, xs, splitting, K, horizon):
    """Batched :func:`mean_exponents`; one report per row of ``xs``."""
    if K < 1 or horizon < 2:
        raise ValueError(f"need K >= 1 and horizon >= 2, got K={K}, horizon={horizon}")
    data = OrbitData(system, xs, splitting, n_fwd=horizon * K)
    starts = [j * K for j in range(horizon)]
    block_e = data.block_logs("e", starts, K)
    block_f = data.block_logs("f", starts, K)
    full_e = data.full_e_logs([horizon * K])[0]
    full_f = data.full_f_logs(horizon * K)[-1]
    ratio = (block_e - block_f) / K
    steps = horizon * K
    return [
        MeanExponentReport(
            lambda_s_hat=float(full_e[b]) / steps,
            lambda_u_hat=float(full_f[b]) / steps,
            lambda_sup_s_hat=float(block_e[:, b].mean()) / K,
            lambda_sup_u_hat=float(block_f[:, b].mean()) / K,
            limdom_hat=float(ratio[horizon // 2:, b].max()),
            block=K,
            horizon=horizon,
        )
        for b in range(data.batch)
    ]


def mean_exponents(system, x, splitting, K, horizon):
    """Finite-horizon exponent report over ``horizon`` windows of length K."""
    return mean_exponents_many(system, np.asarray(x, dtype=float)[None, :],
                               splitting, K, horizon)[0]


@dataclass(frozen=True)
class LyapunovSpectrum:
    """Merged Lyapunov exponents, ascending, with multiplicities."""

    exponents: tuple
    multiplicities: tuple
    stable_index: int
    horizon: int
    values: tuple  # all d per-direction values, ascending, before merging

    def to_dict(self):
        return {
            "exponents": list(self.exponents),
            "multiplicities": list(self.multiplicities),
            "stable_index": self.stable_index,
            "horizon": self.horizon,
            "values": list(self.values),
        }


def lyapunov_spectrum(system, x, horizon, chunk=8, merge_tol=1e-4):
    """Lyapunov exponents by QR reorthonormalization along the orbit.

    Jacobians are accumulated over short chunks before each QR step (the
    R-diagonals telescope to the same product), and the first 10% of the
    chunks are discarded as burn-in so the frame can align before averaging.
    """
    if horizon < 10:
        raise ValueError(f"horizon too short for a spectrum: {horizon}")
    chunk = max(1, min(int(chunk), horizon // 8))
    pts = dyn.orbit_points(system, x, horizon)
    jac = system.jacobian_many(pts[:-1])
    d = system.dim
    n_chunks = horizon // chunk
    used = n_chunks * chunk
    prods = jac[0:used:chunk].copy()
    for s in range(1, chunk):
        prods = jac[s:used:chunk] @ prods
    q = np.eye(d)
    logs = np.empty((n_chunks, d))
    for i in range(n_chunks):
        q, r = np.linalg.qr(prods[i] @ q)
        diag = np.abs(np.diag(r))
        if np.any(diag == 0.0):
            raise SingularRestrictionError("derivative product became singular")
        logs[i] = np.log(diag)
    burn = n_chunks // 10
    values = np.sort(logs[burn:].sum(axis=0) / ((n_chunks - burn) * chunk))
    groups = [[values[0]]]
    for v in values[1:]:
        if v - groups[-1][-1] <= merge_tol:
            groups[-1].append(v)
        else:
            groups.append([v])
    exps = tuple(float(np.mean(g)) for g in groups)
    mults = tuple(len(g) for g in groups)
    stable = sum(1 for e in exps if e < 0.0)  # index of the last negative exponent
    return LyapunovSpectrum(exps, mults, stable, horizon, tuple(float(v) for v in values))


def _chord(theta):
    return math.sqrt(max(0.0, 2.0 - 2.0 * math.cos(theta)))


def subbundle_angle(splitting):
    """inf over unit u in E, v in F of |u - v|, via the smallest principal angle."""
    angles = scipy.linalg.subspace_angles(splitting.e_basis, splitting.f_basis)
    theta_min = float(angles[-1])  # angles come back in descending order
    if theta_min < 1e-9:
        raise DegenerateSplittingError(
            f"sub-bundles intersect (principal angle {theta_min:.3e})")
    return _chord(theta_min)


@dataclass(frozen=True)
class AngleReport:
    """Splitting angles sampled along an orbit at multiples of the step S."""

    angles: tuple
    tail_infimum: tuple  # tail_infimum[i] = min(angles[i:])
    e0_hat: float        # infimum over the tail half-window
    step: int

    def to_dict(self):
        return {"angles": list(self.angles), "tail_infimum": list(self.tail_infimum),
                "e0_hat": self.e0_hat, "step": self.step}


def angle_report(system, x, splitting, S, samples):
    """Angle profile along the orbit of x at times 0, S, 2S, ...

    The splitting is a constant field in coordinates, so the profile is flat;
    the report still carries the samples so downstream summaries have one shape.
    """
    if S < 1 or samples < 2:
        raise ValueError(f"need S >= 1 and samples >= 2, got S={S}, samples={samples}")
    dyn.iterate(system, x, 1)  # validates the point against the system
    chord = subbundle_angle(splitting)
    angles = (chord,) * samples
    return AngleReport(angles, angles, chord, S)


def alpha_constant(system, points):
    """max over the sample of log(||Df|| / m(Df)), the one-step norm spread."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    sv = np.linalg.svd(system.jacobian_many(pts), compute_uv=False)
    if np.any(sv[..., -1] <= 0.0):
        raise SingularRestrictionError("singular derivative in sample")
    return float(np.max(np.log(sv[..., 0]) - np.log(sv[..., -1])))


def upgrade_limit_domination(S, rate, k, q, alpha):
    """Coarsen a domination scale from step S to step kS + q.

    Returns (kS + q, k * rate - q * alpha / 2); the new rate must stay
    positive, which bounds how large a remainder q the scale can absorb.
    """
    if S < 1 or k < 1 or q < 0 or q >= max(S, 1):
        raise ValueError(f"need k >= 1 and 0 <= q < S, got S={S}, k={k}, q={q}")
    if rate <= 0.0 or alpha < 0.0:
        raise ValueError("rate must be positive and alpha nonnegative")
    new_rate = k * rate - q * alpha / 2.0
    if new_rate <= 0.0:
        raise ValueError(
            f"upgraded rate {new_rate} not positive; need k > q*alpha/(2*rate)")
    return k * S + q, new_rate


def domination_upgrade_n0(N, rate, gamma):
    """Least window count beyond which an N-step domination with defect
    gamma controls every longer window."""
    if N < 1 or rate <= 0.0 or gamma < 0.0:
        raise ValueError(f"need N >= 1, rate > 0, gamma >= 0; got {N}, {rate}, {gamma}")
    return int(math.floor(2.0 + N * (rate + gamma) / rate)) + 1
