"""Pseudo-orbits, Newton shadowing, closing, and probe utilities."""

import numpy as np
import pytest

from pesinlab import systems as dyn
from pesinlab.errors import ConvergenceError, PseudoOrbitFormatError
from pesinlab.shadow import (
    PseudoOrbit,
    close_orbit,
    cumulative_times,
    estimate_shadowing_constant,
    make_pseudo_orbit,
    periodic_density_probe,
    read_pseudo_orbit,
    solve_shadow,
    verify_shadowing,
    write_pseudo_orbit,
)


def test_cumulative_times():
    assert cumulative_times((3, 4, 5), 0) == 0
    assert cumulative_times((3, 4, 5), 2) == 7
    assert cumulative_times((3, 4, 5), 3) == 12
    assert cumulative_times((3, 4, 2), -1) == -2
    assert cumulative_times((3, 4, 2), -3) == -9
    with pytest.raises(ValueError):
        cumulative_times((3, 4), 5)


def test_pseudo_orbit_validation(cat):
    x0 = np.array([0.1, 0.2])
    seg = dyn.orbit_points(cat, x0, 5)
    far = dyn.orbit_points(cat, np.array([0.7, 0.9]), 5)
    with pytest.raises(ValueError):
        PseudoOrbit(segments=(seg, far), periodic=False, delta=1e-9)
    po = PseudoOrbit(segments=(seg, far), periodic=False, delta=0.9)
    assert po.m == 2 and po.dim == 2 and po.total_length == 10
    assert po.n_list == (5, 5)
    with pytest.raises(ValueError):
        PseudoOrbit(segments=(seg[:1],), periodic=False, delta=0.5)


def test_make_pseudo_orbit_auto_delta(cat):
    x0 = np.array([0.1, 0.2])
    end = dyn.orbit_points(cat, x0, 6)[-1]
    x1 = dyn.wrap(end + np.array([5e-7, 0.0]))
    po = make_pseudo_orbit(cat, [x0, x1], [6, 4], periodic=False)
    assert po.delta == pytest.approx(5e-7, rel=1e-6)
    assert po.gaps[0] < po.delta


def test_verify_and_solve_exact_orbit(cat):
    x0 = np.array([0.1234, 0.777])
    mid = dyn.orbit_points(cat, x0, 6)[-1]
    po = make_pseudo_orbit(cat, [x0, mid], [6, 7], periodic=False)
    ok, dev, _ = verify_shadowing(cat, x0, po, 1e-12)
    assert ok and dev == 0.0
    res = solve_shadow(cat, po)
    assert res.iterations == 0 and res.epsilon_achieved == 0.0
    assert res.period is None and not res.periodic
    bad_ok, bad_dev, _ = verify_shadowing(cat, dyn.wrap(x0 + 2e-6), po, 1e-6)
    assert not bad_ok and bad_dev > 1e-6


def test_verify_consistency_after_solve(cat):
    # solved point re-verifies at its own epsilon over short windows
    rng = np.random.default_rng(8)
    for trial in range(5):
        x0 = rng.random(2)
        end = dyn.orbit_points(cat, x0, 4)[-1]
        x1 = dyn.wrap(end + 1e-8 * rng.standard_normal(2))
        po = make_pseudo_orbit(cat, [x0, x1], [4, 4], periodic=False)
        res = solve_shadow(cat, po)
        ok, dev, _ = verify_shadowing(cat, res.z, po, res.epsilon_achieved + 1e-12)
        assert ok, (trial, dev, res.epsilon_achieved)


def _close_oracle_points(cat, x, n):
    """Fixed point of the closing step in closed form: (A^n - I) w = gap."""
    A = np.array([[2.0, 1.0], [1.0, 1.0]])
    seg = dyn.orbit_points(cat, x, n)
    gap = dyn.torus_diff(seg[0], seg[-1]).ravel()
    w = np.linalg.solve(np.linalg.matrix_power(A, n) - np.eye(2), gap)
    pts = [dyn.wrap(seg[j] + np.linalg.matrix_power(A, j) @ w) for j in range(n)]
    return np.array(pts)


def test_close_orbit_matches_linear_oracle(cat):
    rng = np.random.default_rng(3)
    for _ in range(5):
        x = rng.random(2)
        n = int(rng.integers(4, 12))
        res = close_orbit(cat, x, n)
        oracle = _close_oracle_points(cat, x, n)
        assert res.period == n
        assert float(np.max(dyn.torus_distance(res.points, oracle))) < 1e-10
        assert res.residual < 1e-12


def test_close_orbit_rational_point_is_fixed(cat):
    # (1/5, 2/5) is periodic already; closing returns it unchanged
    orb = dyn.orbit_points(cat, np.array([0.2, 0.4]), 60)
    d = dyn.torus_distance(orb[1:], np.array([0.2, 0.4]))
    p_true = int(np.argmin(d)) + 1
    assert d[p_true - 1] < 1e-12
    res = close_orbit(cat, np.array([0.2, 0.4]), p_true)
    assert res.epsilon_achieved < 1e-12 and res.residual < 1e-13


def test_periodicity_forward_return_short(cat):
    rng = np.random.default_rng(14)
    for p in (3, 5, 8, 10):
        x = rng.random(2)
        orb = dyn.orbit_points(cat, x, p)
        d = dyn.torus_distance(orb[1:], x)
        n = int(np.argmin(d)) + 1
        res = close_orbit(cat, x, n)
        ret = dyn.orbit_points(cat, res.z, res.period)[-1]
        # forward iteration amplifies roundoff by lambda_u^p: short p only
        assert float(dyn.torus_distance(ret, res.z)) < 1e-10


def test_periodicity_cyclic_defect_all_lengths(cat):
    rng = np.random.default_rng(15)
    for p in (12, 30, 60):
        x = rng.random(2)
        res = close_orbit(cat, x, p)
        defect = np.abs(dyn.torus_diff(np.roll(res.points, -1, axis=0),
                                       cat.step_many(res.points))).max()
        assert float(defect) < 1e-11


def _chain_rows(pseudo):
    rows = [seg[:-1] for seg in pseudo.segments]
    if not pseudo.periodic:
        rows.append(pseudo.segments[-1][-1:])
    return np.vstack(rows)


def _dense_open_oracle(cat, pseudo):
    """Minimum-norm Newton correction for an open chain, dense algebra."""
    A = np.array([[2.0, 1.0], [1.0, 1.0]])
    z = _chain_rows(pseudo)
    p = z.shape[0] - 1
    r = dyn.torus_diff(z[1:], cat.step_many(z[:-1])).ravel()
    J = np.zeros((2 * p, 2 * (p + 1)))
    for j in range(p):
        J[2 * j:2 * j + 2, 2 * j:2 * j + 2] = -A
        J[2 * j:2 * j + 2, 2 * (j + 1):2 * (j + 1) + 2] = np.eye(2)
    delta = J.T @ np.linalg.solve(J @ J.T, -r)
    return dyn.wrap(z + delta.reshape(-1, 2))


def test_open_window_min_norm_oracle(cat):
    rng = np.random.default_rng(23)
    for _ in range(3):
        x0 = rng.random(2)
        end = dyn.orbit_points(cat, x0, 7)[-1]
        x1 = dyn.wrap(end + 1e-6 * rng.standard_normal(2))
        po = make_pseudo_orbit(cat, [x0, x1], [7, 6], periodic=False)
        res = solve_shadow(cat, po)
        oracle = _dense_open_oracle(cat, po)
        assert float(np.max(dyn.torus_distance(res.points, oracle))) < 1e-10


def test_file_roundtrip(cat, tmp_path):
    x0 = np.array([0.1234, 0.777])
    mid = dyn.orbit_points(cat, x0, 6)[-1]
    po = make_pseudo_orbit(cat, [x0, mid], [6, 7], periodic=False)
    path = tmp_path / "po.txt"
    write_pseudo_orbit(po, path)
    back = read_pseudo_orbit(path)
    assert back.periodic == po.periodic and back.delta == po.delta
    assert all(np.array_equal(a, b) for a, b in zip(back.segments, po.segments))
    write_pseudo_orbit(back, tmp_path / "po2.txt")
    assert (tmp_path / "po.txt").read_text() == (tmp_path / "po2.txt").read_text()


@pytest.mark.parametrize("text", [
    "SEG n=1\n0 0\n0 0\n",                                  # missing header
    "PSEUDO dim=2 periodic=1 delta=0.5\nSEG n=1\n0 0\n0 0\n",  # bad field name
    "PSEUDO d=2 periodic=1\nSEG n=1\n0 0\n0 0\n",           # missing delta
    "PSEUDO d=2 periodic=1 delta=0.5\nSEG n=2\n0 0\n0 0\n",  # short segment
    "PSEUDO d=2 periodic=1 delta=0.5\nSEG n=1\n0 0\n0 0 0\n",  # wrong dim
    "PSEUDO d=2 periodic=1 delta=0.5\nSEG n=x\n0 0\n0 0\n",  # bad count
])
def test_malformed_files(tmp_path, text):
    path = tmp_path / "bad.txt"
    path.write_text(text)
    with pytest.raises(PseudoOrbitFormatError):
        read_pseudo_orbit(path)


def test_read_rejects_gap_violation(tmp_path):
    # well-formed file whose seam exceeds the declared delta
    path = tmp_path / "wide.txt"
    path.write_text("PSEUDO d=2 periodic=0 delta=1e-09\n"
                    "SEG n=1\n0 0\n0.1 0.1\n\n"
                    "SEG n=1\n0.5 0.5\n0.6 0.6\n")
    with pytest.raises(ValueError):
        read_pseudo_orbit(path)


def test_solve_shadow_length_cap(cat):
    big = np.zeros((1_000_002, 2))
    po = PseudoOrbit(segments=(big,), periodic=False, delta=0.5)
    with pytest.raises(ValueError):
        solve_shadow(cat, po)


def test_divergence_reports_diagnostics(p24):
    rng = np.random.default_rng(0)
    po = make_pseudo_orbit(p24, [rng.random(3) for _ in range(3)],
                           [6, 6, 6], periodic=True)
    with pytest.raises(ConvergenceError) as err:
        solve_shadow(p24, po, max_iter=1)
    info = err.value.result
    assert info["iterations"] == 1
    assert len(info["residual_history"]) >= 1


def test_estimate_shadowing_constant(cat):
    sc = estimate_shadowing_constant(cat, [1e-6, 5e-7, 1e-7], trials=5,
                                     length_range=(4, 9), seed=11)
    assert sc.d0_hat == 1e-6
    assert 0.4 <= sc.L_hat <= 1.0
    ratios = [row["max_ratio"] for row in sc.per_delta]
    # linear response: halving delta moves the ratio by well under 10%
    for a, b in zip(ratios, ratios[1:]):
        assert b <= a * 1.1
    assert all(row["converged"] == 5 for row in sc.per_delta)
    with pytest.raises(ValueError):
        estimate_shadowing_constant(cat, [1e-7, 1e-6], trials=2,
                                    length_range=(4, 9))


def test_density_probe_rational_sample(cat):
    sample = [np.array([i / 7, j / 7]) for i in range(1, 4) for j in range(1, 3)]
    frac, rep = periodic_density_probe(cat, sample, n_max=60, epsilon=1e-2,
                                       return_report=True)
    assert frac == 1.0
    assert rep["attempted"] + rep["skipped"] == len(sample)


def test_density_probe_skip_semantics(cat):
    sample = [np.array([i / 7, j / 7]) for i in range(1, 4) for j in range(1, 3)]
    frac, rep = periodic_density_probe(cat, sample, n_max=60, epsilon=1e-2,
                                       domain=lambda x: x[0] < 0.3,
                                       return_report=True)
    assert rep["skipped"] == sum(1 for x in sample if x[0] >= 0.3)
    assert frac == 1.0  # skipped points leave the denominator
    with pytest.raises(ValueError):
        periodic_density_probe(cat, [], n_max=10, epsilon=1e-2)
    with pytest.raises(ValueError):
        periodic_density_probe(cat, sample, n_max=0, epsilon=1e-2)


def test_shadow_result_serialization(cat):
    res = close_orbit(cat, np.array([0.31, 0.57]), 9)
    d = res.to_dict()
    assert d["periodic"] is True and d["period"] == 9
    assert len(d["points"]) == 9
    assert np.array_equal(res.z, res.points[0])
