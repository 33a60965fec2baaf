import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import solve_ivp

from scatwave.errors import ConfigError
from scatwave.geometry import make_profile, minkowski_metric, perturbed_metric
from scatwave.hamiltonian_flow import (BCotangentPoint, b_symbol, characteristic_gammas,
                                       check_nontrapping, hamilton_field,
                                       integrate_bicharacteristic, multiplicities,
                                       radial_distance, radial_linearization,
                                       sample_null_starts, to_polar)


def _radial_point(n, gamma=1.0):
    base = (0.0, 0.0) + (math.pi / 2,) * (n - 2)
    fiber = (0.0, gamma) + (0.0,) * (n - 2)
    return BCotangentPoint(base, fiber)


def _null_start(spec, rho, th, y, xi, eta, which=0):
    x = np.concatenate([[rho, th], y])
    g = characteristic_gammas(spec, x, xi, np.asarray(eta))[which]
    return BCotangentPoint(tuple(x), tuple(np.concatenate([[xi, g], eta])), "theta")


def test_boundary_symbol_at_equator():
    g = minkowski_metric(4)
    for xi, gam in [(1.0, 1.0), (0.3, -2.0), (-1.5, 0.7)]:
        p = BCotangentPoint((0.0, 0.0, 1.0, 1.2), (xi, gam, 0.0, 0.0))
        assert b_symbol(g, p) == pytest.approx(-4 * xi * gam, abs=1e-12)


def test_zero_fiber_and_radial_point():
    g = minkowski_metric(4)
    assert b_symbol(g, BCotangentPoint((0.2, 0.3, 1.0, 1.0), (0.0,) * 4)) == 0.0
    p = _radial_point(4)
    assert b_symbol(g, p) == 0.0
    h = hamilton_field(g, p)
    assert np.linalg.norm(h[:4]) < 1e-10
    assert np.linalg.norm(h[4:]) > 0.1


def test_boundary_is_invariant():
    g = perturbed_metric(minkowski_metric(3),
                         make_profile("normal_gaussian", eps=0.05, power=2),
                         "normally_very_short_range")
    for v in (-0.5, 0.2):
        h = hamilton_field(g, BCotangentPoint((0.0, v, 0.4), (0.7, -0.3, 1.1)))
        assert h[0] == 0.0 and h[3] == 0.0


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 2.0), st.floats(-0.9, 0.9), st.floats(1.5, 20.0))
def test_hamilton_field_homogeneity(rho, v, c):
    g = minkowski_metric(3)
    z = np.array([0.3, -1.2, 0.8])
    h1 = hamilton_field(g, BCotangentPoint((rho, v, 0.5), tuple(z)))
    hc = hamilton_field(g, BCotangentPoint((rho, v, 0.5), tuple(c * z)))
    assert np.allclose(hc[:3], c * h1[:3], rtol=1e-10, atol=1e-12)
    assert np.allclose(hc[3:], c * c * h1[3:], rtol=1e-10, atol=1e-12)


def _to_cartesian(rho, v, phi):
    t = math.sqrt((1 + v) / 2) / rho
    r = math.sqrt((1 - v) / 2) / rho
    return np.array([t, r * math.cos(phi), r * math.sin(phi)])


def test_base_velocity_is_raised_covector():
    """In flat space the base velocity is 2 rho^{-2} g^{-1} k in Cartesian terms."""
    g = minkowski_metric(3)
    x = np.array([0.4, 0.3, 0.8])
    zeta = np.array([0.5, -0.7, 1.3])
    base = hamilton_field(g, BCotangentPoint(tuple(x), tuple(zeta)))[:3]
    J = np.empty((3, 3))
    h = 1e-6
    for j in range(3):
        e = np.zeros(3)
        e[j] = h
        J[:, j] = (_to_cartesian(*(x + e)) - _to_cartesian(*(x - e))) / (2 * h)
    k_coord = np.array([zeta[0] / x[0], zeta[1], zeta[2]])
    k_cart = np.linalg.solve(J.T, k_coord)
    expect = 2 / x[0] ** 2 * np.array([1.0, -1.0, -1.0]) * k_cart
    assert np.allclose(J @ base, expect, rtol=1e-7)


def test_flat_bicharacteristics_are_null_lines():
    g = minkowski_metric(3)
    start = _null_start(g, 0.5, math.pi / 3, [0.3], 0.4, [0.7])
    traj = integrate_bicharacteristic(g, start, budget=60)
    pts = []
    for _, p in traj.samples:
        rho, th, phi = p.base
        if rho > 0.02:
            t, r = math.cos(th) / rho, math.sin(th) / rho
            pts.append([t, r * math.cos(phi), r * math.sin(phi)])
    pts = np.array(pts)
    assert len(pts) > 10
    d = pts[-1] - pts[0]
    d /= np.linalg.norm(d)
    assert d[0] ** 2 == pytest.approx(d[1] ** 2 + d[2] ** 2, abs=1e-8)
    off = pts - pts[0]
    perp = off - np.outer(off @ d, d)
    assert np.max(np.linalg.norm(perp, axis=1)) < 1e-7 * np.max(np.linalg.norm(off, axis=1))


def test_boundary_flow_matches_direct_integration():
    """At rho = 0 the flow reduces to the boundary symbol's Hamilton flow."""
    g = minkowski_metric(3)

    def lam(v, gam, eta, xi):
        G = np.array([[v, -0.5, 0], [-0.5, -v / (4 * (1 - v * v)), 0],
                      [0, 0, -(1 - v) / 2]])
        z = np.array([xi, gam, eta])
        return z @ np.linalg.solve(G, z)

    xi = 0.6

    def direct(_s, w):
        v, y, gam, eta = w
        h = 1e-6
        dv = (lam(v + h, gam, eta, xi) - lam(v - h, gam, eta, xi)) / (2 * h)
        dg = (lam(v, gam + h, eta, xi) - lam(v, gam - h, eta, xi)) / (2 * h)
        de = (lam(v, gam, eta + h, xi) - lam(v, gam, eta - h, xi)) / (2 * h)
        return [dg, de, -dv, 0.0]

    def module(_s, w):
        v, y, gam, eta = w
        h = hamilton_field(g, BCotangentPoint((0.0, v, y), (xi, gam, eta)))
        assert h[3] == 0.0
        return [h[1], h[2], h[4], h[5]]

    w0 = [-0.3, 0.2, 0.5, 0.9]
    a = solve_ivp(direct, (0, 0.3), w0, rtol=1e-12, atol=1e-13).y[:, -1]
    b = solve_ivp(module, (0, 0.3), w0, rtol=1e-12, atol=1e-13).y[:, -1]
    assert np.allclose(a, b, atol=1e-7)


def test_radial_set_is_the_only_stationary_set():
    g = minkowski_metric(3)
    worst = np.inf
    for v in np.linspace(-0.9, 0.9, 13):
        for xi in np.linspace(-1, 1, 5):
            for eta in np.linspace(-1, 1, 5):
                x = np.array([0.0, v, 0.7])
                for gam in characteristic_gammas(g, x, xi, [eta], chart="v"):
                    z = np.array([xi, gam, eta])
                    nz = np.linalg.norm(z)
                    if radial_distance("v", x, z) < 0.1:
                        continue
                    h = hamilton_field(g, BCotangentPoint(tuple(x), tuple(z / nz)))
                    zh = z / nz
                    f = h[3:] - (zh @ h[3:]) * zh
                    worst = min(worst, np.linalg.norm(np.concatenate([h[:3], f])))
    assert worst > 1e-3


def test_radial_start_stays_put():
    g = minkowski_metric(4)
    p = _radial_point(4)
    traj = integrate_bicharacteristic(g, p, budget=5.0)
    assert traj.terminal_class == "budget_exhausted"
    x0 = np.asarray(traj.samples[0][1].base)
    x1 = np.asarray(traj.samples[-1][1].base)
    assert np.linalg.norm(x1 - x0) < 1e-8


def test_non_characteristic_start_rejected():
    g = minkowski_metric(3)
    with pytest.raises(ConfigError):
        integrate_bicharacteristic(g, BCotangentPoint((0.5, 0.2, 0.3), (1.0, 1.0, 1.0)))


def test_boundary_starts_connect_radial_sets():
    g = minkowski_metric(3)
    starts = sample_null_starts(g, 9, np.random.default_rng(1))[:3]
    for st_ in starts:
        assert st_.base[0] == 0.0
        fw = integrate_bicharacteristic(g, st_, direction=+1)
        bw = integrate_bicharacteristic(g, st_, direction=-1)
        assert {fw.terminal_class, bw.terminal_class} == {"reached_S_plus", "reached_S_minus"}
        assert max(fw.lambda_drift, bw.lambda_drift) < 1e-6


def test_interior_ray_runs_past_to_future():
    g = minkowski_metric(4)
    start = _null_start(g, 0.5, 1.0, [1.2, 1.5], 0.3, [0.2, -0.4])
    fw = integrate_bicharacteristic(g, start, direction=+1)
    bw = integrate_bicharacteristic(g, start, direction=-1)
    assert {fw.terminal_class, bw.terminal_class} == {"reached_S_plus", "reached_S_minus"}


def test_to_polar_roundtrip():
    p = BCotangentPoint((0.3, 0.5, 1.0), (0.2, 1.5, 0.4))
    q = to_polar(p)
    assert math.cos(2 * q.base[1]) == pytest.approx(0.5)
    g = minkowski_metric(3)
    assert b_symbol(g, q) == pytest.approx(b_symbol(g, p), rel=1e-10)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_radial_spectrum_minkowski(n):
    spec = radial_linearization(minkowski_metric(n))
    groups = multiplicities(spec.eigenvalues, tol=1e-5)
    assert [c for _, c in groups] == [1, n + 1, n - 2]
    vals = [v for v, _ in groups]
    assert vals[0] / vals[1] == pytest.approx(2.0, rel=1e-5)
    assert abs(vals[2]) < 1e-5 * abs(vals[1])


def test_radial_spectrum_sign_flip():
    g = minkowski_metric(4)
    a = np.sort(np.real(radial_linearization(g, gamma_sign=1).eigenvalues))
    b = np.sort(np.real(radial_linearization(g, gamma_sign=-1).eigenvalues))
    assert np.allclose(a, -b[::-1], atol=1e-6)


def test_radial_spectrum_under_small_perturbation():
    spec = perturbed_metric(minkowski_metric(4),
                            make_profile("normal_gaussian", eps=0.01, power=2),
                            "normally_very_short_range")
    groups = multiplicities(radial_linearization(spec).eigenvalues, tol=5e-2)
    assert [c for _, c in groups] == [1, 5, 2]
    assert groups[0][0] / groups[1][0] == pytest.approx(2.0, rel=5e-2)


def test_radial_linearization_rejects_off_set_point():
    with pytest.raises(ConfigError):
        radial_linearization(minkowski_metric(3), BCotangentPoint((0.0, 0.2, 1.0), (0.0, 1.0, 0.0)))


def test_nontrapping_small_sample():
    rep = check_nontrapping(minkowski_metric(3), sample_count=12, seed=3)
    assert rep.passed and rep.samples == 12
    assert rep.max_drift < 1e-6


def test_nontrapping_zero_samples_warns():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        rep = check_nontrapping(minkowski_metric(3), sample_count=0)
    assert rep.passed and rep.samples == 0
    assert any("vacuous" in str(x.message) for x in w)


def test_trapping_bump_is_detected():
    spec = perturbed_metric(minkowski_metric(3), make_profile("trapping_bump"),
                            "normally_very_short_range")
    rep = check_nontrapping(spec, sample_count=12, seed=0)
    assert not rep.passed
    assert rep.offending_start is not None
    assert rep.worst.terminal_class == "budget_exhausted"
