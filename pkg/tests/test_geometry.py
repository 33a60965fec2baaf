import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from scatwave.errors import (ClassViolationError, ConfigError, InvalidDimensionError,
                             OutOfRegionError)
from scatwave.geometry import (box_coefficients, cap_metric, check_class, check_signature,
                               deviation_orders, dual_metric_at, make_profile,
                               minkowski_metric, perturbed_metric, spec_from_json)


def _point(n, rho, v):
    return np.concatenate([[rho, v], np.full(n - 2, np.pi / 2)])


def test_minkowski_frame_entries():
    g = minkowski_metric(4)
    G = g.frame_matrix(_point(4, 0.1, 0.5))
    assert G[0, 0] == pytest.approx(0.5)
    assert minkowski_metric(4).frame_matrix(_point(4, 0.0, 0.0))[0, 1] == pytest.approx(-0.5)
    # the angular coefficient (1 - v)/2 vanishes on the axis v = 1
    assert np.allclose(g.frame_matrix(_point(4, 0.3, 1.0))[2:, 2:], 0.0)


def test_dimension_below_two_rejected():
    with pytest.raises(InvalidDimensionError):
        minkowski_metric(1)
    with pytest.raises(ConfigError):
        spec_from_json({"n": 1})


def test_zero_profile_is_identity():
    base = minkowski_metric(4)
    spec = perturbed_metric(base, make_profile("zero"), "normally_very_short_range")
    for rho, v in [(0.0, 0.2), (0.3, -0.7), (1.5, 0.9)]:
        p = _point(4, rho, v)
        assert np.array_equal(spec.frame_matrix(p), base.frame_matrix(p))


def test_order_one_normal_perturbation_violates_class():
    prof = make_profile("normal_gaussian", eps=0.01, power=0)
    with pytest.raises(ClassViolationError) as exc:
        perturbed_metric(minkowski_metric(4), prof, "normally_very_short_range")
    assert exc.value.details["block"] == "normal"


def test_normal_gaussian_deviation():
    prof = make_profile("normal_gaussian", eps=0.01, power=2)
    spec = perturbed_metric(minkowski_metric(4), prof, "normally_very_short_range")
    base = minkowski_metric(4)
    for v in (-0.5, 0.0, 0.4):
        p = _point(4, 0.1, v)
        d = spec.frame_matrix(p) - base.frame_matrix(p)
        assert d[0, 0] == pytest.approx(1e-4 * np.exp(-v * v), rel=1e-12)
        d[0, 0] = 0.0
        assert np.allclose(d, 0.0)
    slopes, _ = deviation_orders(spec)
    assert slopes[0] == pytest.approx(2.0, abs=0.01)
    assert np.isinf(slopes[1]) and np.isinf(slopes[2])


def test_exact_spec_with_perturbation_flagged():
    prof = make_profile("normal_gaussian", eps=0.01, power=2)
    spec = perturbed_metric(minkowski_metric(3), prof, "normally_very_short_range")
    object.__setattr__(spec, "perturbation_class", "exact_minkowski")
    with pytest.raises(ClassViolationError):
        check_class(spec)


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 6), st.floats(0.0, 3.0), st.floats(-0.97, 0.97))
def test_lorentzian_signature(n, rho, v):
    ev = np.linalg.eigvalsh(minkowski_metric(n).frame_matrix(_point(n, rho, v)))
    assert np.sum(ev > 0) == 1 and np.sum(ev < 0) == n - 1


def test_signature_check_on_perturbation():
    prof = make_profile("conformal_areal", eps_conformal=0.05, eps_areal=0.05)
    assert check_signature(perturbed_metric(minkowski_metric(4), prof, "normally_short_range"))


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 2.0), st.floats(-0.95, 0.95))
def test_dual_metric_inverts_frame(rho, v):
    g = minkowski_metric(5)
    p = _point(5, rho, v)
    Gi = dual_metric_at(g, p).ginv
    assert np.allclose(g.frame_matrix(p) @ Gi, np.eye(5), atol=1e-10)


def test_dual_block_against_symbolic_inverse():
    rho, v = sp.symbols("rho v")
    G = sp.Matrix([[v, -sp.Rational(1, 2)], [-sp.Rational(1, 2), -v / (4 * (1 - v ** 2))]])
    Ginv = sp.simplify(G.inv())
    g = minkowski_metric(3)
    for vv in (-0.6, 0.0, 0.3, 0.8):
        num = dual_metric_at(g, _point(3, 0.2, vv)).ginv[:2, :2]
        ref = np.array(Ginv.subs(v, vv).evalf(), dtype=float)
        assert np.allclose(num, ref, atol=1e-12)


def test_boundary_dual_metric_slopes():
    g = minkowski_metric(4)
    vs = np.array([1e-2, 5e-3])
    Gi = [dual_metric_at(g, _point(4, 0.0, v)).ginv for v in vs]
    for m, v in zip(Gi, vs):
        assert m[1, 1] / v == pytest.approx(-4.0, abs=5 * v * v)
    assert Gi[1][0, 1] == pytest.approx(-2.0, abs=1e-3)
    assert dual_metric_at(g, _point(4, 0.0, 0.0)).ginv[0, 0] == pytest.approx(0.0, abs=1e-14)


def test_log_volume_gradient_singular_part():
    g = minkowski_metric(4)
    for rho in (1e-3, 1e-4):
        grad = dual_metric_at(g, _point(4, rho, 0.2)).logvol_grad
        assert rho * grad[0] == pytest.approx(-5.0, abs=10 * rho)


def test_dual_metric_outside_collar():
    with pytest.raises(OutOfRegionError):
        dual_metric_at(minkowski_metric(3), _point(3, 0.1, 1.0))
    with pytest.raises(OutOfRegionError):
        dual_metric_at(minkowski_metric(3), _point(3, -0.1, 0.0))


def test_cap_metric_is_minus_boundary_block():
    g = minkowski_metric(4)
    c = cap_metric(g, "plus_cap", 0.5)
    Gi = dual_metric_at(g, _point(4, 0.0, 0.5)).ginv
    assert np.allclose(c.Kinv, -Gi[1:, 1:])
    assert np.allclose(c.kinv, 0.5 * c.Kinv)
    assert np.all(np.linalg.eigvalsh(c.Kinv) > 0)


def test_cap_metric_leading_coefficient():
    g = minkowski_metric(3)
    for v in (1e-3, 1e-4):
        K = np.linalg.inv(cap_metric(g, "plus_cap", v).Kinv)
        assert 4 * v * K[0, 0] == pytest.approx(1.0, abs=2 * v)


def test_cap_metric_region_errors():
    g = minkowski_metric(4)
    with pytest.raises(OutOfRegionError):
        cap_metric(g, "plus_cap", 0.0)
    with pytest.raises(OutOfRegionError):
        cap_metric(g, "equatorial", 0.2)
    with pytest.raises(ConfigError):
        cap_metric(g, "north", 0.2)


def test_cap_is_hyperbolic():
    """Gaussian curvature of the two-dimensional cap metric K/v is -1."""
    g = minkowski_metric(3)

    def EG(v):
        k = np.linalg.inv(cap_metric(g, "plus_cap", v).kinv)
        return k[0, 0], k[1, 1]

    h = 1e-4
    for v in (0.2, 0.5, 0.8):
        def w(x):
            E, G = EG(x)
            Gp = (EG(x + h)[1] - EG(x - h)[1]) / (2 * h)
            return Gp / np.sqrt(E * G)
        E, G = EG(v)
        curv = -(w(v + h) - w(v - h)) / (2 * h) / (2 * np.sqrt(E * G))
        assert curv == pytest.approx(-1.0, abs=1e-5)


def _box_oracle(n, expr_tr, rho0, v0):
    """rho^{-2} box u and the X-jet of a radial polynomial u(t, r)."""
    t, r, rho, v = sp.symbols("t r rho v", positive=True)
    box = sp.diff(expr_tr, t, 2) - sp.diff(expr_tr, r, 2) - (n - 2) / r * sp.diff(expr_tr, r)
    sub = {t: sp.sqrt((1 + v) / 2) / rho, r: sp.sqrt((1 - v) / 2) / rho}
    u = expr_tr.subs(sub)
    X = [lambda f: rho * sp.diff(f, rho), lambda f: sp.diff(f, v)]
    at = {rho: rho0, v: v0}
    grad = np.zeros(n)
    hess = np.zeros((n, n))
    for i in range(2):
        grad[i] = float(X[i](u).subs(at))
        for j in range(2):
            hess[i, j] = float(X[i](X[j](u)).subs(at))
    val = float((box.subs(sub) / rho ** 2).subs(at))
    return grad, hess, val


@pytest.mark.parametrize("n", [3, 4])
def test_box_coefficients_on_polynomials(n):
    t, r = sp.symbols("t r", positive=True)
    g = minkowski_metric(n)
    for expr in (t ** 2 - r ** 2, t ** 3, t * r ** 2 + r ** 4):
        for rho0, v0 in [(0.5, 0.99), (0.3, 0.2), (0.8, -0.4)]:
            grad, hess, ref = _box_oracle(n, expr, rho0, v0)
            bc = box_coefficients(g, _point(n, rho0, v0))
            assert bc.apply(grad, hess) == pytest.approx(ref, rel=1e-9, abs=1e-9)


def test_box_on_quadratic_form_constant():
    # u = t^2 - |x|^2 = v / rho^2 and box u = 2n in flat space
    g = minkowski_metric(4)
    for v in (-0.3, 0.2):
        grad = [-2 * v, 1.0, 0.0, 0.0]
        hess = np.zeros((4, 4))
        hess[:2, :2] = [[4 * v, -2.0], [-2.0, 0.0]]
        assert box_coefficients(g, _point(4, 0.7, v)).apply(grad, hess) == pytest.approx(8.0)


def test_box_boundary_model_coefficient():
    bc = box_coefficients(minkowski_metric(4), _point(4, 0.0, 0.01))
    assert bc.dvdv / 0.01 == pytest.approx(-4.0, rel=1e-3)
