import math

import numpy as np
import pytest

from oracles import huygens_quadrature, planar_convolution
from scatwave.errors import (ConfigError, ExtractionFailure, InvalidDimensionError,
                             PreconditionError, ReductionUnavailableError)
from scatwave.geometry import make_profile, minkowski_metric, perturbed_metric
from scatwave.wave_solver import (RadiationField, SourceSpec, WaveField,
                                  assemble_mode_problem, chart_agreement, chart_problem,
                                  default_source, evolve_characteristic,
                                  extract_radiation_field, front_face, observed_order,
                                  resample_geometric, rho_radiation_field,
                                  solve_on_blowup_chart)

GAUSS = dict(amp=1.0, tc=3.0, st=0.5, sx=0.7)
HUYGENS_PTS = [(6.0, 2.0), (8.0, 1.0), (20.0, 3.0), (40.0, 2.5)]


@pytest.mark.parametrize("n, ell, coef", [(4, 0, 0.0), (3, 0, -0.25), (5, 1, 3.75)])
def test_mode_potential(n, ell, coef):
    pr = assemble_mode_problem(minkowski_metric(n), n, ell, h=0.1, q_max=5.0)
    r = np.array([0.5, 2.0])
    assert np.allclose(pr.potential(r), coef / r ** 2)


def test_assembly_errors():
    with pytest.raises(InvalidDimensionError):
        assemble_mode_problem(None, 1, 0)
    with pytest.raises(ConfigError):
        assemble_mode_problem(minkowski_metric(3), 3, -1)
    normal = perturbed_metric(minkowski_metric(4),
                              make_profile("normal_gaussian", eps=0.01, power=2),
                              "normally_very_short_range")
    with pytest.raises(ReductionUnavailableError):
        assemble_mode_problem(normal, 4, 0)


def test_zero_source_gives_zero_field():
    pr = assemble_mode_problem(minkowski_metric(3), 3, 0, SourceSpec("zero"), h=0.1,
                               q_max=5.0, z_uniform=8.0, p_max=1e3)
    f = evolve_characteristic(pr)
    assert np.nanmax(np.abs(f.values)) == 0.0
    assert np.all(extract_radiation_field(f).R == 0.0)


def test_forward_support_is_exact():
    src = default_source()
    pr = assemble_mode_problem(minkowski_metric(3), 3, 0, src, h=0.1, q_max=8.0, p_max=1e3)
    f = evolve_characteristic(pr)
    q0 = src.null_support()[0]
    before = f.values[f.q < q0]
    assert before.size > 0
    assert np.all(before[np.isfinite(before)] == 0.0)


def test_double_null_quadrature_oracle():
    src = default_source()
    ref = np.array([huygens_quadrature(src, p, q, (1, 3, 0.5, 2.5)) for p, q in HUYGENS_PTS])
    errs = []
    for h in (0.1, 0.05, 0.025):
        pr = assemble_mode_problem(minkowski_metric(4), 4, 0, src, h=h, q_max=10, p_max=1e3)
        f = evolve_characteristic(pr)
        errs.append(max(abs(f.psi_at(p, q) - r) for (p, q), r in zip(HUYGENS_PTS, ref)))
    assert errs[-1] < 1e-4
    for a, b in zip(errs, errs[1:]):
        assert 1.8 <= observed_order(a, b) <= 2.2


def test_richardson_order_from_three_solutions():
    vals = []
    for h in (0.2, 0.1, 0.05):
        pr = assemble_mode_problem(minkowski_metric(3), 3, 0, h=h, q_max=8, p_max=1e3)
        vals.append(evolve_characteristic(pr).psi_at(30.0, 4.0))
    assert 1.8 <= observed_order(*vals) <= 2.2


def test_planar_convolution_oracle():
    src = SourceSpec("gaussian", GAUSS)
    pts = [(10.0, 2.0), (30.0, 4.0), (100.0, 6.0), (60.0, 30.0)]
    pr = assemble_mode_problem(minkowski_metric(3), 3, 0, src, h=0.05, q_max=32, p_max=1e4)
    f = evolve_characteristic(pr)
    for p, q in pts:
        t, r = (p + q) / 2, (p - q) / 2
        ref = math.sqrt(r) * planar_convolution(t, r, **GAUSS)
        assert f.psi_at(p, q) == pytest.approx(ref, rel=1e-2)


def test_strong_huygens_in_even_dimension():
    src = default_source()
    pr = assemble_mode_problem(minkowski_metric(4), 4, 0, src, h=0.05, q_max=30, p_max=1e5)
    rf = extract_radiation_field(evolve_characteristic(pr))
    # retarded times u = t - x.omega of the source end at t1 + r1
    beyond = rf.q > src.params["t1"] + src.params["r1"] + 0.1
    assert np.max(np.abs(rf.R[beyond])) < 1e-8
    assert np.max(np.abs(rf.R)) > 1e-2


def test_point_source_limit_three_dimensions():
    src = SourceSpec("gaussian", dict(amp=1.0, tc=3.0, st=0.3, sx=0.3))
    pr = assemble_mode_problem(minkowski_metric(3), 3, 0, src, h=0.05, q_max=400,
                               z_uniform=20, p_max=1e6)
    rf = extract_radiation_field(evolve_characteristic(pr))
    limit = -src.mass(3) / (4 * math.pi * math.sqrt(2))
    sel = (rf.q > 100) & (rf.q < 400)
    ratio = rf.R[sel] * rf.q[sel] ** 1.5 / limit
    a, b = np.polynomial.polynomial.polyfit(1 / rf.q[sel], ratio, 1)
    assert a == pytest.approx(1.0, abs=5e-3)


def test_extraction_reports_order_and_model():
    pr = assemble_mode_problem(minkowski_metric(3), 3, 0, h=0.1, q_max=10, p_max=1e4)
    rf = extract_radiation_field(evolve_characteristic(pr))
    assert rf.model in ("poly", "log")
    assert rf.energy() > 0
    assert np.nanmedian(rf.order) > 0.5


def test_extraction_failure_on_oscillating_levels():
    pr = assemble_mode_problem(minkowski_metric(3), 3, 0, h=0.1, q_max=10, p_max=1e4)
    f = evolve_characteristic(pr)
    rng = np.random.default_rng(0)
    noisy = f.values.copy()
    noisy[:, -6:] += rng.normal(size=noisy[:, -6:].shape)
    with pytest.raises(ExtractionFailure):
        extract_radiation_field(WaveField(noisy, f.p, f.q, f.problem))


def test_zero_radiation_field():
    pr = assemble_mode_problem(minkowski_metric(3), 3, 0, h=0.1, q_max=5, p_max=1e3)
    f = evolve_characteristic(pr)
    zero = WaveField(np.where(np.isfinite(f.values), 0.0, np.nan), f.p, f.q, f.problem)
    assert np.all(extract_radiation_field(zero).R == 0.0)


def test_charts_cross_validate_three_dimensions():
    g = minkowski_metric(3)
    rho = rho_radiation_field(solve_on_blowup_chart(chart_problem(g, 3, 0, h=0.05, q_max=40)))
    pr = assemble_mode_problem(g, 3, 0, h=0.05, q_max=40, p_max=1e5)
    rf = extract_radiation_field(evolve_characteristic(pr))
    assert chart_agreement(rf, rho, 5.0, 50.0) < 1e-3


def test_convention_factor():
    rf = RadiationField(np.array([1.0, 2.0]), np.array([1.0, 1.0]), np.zeros(2), np.zeros(2),
                        5, 0)
    s, R = rf.rho_convention()
    assert np.allclose(s, math.sqrt(2) * np.array([1.0, 2.0]))
    assert np.allclose(R, 2 ** 0.75 / math.sqrt(2))


def test_nonzero_initial_data_rejected():
    pr = assemble_mode_problem(minkowski_metric(4), 4, 0, SourceSpec("zero"), h=0.1,
                               q_max=5, infinity=True, initial_data=lambda z: np.ones_like(z))
    with pytest.raises(PreconditionError):
        solve_on_blowup_chart(pr)


def test_blowup_chart_rejects_short_range():
    sr = perturbed_metric(minkowski_metric(4),
                          make_profile("conformal_areal", eps_areal=0.01, power_areal=0),
                          "normally_short_range")
    with pytest.raises(PreconditionError):
        solve_on_blowup_chart(chart_problem(sr, 4, 0, h=0.1, q_max=5))
    with pytest.raises(ConfigError):
        solve_on_blowup_chart(assemble_mode_problem(minkowski_metric(4), 4, 0, h=0.1, q_max=5))


def test_front_face_smooth_across_light_cone():
    d2 = []
    for h in (0.1, 0.05):
        s, u, du = front_face(solve_on_blowup_chart(
            chart_problem(minkowski_metric(4), 4, 0, h=h, q_max=10)))
        d2.append(np.max(np.abs(np.gradient(du, s))))
    assert d2[1] < 1.2 * d2[0] and d2[1] < 10.0


def test_geometric_resampling_endpoints():
    pr = assemble_mode_problem(minkowski_metric(3), 3, 0, h=0.1, q_max=80, p_max=1e4)
    rf = extract_radiation_field(evolve_characteristic(pr))
    s, R = resample_geometric(rf, 10.0, 100.0)
    assert s[0] == 10.0 and s[-1] == pytest.approx(100.0, rel=1e-14)
    assert np.all(np.diff(np.log(s)) == pytest.approx(np.log(s[1] / s[0])))
