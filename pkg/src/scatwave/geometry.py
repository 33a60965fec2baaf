"""Compactified scattering metrics in collar coordinates (rho, v, y).

Frame convention: metric coefficients are given in the coframe
``(d rho / rho**2, dv / rho, dy_i / rho)`` so that all entries stay bounded
up to the boundary ``rho = 0``.  For spherically symmetric metrics the
matrix splits into a 2x2 ``(rho, v)`` block and an angular coefficient
``c`` multiplying ``-round(y)``.

Exact Minkowski space uses ``t = cos(theta)/rho``, ``r = sin(theta)/rho``
and ``v = cos(2 theta)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import (
    ClassViolationError,
    DegenerateMetricError,
    InvalidDimensionError,
    OutOfRegionError,
    ConfigError,
)

CLASSES = ("exact_minkowski", "normally_very_short_range", "normally_short_range")

# minimum decay exponents (normal, mixed, tangential) of the deviation from
# Minkowski as rho -> 0
_CLASS_ORDERS = {
    "normally_very_short_range": (2, 1, 1),
    "normally_short_range": (2, 1, 0),
}


# ---------------------------------------------------------------------------
# radial profiles


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1 (analytic in between)."""
    x = np.asarray(x)
    xr = np.real(x)
    inside = (xr > 0) & (xr < 1)
    xs = np.where(inside, x, 0.5)
    a = np.exp(-1.0 / xs)
    b = np.exp(-1.0 / (1.0 - xs))
    mid = a / (a + b)
    return np.where(xr <= 0, 0.0, np.where(xr >= 1, 1.0, mid))


def rho_cutoff(rho, rho_cut):
    """1 for rho <= rho_cut, 0 for rho >= 2 rho_cut."""
    if rho_cut is None:
        return 1.0
    return 1.0 - smooth_step(np.asarray(rho) / rho_cut - 1.0)


@dataclass(frozen=True)
class RadialProfile:
    """Spherically symmetric perturbation of the Minkowski frame matrix.

    ``normal`` is added to the (d rho/rho^2)^2 coefficient, ``conformal``
    scales the whole (rho, v) block by ``1 + b`` and ``areal`` scales the
    angular coefficient by ``1 + a``.  Each is a function of (rho, v) that
    accepts numpy arrays (and complex v for the analytic families).
    """

    family: str
    params: dict
    normal: Optional[Callable] = None
    conformal: Optional[Callable] = None
    areal: Optional[Callable] = None
    analytic: bool = True

    def is_zero(self):
        return self.normal is None and self.conformal is None and self.areal is None

    def to_json(self):
        return {"family": self.family, "params": dict(self.params)}


def _gauss_v(v):
    return np.exp(-np.asarray(v) ** 2)


def make_profile(family, **params):
    """Named analytic profile families (JSON-serializable by name+params)."""
    if family in ("zero", "none"):
        return RadialProfile("zero", {})
    if family == "normal_gaussian":
        eps = float(params.get("eps", 0.01))
        k = int(params.get("power", 2))
        cut = params.get("rho_cut")

        def normal(rho, v):
            return eps * np.asarray(rho) ** k * _gauss_v(v) * rho_cutoff(rho, cut)

        p = {"eps": eps, "power": k}
        if cut is not None:
            p["rho_cut"] = cut
        return RadialProfile(family, p, normal=normal)
    if family == "conformal_areal":
        ec = float(params.get("eps_conformal", 0.0))
        ea = float(params.get("eps_areal", 0.0))
        kc = int(params.get("power_conformal", 2))
        ka = int(params.get("power_areal", 1))
        cut = params.get("rho_cut", 0.5)
        conformal = areal = None
        if ec != 0.0:
            # the (1 - v) factor keeps the axis r = 0 regular in the interior
            def conformal(rho, v):
                v = np.asarray(v)
                return ec * np.asarray(rho) ** kc * (1.0 - v) * _gauss_v(v) * rho_cutoff(rho, cut)
        if ea != 0.0:
            # (1 - v) keeps the cap centre free of a conical defect
            def areal(rho, v):
                v = np.asarray(v)
                return ea * np.asarray(rho) ** ka * (1.0 - v) * _gauss_v(v) * rho_cutoff(rho, cut)
        p = {"eps_conformal": ec, "eps_areal": ea, "power_conformal": kc,
             "power_areal": ka, "rho_cut": cut}
        return RadialProfile(family, p, conformal=conformal, areal=areal)
    if family == "trapping_bump":
        amp = float(params.get("amp", 2.0))
        r0 = float(params.get("r0", 5.0))
        width = float(params.get("width", 1.0))

        def areal(rho, v):
            rho = np.asarray(rho)
            v = np.asarray(v)
            far = np.real(rho) * (r0 + 30 * width) < np.sqrt(np.abs(1.0 - v) / 2.0)
            safe = np.where(far, 1.0, rho)
            r = np.sqrt((1.0 - v) / 2.0) / safe
            bump = np.where(far, 0.0, amp * np.exp(-((r - r0) / width) ** 2))
            return (1.0 + bump) ** 2 - 1.0

        return RadialProfile(family, {"amp": amp, "r0": r0, "width": width},
                             areal=areal)
    raise ConfigError(f"unknown profile family {family!r}")


def profile_from_json(doc):
    if doc is None:
        return RadialProfile("zero", {})
    return make_profile(doc.get("family", "zero"), **doc.get("params", {}))


# ---------------------------------------------------------------------------
# the metric spec


def minkowski_block(rho, v):
    """(rho, v) frame block and angular coefficient of exact Minkowski space."""
    v = np.asarray(v)
    shape = np.broadcast(np.asarray(rho), v).shape
    v = np.broadcast_to(v, shape)
    G = np.empty(shape + (2, 2), dtype=np.result_type(v, float))
    G[..., 0, 0] = v
    G[..., 0, 1] = -0.5
    G[..., 1, 0] = -0.5
    G[..., 1, 1] = -v / (4.0 * (1.0 - v * v))
    return G, (1.0 - v) / 2.0


def minkowski_block_theta(rho, theta):
    """Same block in the polar chart (rho, theta); regular at v = +-1."""
    th = np.asarray(theta)
    shape = np.broadcast(np.asarray(rho), th).shape
    th = np.broadcast_to(th, shape)
    G = np.empty(shape + (2, 2), dtype=np.result_type(th, float))
    G[..., 0, 0] = np.cos(2 * th)
    G[..., 0, 1] = np.sin(2 * th)
    G[..., 1, 0] = np.sin(2 * th)
    G[..., 1, 1] = -np.cos(2 * th)
    return G, np.sin(th) ** 2


def round_metric_diag(y):
    """Diagonal of the round metric on S^{k} in hyperspherical angles."""
    y = np.asarray(y, dtype=np.result_type(np.asarray(y), float))
    k = y.shape[-1] if y.ndim else 0
    out = np.ones(y.shape[:-1] + (k,), dtype=y.dtype) if k else np.ones((0,))
    s2 = np.sin(y) ** 2 if k else None
    for i in range(1, k):
        out[..., i] = out[..., i - 1] * s2[..., i - 1]
    return out


@dataclass(frozen=True)
class ScatteringMetricSpec:
    n: int
    components: Callable
    perturbation_class: str = "exact_minkowski"
    radial_profile: Optional[RadialProfile] = None
    analytic: bool = True
    rho_max: float = 1.0e6

    # radial structure -------------------------------------------------
    @property
    def is_radial(self):
        return self.radial_profile is not None

    def radial_block(self, rho, v):
        """(G2, c): the (rho, v) frame block and angular coefficient."""
        if not self.is_radial:
            raise ConfigError("spec has no radial structure")
        G, c = minkowski_block(rho, v)
        return _apply_profile(self.radial_profile, rho, v, G, c)

    def radial_block_theta(self, rho, theta):
        """(G2, c) in the polar chart, v = cos(2 theta)."""
        if not self.is_radial:
            raise ConfigError("spec has no radial structure")
        G, c = minkowski_block_theta(rho, theta)
        v = np.cos(2 * np.asarray(theta))
        return _apply_profile(self.radial_profile, rho, v, G, c)

    def frame_matrix(self, point):
        rho, v, y = split_point(point, self.n)
        return np.asarray(self.components(rho, v, y))

    def to_json(self):
        prof = self.radial_profile.to_json() if self.radial_profile else None
        return {"n": self.n, "class": self.perturbation_class, "profile": prof}


def _apply_profile(prof, rho, v, G, c):
    if prof is None or prof.is_zero():
        return G, c
    if prof.conformal is not None:
        G = G * (1.0 + np.asarray(prof.conformal(rho, v)))[..., None, None]
    if prof.normal is not None:
        extra = np.asarray(prof.normal(rho, v))
        G = G.astype(np.result_type(G, extra))
        G[..., 0, 0] = G[..., 0, 0] + extra
    if prof.areal is not None:
        c = c * (1.0 + np.asarray(prof.areal(rho, v)))
    return G, c


def split_point(point, n):
    point = np.asarray(point)
    if point.shape[-1] != n:
        raise ConfigError(f"point must have {n} entries (rho, v, y...)")
    return point[0], point[1], point[2:]


def _radial_components(spec_ref):
    def components(rho, v, y):
        spec = spec_ref[0]
        n = spec.n
        G2, c = spec.radial_block(rho, v)
        dtype = np.result_type(G2, c, np.asarray(y), float)
        M = np.zeros((n, n), dtype=dtype)
        M[:2, :2] = G2
        if n > 2:
            M[2:, 2:] = np.diag(-c * round_metric_diag(y))
        return M
    return components


def _radial_spec(n, profile, cls, analytic=True):
    ref = [None]
    spec = ScatteringMetricSpec(n=n, components=_radial_components(ref),
                                perturbation_class=cls, radial_profile=profile,
                                analytic=analytic)
    ref[0] = spec
    return spec


def minkowski_metric(n):
    """Exact compactified Minkowski space of dimension n."""
    if int(n) != n or n < 2:
        raise InvalidDimensionError(f"dimension n={n} must be an integer >= 2")
    return _radial_spec(int(n), RadialProfile("zero", {}), "exact_minkowski")


def perturbed_metric(base, profile, perturbation_class):
    """Minkowski plus a radial profile, validated against its decay class."""
    if perturbation_class not in CLASSES:
        raise ConfigError(f"unknown perturbation class {perturbation_class!r}")
    if not base.is_radial or not base.radial_profile.is_zero():
        raise ConfigError("perturbations are applied to exact Minkowski")
    if isinstance(profile, dict):
        profile = profile_from_json(profile)
    spec = _radial_spec(base.n, profile, perturbation_class, analytic=profile.analytic)
    check_class(spec)
    return spec


def spec_from_json(doc):
    n = doc.get("n")
    if n is None:
        raise ConfigError("metric spec needs 'n'")
    base = minkowski_metric(n)
    prof = profile_from_json(doc.get("profile"))
    cls = doc.get("class", "exact_minkowski")
    if prof.is_zero() and cls == "exact_minkowski":
        return base
    return perturbed_metric(base, prof, cls)


# ---------------------------------------------------------------------------
# validation


def _sample_points(n, rhos, vs):
    y = np.full(n - 2, np.pi / 2)
    for r in rhos:
        for v in vs:
            yield np.concatenate([[r, v], y])


def check_signature(spec, rhos=(0.0, 0.05, 0.3), vs=np.linspace(-0.95, 0.95, 9)):
    """Exactly one positive eigenvalue of the frame matrix at sample points."""
    for pt in _sample_points(spec.n, rhos, vs):
        M = np.real(spec.frame_matrix(pt))
        ev = np.linalg.eigvalsh(M)
        if np.sum(ev > 0) != 1 or np.sum(ev < 0) != spec.n - 1:
            raise DegenerateMetricError(
                f"frame matrix not Lorentzian at {pt.tolist()}: eigenvalues {ev.tolist()}",
                point=pt.tolist())
    return True


def deviation_orders(spec, rhos=(2e-2, 1e-2, 5e-3), vs=np.linspace(-0.9, 0.9, 7)):
    """Observed rho-slopes of |spec - Minkowski| per block (normal, mixed, tangential).

    Blocks whose deviation is below 1e-13 at the smallest rho report +inf.
    """
    mink = minkowski_metric(spec.n)
    dev = np.zeros((len(rhos), 3))
    for i, r in enumerate(rhos):
        for pt in _sample_points(spec.n, [r], vs):
            D = np.abs(np.real(spec.frame_matrix(pt)) - np.real(mink.frame_matrix(pt)))
            dev[i, 0] = max(dev[i, 0], D[0, 0])
            dev[i, 1] = max(dev[i, 1], D[0, 1:].max(initial=0.0))
            dev[i, 2] = max(dev[i, 2], D[1:, 1:].max(initial=0.0))
    slopes = np.full(3, np.inf)
    for b in range(3):
        if dev[-1, b] > 1e-13:
            slopes[b] = math.log(dev[-2, b] / dev[-1, b]) / math.log(rhos[-2] / rhos[-1])
    return slopes, dev


def check_class(spec):
    """Raise ClassViolationError if the sampled decay contradicts the class tag."""
    names = ("normal", "mixed", "tangential")
    slopes, dev = deviation_orders(spec)
    if spec.perturbation_class == "exact_minkowski":
        bad = [names[b] for b in range(3) if dev[:, b].max() > 1e-13]
        if bad:
            raise ClassViolationError(f"nonzero perturbation in {bad[0]} block of an exact spec",
                                      block=bad[0])
        return True
    need = _CLASS_ORDERS[spec.perturbation_class]
    for b in range(3):
        if slopes[b] < need[b] - 0.25:
            raise ClassViolationError(
                f"{names[b]} block decays like rho^{slopes[b]:.2f}, class "
                f"{spec.perturbation_class} needs rho^{need[b]}", block=names[b])
    return True


# ---------------------------------------------------------------------------
# derivatives


def partial_derivative(f, point, i, analytic, scale=1.0):
    """d f / d x_i at a real point.

    Complex step for analytic callbacks, central differences with
    h = eps^(1/3) * scale otherwise.
    """
    point = np.asarray(point, dtype=float)
    if analytic:
        h = 1e-30
        p = point.astype(complex)
        p[i] += 1j * h
        return np.imag(np.asarray(f(p))) / h
    h = np.finfo(float).eps ** (1.0 / 3.0) * max(scale, abs(point[i]))
    pp = point.copy()
    pm = point.copy()
    pp[i] += h
    pm[i] -= h
    return (np.asarray(f(pp)) - np.asarray(f(pm))) / (2 * h)


def metric_jet(spec, point):
    """Frame matrix G and its coordinate derivatives dG[i] (i over rho, v, y)."""
    point = np.asarray(point, dtype=float)
    G = np.real(spec.frame_matrix(point))
    dG = np.array([partial_derivative(spec.frame_matrix, point, i, spec.analytic)
                   for i in range(spec.n)])
    return G, dG


# ---------------------------------------------------------------------------
# dual metric, cap metric, wave operator


@dataclass(frozen=True)
class DualMetricEval:
    ginv: np.ndarray
    logvol_grad: np.ndarray
    point: tuple


def _invert(G, point):
    det = np.linalg.det(G)
    if abs(det) < 1e-12:
        raise DegenerateMetricError(f"frame matrix singular at {list(point)} (det={det:.3e})",
                                    point=list(point))
    return np.linalg.inv(G)


def dual_metric_at(spec, point):
    """Inverse frame matrix and grad of (1/2) log|g| in coordinates (rho, v, y)."""
    point = np.asarray(point, dtype=float)
    rho, v = point[0], point[1]
    if rho < 0 or rho >= spec.rho_max or abs(v) >= 1:
        raise OutOfRegionError(f"point {point.tolist()} outside the collar")
    G, dG = metric_jet(spec, point)
    Gi = _invert(G, point)
    dlogA = 0.5 * np.einsum("ij,kji->k", Gi, dG)
    grad = dlogA.copy()
    grad[0] += -(spec.n + 1) / rho if rho > 0 else -np.inf
    return DualMetricEval(Gi, grad, tuple(point.tolist()))


@dataclass(frozen=True)
class CapMetricEval:
    Kinv: np.ndarray
    kinv: np.ndarray
    side: str
    point: tuple


def cap_metric(spec, side, v, y=None):
    """Boundary dual metric K^{-1} and the cap dual metric (K/v)^{-1}."""
    if side not in ("plus_cap", "minus_cap", "equatorial"):
        raise ConfigError(f"unknown side {side!r}")
    if side in ("plus_cap", "minus_cap") and not v > 0:
        raise OutOfRegionError(f"{side} requires v > 0, got v={v}")
    if side == "equatorial" and not v < 0:
        raise OutOfRegionError(f"equatorial region requires v < 0, got v={v}")
    if y is None:
        y = np.full(spec.n - 2, np.pi / 2)
    pt = np.concatenate([[0.0, v], np.asarray(y, dtype=float)])
    Gi = _invert(np.real(spec.frame_matrix(pt)), pt)
    Kinv = -Gi[1:, 1:]
    return CapMetricEval(Kinv, v * Kinv, side, tuple(pt.tolist()))


@dataclass(frozen=True)
class BoxCoefficients:
    """rho^{-2} box_g = sum M_ij X_i X_j + sum b_i X_i + c0,
    with X = (rho d_rho, d_v, d_y1, ...)."""

    second: np.ndarray
    first: np.ndarray
    zeroth: float
    point: tuple

    @property
    def d0d0(self):
        return self.second[0, 0]

    @property
    def d0_dv(self):
        return 2 * self.second[0, 1]

    @property
    def dvdv(self):
        return self.second[1, 1]

    @property
    def d0(self):
        return self.first[0]

    @property
    def dv(self):
        return self.first[1]

    def apply(self, grad, hess):
        """Evaluate on a function given X-gradient and X-Hessian at the point."""
        return float(np.sum(self.second * np.asarray(hess)) + self.first @ np.asarray(grad)
                     + self.zeroth)


def box_coefficients(spec, point):
    """Coefficients of rho^{-2} box_g in the b-vector fields (rho d_rho, d_v, d_y)."""
    point = np.asarray(point, dtype=float)
    rho = point[0]
    n = spec.n
    G, dG = metric_jet(spec, point)
    Gi = _invert(G, point)
    dGi = -np.einsum("ij,kjl,lm->kim", Gi, dG, Gi)
    dlogA = 0.5 * np.einsum("ij,kji->k", Gi, dG)
    b = (2 - n) * Gi[0] + rho * (dGi[0, 0] + Gi[0] * dlogA[0])
    for j in range(1, n):
        b = b + dGi[j, j] + Gi[j] * dlogA[j]
    return BoxCoefficients(Gi, b, 0.0, tuple(point.tolist()))
