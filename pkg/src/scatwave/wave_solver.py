"""Characteristic evolution of spherical-harmonic modes out to null infinity.

Double-null coordinates ``p = t + r``, ``q = t - r``.  For a metric of the
form ``Omega^2 (dt^2 - dr^2) - R^2 d omega^2`` (Minkowski with a conformal
factor on the (t, r) block and a perturbed areal radius) the mode
``w = R^{-m} psi Y_ell``, ``m = (n-2)/2``, of ``box_g w = f Y_ell`` obeys

    psi_pq = Q psi + Omega^2 R^m f / 4,
    Q = m (m log(R)_p log(R)_q + log(R)_pq) - Omega^2 L / (4 R^2),

with ``L = ell (ell + n - 3)``.  In flat space ``Q = -V/4`` with
``V = k (k - 1) / r^2`` and ``k = ell + m``.  Null lines stay null under the
perturbation, so the grid never has to adapt to the metric.

The unknown ``psi`` vanishes on the axis like ``r^k``.  Away from the axis
each null cell uses the second-order diamond rule.  In the cell touching
the axis the centrifugal integral is computed exactly for
``psi = r^k * (linear)``; the plain midpoint rule there is unstable once
``k`` exceeds about 2.  The scheme is stable for ``k <= 3``.

Nodes are shared by p and q so that axis points ``p = q`` are grid points:
uniform spacing in the source region, geometric growth afterwards and a
far zone that is uniform in ``x = 1/p`` (optionally ending at ``x = 0``,
which is null infinity itself).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numba
import numpy as np
from scipy.interpolate import CubicSpline

from .errors import (
    ConfigError,
    ExtractionFailure,
    InstabilityError,
    InvalidDimensionError,
    PreconditionError,
    ReductionUnavailableError,
)
from .geometry import RadialProfile, ScatteringMetricSpec

# ---------------------------------------------------------------------------
# sources


def poly_bump(x, a, b):
    """(1 - y^2)^4 on (a, b) with y mapped to (-1, 1); zero outside."""
    x = np.asarray(x, dtype=float)
    y = (2.0 * x - a - b) / (b - a)
    return np.where(np.abs(y) < 1.0, (1.0 - y * y) ** 4, 0.0)


@dataclass(frozen=True)
class SourceSpec:
    """Mode source f_ell(t, r); ``kind`` is 'bump', 'gaussian' or 'zero'.

    bump:     amp * b(t; t0, t1) * b(r; r0, r1)
    gaussian: amp * exp(-(t - tc)^2 / st^2 - r^2 / sx^2)
    """

    kind: str = "bump"
    params: dict = field(default_factory=dict)

    def __call__(self, t, r):
        p = self.params
        t = np.asarray(t, dtype=float)
        r = np.asarray(r, dtype=float)
        if self.kind == "zero":
            return np.zeros(np.broadcast(t, r).shape)
        if self.kind == "bump":
            return p.get("amp", 1.0) * poly_bump(t, p["t0"], p["t1"]) * poly_bump(r, p["r0"], p["r1"])
        if self.kind == "gaussian":
            return p.get("amp", 1.0) * np.exp(-((t - p["tc"]) / p["st"]) ** 2 - (r / p["sx"]) ** 2)
        raise ConfigError(f"unknown source kind {self.kind!r}")

    def null_support(self):
        """(q_min, q_max, p_min, p_max) of the (effective) support."""
        p = self.params
        if self.kind == "bump":
            return (p["t0"] - p["r1"], p["t1"] - p["r0"], p["t0"] + p["r0"], p["t1"] + p["r1"])
        if self.kind == "gaussian":
            w = 6.5 * max(p["st"], p["sx"])
            return (p["tc"] - w, p["tc"] + w, p["tc"] - w, p["tc"] + w)
        return (0.0, 0.0, 0.0, 0.0)

    def mass(self, n):
        """Integral of f over t and R^{n-1} (ell = 0 interpretation)."""
        p = self.params
        d = n - 1
        area = 2 * math.pi ** (d / 2) / math.gamma(d / 2)
        if self.kind == "gaussian":
            return p.get("amp", 1.0) * math.sqrt(math.pi) * p["st"] * math.pi ** (d / 2) * p["sx"] ** d
        if self.kind == "bump":
            from scipy.integrate import quad
            ft = quad(lambda t: poly_bump(t, p["t0"], p["t1"]), p["t0"], p["t1"])[0]
            fr = quad(lambda r: poly_bump(r, p["r0"], p["r1"]) * r ** (d - 1), p["r0"], p["r1"])[0]
            return p.get("amp", 1.0) * area * ft * fr
        return 0.0

    def to_json(self):
        return {"kind": self.kind, "params": dict(self.params)}


def default_source():
    return SourceSpec("bump", {"t0": 1.0, "t1": 3.0, "r0": 0.5, "r1": 2.5, "amp": 1.0})


# ---------------------------------------------------------------------------
# grids


@dataclass(frozen=True)
class NodeSet:
    z: np.ndarray        # node values (p and q), last may be +inf
    x_start: int         # nodes with index >= x_start are uniform in 1/z
    h: float

    @property
    def x(self):
        with np.errstate(divide="ignore"):
            return 1.0 / self.z


def make_nodes(z_start, h, z_uniform, z_geom, p_max, infinity=False):
    """Uniform step h to z_uniform, ratio (1 + h/z_uniform) to z_geom,
    then uniform in 1/z down to 1/p_max (or to 0 with ``infinity``)."""
    if not (z_start < z_uniform <= z_geom):
        raise ConfigError("need z_start < z_uniform <= z_geom")
    n1 = max(1, int(round((z_uniform - z_start) / h)))
    z = list(z_start + h * np.arange(n1 + 1))
    zu = z[-1]
    ratio = 1.0 + h / zu
    while z[-1] < z_geom * (1 - 1e-12):
        z.append(min(z[-1] * ratio, z_geom) if z[-1] * ratio < z_geom * (1 + 0.5 * h / zu) else z[-1] * ratio)
    x0 = 1.0 / z[-1]
    x_end = 0.0 if infinity else 1.0 / p_max
    if x_end >= x0:
        raise ConfigError("p_max must exceed the geometric zone")
    dx = x0 * h / zu
    k = max(6, int(math.ceil((x0 - x_end) / dx)))
    xs = np.linspace(x0, x_end, k + 1)[1:]
    x_start = len(z) - 1
    with np.errstate(divide="ignore"):
        tail = 1.0 / xs
    z = np.concatenate([np.array(z), tail])
    return NodeSet(z, x_start, h)


# ---------------------------------------------------------------------------
# mode problem


K_MAX = 3.0


@dataclass
class ModeProblem:
    n: int
    ell: int
    source: SourceSpec
    nodes: NodeSet
    q_max: float
    profile: Optional[RadialProfile] = None
    initial_data: Optional[Callable] = None
    spec_json: Optional[dict] = None

    @property
    def m(self):
        return (self.n - 2) / 2.0

    @property
    def k(self):
        return self.ell + self.m

    @property
    def L(self):
        return self.ell * (self.ell + self.n - 3)

    @property
    def nq(self):
        return int(np.searchsorted(self.nodes.z, self.q_max * (1 + 1e-12), side="right"))

    def potential(self, r):
        """Flat mode potential V(r) = [(n-2)(n-4)/4 + ell(ell+n-3)] / r^2."""
        r = np.asarray(r, dtype=float)
        return ((self.n - 2) * (self.n - 4) / 4.0 + self.L) / r ** 2


def _collar(t, r):
    s2 = t * t + r * r
    rho = 1.0 / np.sqrt(s2)
    v = (t * t - r * r) / s2
    return rho, v


def _profile_fields(profile, p, q):
    """(a, b) = (areal, conformal) perturbations at null points."""
    t = 0.5 * (p + q)
    r = 0.5 * (p - q)
    rho, v = _collar(t, r)
    a = np.zeros_like(t) if profile is None or profile.areal is None else np.asarray(profile.areal(rho, v), float)
    b = np.zeros_like(t) if profile is None or profile.conformal is None else np.asarray(profile.conformal(rho, v), float)
    return a + 0 * t, b + 0 * t


def _eta(profile, p, q):
    a, _ = _profile_fields(profile, p, q)
    return 0.5 * np.log1p(a)


def _eta_derivatives(profile, p, q):
    """eta = log(R/r) and its first/mixed null derivatives by central differences."""
    d = 1e-4 * (1.0 + np.abs(p))
    e = lambda dp, dq: _eta(profile, p + dp, q + dq)
    ep = (e(d, 0) - e(-d, 0)) / (2 * d)
    eq = (e(0, d) - e(0, -d)) / (2 * d)
    epq = (e(d, d) - e(d, -d) - e(-d, d) + e(-d, -d)) / (4 * d * d)
    return ep, eq, epq


def assemble_mode_problem(spec, n, ell, source=None, h=0.05, q_max=60.0, p_max=None,
                          z_uniform=None, z_geom=None, infinity=False, initial_data=None):
    """Per-mode characteristic problem for a spherically symmetric spec.

    The grid starts on the outgoing null line just before the source and
    reaches q = q_max.  Without ``infinity`` the last p-level is ``p_max``.
    """
    if int(n) != n or n < 2:
        raise InvalidDimensionError(f"dimension n={n} must be an integer >= 2")
    if ell < 0 or int(ell) != ell:
        raise ConfigError("ell must be a non-negative integer")
    if ell + (n - 2) / 2 > K_MAX:
        raise ConfigError(f"ell + (n-2)/2 = {ell + (n - 2) / 2} exceeds the stable range k <= {K_MAX}")
    if n < 3:
        raise InvalidDimensionError("mode evolution needs n >= 3")
    profile = None
    if spec is not None:
        if spec.n != n:
            raise ConfigError(f"spec dimension {spec.n} differs from n={n}")
        if not spec.is_radial:
            raise ReductionUnavailableError("mode reduction needs a spherically symmetric spec")
        profile = spec.radial_profile
        if profile is not None and profile.is_zero():
            profile = None
        if profile is not None and profile.normal is not None:
            raise ReductionUnavailableError(
                "normal-block perturbations bend the null cones; the double-null "
                "mode reduction supports conformal and areal profiles only")
    source = source or default_source()
    qlo, qhi, plo, phi = source.null_support()
    margin = 4 * h
    z_start = qlo - margin
    if z_uniform is None:
        z_uniform = max(phi + 10 * h, z_start + 20 * h)
    if z_geom is None:
        z_geom = max(q_max * 1.0001, z_uniform)
    if q_max > z_geom * (1 + 1e-9):
        raise ConfigError("q_max must not exceed the geometric zone")
    if p_max is None:
        p_max = 100.0 * z_geom
    nodes = make_nodes(z_start, h, z_uniform, z_geom, p_max, infinity=infinity)
    return ModeProblem(int(n), int(ell), source, nodes, float(q_max), profile,
                       initial_data, spec.to_json() if spec is not None else None)


# ---------------------------------------------------------------------------
# marching kernel


@numba.njit(cache=True)
def _march_row(prev, new, i0, ce, cw, cs, den, src):
    """new[i] = (ce*prev[i] + cw*new[i-1] + cs*prev[i-1] + src) / den for i >= i0."""
    for i in range(i0, prev.shape[0]):
        k = i - i0
        new[i] = (ce[k] * prev[i] + cw[k] * new[i - 1] + cs[k] * prev[i - 1] + src[k]) / den[k]


@dataclass
class WaveField:
    values: np.ndarray      # (nq, np) grid of psi, NaN where p < q
    p: np.ndarray
    q: np.ndarray
    problem: ModeProblem
    chart: str = "null"
    scheme: str = "diamond-2"

    @property
    def n(self):
        return self.problem.n

    @property
    def ell(self):
        return self.problem.ell

    @property
    def h(self):
        return self.problem.nodes.h

    def psi(self):
        return self.values

    def psi_at(self, p, q):
        """Bilinear interpolation of psi at points inside the grid."""
        P = np.asarray(p, float)
        Q = np.asarray(q, float)
        ps = self.values
        i = np.clip(np.searchsorted(self.p, P) - 1, 0, len(self.p) - 2)
        j = np.clip(np.searchsorted(self.q, Q) - 1, 0, len(self.q) - 2)
        sp = (P - self.p[i]) / (self.p[i + 1] - self.p[i])
        sq = (Q - self.q[j]) / (self.q[j + 1] - self.q[j])
        return ((1 - sp) * (1 - sq) * ps[j, i] + sp * (1 - sq) * ps[j, i + 1]
                + (1 - sp) * sq * ps[j + 1, i] + sp * sq * ps[j + 1, i + 1])

    def header(self):
        pr = self.problem
        return {"n": pr.n, "ell": pr.ell, "h": pr.nodes.h, "p_max": float(self.p[-1]),
                "q_max": float(self.q[-1]), "scheme": self.scheme, "chart": self.chart,
                "source": pr.source.to_json(), "metric": pr.spec_json}


def _row_coefficients(pr, j, z, x, x_start):
    """Midpoint-rule cell coefficients for q_j -> q_{j+1}, cells i = j+2 .. N-1."""
    qa, qb = z[j], z[j + 1]
    dq = qb - qa
    qc = 0.5 * (qa + qb)
    ia = np.arange(j + 1, len(z) - 1)       # left edges
    ib = ia + 1
    pa, pb = z[ia], z[ib]
    xcell = ia >= x_start
    with np.errstate(invalid="ignore", divide="ignore"):
        xc = 0.5 * (x[ia] + x[ib])
        pc = np.where(xcell, 1.0 / xc, 0.5 * (pa + pb))
        wP = np.where(xcell, (x[ia] - x[ib]) / xc ** 2, pb - pa)
    r = 0.5 * (pc - qc)
    t = 0.5 * (pc + qc)
    k, m, L = pr.k, pr.m, pr.L
    prof = pr.profile
    if prof is None:
        a = b = dW = np.zeros_like(r)
    else:
        a, b = _profile_fields(prof, pc, np.full_like(pc, qc))
        ep, eq, epq = _eta_derivatives(prof, pc, np.full_like(pc, qc))
        er = ep - eq
        dM = m * (-m * er / (2 * r) + m * ep * eq + epq)
        dW = dM + L * (a - b) / (4 * r * r * (1 + a))
    f = pr.source(t, r)
    W = -k * (k - 1) / (4 * r * r) + dW
    S = (1 + b) * (1 + a) ** (m / 2) * r ** m * f / 4
    gamma = W * wP * dq / 2
    sig = S * wP * dq
    one = np.ones_like(r)
    return one + gamma, one + gamma, -one, one, sig, dW * wP * dq / 2


_QUAD_CACHE = {}


def _rules(k, nodes):
    from scipy.special import roots_jacobi, roots_legendre
    key = (k, nodes)
    if key not in _QUAD_CACHE:
        xj, wj = roots_jacobi(nodes, 0.0, k - 1.0)
        xl, wl = roots_legendre(nodes)
        _QUAD_CACHE[key] = ((xj + 1) / 2, wj / 2 ** k, (xl + 1) / 2, wl / 2)
    return _QUAD_CACHE[key]


def _axis_cell_weights(k, dp, dq, nodes=20):
    """Exact centrifugal weights for the cell whose west corner is on the axis.

    Returns (aS, aE, aN) with
    int int k(k-1)/(4 r^2) psi dp dq = aS psi_S + aE psi_E + aN psi_N
    for psi = r^k * (linear interpolant of psi / r^k through S, E, N).
    The r^{k-2} corner singularity is removed by a Duffy split and
    Gauss-Jacobi quadrature in the radial variable.
    """
    s, ws, w, ww = _rules(k, nodes)
    dp = np.asarray(dp, float)[:, None, None]
    dq = np.asarray(dq, float)[:, None, None]
    S_, Wn = s[None, :, None], w[None, None, :]
    wt = ws[None, :, None] * ww[None, None, :]
    # u = (p - p_a)/dp, v' = (q_b - q)/dq ; r = (u dp + v' dq) / 2
    parts = []
    for U, Vp, lin in ((S_, S_ * Wn, (dp + Wn * dq) / 2), (S_ * Wn, S_, (Wn * dp + dq) / 2)):
        parts.append((wt * lin ** (k - 2), U, 1 - Vp))
    out = []
    for basis in (lambda U, V: 1 - U, lambda U, V: U - V, lambda U, V: V):
        tot = sum(np.sum(g * basis(U, V), axis=(1, 2)) for g, U, V in parts)
        out.append(k * (k - 1) / 4.0 * tot * dp[:, 0, 0] * dq[:, 0, 0])
    rS = dq[:, 0, 0] / 2
    rE = (dp[:, 0, 0] + dq[:, 0, 0]) / 2
    rN = dp[:, 0, 0] / 2
    return out[0] / rS ** k, out[1] / rE ** k, out[2] / rN ** k


def _near_cell_weights(k, pa, pb, qa, qb, nodes=10):
    """Centrifugal weights (aS, aE, aW, aN) for cells clear of the axis, exact
    for psi = r^k * (bilinear interpolant of psi / r^k)."""
    _, _, u, wu = _rules(k, nodes)
    U = u[None, :, None]
    V = u[None, None, :]
    wt = wu[None, :, None] * wu[None, None, :]
    pa, pb = pa[:, None, None], pb[:, None, None]
    P = pa + U * (pb - pa)
    Q = qa + V * (qb - qa)
    r = 0.5 * (P - Q)
    g = wt * k * (k - 1) / 4.0 * r ** (k - 2) * (pb - pa) * (qb - qa)
    rad = lambda pp, qq: (0.5 * (pp - qq)) ** k
    aS = np.sum(g * (1 - U) * (1 - V), axis=(1, 2)) / rad(pa, qa)[:, 0, 0]
    aE = np.sum(g * U * (1 - V), axis=(1, 2)) / rad(pb, qa)[:, 0, 0]
    aW = np.sum(g * (1 - U) * V, axis=(1, 2)) / rad(pa, qb)[:, 0, 0]
    aN = np.sum(g * U * V, axis=(1, 2)) / rad(pb, qb)[:, 0, 0]
    return aS, aE, aW, aN


# number of cells next to the axis that get exact centrifugal weights; more
# than one is only stable for k <= 2
def _n_exact(k):
    return 64 if k <= 2 else 1


def _evolve(pr, chart):
    nodes = pr.nodes
    z = nodes.z
    x = nodes.x
    N = len(z)
    nq = pr.nq
    if nq < 3:
        raise ConfigError("q range too short")
    if pr.initial_data is not None:
        vals = np.asarray(pr.initial_data(z[z < np.inf]), float)
        if np.any(vals != 0):
            raise PreconditionError(
                "initial data on the first null line must vanish: a forward solution is "
                "zero before the source switches on")
    U = np.full((nq, N), np.nan)
    U[0, :] = 0.0
    k = pr.k
    jj = np.arange(nq - 1)
    aS, aE, aN = _axis_cell_weights(k, z[jj + 2] - z[jj + 1], z[jj + 1] - z[jj])
    n_exact = _n_exact(k)
    for j in range(nq - 1):
        prev = U[j]
        new = U[j + 1]
        new[j] = np.nan
        new[j + 1] = 0.0
        if j + 2 < N:
            ce, cw, cs, den, sig, gpert = _row_coefficients(pr, j, z, x, nodes.x_start)
            # cell next to the axis: exact flat centrifugal weights, midpoint
            # rule for the (axis-suppressed) perturbation
            ce[0] = 1.0 - aE[j] + gpert[0]
            cs[0] = -1.0 - aS[j]
            den[0] = 1.0 + aN[j]
            ne = min(n_exact, N - j - 2)
            if ne > 1 and k != 1.0:
                i = np.arange(j + 3, j + 2 + ne)
                i = i[np.isfinite(z[i])]
                l = i - j - 2
                wS, wE, wW, wN = _near_cell_weights(k, z[i - 1], z[i], z[j], z[j + 1])
                ce[l] = 1.0 - wE + gpert[l]
                cw[l] = 1.0 - wW + gpert[l]
                cs[l] = -1.0 - wS
                den[l] = 1.0 + wN
            _march_row(prev, new, j + 2, ce, cw, cs, den, sig)
        row = new[j + 1:]
        if not np.all(np.isfinite(row)) or np.max(np.abs(row)) > 1e100:
            bad = j + 1 + int(np.argmax(~np.isfinite(row) | (np.abs(row) > 1e100)))
            raise InstabilityError("non-finite or exploding field",
                                   q=float(z[j + 1]), p=float(z[bad]))
    return WaveField(U, z.copy(), z[:nq].copy(), pr, chart)


def evolve_characteristic(problem):
    """Diamond-scheme evolution on the null grid up to the finite p_max."""
    if np.isinf(problem.nodes.z[-1]):
        raise ConfigError("evolve_characteristic needs a finite p_max; "
                          "use solve_on_blowup_chart for null infinity")
    return _evolve(problem, "null")


def chart_problem(spec, n, ell, source=None, h=0.05, q_max=40.0):
    """Mode problem on the compactified chart (x = 1/p, q) with x = 0 included.

    Nodes are uniform in p up to q_max and then uniform in x down to x = 0,
    so no geometric zone and no extrapolation are involved.
    """
    source = source or default_source()
    zu = max(q_max * 1.0001, source.null_support()[3] + 10 * h)
    return assemble_mode_problem(spec, n, ell, source, h=h, q_max=q_max, z_uniform=zu,
                                 z_geom=zu, infinity=True)


def solve_on_blowup_chart(problem):
    """Evolution in the compactified chart (x = 1/p, q), x = 0 included.

    ``x`` is a boundary defining function near the front face and ``q`` the
    corresponding front-face coordinate.  The equation stays regular at
    x = 0, so the last column holds the limit of psi at null infinity.
    """
    if not np.isinf(problem.nodes.z[-1]):
        raise ConfigError("blow-up chart problems need infinity=True")
    cls = (problem.spec_json or {}).get("class", "exact_minkowski")
    if cls not in ("exact_minkowski", "normally_very_short_range"):
        raise PreconditionError("the blow-up chart solver needs exact Minkowski or a "
                                "very-short-range perturbation", perturbation_class=cls)
    return _evolve(problem, "blowup")


# ---------------------------------------------------------------------------
# radiation field


@dataclass
class RadiationField:
    q: np.ndarray
    R: np.ndarray
    order: np.ndarray            # observed convergence exponent in 1/p per q
    residual: np.ndarray         # extrapolation fit residual per q
    n: int
    ell: int
    convention: str = "r"        # 'r': d_q psi ; 'rho': d_s u with s = sqrt(2) q
    model: str = "poly"

    def to_rows(self):
        return [(float(a), float(b)) for a, b in zip(self.q, self.R)]

    def rho_convention(self):
        """(s, d_s u) with u = rho^{-(n-2)/2} w, rho = (t^2 + r^2 + 1)^{-1/2}, s = v / rho.

        At the front face s = sqrt(2) q and u = 2^{(n-2)/4} psi, so
        d_s u = 2^{(n-2)/4} / sqrt(2) * d_q psi.
        """
        if self.convention == "rho":
            return self.q, self.R
        fac = 2.0 ** ((self.n - 2) / 4.0) / math.sqrt(2.0)
        return math.sqrt(2.0) * self.q, fac * self.R

    def energy(self):
        """Radiated flux, the integral of R^2 dq."""
        return float(np.trapezoid(self.R ** 2, self.q))


def _fit_levels(x, D, basis):
    A = np.stack([b(x) for b in basis], axis=1)
    coef, *_ = np.linalg.lstsq(A, D, rcond=None)
    resid = np.sqrt(np.mean((A @ coef - D) ** 2, axis=0))
    return coef[0], resid


def extract_radiation_field(field, levels=6, degree=3, tol=1e-3):
    """R(q) = lim_{p -> inf} d_q psi(p, q).

    d_q psi on the last ``levels`` p-levels is fitted by a degree-3
    polynomial in x = 1/p and evaluated at x = 0.  If that fit misses the
    data, a basis with an x log x term is tried.  Blow-up chart fields
    already contain the limit in their last column.
    """
    ps = field.values
    q = field.q
    nq = len(q)
    if field.chart == "blowup":
        R = np.gradient(ps[:, -1], q, edge_order=2)
        zero = np.zeros(nq)
        return RadiationField(q, R, np.full(nq, np.nan), zero, field.n, field.ell, model="exact")
    x = 1.0 / field.p[-levels:]
    D = np.stack([np.gradient(ps[:, -levels + i], q, edge_order=2) for i in range(levels)])
    scale = np.max(np.abs(D), axis=0)
    if not np.any(scale > 0):
        zero = np.zeros(nq)
        return RadiationField(q, zero, np.full(nq, np.nan), zero, field.n, field.ell)
    floor = 1e-12 * np.max(scale)
    live = scale > floor
    poly = [lambda x, k=k: x ** k for k in range(degree + 1)]
    models = [("poly", poly),
              ("log", poly[:2] + [lambda x: x * np.log(x)] + poly[2:degree])]
    for name, basis in models:
        R, resid = _fit_levels(x, D, basis)
        bad = resid > tol * scale + floor
        frac = float(np.mean(bad[live]))
        if frac <= 0.1:
            break
    else:
        worst = int(np.argmax(np.where(live, resid / (scale + floor), 0)))
        raise ExtractionFailure("extrapolation in 1/p does not converge",
                                worst_q=float(q[worst]), fraction=frac)
    with np.errstate(divide="ignore", invalid="ignore"):
        dev = np.log(np.maximum(np.abs(D - R[None, :]), 1e-300))
        order = np.polyfit(np.log(x), dev, 1)[0]
    order = np.where(live, order, np.nan)
    return RadiationField(q, R, order, resid, field.n, field.ell, model=name)


def front_face(field):
    """(s, u(0, s), d_s u(0, s)) in the rho-based convention."""
    if field.chart != "blowup":
        raise ConfigError("front_face needs a blow-up chart field")
    m = (field.n - 2) / 2.0
    s = math.sqrt(2.0) * field.q
    u = 2.0 ** (m / 2) * field.values[:, -1]
    du = np.gradient(u, s, edge_order=2)
    return s, u, du


def rho_radiation_field(field):
    """Radiation field read off the blow-up chart in the rho-based convention."""
    s, u, du = front_face(field)
    zero = np.zeros_like(s)
    return RadiationField(s, du, np.full_like(s, np.nan), zero, field.n, field.ell, "rho", "exact")


def chart_agreement(rf_r, rf_rho, s_min, s_max):
    """Max relative difference of the two radiation fields on [s_min, s_max].

    The r-based field is converted with R_rho(s) = 2^{(n-2)/4} / sqrt(2) * R(s / sqrt(2)).
    """
    s, Rr = rf_r.rho_convention()
    sel = (rf_rho.q >= s_min) & (rf_rho.q <= s_max)
    other = np.interp(rf_rho.q[sel], s, Rr)
    ref = rf_rho.R[sel]
    return float(np.max(np.abs(other - ref)) / np.max(np.abs(ref)))


def resample_geometric(rf, s_min, s_max, ratio=1.05, rho_based=True):
    """Cubic-spline resampling of the radiation field on a geometric s-grid."""
    s_all, R_all = rf.rho_convention() if rho_based else (rf.q, rf.R)
    count = int(math.ceil(math.log(s_max / s_min) / math.log(ratio))) + 1
    s = np.geomspace(s_min, s_max, count)
    keep = (s_all >= s_min / 1.2) & (s_all <= s_max * 1.2)
    return s, CubicSpline(s_all[keep], R_all[keep])(s)


def observed_order(e_coarse, e_mid, e_fine=None, ratio=2.0):
    """Convergence order from errors at h, h/ratio (or three successive solutions)."""
    if e_fine is None:
        return math.log(abs(e_coarse) / abs(e_mid)) / math.log(ratio)
    return math.log(abs(e_coarse - e_mid) / abs(e_mid - e_fine)) / math.log(ratio)


def tail_problem(spec, n, ell, s_max, h=0.05, source=None, z_uniform=20.0, p_max=1e6):
    """r-chart problem whose radiation field reaches s = s_max (rho convention).

    The grid is uniform up to ``z_uniform``, geometric in p up to the last
    retarded time and uniform in 1/p out to ``p_max``.
    """
    q_max = 1.02 * s_max / math.sqrt(2.0)
    source = source or default_source()
    zu = max(z_uniform, source.null_support()[3] + 10 * h)
    return assemble_mode_problem(spec, n, ell, source, h=h, q_max=q_max, z_uniform=zu,
                                 z_geom=max(q_max, zu), p_max=p_max)


def radiation_field_to(spec, n, ell, s_max, h=0.05, source=None, z_uniform=20.0, p_max=1e6):
    """Evolve and extract on the grid of :func:`tail_problem`."""
    pr = tail_problem(spec, n, ell, s_max, h, source, z_uniform, p_max)
    return extract_radiation_field(evolve_characteristic(pr))
