"""Null bicharacteristics of the b-principal symbol of rho^{-2} box_g.

Covectors are written ``xi d rho/rho + gamma dv + eta dy`` and the symbol is
``lambda = zeta^T G^{-1} zeta`` with ``zeta = (xi, gamma, eta)`` and ``G`` the
frame matrix.  The b-Hamilton field is canonical in ``(log rho, v, y)``.

Integration is done on the fibre sphere: the state carries the unit covector
``zeta / |zeta|`` and ``log |zeta|`` separately.  This is the flow rescaled by
``1/|zeta|`` (equal to ``1/|gamma|`` up to a bounded factor near the radial
set), so radial points become hyperbolic fixed points reached in finite
parameter without overflow.  Spherically symmetric specs are integrated in the
polar chart ``(rho, theta)`` with ``v = cos 2 theta`` so that trajectories can
cross the t-axis and reach the past radial set.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import DOP853

from .errors import ChartError, ConfigError, IntegratorFailure
from .geometry import dual_metric_at, metric_jet, round_metric_diag


@dataclass(frozen=True)
class BCotangentPoint:
    base: tuple
    fiber: tuple
    chart: str = "v"

    def as_arrays(self):
        return np.asarray(self.base, dtype=float), np.asarray(self.fiber, dtype=float)


@dataclass
class FlowTrajectory:
    samples: list
    terminal_class: str
    rescale: list
    chart: str
    lambda_drift: float
    start: BCotangentPoint = None

    def to_rows(self):
        rows = []
        for (s, pt), nu in zip(self.samples, self.rescale):
            rows.append([s, *pt.base, *pt.fiber, nu])
        return rows


# ---------------------------------------------------------------------------
# charts: each returns the inverse frame matrix and its coordinate derivatives


class _GenericChart:
    name = "v"

    def __init__(self, spec):
        self.spec = spec
        self.n = spec.n

    def jet(self, x):
        G, dG = metric_jet(self.spec, x)
        Gi = np.linalg.inv(G)
        dGi = -np.einsum("ij,kjl,lm->kim", Gi, dG, Gi)
        return Gi, dGi


class _PolarChart:
    """(rho, theta, y) chart for spherically symmetric specs."""

    name = "theta"

    def __init__(self, spec):
        if not spec.is_radial:
            raise ChartError("the polar chart needs a spherically symmetric spec")
        self.spec = spec
        self.n = spec.n

    def _block(self, rho, th):
        G2, c = self.spec.radial_block_theta(rho, th)
        return np.asarray(G2), np.asarray(c)

    def _block_deriv(self, rho, th, which):
        if self.spec.analytic:
            h = 1e-30
            if which == 0:
                G2, c = self._block(rho + 1j * h, th)
            else:
                G2, c = self._block(rho, th + 1j * h)
            return np.imag(G2) / h, np.imag(c) / h
        h = np.finfo(float).eps ** (1 / 3) * max(1.0, abs(rho if which == 0 else th))
        if which == 0:
            (Gp, cp), (Gm, cm) = self._block(rho + h, th), self._block(rho - h, th)
        else:
            (Gp, cp), (Gm, cm) = self._block(rho, th + h), self._block(rho, th - h)
        return (Gp - Gm) / (2 * h), (cp - cm) / (2 * h)

    def jet(self, x):
        n = self.n
        rho, th, y = x[0], x[1], x[2:]
        G2, c = self._block(rho, th)
        G2 = np.real(G2)
        c = float(np.real(c))
        d = [self._block_deriv(rho, th, 0), self._block_deriv(rho, th, 1)]
        det = G2[0, 0] * G2[1, 1] - G2[0, 1] ** 2
        if abs(det) < 1e-14 or (n > 2 and c <= 0):
            raise ChartError(f"degenerate polar chart at {list(x)}")
        G2i = np.array([[G2[1, 1], -G2[0, 1]], [-G2[0, 1], G2[0, 0]]]) / det
        Gi = np.zeros((n, n))
        Gi[:2, :2] = G2i
        dGi = np.zeros((n, n, n))
        for k in range(2):
            dGi[k, :2, :2] = -G2i @ d[k][0] @ G2i
        if n > 2:
            rd = round_metric_diag(y)
            ang = -1.0 / (c * rd)
            Gi[2:, 2:] = np.diag(ang)
            for k in range(2):
                dGi[k, 2:, 2:] = np.diag(-ang * d[k][1] / c)
            # d/dy_j of 1/round_i = -2 cot(y_j)/round_i for j < i
            for j in range(n - 2):
                col = np.zeros(n - 2)
                col[j + 1:] = -2.0 / math.tan(y[j]) if math.tan(y[j]) != 0 else np.inf
                dGi[2 + j, 2:, 2:] = np.diag(ang * col)
        return Gi, dGi


def _chart(spec, name):
    if name == "theta":
        return _PolarChart(spec)
    if name == "v":
        return _GenericChart(spec)
    raise ChartError(f"unknown chart {name!r}")


# ---------------------------------------------------------------------------
# symbol and Hamilton field


def _lambda_and_grads(chart, x, zeta):
    Gi, dGi = chart.jet(x)
    lam = zeta @ Gi @ zeta
    dz = 2.0 * Gi @ zeta
    dx = np.einsum("i,kij,j->k", zeta, dGi, zeta)
    return lam, dz, dx


def b_symbol(spec, point):
    """lambda = zeta^T G^{-1} zeta at a b-cotangent point."""
    x, zeta = point.as_arrays()
    if point.chart == "v":
        return float(zeta @ dual_metric_at(spec, x).ginv @ zeta)
    Gi, _ = _chart(spec, point.chart).jet(x)
    return float(zeta @ Gi @ zeta)


def hamilton_field(spec, point):
    """H_lambda in ambient components (rho, v, y..., xi, gamma, eta...).

    The rho entry is rho * d lambda / d xi, so rho = 0 is invariant.
    """
    x, zeta = point.as_arrays()
    chart = _chart(spec, point.chart)
    _, dz, dx = _lambda_and_grads(chart, x, zeta)
    base = dz.copy()
    base[0] *= x[0]
    fib = -dx
    fib[0] *= x[0]
    return np.concatenate([base, fib])


def _sphere_rhs(chart, direction):
    n = chart.n

    def rhs(_s, state):
        x = state[:n]
        zh = state[n:2 * n]
        _, dz, dx = _lambda_and_grads(chart, x, zh)
        base = dz.copy()
        base[0] *= x[0]
        f = -dx
        f[0] *= x[0]
        proj = zh @ f
        out = np.empty(2 * n + 1)
        out[:n] = base
        out[n:2 * n] = f - proj * zh
        out[2 * n] = proj
        return direction * out

    return rhs


# ---------------------------------------------------------------------------
# radial-set bookkeeping


def _v_and_gamma(chart_name, x, zeta):
    """v and the v-chart gamma from a point in either chart."""
    if chart_name == "v":
        return x[1], zeta[1]
    th = x[1]
    dvdth = -2.0 * math.sin(2 * th)
    g = zeta[1] / dvdth if dvdth != 0 else np.inf
    return math.cos(2 * th), g


def radial_distance(chart_name, x, zeta):
    """max(rho, |v|, |xi/gamma|, |eta|/|gamma|): zero exactly on the radial set."""
    v, g = _v_and_gamma(chart_name, x, zeta)
    if not np.isfinite(g) or g == 0:
        return np.inf
    eta = np.linalg.norm(zeta[2:]) if len(zeta) > 2 else 0.0
    return max(abs(x[0]), abs(v), abs(zeta[0] / g), eta / abs(g))


def _which_radial_set(chart_name, x):
    if chart_name == "v":
        return "reached_S_plus"
    return "reached_S_plus" if math.cos(x[1]) > 0 else "reached_S_minus"


def to_polar(point):
    """Map a v-chart point (t > 0 hemisphere) to the polar chart."""
    if point.chart == "theta":
        return point
    x, z = point.as_arrays()
    v = x[1]
    if abs(v) > 1:
        raise ChartError("|v| > 1 is outside the collar")
    th = 0.5 * math.acos(v)
    z = z.copy()
    z[1] = z[1] * (-2.0 * math.sin(2 * th))
    xb = x.copy()
    xb[1] = th
    return BCotangentPoint(tuple(xb), tuple(z), "theta")


def integrate_bicharacteristic(spec, start, budget=60.0, direction=1, delta=1e-3,
                               rtol=1e-11, atol=1e-13, rho_escape=1e8,
                               drift_tol=1e-4, chart=None, max_steps=4000):
    """Follow the rescaled null bicharacteristic through ``start``.

    Terminates when the trajectory, after having left the delta-ball around
    the radial set, enters it again (S_plus or S_minus by the sign of t).
    The budget is both a parameter length and a step count ``max_steps``;
    trapped orbits drift towards the cap centre where steps shrink.
    """
    if chart is None:
        chart = "theta" if spec.is_radial else "v"
    if chart == "theta":
        start = to_polar(start)
    elif start.chart != "v":
        raise ChartError("v-chart integration needs a v-chart start")
    ch = _chart(spec, chart)
    n = spec.n
    x0, z0 = start.as_arrays()
    zn = np.linalg.norm(z0)
    if zn == 0:
        raise ConfigError("zero covector has no bicharacteristic")
    lam0 = _lambda_and_grads(ch, x0, z0 / zn)[0]
    if abs(lam0) > 1e-8:
        raise ConfigError(f"start not characteristic: |lambda|/|zeta|^2 = {abs(lam0):.2e}")
    y0 = np.concatenate([x0, z0 / zn, [math.log(zn)]])
    solver = DOP853(_sphere_rhs(ch, direction), 0.0, y0, budget, rtol=rtol, atol=atol,
                    first_step=1e-3)
    samples, nus = [], []
    drift = 0.0

    def record(s, state):
        zh = state[n:2 * n]
        lognorm = state[2 * n]
        fiber = zh * math.exp(min(lognorm, 700.0))
        _, g = _v_and_gamma(chart, state[:n], fiber)
        samples.append((s, BCotangentPoint(tuple(state[:n]), tuple(fiber), chart)))
        nus.append(1.0 / abs(g) if g not in (0,) and np.isfinite(g) else np.inf)

    record(0.0, y0)
    left = radial_distance(chart, x0, z0) >= delta
    terminal = "budget_exhausted"
    while solver.status == "running" and len(samples) <= max_steps:
        msg = solver.step()
        if solver.status == "failed":
            raise IntegratorFailure(f"step failure: {msg}", start=start)
        st = solver.y
        x, zh = st[:n], st[n:2 * n]
        lam = _lambda_and_grads(ch, x, zh)[0]
        drift = max(drift, abs(lam - lam0))
        if drift > drift_tol:
            raise IntegratorFailure(f"lambda drift {drift:.2e} exceeds {drift_tol}",
                                    start=start)
        record(solver.t, st)
        if x[0] < 0:
            raise IntegratorFailure("trajectory left rho >= 0", start=start)
        if x[0] > rho_escape:
            terminal = "escaped_collar"
            break
        d = radial_distance(chart, x, zh)
        if not left:
            left = d >= delta
        elif d < delta:
            terminal = _which_radial_set(chart, x)
            break
    return FlowTrajectory(samples, terminal, nus, chart, drift, start)


# ---------------------------------------------------------------------------
# linearization at the radial set


def _projective_field(spec, gamma_sign):
    """nu * H_lambda in coordinates (rho, v, y, nu, xi_hat, eta_hat), nu = 1/gamma,
    multiplied by sign(gamma) so that it is the 1/|gamma|-rescaled flow."""
    ch = _GenericChart(spec)
    n = spec.n

    def field(w):
        x = w[:n]
        nu = w[n]
        zh = np.concatenate([[w[n + 1]], [1.0], w[n + 2:]])
        _, dz, dx = _lambda_and_grads(ch, x, zh)
        out = np.empty(2 * n)
        out[0] = x[0] * dz[0]
        out[1:n] = dz[1:]
        dv = dx[1]
        out[n] = nu * dv
        out[n + 1] = -x[0] * dx[0] + zh[0] * dv
        out[n + 2:] = -dx[2:] + zh[2:] * dv
        return gamma_sign * out

    return field


@dataclass(frozen=True)
class RadialSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    jacobian: np.ndarray
    labels: tuple


def radial_linearization(spec, point=None, gamma_sign=1, step=1e-5, tol=1e-6):
    """Eigen-decomposition of the Jacobian of the rescaled field at a radial point."""
    n = spec.n
    if point is None:
        w0 = np.zeros(2 * n)
        w0[2:n] = np.pi / 2
    else:
        x, z = point.as_arrays()
        if point.chart != "v":
            raise ChartError("radial_linearization works in the v-chart")
        gamma_sign = 1 if z[1] > 0 else -1
        w0 = np.concatenate([x, [1.0 / z[1] if z[1] != 0 else 0.0], [z[0] / z[1]],
                             z[2:] / z[1]])
        w0[n] = 0.0
    if abs(w0[0]) > tol or abs(w0[1]) > tol or abs(w0[n + 1]) > tol or \
            np.any(np.abs(w0[n + 2:]) > tol):
        raise ConfigError("point is not on the radial set rho = v = xi = eta = 0")
    f = _projective_field(spec, gamma_sign)
    J = np.empty((2 * n, 2 * n))
    for j in range(2 * n):
        e = np.zeros(2 * n)
        e[j] = step
        J[:, j] = (f(w0 + e) - f(w0 - e)) / (2 * step)
    if not np.all(np.isfinite(J)):
        raise ChartError("non-finite Jacobian at the radial point")
    ev, vec = np.linalg.eig(J)
    order = np.lexsort((np.imag(ev), np.real(ev)))
    labels = ("rho", "v") + tuple(f"y{i}" for i in range(n - 2)) + ("nu", "xi_hat") + \
        tuple(f"eta_hat{i}" for i in range(n - 2))
    return RadialSpectrum(ev[order], vec[:, order], J, labels)


def multiplicities(eigenvalues, tol=1e-6):
    """Group nearly equal (real parts of) eigenvalues: [(value, count)]."""
    vals = np.sort(np.real(np.asarray(eigenvalues)))
    groups = []
    for v in vals:
        if groups and abs(v - groups[-1][0]) <= tol * max(1.0, abs(v)):
            c = groups[-1][1]
            groups[-1] = ((groups[-1][0] * c + v) / (c + 1), c + 1)
        else:
            groups.append((v, 1))
    return groups


# ---------------------------------------------------------------------------
# non-trapping


def characteristic_gammas(spec, x, xi, eta, chart="theta"):
    """Real roots gamma of lambda(x; xi, gamma, eta) = 0."""
    Gi, _ = _chart(spec, chart).jet(np.asarray(x, dtype=float))
    z = np.concatenate([[xi, 0.0], eta])
    a = Gi[1, 1]
    b = 2.0 * (Gi[1] @ z)
    c = z @ Gi @ z
    if abs(a) < 1e-14:
        return [-c / b] if b != 0 else []
    disc = b * b - 4 * a * c
    if disc < 0:
        return []
    s = math.sqrt(disc)
    return [(-b + s) / (2 * a), (-b - s) / (2 * a)]


def sample_null_starts(spec, count, rng, rho_interior=2.0):
    """Stratified characteristic starts in the polar chart.

    Thirds: boundary points over C_0 (rho = 0, v < 0), random interior
    points, and tangential interior covectors on a radius grid at t = 0
    (which is where a trapped orbit of a static metric must live).
    """
    n = spec.n
    starts = []
    k_b = count // 3
    k_t = count // 3
    k_i = count - k_b - k_t

    def push(x, xi, eta, which):
        gams = characteristic_gammas(spec, x, xi, eta)
        if not gams:
            return False
        g = gams[which % len(gams)]
        starts.append(BCotangentPoint(tuple(x), tuple(np.concatenate([[xi, g], eta])), "theta"))
        return True

    ang = np.full(n - 2, np.pi / 2)
    tries = 0
    while len(starts) < k_b and tries < 100 * count:
        tries += 1
        th = rng.uniform(np.pi / 4 + 0.02, 3 * np.pi / 4 - 0.02)
        x = np.concatenate([[0.0, th], ang])
        push(x, rng.normal(), rng.normal(size=n - 2), int(rng.integers(2)))
    while len(starts) < k_b + k_i and tries < 200 * count:
        tries += 1
        th = rng.uniform(0.05, np.pi - 0.05)
        rho = rng.uniform(0.05, rho_interior)
        x = np.concatenate([[rho, th], ang])
        push(x, rng.normal(), rng.normal(size=n - 2), int(rng.integers(2)))
    radii = np.geomspace(0.5, 20.0, max(k_t, 1))
    for j, r in enumerate(radii[:k_t]):
        x = np.concatenate([[1.0 / r, np.pi / 2], ang])
        eta = np.zeros(n - 2)
        if n > 2:
            eta[-1] = 1.0
        push(x, 0.0, eta, j)
    return starts


@dataclass
class NontrappingReport:
    passed: bool
    samples: int
    worst: FlowTrajectory = None
    offending_start: BCotangentPoint = None
    max_drift: float = 0.0
    terminal_counts: dict = field(default_factory=dict)
    trajectories: list = field(default_factory=list)


def check_nontrapping(spec, sample_count=200, seed=0, budget=60.0, delta=1e-3,
                      keep_trajectories=False):
    """Monte-Carlo certification that null bicharacteristics run from S_- to S_+."""
    if sample_count == 0:
        warnings.warn("check_nontrapping with zero samples passes vacuously")
        return NontrappingReport(True, 0)
    rng = np.random.default_rng(seed)
    starts = sample_null_starts(spec, sample_count, rng)
    counts = {}
    worst, worst_start, max_drift = None, None, 0.0
    passed = True
    kept = []
    for st in starts:
        fw = integrate_bicharacteristic(spec, st, budget, +1, delta)
        bw = integrate_bicharacteristic(spec, st, budget, -1, delta)
        pair = (fw.terminal_class, bw.terminal_class)
        counts[pair] = counts.get(pair, 0) + 1
        max_drift = max(max_drift, fw.lambda_drift, bw.lambda_drift)
        ok = set(pair) == {"reached_S_plus", "reached_S_minus"}
        if keep_trajectories:
            kept.extend([fw, bw])
        if not ok and passed:
            passed = False
            worst = fw if fw.terminal_class not in ("reached_S_plus", "reached_S_minus") else bw
            worst_start = st
    return NontrappingReport(passed, len(starts), worst, worst_start, max_drift,
                             {f"{a}/{b}": c for (a, b), c in counts.items()}, kept)
