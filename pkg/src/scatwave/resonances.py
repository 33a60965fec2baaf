"""Resonances of the cap problem as a quadratic eigenvalue problem in sigma.

For a spherically symmetric spec and an angular mode ``ell`` the normal
operator of ``rho^{-2} box_g`` acting on ``rho^{i sigma'} u(v) Y_ell`` with
``sigma' = sigma - i (n-2)/2`` is a second order ODE in ``v``.  The outgoing
branch at ``v = 0`` (indicial roots ``0`` and ``i sigma``) and the regular
branch at the cap centre ``v = 1`` (root ``ell/2`` in ``1 - v``) are selected
by writing ``u = v^{-i sigma} (1 - v)^{ell/2} phi``.  The conjugated operator

    Q_sigma = q2(v) d_v^2 + q1(v) d_v + q0(v)

has coefficients that are finite on [0, 1] and quadratic in sigma.

Two independent routes locate its poles:

* Chebyshev collocation of Q_sigma (a dense quadratic pencil), linearized and
  solved with QZ;
* a Frobenius characteristic function: power series solutions about both
  regular singular points matched by their Wronskian at ``v = 1/2``.

The pencil supplies candidates, the characteristic function polishes them
and rejects spurious ones; the contour solver (``beyn_contour``) applies to
either.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sl
from numpy.polynomial import chebyshev as C

from .errors import ConfigError, ConjugationError, NumericError

_CAUCHY_M = 24


# ---------------------------------------------------------------------------
# operator coefficients


def _cauchy_derivative(f, v, radius):
    """f'(v) from samples on circles |w - v| = radius (trapezoid rule).

    ``f`` maps an array of shape (P, M) to (P, M, T); v and radius are (P,).
    """
    th = 2 * np.pi * np.arange(_CAUCHY_M) / _CAUCHY_M
    e = np.exp(1j * th)
    w = v[:, None] + radius[:, None] * e
    vals = f(w)
    return np.mean(vals / e[None, :, None], axis=1) / radius[:, None]


@dataclass
class CapModeOperator:
    """Conjugated cap operator for one angular mode.

    ``coefficients(v)`` returns three arrays of shape (3, len(v)): entry
    [p] is the coefficient of sigma**p in q2, q1 and q0 respectively.
    """

    spec: object
    n: int
    ell: int

    @property
    def h(self):
        return (self.n - 2) / 2.0

    @property
    def kappa(self):
        return self.ell / 2.0

    @property
    def L(self):
        return self.ell * (self.ell + self.n - 3)

    # raw geometric data -------------------------------------------------
    def _geometry(self, v):
        spec = self.spec
        shape = np.shape(v)
        v = np.asarray(v, dtype=complex).ravel()
        dist = np.minimum(np.abs(1 - v), np.abs(1 + v))
        rad = np.minimum(0.25 * dist, 0.1)

        def block(w):
            G, c = spec.radial_block(0.0, w)
            return np.concatenate([G.reshape(G.shape[:-2] + (4,)), np.asarray(c)[..., None]
                                   * np.ones(G.shape[:-2] + (1,))], axis=-1)

        vals = block(v)
        dvals = _cauchy_derivative(block, v, rad)
        G = vals[..., :4].reshape(shape + (2, 2))
        dG = dvals[..., :4].reshape(shape + (2, 2))
        c = vals[..., 4].reshape(shape)
        dc = dvals[..., 4].reshape(shape)
        Gi = np.linalg.inv(G)
        dGi = -Gi @ dG @ Gi
        dlogA = 0.5 * np.trace(Gi @ dG, axis1=-2, axis2=-1) + self.h * dc / c
        return Gi, dGi, c, dlogA

    def _b_at(self, v, z, parts=False):
        """Conjugated coefficients (b2, b1, b0) at z = i sigma."""
        n, h = self.n, self.h
        Gi, dGi, c, dlogA = self._geometry(v)
        v = np.asarray(v, dtype=complex)
        grr, grv, gvv = Gi[..., 0, 0], Gi[..., 0, 1], Gi[..., 1, 1]
        dgrv, dgvv = dGi[..., 0, 1], dGi[..., 1, 1]
        zh = z + h
        a2 = gvv
        a1 = (2 * zh + 2 - n) * grv + dgvv + gvv * dlogA
        a0 = grr * (zh ** 2 + (2 - n) * zh) + zh * (dgrv + grv * dlogA) + self.L / c
        k = self.kappa
        Sp = -z / v - k / (1 - v)
        Spp = z / v ** 2 - k / (1 - v) ** 2
        b1 = a1 + 2 * a2 * Sp
        if parts:
            return a0, a1 * Sp, a2 * (Spp + Sp ** 2)
        b0 = a0 + a1 * Sp + a2 * (Spp + Sp ** 2)
        return a2, b1, b0

    def z_coefficients(self, v):
        """Coefficients of z**p (p = 0, 1, 2) of (b2, b1, b0); b is quadratic in z."""
        B = [self._b_at(v, z) for z in (0.0, 1.0, 2.0)]
        out = []
        for k in range(3):
            f0, f1, f2 = B[0][k], B[1][k], B[2][k]
            c2 = (f2 - 2 * f1 + f0) / 2
            c1 = f1 - f0 - c2
            out.append(np.array([f0 * np.ones_like(f1), c1, c2]))
        return out

    def coefficients(self, v):
        """Sigma-polynomial coefficients: z**p = (i sigma)**p."""
        zc = self.z_coefficients(v)
        ip = np.array([1.0, 1j, -1.0])
        return [z * ip.reshape((3,) + (1,) * (z.ndim - 1)) for z in zc]

    def apply(self, sigma, v, phi, dphi, d2phi):
        q2, q1, q0 = self.coefficients(v)
        s = np.array([1.0, sigma, sigma ** 2])
        return (s @ q2) * d2phi + (s @ q1) * dphi + (s @ q0) * phi

    def singular_residuals(self, sigma=1.0 - 0.5j, eps=1e-6):
        """|v b0| at v = eps and |(1-v) b0| at v = 1 - eps, scaled by
        1 + the size of the individual pieces: O(eps) when the singular
        contributions cancel, O(1) otherwise."""
        z = 1j * sigma
        out = []
        for v, w in ((eps, eps), (1 - eps, eps)):
            p = self._b_at(np.array([v]), z, parts=True)
            scale = max(abs(x[0]) for x in p) * w
            out.append(abs(sum(x[0] for x in p)) * w / (1.0 + scale))
        return out


# ---------------------------------------------------------------------------
# collocation pencil


def cheb_lobatto(N):
    """Chebyshev differentiation matrix and Lobatto nodes on [-1, 1]."""
    x = np.cos(np.pi * np.arange(N + 1) / N)
    c = np.hstack([2.0, np.ones(N - 1), 2.0]) * (-1.0) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1))
    dX = X.T - X
    D = np.outer(c, 1 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))
    return D, x


@dataclass
class QuadraticPencil:
    A0: np.ndarray
    A1: np.ndarray
    A2: np.ndarray
    N: int
    nodes: np.ndarray
    boundary_rows: dict
    operator: CapModeOperator = None

    def T(self, sigma):
        return self.A0 + sigma * self.A1 + sigma ** 2 * self.A2

    def smallest_singular_value(self, sigma, relative=True):
        s = np.linalg.svd(self.T(sigma), compute_uv=False)
        return s[-1] / s[0] if relative else s[-1]


def build_cap_pencil(spec, n, ell, N=64, tail_tol=1e-7):
    """Chebyshev collocation of Q_sigma on v in [0, 1] (Lobatto nodes).

    Coefficients are sampled at interior Gauss nodes (the 1/v and 1/(1-v)
    pieces cancel analytically but cannot be evaluated at the endpoints) and
    interpolated to the collocation nodes; the endpoint rows are the
    equation itself at the regular singular points.
    """
    if N < 8:
        raise ConfigError("collocation size N must be >= 8")
    if spec.n != n:
        raise ConfigError(f"spec dimension {spec.n} differs from n={n}")
    op = CapModeOperator(spec, n, ell)
    res = op.singular_residuals()
    for r, where in zip(res, (1e-6, 1 - 1e-6)):
        if r > 1e-3:
            raise ConjugationError(f"singular terms fail to cancel at v={where}", v=where)
    M = max(2 * N, 96)
    xg = np.cos(np.pi * (np.arange(M) + 0.5) / M)
    vg = (xg + 1) / 2
    coefs = op.coefficients(vg)
    D, x = cheb_lobatto(N)
    v = (x + 1) / 2
    D = 2 * D
    ops = [D @ D, D, np.eye(N + 1)]
    A = [np.zeros((N + 1, N + 1), complex) for _ in range(3)]
    scale = max(np.max(np.abs(coefs[k])) for k in range(3))
    for k in range(3):
        for p in range(3):
            f = coefs[k][p]
            cc = C.chebfit(xg, f, M - 1)
            if np.max(np.abs(cc[-M // 8:])) > tail_tol * scale:
                bad = vg[np.argmax(np.abs(f - C.chebval(xg, cc[: M // 2])))]
                raise ConjugationError(f"coefficient not resolved near v={bad:.3g}", v=float(bad))
            A[p] += C.chebval(x, cc)[:, None] * ops[k]
    rows = {"v0": int(np.argmin(np.abs(v))), "center": int(np.argmin(np.abs(v - 1)))}
    return QuadraticPencil(A[0], A[1], A[2], N, v, rows, op)


def _pencil_eigenvalues(pencil):
    A0, A1, A2 = pencil.A0, pencil.A1, pencil.A2
    m = A0.shape[0]
    I = np.eye(m)
    Z = np.zeros((m, m))
    Am = np.block([[Z, I], [-A0, -A1]])
    Bm = np.block([[I, Z], [Z, A2]])
    try:
        w = sl.eig(Am, Bm, right=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericError(f"QZ failure: {exc}") from exc
    return w[np.isfinite(w)]


# ---------------------------------------------------------------------------
# Frobenius characteristic function


def _taylor_on_circle(vals, r0):
    M = vals.shape[-1]
    c = np.fft.fft(vals, axis=-1) / M
    k = np.fft.fftfreq(M, 1.0 / M).astype(int)
    return c / r0 ** k, k


class CharacteristicFunction:
    """F(sigma): Wronskian of the Frobenius solutions regular at v = 0 and v = 1.

    Zeros of F are the resonances of the mode; F is meromorphic with possible
    poles at sigma = -i k (where the Frobenius recursion at v = 0 degenerates).
    """

    def __init__(self, op, K=70, radius=0.7, v_match=0.5, M=256):
        self.op = op
        self.K = K
        self.vm = v_match
        self.tables = [self._tables(0.0, radius, M), self._tables(1.0, radius, M)]

    def _tables(self, centre, r0, M):
        th = 2 * np.pi * np.arange(M) / M
        v = centre + r0 * np.exp(1j * th)
        b2, b1, b0 = self.op.z_coefficients(v)
        y = v - centre if centre == 0.0 else 1.0 - v
        sgn = 1.0 if centre == 0.0 else -1.0
        fams = (b2 / y, sgn * b1, b0)
        out = []
        for fam in fams:
            cc, k = _taylor_on_circle(fam, r0)
            if centre == 1.0:
                cc = cc * (-1.0) ** (k % 2)
            arr = np.zeros((3, self.K + 2), complex)
            pos = (k >= 0) & (k < self.K + 2)
            arr[:, k[pos]] = cc[:, pos]
            out.append(arr)
        return out

    def _series(self, tab, z):
        """Frobenius coefficients for an array of z values, shape (P, K+1)."""
        zp = np.stack([np.ones_like(z), z, z * z], axis=-1)
        p, q, r = (zp @ t for t in tab)
        K = self.K
        c = np.zeros(z.shape + (K + 1,), complex)
        c[:, 0] = 1.0
        for m in range(K):
            kk = np.arange(m, -1, -1)  # m+1-j for j = 1..m+1
            s = np.sum((p[:, 1:m + 2] * (kk * (kk - 1)) + q[:, 1:m + 2] * kk) * c[:, kk], axis=1)
            s += np.sum(r[:, :m + 1] * c[:, m::-1], axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                c[:, m + 1] = -s / ((m + 1) * (p[:, 0] * m + q[:, 0]))
        return c

    def __call__(self, sigma):
        scalar = np.ndim(sigma) == 0
        z = 1j * np.atleast_1d(np.asarray(sigma, dtype=complex))
        K = self.K
        c0 = self._series(self.tables[0], z)
        c1 = self._series(self.tables[1], z)
        kk = np.arange(K + 1)
        vm = self.vm
        y = 1 - vm
        phi0 = c0 @ vm ** kk
        dphi0 = c0[:, 1:] @ (kk[1:] * vm ** (kk[1:] - 1))
        phi1 = c1 @ y ** kk
        dphi1 = -(c1[:, 1:] @ (kk[1:] * y ** (kk[1:] - 1)))
        out = phi0 * dphi1 - dphi0 * phi1
        return out[0] if scalar else out


def newton_polish(F, sigma0, max_shift=0.25, tol=1e-13, maxit=40):
    """Newton iteration on an analytic scalar function; None if it wanders."""
    s = complex(sigma0)
    for _ in range(maxit):
        h = 1e-6
        f = F(s)
        df = (F(s + h) - F(s - h)) / (2 * h)
        if not np.isfinite(f) or not np.isfinite(df) or df == 0:
            return None
        step = f / df
        s = s - step
        if abs(s - sigma0) > max_shift:
            return None
        if abs(step) < tol * max(1.0, abs(s)):
            return s, abs(step)
    return None


# ---------------------------------------------------------------------------
# resonance sets


@dataclass
class Resonance:
    sigma: complex
    residual: float
    multiplicity: int = 1
    ell: tuple = ()
    N: int = 0
    newton_step: float = 0.0

    @property
    def threshold(self):
        """Diagnostic 1/2 + Im sigma."""
        return 0.5 + self.sigma.imag


@dataclass
class ResonanceSet:
    entries: list
    strip: tuple
    re_max: float
    method: str = "pencil"
    inconclusive: bool = False
    rejected: list = field(default_factory=list)

    def sigmas(self):
        return np.array([e.sigma for e in self.entries], dtype=complex)

    def __len__(self):
        return len(self.entries)

    def to_json(self):
        return [{"re": e.sigma.real, "im": e.sigma.imag, "residual": e.residual,
                 "multiplicity": e.multiplicity, "ell": list(e.ell), "N": e.N,
                 "threshold": e.threshold} for e in self.entries]


def _in_strip(s, strip, re_max):
    return strip[0] < s.imag < strip[1] and abs(s.real) <= re_max


def _tile_centres(strip, re_max, spacing=1.0):
    re = np.arange(-re_max, re_max + 1e-9, spacing) if np.isfinite(re_max) else np.zeros(1)
    im = np.arange(strip[1] - spacing / 2, strip[0], -spacing)
    return [complex(a, b) for b in im for a in re]


def solve_pencil(pencil, strip=(-4.0, 0.0), re_max=3.0, residual_tol=1e-8,
                 check_N=True, max_shift=0.25, tiles=True):
    """Filtered resonances of one angular mode inside the search strip.

    Candidates come from the QZ eigenvalues of the pencil and, because
    spectral pollution can hide deep modes from QZ, from contour integrals of
    the characteristic function over tiles covering the strip.  Every
    candidate is polished by Newton on the characteristic function; a root is
    accepted if it lies in the strip and the relative smallest singular value
    of the pencil is below ``residual_tol`` both at N and at N+8.
    """
    op = pencil.operator
    F = CharacteristicFunction(op)
    raw = _pencil_eigenvalues(pencil)
    margin = 0.3
    cand = [w for w in raw if strip[0] - margin < w.imag < strip[1] + margin
            and abs(w.real) <= re_max + margin]
    inconclusive = False
    if tiles:
        for c in _tile_centres(strip, re_max):
            try:
                cr = beyn_contour(F, c, 0.75, n_nodes=64, rank_tol=1e-10)
            except NumericError:
                inconclusive = True
                continue
            cand.extend(cr.sigmas)
    other = build_cap_pencil(op.spec, op.n, op.ell, pencil.N + 8) if check_N else None
    roots, rejected = [], []
    for w in sorted(cand, key=lambda s: (-s.imag, s.real)):
        pol = newton_polish(F, w, max_shift=max_shift)
        if pol is None:
            rejected.append((complex(w), "polish"))
            continue
        s, step = pol
        if not _in_strip(s, strip, re_max) or any(abs(s - r[0]) < 1e-8 for r in roots):
            continue
        res = pencil.smallest_singular_value(s)
        res2 = other.smallest_singular_value(s) if other is not None else 0.0
        if max(res, res2) > residual_tol:
            rejected.append((complex(s), f"residual {max(res, res2):.1e}"))
            continue
        roots.append((complex(s), float(step), float(res)))
    entries = []
    for s, step, res in roots:
        cluster = int(np.sum(np.abs(raw - s) < 1e-3))
        entries.append(Resonance(s, res, max(cluster, 1), (op.ell,), pencil.N, step))
    entries.sort(key=lambda e: (-e.sigma.imag, e.sigma.real))
    return ResonanceSet(entries, tuple(strip), re_max, "pencil", inconclusive, rejected)


def exact_hyperbolic_resonances(n, strip=(-4.0, 0.0), re_max=np.inf):
    """Minkowski cap reference: none for even n, -i((n-2)/2 + j) for odd n."""
    entries = []
    if n % 2 == 1:
        j = 0
        while True:
            s = -1j * ((n - 2) / 2 + j)
            if s.imag <= strip[0]:
                break
            if s.imag < strip[1]:
                entries.append(Resonance(s, 0.0, 1, (), 0))
            j += 1
    return ResonanceSet(entries, tuple(strip), re_max, "exact")


def union_resonances(sets, tol=1e-6):
    """Merge per-mode sets; coincident poles collect their ell values."""
    merged = []
    for rs in sets:
        for e in rs.entries:
            for m in merged:
                if abs(m.sigma - e.sigma) < tol:
                    m.ell = tuple(sorted(set(m.ell) | set(e.ell)))
                    m.multiplicity += e.multiplicity
                    m.residual = max(m.residual, e.residual)
                    break
            else:
                merged.append(Resonance(e.sigma, e.residual, e.multiplicity, tuple(e.ell),
                                        e.N, e.newton_step))
    merged.sort(key=lambda e: (-e.sigma.imag, e.sigma.real))
    strip = sets[0].strip if sets else (-4.0, 0.0)
    re_max = sets[0].re_max if sets else 3.0
    return ResonanceSet(merged, strip, re_max, "union",
                        any(s.inconclusive for s in sets))


def cap_resonances(spec, ells=(0, 1, 2), N=64, strip=(-4.0, 0.0), re_max=3.0):
    """Union over angular modes of the filtered pencil resonances."""
    sets = [solve_pencil(build_cap_pencil(spec, spec.n, l, N), strip, re_max) for l in ells]
    return union_resonances(sets)


# ---------------------------------------------------------------------------
# contour-integral solver


@dataclass
class ContourResult:
    count: int
    sigmas: np.ndarray
    singular_values: np.ndarray
    inconclusive: bool

    def as_set(self, strip=(-np.inf, np.inf), re_max=np.inf):
        entries = [Resonance(complex(s), 0.0, 1) for s in self.sigmas]
        return ResonanceSet(entries, strip, re_max, "beyn", self.inconclusive)


def _contour_values(target, nodes, U, V):
    """U^H T(sigma)^{-1} V at each node, shape (len(nodes), l, l)."""
    if isinstance(target, CharacteristicFunction):
        f = target(nodes)
        return (1.0 / f)[:, None, None], np.min(np.abs(f)) / np.median(np.abs(f))
    T = target.T if isinstance(target, QuadraticPencil) else target
    out = []
    worst = np.inf
    for s in nodes:
        Tj = np.asarray(T(s), dtype=complex)
        if Tj.ndim == 0:
            Tj = Tj.reshape(1, 1)
        sv = np.linalg.svd(Tj, compute_uv=False)
        worst = min(worst, sv[-1] / sv[0])
        out.append(U.conj().T @ np.linalg.solve(Tj, V))
    return np.array(out), worst


def beyn_contour(target, center, radius, n_nodes=96, n_moments=None, n_probe=None,
                 rank_tol=1e-9, seed=0, jitter_tries=4):
    """Eigenvalues of an analytic matrix (or scalar) function inside a circle.

    ``target`` is a QuadraticPencil, a CapModeOperator (its characteristic
    function is used), a CharacteristicFunction, or any callable
    sigma -> matrix.  Block Hankel moments of T(sigma)^{-1} (Beyn's method
    with higher moments) are formed with the trapezoid rule; the numerical
    rank of the Hankel matrix is the eigenvalue count.
    """
    if isinstance(target, CapModeOperator):
        target = CharacteristicFunction(target)
    if isinstance(target, CharacteristicFunction):
        m = 1
    elif isinstance(target, QuadraticPencil):
        m = target.A0.shape[0]
    else:
        m = np.atleast_2d(np.asarray(target(complex(center)))).shape[0]
    rng = np.random.default_rng(seed)
    l = n_probe or min(m, 8)
    K = n_moments or (8 if m == 1 else 4)
    V = rng.normal(size=(m, l)) + 1j * rng.normal(size=(m, l))
    U = rng.normal(size=(m, l)) + 1j * rng.normal(size=(m, l))
    if m == 1:
        U = V = np.ones((1, 1), complex)
    th = 2 * np.pi * np.arange(n_nodes) / n_nodes
    for attempt in range(jitter_tries):
        rad = radius * (1.0 + 0.03 * attempt)
        w = np.exp(1j * (th + attempt * np.pi / n_nodes))
        with np.errstate(all="ignore"):
            Y, worst = _contour_values(target, center + rad * w, U, V)
        if np.all(np.isfinite(Y)) and worst > 1e-13:
            break
    else:
        raise NumericError("contour passes too close to an eigenvalue")
    wp = w[:, None, None] ** np.arange(1, 2 * K + 1)[None, :, None]
    moments = np.einsum("jp,jab->pab", wp[:, :, 0], Y) / n_nodes
    H0 = np.block([[moments[i + j] for j in range(K)] for i in range(K)])
    H1 = np.block([[moments[i + j + 1] for j in range(K)] for i in range(K)])
    Uh, s, Wh = np.linalg.svd(H0)
    if s[0] == 0:
        return ContourResult(0, np.array([], complex), s, False)
    rel = s / s[0]
    k = int(np.sum(rel > rank_tol))
    inconclusive = False
    if 0 < k < len(s):
        inconclusive = rel[k - 1] / max(rel[k], 1e-300) < 1e3
    elif k == len(s):
        inconclusive = True
    if s[0] < 1e-13:
        return ContourResult(0, np.array([], complex), s, inconclusive)
    U0 = Uh[:, :k]
    W0 = Wh.conj().T[:, :k]
    B = U0.conj().T @ H1 @ W0 / s[:k]
    ev = np.linalg.eigvals(B)
    inside = np.abs(ev) < 1.0
    sig = center + rad * ev[inside]
    return ContourResult(len(sig), np.sort_complex(sig), s, inconclusive)


# ---------------------------------------------------------------------------
# perturbation scan


@dataclass
class ScanResult:
    eps: np.ndarray
    sets: list
    branches: list  # list of dicts {eps: [...], sigma: [...], emerged_near: k or None}
    drift_constant: float
    ambiguous: list


def perturbation_scan(family, eps_grid, ells=(0, 1, 2), N=48, strip=(-4.0, 0.0),
                      re_max=3.0, jump=0.3):
    """Track resonance branches sigma_j(eps) over an increasing eps grid."""
    eps_grid = np.asarray(sorted(eps_grid), dtype=float)
    sets, branches, ambiguous = [], [], []
    for e in eps_grid:
        spec = family(float(e))
        rs = cap_resonances(spec, ells, N, strip, re_max)
        sets.append(rs)
        taken = set()
        for br in branches:
            if br["eps"][-1] == e:
                continue
            last = br["sigma"][-1]
            d = [abs(s - last) for s in rs.sigmas()]
            cand = [i for i, di in enumerate(d) if di < jump and i not in taken]
            if not cand:
                continue
            cand.sort(key=lambda i: d[i])
            if len(cand) > 1 and d[cand[1]] < 2 * d[cand[0]] + 1e-12:
                ambiguous.append((float(e), last, [rs.sigmas()[i] for i in cand[:2]]))
            i = cand[0]
            taken.add(i)
            br["eps"].append(float(e))
            br["sigma"].append(complex(rs.sigmas()[i]))
        for i, s in enumerate(rs.sigmas()):
            if i in taken:
                continue
            k = round(-s.imag)
            near = k if (k >= 1 and abs(s + 1j * k) < 0.1 and e != eps_grid[0]) else None
            branches.append({"eps": [float(e)], "sigma": [complex(s)], "emerged_near": near})
    drift = 0.0
    for br in branches:
        if br["eps"][0] != eps_grid[0]:
            continue
        for e, s in zip(br["eps"][1:], br["sigma"][1:]):
            if e > eps_grid[0]:
                drift = max(drift, abs(s - br["sigma"][0]) / (e - eps_grid[0]))
    return ScanResult(eps_grid, sets, branches, drift, ambiguous)
