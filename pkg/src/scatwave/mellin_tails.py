"""Mellin analysis in rho and power/log tail fits of radiation fields.

Conventions
-----------
Mellin transform: ``u~(sigma) = int_0^inf rho^(-i sigma - 1) u(rho) drho``.
With ``y = log rho`` and ``sigma = mu + i nu`` this is the Fourier integral
``int exp(-i mu y) g(y) dy`` of ``g = exp(nu y) u(e^y)``, so a function
behaving like ``rho^(i sigma0)`` at ``rho = 0`` has a transform holomorphic in
``Im sigma > Im sigma0``.  The term ``i^m/(m-1)! rho^(i sigma0) (log rho)^(m-1)``
supported on ``(0, 1]`` transforms to ``-(sigma - sigma0)^(-m)``.

Tail model: ``F(s) ~ sum a_{j,kappa} s^(-i sigma_j - 1) (log s)^kappa``.  A
real power ``s^(-p)`` corresponds to ``sigma = -i (p - 1)``, i.e.
``p = 1 - Im sigma``.
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import AAA
from scipy.optimize import least_squares

from .errors import FitFailure, InvalidOrderError, PreconditionError, WeightViolation
from .geometry import smooth_step

PLANCHEREL_TOL = 1e-4


# ---------------------------------------------------------------------------
# Mellin transform
# ---------------------------------------------------------------------------

@dataclass
class MellinData:
    sigma: np.ndarray        # points on the line Im sigma = im_sigma
    values: np.ndarray
    error: np.ndarray        # per-point quadrature error estimate
    im_sigma: float
    y0: float                # log of the first rho sample
    dy: float
    n: int
    plancherel_error: float
    line_norm: float
    rho_norm: float
    window: tuple = None

    @property
    def mu(self):
        return self.sigma.real

    @property
    def plancherel_ok(self):
        return self.plancherel_error < PLANCHEREL_TOL

    def restrict(self, mu_max):
        keep = np.abs(self.sigma.real) <= mu_max
        order = np.argsort(self.sigma.real[keep])
        return self.sigma[keep][order], self.values[keep][order]


def _half_hat(theta):
    """int_0^1 (1 - t) exp(-i theta t) dt, with a series near theta = 0."""
    theta = np.asarray(theta, dtype=float)
    out = np.empty(theta.shape, dtype=complex)
    small = np.abs(theta) < 0.5
    ts = theta[small]
    acc = np.zeros(ts.shape, dtype=complex)
    term = np.ones(ts.shape, dtype=complex)
    for k in range(16):
        acc += term / math.factorial(k + 2)
        term = term * (-1j * ts)
    out[small] = acc
    tb = theta[~small]
    out[~small] = 1.0 / (1j * tb) + (1.0 - np.exp(-1j * tb)) / tb ** 2
    return out


def _filon(S, g0, gN, y0, yN, dy, mu):
    """Exact Fourier integral of the piecewise-linear interpolant.

    ``S`` holds the plain sums ``sum_j g_j exp(-i mu y_j)`` at ``mu``.
    """
    theta = mu * dy
    W = np.sinc(theta / (2 * np.pi)) ** 2
    e0 = np.exp(-1j * mu * y0)
    eN = np.exp(-1j * mu * yN)
    return dy * (W * S + g0 * e0 * (_half_hat(theta) - W) + gN * eN * (_half_hat(-theta) - W))


def _direct_sums(g, y, mu, chunk=256):
    out = np.empty(mu.size, dtype=complex)
    for i in range(0, mu.size, chunk):
        m = mu[i:i + chunk]
        out[i:i + chunk] = np.exp(-1j * np.outer(m, y)) @ g
    return out


def _end_slope(y, g, count):
    a = np.abs(g[:count])
    ok = a > 0
    if ok.sum() < 3:
        return np.inf
    return np.polyfit(y[:count][ok], np.log(a[ok]), 1)[0]


def mellin_transform(rho, u, im_sigma, mu=None, pad=2, cutoff=None, open_right=False,
                     end_tol=1e-10):
    """Numerical Mellin transform of samples of u on a log-uniform rho grid.

    The samples are taken to cover the support of u: u is zero outside
    ``[rho[0], rho[-1]]``.  The integrand ``g(y) = exp(nu y) u(e^y)`` is
    interpolated linearly and its Fourier integral is evaluated exactly
    (Filon weights on an FFT sum); Richardson against the every-other-sample
    grid gives the returned values and the error estimate.  ``cutoff = (a, b)``
    multiplies u by a smooth step falling from 1 at rho = a to 0 at rho = b.

    Without ``mu`` the transform is returned on the FFT frequency grid
    (spacing ``2 pi / (pad * n * dy)``); otherwise at the given real parts.
    """
    rho = np.asarray(rho, dtype=float)
    u = np.asarray(u)
    if rho.ndim != 1 or rho.size != u.size or rho.size < 16:
        raise PreconditionError("need matching 1-d rho and u with at least 16 samples")
    if np.any(rho <= 0):
        raise PreconditionError("rho samples must be positive")
    y = np.log(rho)
    steps = np.diff(y)
    dy = float(np.mean(steps))
    if dy <= 0 or np.max(np.abs(steps - dy)) > 1e-8 * max(1.0, abs(dy)):
        raise PreconditionError("rho grid must be increasing and log-uniform")
    y = y[0] + dy * np.arange(rho.size)
    window = None
    if cutoff is not None:
        a, b = cutoff
        u = u * (1.0 - smooth_step((rho - a) / (b - a)))
        window = (float(a), float(b))
    g = np.exp(im_sigma * y) * u
    gmax = float(np.max(np.abs(g)))
    n = g.size
    extra_err = 0.0
    if gmax > 0:
        count = max(8, n // 50)
        ends = [(y, g, "rho -> 0")]
        if open_right:
            ends.append((-y[::-1], g[::-1], "rho -> infinity"))
        for yy, gg, label in ends:
            head = float(np.max(np.abs(gg[:count])))
            if head <= end_tol * gmax:
                continue
            slope = _end_slope(yy, gg, count)
            if slope <= 0:
                raise WeightViolation(
                    f"integrand does not decay as {label} on the line Im sigma = {im_sigma}",
                    im_sigma=im_sigma, end_value=head / gmax, log_slope=float(slope))
            extra_err += abs(gg[0]) / slope

    y0, yN = float(y[0]), float(y[-1])
    M = int(pad * n)
    M += M % 2
    mu_fft = 2 * np.pi * np.fft.fftfreq(M, d=dy)
    S_fft = np.exp(-1j * mu_fft * y0) * np.fft.fft(g, M)
    fine_fft = _filon(S_fft, g[0], g[-1], y0, yN, dy, mu_fft)

    # Plancherel: line norm from the fine band plus the jump tail beyond it,
    # against the weighted rho-space norm by Simpson.
    dmu = 2 * np.pi / (M * dy)
    band = dmu * float(np.sum(np.abs(fine_fft) ** 2))
    tail = 2.0 * (abs(g[0]) ** 2 + abs(g[-1]) ** 2) / (np.pi / dy)
    line_norm = band + tail
    rho_norm = 2 * np.pi * float(simpson(np.abs(g) ** 2, x=y))
    scale = max(line_norm, rho_norm)
    plan = abs(line_norm - rho_norm) / scale if scale > 0 else 0.0

    odd = (n - 1) % 2 == 0
    if mu is None:
        mu_eval = mu_fft
        fine = fine_fft
        if odd:
            gc = g[::2]
            Sc = np.fft.fft(gc, M // 2)
            idx = np.arange(M) % (M // 2)
            coarse = _filon(np.exp(-1j * mu_fft * y0) * Sc[idx], gc[0], gc[-1], y0, yN,
                            2 * dy, mu_fft)
    else:
        mu_eval = np.atleast_1d(np.asarray(mu, dtype=float))
        fine = _filon(_direct_sums(g, y, mu_eval), g[0], g[-1], y0, yN, dy, mu_eval)
        if odd:
            gc = g[::2]
            coarse = _filon(_direct_sums(gc, y[::2], mu_eval), gc[0], gc[-1], y0, yN,
                            2 * dy, mu_eval)
    if odd:
        diff = fine - coarse
        rich = np.abs(mu_eval * dy) < np.pi / 4
        values = np.where(rich, fine + diff / 3.0, fine)
        error = np.where(rich, np.abs(diff) / 15.0, np.abs(diff) / 3.0) + extra_err
    else:
        values = fine
        error = np.full(mu_eval.shape, np.inf)
    return MellinData(mu_eval + 1j * im_sigma, values, error, float(im_sigma), y0, dy, n,
                      float(plan), line_norm, rho_norm, window)


# ---------------------------------------------------------------------------
# pole terms
# ---------------------------------------------------------------------------

@dataclass
class MellinTerm:
    """coefficient * rho^(i sigma) * (log rho)^(order - 1)."""
    sigma: complex
    order: int
    coefficient: complex

    def __call__(self, rho):
        rho = np.asarray(rho, dtype=float)
        return self.coefficient * np.exp(1j * self.sigma * np.log(rho)) * np.log(rho) ** (self.order - 1)

    def describe(self):
        c = self.coefficient
        lg = "" if self.order == 1 else f" * log(rho)^{self.order - 1}"
        return f"({c.real:.6g}{c.imag:+.6g}j) * rho^(i*({self.sigma.real:.6g}{self.sigma.imag:+.6g}j)){lg}"

    def transform(self, sigma):
        """Mellin transform of the term cut off to rho <= 1."""
        return -np.asarray(sigma - self.sigma, dtype=complex) ** (-self.order) * (
            self.coefficient * math.factorial(self.order - 1) / 1j ** self.order)


def inverse_mellin_pole(sigma0, m):
    """The rho-space term of a pole (sigma - sigma0)^(-m): i^m/(m-1)! rho^(i sigma0) (log rho)^(m-1)."""
    if int(m) != m or m < 1:
        raise InvalidOrderError(f"pole order must be a positive integer, got {m}")
    m = int(m)
    return MellinTerm(complex(sigma0), m, 1j ** m / math.factorial(m - 1))


@dataclass
class MellinPole:
    sigma: complex
    order: int
    laurent: np.ndarray      # coefficients of (sigma - sigma0)^(-k), k = 1..order

    @property
    def amplitudes(self):
        """Coefficients a_k with u ~ sum_k a_k inverse_mellin_pole(sigma0, k)."""
        return -self.laurent

    @property
    def amplitude(self):
        return complex(self.amplitudes[-1])


def _laurent_design(z, centres, orders, degree, zc, zs):
    cols = []
    for c, m in zip(centres, orders):
        d = z - c
        for k in range(1, m + 1):
            cols.append(d ** (-k))
    t = (z - zc) / zs
    for k in range(degree + 1):
        cols.append(t ** k)
    return np.stack(cols, axis=1)


def _laurent_fit(z, f, centres, orders, degree, refine=True):
    zc = complex(np.mean(z))
    zs = float(np.max(np.abs(z - zc))) or 1.0
    fs = float(np.max(np.abs(f))) or 1.0

    def solve(cs):
        A = _laurent_design(z, cs, orders, degree, zc, zs)
        norm = np.linalg.norm(A, axis=0)
        coef, *_ = np.linalg.lstsq(A / norm, f / fs, rcond=None)
        return coef / norm * fs, A @ (coef / norm) - f / fs

    def fun(x):
        cs = x[0::2] + 1j * x[1::2]
        r = solve(cs)[1]
        return np.concatenate([r.real, r.imag])

    x0 = np.ravel(np.column_stack([np.real(centres), np.imag(centres)]))
    if refine and len(centres):
        sol = least_squares(fun, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=400)
        x0 = sol.x
    cs = x0[0::2] + 1j * x0[1::2]
    coef, r = solve(cs)
    return cs, coef, float(np.sqrt(np.mean(np.abs(r) ** 2)))


def rational_poles(data, mu_max=6.0, depth=6.0, max_order=3, drop=10.0, degree=6,
                   cluster=0.05, max_points=400):
    """Poles of the continued transform below the sampling line, with orders.

    AAA locates candidate poles from the samples on the line; nearby
    candidates are merged, and each pole's order is raised while a refit of
    the Laurent model (pole parts plus a polynomial) lowers the residual by at
    least ``drop``.
    """
    z, f = data.restrict(mu_max)
    if z.size > max_points:
        idx = np.unique(np.linspace(0, z.size - 1, max_points).round().astype(int))
        z, f = z[idx], f[idx]
    scale = float(np.max(np.abs(f))) if f.size else 0.0
    if scale == 0.0:
        return []
    aaa = AAA(z, f, rtol=1e-13, max_terms=min(80, z.size // 2))
    poles, res = aaa.poles(), aaa.residues()
    keep = ((poles.imag < data.im_sigma - 1e-6) & (poles.imag > data.im_sigma - depth)
            & (np.abs(poles.real) < mu_max) & (np.abs(res) > 1e-10 * scale))
    cand = sorted(poles[keep], key=lambda p: (-p.imag, p.real))
    centres = []
    for p in cand:
        for grp in centres:
            if abs(np.mean(grp) - p) < cluster:
                grp.append(p)
                break
        else:
            centres.append([p])
    sizes = [min(len(g), max_order) for g in centres]
    start = np.array([np.mean(g) for g in centres], dtype=complex)
    if start.size == 0:
        return []
    orders = list(sizes)
    for j in range(len(orders)):
        fits = []
        for m in range(1, max_order + 1):
            trial = list(orders)
            trial[j] = m
            fits.append(_laurent_fit(z, f, start, trial, degree))
        m = 1
        while m < max_order and fits[m][2] * drop <= fits[m - 1][2]:
            m += 1
        orders[j] = m
    centres, coef, resid = _laurent_fit(z, f, start, orders, degree)
    out, pos = [], 0
    for c, m in zip(centres, orders):
        out.append(MellinPole(complex(c), m, np.array(coef[pos:pos + m], dtype=complex)))
        pos += m
    out.sort(key=lambda p: (-p.sigma.imag, p.sigma.real))
    return out


# ---------------------------------------------------------------------------
# tail fitting
# ---------------------------------------------------------------------------

@dataclass
class TailSamples:
    s: np.ndarray
    values: np.ndarray
    uncertainty: np.ndarray = None
    floor: float = 0.0           # absolute noise floor of the values

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=float)
        self.values = np.asarray(self.values)
        if self.s.ndim != 1 or self.s.size != self.values.size:
            raise PreconditionError("s and values must be matching 1-d arrays")
        if self.s.size and (self.s[0] <= 0 or np.any(np.diff(self.s) <= 0)):
            raise PreconditionError("s must be positive and strictly increasing")

    @classmethod
    def from_radiation(cls, rf, s_min, s_max, ratio=1.05, floor_rel=1e-13):
        """Geometric resampling of a radiation field (rho-based convention)."""
        from .wave_solver import resample_geometric
        s, R = resample_geometric(rf, s_min, s_max, ratio, rho_based=True)
        _, R_all = rf.rho_convention()
        return cls(s, R, floor=floor_rel * float(np.max(np.abs(R_all))))

    @property
    def decades(self):
        return math.log10(self.s[-1] / self.s[0]) if self.s.size > 1 else 0.0


@dataclass
class TailTerm:
    sigma: complex
    kappa: int
    amp: complex
    p_err: float = 0.0       # spread of the power over shifted sub-windows

    @property
    def p(self):
        """Decay power: |term| ~ s^(-p) (log s)^kappa."""
        return 1.0 - self.sigma.imag


@dataclass
class ExpansionFit:
    terms: list
    window: tuple
    residual: float
    tol: float
    status: str = "ok"
    diagnostics: dict = field(default_factory=dict)

    def evaluate(self, s):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape, dtype=complex)
        for t in self.terms:
            out += t.amp * s ** (-1j * t.sigma - 1) * np.log(s) ** t.kappa
        return out

    def exponents(self):
        """Distinct sigma values, slowest decay first."""
        seen = []
        for t in self.terms:
            if not any(abs(t.sigma - x) < 1e-12 for x in seen):
                seen.append(t.sigma)
        return seen

    @property
    def leading_p(self):
        return self.terms[0].p if self.terms else None

    def max_kappa(self, sigma):
        return max(t.kappa for t in self.terms if abs(t.sigma - sigma) < 1e-12)

    def to_json(self):
        def num(a):
            a = complex(a)
            return a.real if a.imag == 0 else [a.real, a.imag]
        return {"terms": [{"re_sigma": t.sigma.real, "im_sigma": t.sigma.imag,
                           "kappa": t.kappa, "amp": num(t.amp), "p_err": t.p_err}
                          for t in self.terms],
                "window": [float(self.window[0]), float(self.window[1])],
                "residual": float(self.residual), "status": self.status}


def _sign_changes(F):
    sg = np.sign(F.real)
    sg = sg[sg != 0]
    return np.nonzero(np.diff(sg))[0]


def local_slope(s, F):
    """p(s) = -d log|F| / d log s by centred differences."""
    return -np.gradient(np.log(np.abs(F)), np.log(s))


def _richardson_slope(s, p):
    """Aitken extrapolation of p(s) from three points spaced by sqrt(10) over the last decade."""
    ls = np.log10(s)
    picks = [np.argmin(np.abs(ls - (ls[-1] - d))) for d in (1.0, 0.5, 0.0)]
    a, b, c = p[picks]
    den = (c - b) - (b - a)
    if abs(den) < 1e-14 or (c - b) * (b - a) <= 0:
        return float(c)
    est = c - (c - b) ** 2 / den
    return float(est) if abs(est - c) < 0.5 else float(c)


class _Model:
    """Groups (exponent, max kappa) fitted by variable projection."""

    def __init__(self, s, F, w, complex_exp):
        self.s, self.F, self.w = s, F, w
        self.ls = np.log(s)
        self.complex_exp = complex_exp

    def columns(self, ps, kappas):
        cols = []
        for p, k in zip(ps, kappas):
            base = np.exp(-p * self.ls)
            for j in range(k + 1):
                cols.append(base * self.ls ** j)
        return np.stack(cols, axis=1)

    def solve(self, ps, kappas):
        A = self.columns(ps, kappas) * self.w[:, None]
        norm = np.linalg.norm(A, axis=0)
        norm[norm == 0] = 1.0
        coef, *_ = np.linalg.lstsq(A / norm, self.w * self.F, rcond=None)
        r = (A / norm) @ coef - self.w * self.F
        return coef / norm, r

    def unpack(self, x):
        if self.complex_exp:
            return list(x[0::2] + 1j * x[1::2])
        return list(x)

    def fit(self, p0, kappas):
        x0 = (np.ravel(np.column_stack([np.real(p0), np.imag(p0)])) if self.complex_exp
              else np.real(np.asarray(p0, dtype=complex)))

        def fun(x):
            r = self.solve(self.unpack(x), kappas)[1]
            return np.concatenate([r.real, r.imag]) if np.iscomplexobj(r) else r

        sol = least_squares(fun, x0, xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        ps = self.unpack(sol.x)
        coef, r = self.solve(ps, kappas)
        return ps, coef, float(np.sqrt(np.mean(np.abs(r) ** 2)))


def _separated(ps, gap):
    for i in range(len(ps)):
        for j in range(i):
            if abs(ps[i] - ps[j]) < gap:
                return False
    return True


def _window_spread(s, F, w, complex_exp, ps, kappas, frac=0.25):
    """Largest change of each power when the window loses a quarter at either end."""
    ls = np.log(s)
    span = ls[-1] - ls[0]
    errs = np.zeros(len(ps))
    for keep in (ls >= ls[0] + frac * span, ls <= ls[-1] - frac * span):
        if keep.sum() < 2 * sum(k + 1 for k in kappas) + 2:
            return np.full(len(ps), np.inf)
        try:
            sub, _, _ = _Model(s[keep], F[keep], w[keep], complex_exp).fit(list(ps), kappas)
        except (np.linalg.LinAlgError, ValueError):
            return np.full(len(ps), np.inf)
        errs = np.maximum(errs, np.abs(np.asarray(sub) - np.asarray(ps)))
    return [float(e) for e in errs]


def fit_tail(samples, max_terms=3, allow_logs="auto", tol=1e-3, max_kappa=2, drop=10.0,
             gap=0.05):
    """Fit F(s) ~ sum a s^(-i sigma - 1) (log s)^kappa on the sample window.

    Stage one reads the leading power off the local log-slope, extrapolated
    by Aitken over the last decade.  Stage two fits amplitudes by linear
    least squares with the powers refined by variable projection.  The model
    then grows greedily, one log power on an existing exponent or one new
    exponent at a time, and a change is kept only if the weighted residual
    drops by ``drop``.  Residuals are weighted by ``s^p`` of the leading power.
    """
    s = samples.s
    F = samples.values
    if s.size < 30 or samples.decades < 2.0 - 1e-9:
        raise PreconditionError("tail fit needs at least 30 samples spanning two decades",
                                samples=int(s.size), decades=samples.decades)
    if allow_logs not in (True, False, "auto"):
        raise PreconditionError(f"allow_logs must be True, False or 'auto', got {allow_logs!r}")
    use_logs = allow_logs in (True, "auto")
    window = (float(s[0]), float(s[-1]))
    diag = {"samples": int(s.size)}
    absF = np.abs(F)
    floor = float(samples.floor)
    if np.all(absF <= floor):
        return ExpansionFit([], window, 0.0, tol, "below_floor",
                            {**diag, "floor": floor, "max_abs": float(absF.max())})
    above = absF > floor
    if not above[-1]:
        last = int(np.nonzero(above)[0][-1])
        if last + 1 < 30 or s[last] / s[0] < 100:
            return ExpansionFit([], window, 0.0, tol, "rapid_decay",
                                {**diag, "floor": floor, "reaches_floor_at": float(s[last + 1])})
        s, F = s[:last + 1], F[:last + 1]
        window = (float(s[0]), float(s[-1]))
        diag["truncated_at_floor"] = window[1]

    complex_data = np.iscomplexobj(F) and np.any(np.abs(F.imag) > 1e-14 * np.abs(F).max())
    if not complex_data:
        F = F.real
        flips = _sign_changes(F)
        diag["sign_changes"] = int(flips.size)
        tail_start = int(flips[-1]) + 1 if flips.size else 0
        if flips.size > 2 or s[-1] / s[tail_start] < 10:
            raise FitFailure("tail changes sign repeatedly; local exponent does not settle",
                             **diag, sign_change_s=[float(s[i]) for i in flips[:20]])
    else:
        tail_start = 0
        phase = np.unwrap(np.angle(F))
        diag["phase_rate"] = float(np.polyfit(np.log(s), phase, 1)[0])

    st, Ft = s[tail_start:], F[tail_start:]
    p_loc = local_slope(st, Ft)
    last = np.log10(st) >= np.log10(st[-1]) - 1.0
    pl = p_loc[last]
    net = abs(pl[-1] - pl[0])
    tv = float(np.sum(np.abs(np.diff(pl))))
    diag.update(p_local_end=float(p_loc[-1]), p_local_tv=tv)
    if not np.all(np.isfinite(pl)) or tv > 3 * net + 0.2:
        raise FitFailure("local log-slope is oscillatory over the last decade", **diag)
    p0 = _richardson_slope(st, p_loc)
    diag["p_richardson"] = p0
    if complex_data:
        p0 = p0 - 1j * diag["phase_rate"]

    w = s ** np.real(p0)
    w = w / np.median(np.abs(F) * w)
    model = _Model(s, F, w, complex_data)
    kappas = [0]
    ps, coef, resid = model.fit([p0], kappas)
    history = [("start", [complex(p) for p in ps], list(kappas), resid)]
    while resid > 1e-13:
        cands = []
        if use_logs:
            for g in range(len(ps)):
                if kappas[g] < max_kappa:
                    kk = list(kappas)
                    kk[g] += 1
                    cands.append(("log", list(ps), kk))
        if len(ps) < max_terms:
            r = F - model.columns(ps, kappas) @ coef
            starts = {max(np.real(ps)) + d for d in (0.5, 1.0, 2.0)}
            ar = np.abs(r)
            ok = ar > 1e-12 * ar.max()
            if ok.sum() > 5:
                starts.add(float(-np.polyfit(np.log(s[ok]), np.log(ar[ok]), 1)[0]))
            for st0 in sorted(starts):
                cands.append(("term", list(ps) + [st0], list(kappas) + [0]))
        best = None
        for kind, p_init, kk in cands:
            try:
                pp, cc, rr = model.fit(p_init, kk)
            except (np.linalg.LinAlgError, ValueError):
                continue
            if not np.all(np.isfinite(np.real(pp))) or not _separated(pp, gap):
                continue
            if best is None or rr < best[3]:
                best = (kind, pp, kk, rr, cc)
        if best is None or best[3] * drop > resid:
            break
        _, ps, kappas, resid, coef = best
        history.append((best[0], [complex(p) for p in ps], list(kappas), resid))
    diag["history"] = history
    errs = _window_spread(s, F, w, complex_data, ps, kappas)

    terms, pos = [], 0
    for p, k, e in zip(ps, kappas, errs):
        sig = -1j * (complex(p) - 1.0)
        for j in range(k + 1):
            a = complex(coef[pos + j])
            terms.append(TailTerm(complex(sig), j, a if complex_data else complex(a.real), e))
        pos += k + 1
    terms.sort(key=lambda t: (-t.sigma.imag, t.sigma.real, t.kappa))
    fit = ExpansionFit(terms, window, resid, tol, "ok", diag)
    if resid > tol:
        raise FitFailure(f"tail fit residual {resid:.2e} exceeds tolerance {tol:.1e}",
                         fit=fit, **diag)
    return fit


# ---------------------------------------------------------------------------
# matching
# ---------------------------------------------------------------------------

@dataclass
class MatchReport:
    matched: list
    unmatched: list
    unused: list
    tol: float
    unresolved: list = field(default_factory=list)

    @property
    def vacuous(self):
        return not self.matched and not self.unmatched

    @property
    def all_matched(self):
        return not self.unmatched

    def to_json(self):
        def c(z):
            return None if z is None else [float(np.real(z)), float(np.imag(z))]

        def row(m):
            return {k: (c(v) if k in ("sigma_fit", "sigma_res", "nearest") else v)
                    for k, v in m.items()}
        return {"tol": self.tol, "vacuous": self.vacuous, "all_matched": self.all_matched,
                "matched": [row(m) for m in self.matched],
                "unmatched": [row(m) for m in self.unmatched],
                "unresolved": [row(m) for m in self.unresolved],
                "unused": [c(z) for z in self.unused]}


def _on_lattice(sigma, tol):
    k = round(-sigma.imag)
    return k >= 1 and abs(sigma - (-1j * k)) <= tol


def match_resonances(fit, resonances, tol=0.05, leading_only=False):
    """Pair each fitted exponent with the nearest resonance, sigma ~ -i (p - 1).

    Only exponents enter the comparison; amplitudes depend on the chart
    normalisation and are ignored.  Exponents whose sub-window spread exceeds
    ``tol`` are not determined by the data and are listed as unresolved
    instead of being matched.  Unmatched exponents lying on the lattice
    -i k (k = 1, 2, ...) are flagged, since a tail there can come from states
    supported at the radial set rather than from a cap resonance.
    """
    res = np.asarray(resonances.sigmas() if hasattr(resonances, "sigmas") else resonances,
                     dtype=complex).ravel()
    exps = fit.exponents()
    if leading_only:
        exps = exps[:1]
    matched, unmatched, unresolved, used = [], [], [], set()
    for sig in exps:
        p = 1.0 - sig.imag
        kappa = fit.max_kappa(sig)
        err = max(t.p_err for t in fit.terms if abs(t.sigma - sig) < 1e-12)
        if err > tol:
            unresolved.append({"p": p, "kappa": kappa, "sigma_fit": complex(sig), "p_err": err})
            continue
        if res.size:
            d = np.abs(res - sig)
            j = int(np.argmin(d))
            if d[j] <= tol:
                used.add(j)
                matched.append({"p": p, "kappa": kappa, "p_err": err, "sigma_fit": complex(sig),
                                "sigma_res": complex(res[j]), "distance": float(d[j])})
                continue
            nearest, dist = complex(res[j]), float(d[j])
        else:
            nearest, dist = None, None
        unmatched.append({"p": p, "kappa": kappa, "p_err": err, "sigma_fit": complex(sig),
                          "nearest": nearest, "distance": dist, "lattice": _on_lattice(sig, tol)})
    unused = [complex(res[j]) for j in range(res.size) if j not in used]
    return MatchReport(matched, unmatched, unused, tol, unresolved)
