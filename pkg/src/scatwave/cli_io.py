"""Run configuration, task pipelines, persistence and plot scripts.

Usage: ``scatwave <task> --config cfg.json [--out DIR] [--seed N]``.  A
config is a single JSON document::

    {"task": "verify", "metric": {"n": 3}, "params": {"s_max": 1e4}, "seed": 0}

``metric`` is either an inline metric document or a path (relative to the
config file).  The only environment variable read is ``SCATWAVE_OUT``, an
output directory override below ``--out``.

Exit codes: 0 pass, 1 a built-in check failed, 2 usage or configuration
error, 3 numerical failure.
"""

import argparse
import csv
import hashlib
import json
import math
import os
import sys
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import ConfigError, InvalidDimensionError, ScatwaveError

TASKS = ("flow", "solve", "resonances", "tails", "verify", "scan")


# ---------------------------------------------------------------------------
# configuration


def _canonical(doc):
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(x):
    if isinstance(x, (complex, np.complexfloating)):
        return [float(x.real), float(x.imag)]
    if isinstance(x, np.integer):
        return int(x)
    if isinstance(x, np.floating):
        return float(x)
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not JSON serializable: {type(x).__name__}")


@dataclass
class RunConfig:
    task: str
    metric: dict = None
    params: dict = field(default_factory=dict)
    out: str = None
    seed: int = 0
    base_dir: str = "."

    def __post_init__(self):
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if isinstance(self.metric, (str, Path)):
            path = Path(self.base_dir) / self.metric
            if not path.is_file():
                raise ConfigError(f"metric file {path} does not exist")
            self.metric = json.loads(path.read_text())
        if self.task != "tails":
            if self.metric is None:
                raise ConfigError(f"task {self.task!r} needs a metric")
            self.metric = dict(self.metric)
            if "n" in self.params:
                self.metric["n"] = self.params["n"]
            n = self.metric.get("n")
            if n is None or int(n) != n or n < 2:
                raise InvalidDimensionError(f"dimension n={n} must be an integer >= 2")
            if self.task in ("solve", "verify") and n < 3:
                raise InvalidDimensionError("wave runs need n >= 3")
        else:
            src = self.params.get("input")
            if src is None:
                raise ConfigError("tails needs params.input (a radiation CSV)")
            path = Path(self.base_dir) / src
            if not path.is_file():
                raise ConfigError(f"input file {path} does not exist")
        if int(self.seed) != self.seed:
            raise ConfigError("seed must be an integer")
        self.seed = int(self.seed)

    @classmethod
    def from_json(cls, doc, base_dir="."):
        unknown = set(doc) - {"task", "metric", "params", "out", "seed"}
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "task" not in doc:
            raise ConfigError("config needs 'task'")
        return cls(doc["task"], doc.get("metric"), dict(doc.get("params", {})),
                   doc.get("out"), doc.get("seed", 0), str(base_dir))

    @classmethod
    def load(cls, path):
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        return cls.from_json(doc, path.parent)

    def to_json(self):
        return {"task": self.task, "metric": self.metric, "params": self.params,
                "seed": self.seed}

    def digest(self):
        return hashlib.sha256(_canonical(self.to_json()).encode()).hexdigest()

    def resolve(self, rel):
        return Path(self.base_dir) / rel


@dataclass
class RunManifest:
    config_hash: str
    version: str
    task: str
    seed: int
    status: str = "pass"             # pass | fail | error
    timings: dict = field(default_factory=dict)
    outputs: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)
    error: dict = None

    def to_json(self):
        return asdict(self)

    @classmethod
    def load(cls, path):
        return cls(**json.loads(Path(path).read_text()))


# ---------------------------------------------------------------------------
# writers


def _fmt(x):
    if isinstance(x, str):
        return x
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


class _Writer:
    def __init__(self, out, manifest):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.manifest = manifest

    def _track(self, name):
        if name not in self.manifest.outputs:
            self.manifest.outputs.append(name)
        return self.out / name

    def csv(self, name, header, rows):
        with open(self._track(name), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in rows:
                w.writerow([_fmt(x) for x in r])

    def json(self, name, doc):
        self._track(name).write_text(json.dumps(doc, indent=2, sort_keys=True,
                                                default=_json_default) + "\n")

    def text(self, name, body):
        self._track(name).write_text(body)


def _loglog_script(data, title, xcol, ycol, xlabel, ylabel, extra=""):
    return (f"# gnuplot script\nset title '{title}'\nset logscale xy\nset datafile separator ','\n"
            f"set key top right\nset xlabel '{xlabel}'\nset ylabel '{ylabel}'\n{extra}"
            f"plot '{data}' every ::1 using {xcol}:(abs(${ycol})) with lines title 'data'\n")


def _strip_script(data):
    return ("# gnuplot script\nset title 'resonances in the strip'\nset datafile separator ','\n"
            "set xlabel 'Re sigma'\nset ylabel 'Im sigma'\nset grid\n"
            f"plot '{data}' every ::1 using 1:2 with points pt 7 title 'filtered'\n")


def _trajectory_script(data):
    return ("# gnuplot script\nset title 'null bicharacteristics, (rho, theta) projection'\n"
            "set datafile separator ','\nset xlabel 'rho'\nset ylabel 'theta'\n"
            f"plot '{data}' every ::1 using 4:5 with dots title 'trajectories'\n")


# ---------------------------------------------------------------------------
# task pipelines


def _spec(cfg):
    from .geometry import spec_from_json
    return spec_from_json(cfg.metric)


def _source(params):
    from .wave_solver import SourceSpec, default_source
    doc = params.get("source")
    return default_source() if doc is None else SourceSpec(doc.get("kind", "bump"),
                                                           dict(doc.get("params", {})))


def _task_flow(cfg, w, stage, m):
    from .hamiltonian_flow import check_nontrapping, multiplicities, radial_linearization
    p = cfg.params
    spec = stage("geometry", lambda: _spec(cfg))
    rep = stage("nontrapping", lambda: check_nontrapping(
        spec, int(p.get("samples", 200)), cfg.seed, float(p.get("budget", 60.0)),
        float(p.get("delta", 1e-3)), keep_trajectories=True))
    rows = []
    for i, tr in enumerate(rep.trajectories[:int(p.get("keep", 40))]):
        for r in tr.to_rows():
            rows.append([i, tr.terminal_class, *r])
    n = spec.n
    head = (["id", "terminal", "s"] + ["x%d" % j for j in range(n)]
            + ["zeta%d" % j for j in range(n)] + ["nu"])
    w.csv("trajectories.csv", head, rows)
    w.text("trajectories.gp", _trajectory_script("trajectories.csv"))
    spec_r = stage("radial", lambda: radial_linearization(spec))
    ev = spec_r.eigenvalues
    w.csv("radial_spectrum.csv", ["re", "im"], [[e.real, e.imag] for e in ev])
    groups = multiplicities(ev, tol=float(p.get("mult_tol", 1e-5)))
    w.json("nontrapping.json", {"passed": rep.passed, "samples": rep.samples,
                                "max_drift": rep.max_drift, "terminal_counts": rep.terminal_counts,
                                "radial_groups": [[g, c] for g, c in groups]})
    m.checks["nontrapping"] = bool(rep.passed)
    m.checks["lambda_drift"] = bool(rep.max_drift < float(p.get("drift_tol", 1e-6)))
    m.summary.update(n=n, samples=rep.samples, max_drift=rep.max_drift,
                     radial_multiplicities=[c for _, c in groups])


def _radiation(cfg, stage, w=None):
    from .wave_solver import evolve_characteristic, extract_radiation_field, tail_problem
    p = cfg.params
    spec = stage("geometry", lambda: _spec(cfg))
    pr = stage("assemble", lambda: tail_problem(
        spec, spec.n, int(p.get("ell", 0)), float(p.get("s_max", 1e4)), float(p.get("h", 0.05)),
        _source(p), float(p.get("z_uniform", 20.0)), float(p.get("p_max", 1e6))))
    fld = stage("evolve", lambda: evolve_characteristic(pr))
    rf = stage("extract", lambda: extract_radiation_field(fld))
    if w is not None:
        w.json("field_header.json", fld.header())
    return spec, rf


def _write_radiation(w, rf):
    s, R = rf.rho_convention()
    w.csv("radiation.csv", ["s", "R"], zip(s, R))
    w.csv("radiation_r.csv", ["q", "R", "order", "residual"],
          zip(rf.q, rf.R, rf.order, rf.residual))
    w.text("radiation.gp", _loglog_script("radiation.csv", "radiation field", 1, 2, "s", "|R|"))


def _task_solve(cfg, w, stage, m):
    spec, rf = _radiation(cfg, stage, w)
    _write_radiation(w, rf)
    s, R = rf.rho_convention()
    m.checks["finite"] = bool(np.all(np.isfinite(R)))
    m.summary.update(n=spec.n, ell=rf.ell, samples=int(s.size),
                     max_abs_R=float(np.max(np.abs(R))))


def _resonances(cfg, spec, stage):
    from .resonances import cap_resonances
    p = cfg.params
    strip = tuple(p.get("strip", (-4.0, 0.0)))
    return stage("resonances", lambda: cap_resonances(
        spec, tuple(p.get("ells", (0, 1, 2))), int(p.get("N", 64)), strip,
        float(p.get("re_max", 3.0))))


def _write_resonances(w, rs):
    w.csv("resonances.csv", ["re", "im", "residual", "multiplicity", "ells"],
          [[e.sigma.real, e.sigma.imag, e.residual, e.multiplicity,
            " ".join(str(l) for l in e.ell)] for e in rs.entries])
    w.text("resonances.gp", _strip_script("resonances.csv"))


def _task_resonances(cfg, w, stage, m):
    from .resonances import exact_hyperbolic_resonances
    spec = stage("geometry", lambda: _spec(cfg))
    rs = _resonances(cfg, spec, stage)
    _write_resonances(w, rs)
    w.json("resonances.json", {"strip": rs.strip, "re_max": rs.re_max,
                               "inconclusive": rs.inconclusive, "entries": rs.to_json()})
    m.checks["conclusive"] = not rs.inconclusive
    if spec.perturbation_class == "exact_minkowski":
        ref = exact_hyperbolic_resonances(spec.n, rs.strip, rs.re_max).sigmas()
        got = rs.sigmas()
        ok = len(ref) == len(got) and all(np.min(np.abs(got - r)) < 1e-4 for r in ref)
        m.checks["minkowski_lattice"] = bool(ok)
    m.summary.update(n=spec.n, count=len(rs), sigmas=[[z.real, z.imag] for z in rs.sigmas()])


def _fit(cfg, samples, stage):
    from .mellin_tails import fit_tail
    p = cfg.params
    logs = p.get("logs", "auto")
    return stage("fit", lambda: fit_tail(samples, int(p.get("max_terms", 3)), logs,
                                         float(p.get("tol", 1e-3))))


def _write_fit(w, fit, samples):
    w.json("fit.json", fit.to_json())
    model = fit.evaluate(samples.s).real if fit.terms else np.zeros_like(samples.s)
    w.csv("tail_samples.csv", ["s", "F", "model"], zip(samples.s, np.real(samples.values), model))
    w.text("tail.gp", "# gnuplot script\nset title 'tail fit'\nset logscale xy\n"
                      "set datafile separator ','\nset xlabel 's'\nset ylabel '|F|'\n"
                      "plot 'tail_samples.csv' every ::1 using 1:(abs($2)) with points title 'data', \\\n"
                      "     '' every ::1 using 1:(abs($3)) with lines title 'model'\n")


def _summarize_fit(m, fit):
    m.summary["fit_status"] = fit.status
    m.summary["exponents"] = [1.0 - z.imag for z in fit.exponents()]
    m.summary["leading_exponent"] = fit.leading_p
    m.summary["residual"] = fit.residual


def _task_tails(cfg, w, stage, m):
    from .mellin_tails import TailSamples
    p = cfg.params
    path = cfg.resolve(p["input"])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    s_all, R_all = data[:, 0], data[:, 1]
    s_min = float(p.get("s_min", 100.0))
    s_max = float(p.get("s_max", s_all[-1]))
    ratio = float(p.get("ratio", 1.05))

    def resample():
        from scipy.interpolate import CubicSpline
        keep = (s_all >= s_min / 1.2) & (s_all <= s_max * 1.2)
        count = int(math.ceil(math.log(s_max / s_min) / math.log(ratio))) + 1
        s = np.geomspace(s_min, s_max, count)
        floor = float(p.get("floor_rel", 1e-13)) * float(np.max(np.abs(R_all)))
        return TailSamples(s, CubicSpline(s_all[keep], R_all[keep])(s), floor=floor)

    samples = stage("resample", resample)
    fit = _fit(cfg, samples, stage)
    _write_fit(w, fit, samples)
    m.checks["fit"] = fit.status in ("ok", "below_floor", "rapid_decay")
    _summarize_fit(m, fit)


def _task_verify(cfg, w, stage, m):
    from .mellin_tails import TailSamples, match_resonances
    p = cfg.params
    spec, rf = _radiation(cfg, stage, w)
    _write_radiation(w, rf)
    s_min = float(p.get("s_min", 100.0))
    s_max = float(p.get("s_max", 1e4))
    samples = stage("resample", lambda: TailSamples.from_radiation(
        rf, s_min, s_max, float(p.get("ratio", 1.05)), float(p.get("floor_rel", 1e-13))))
    fit = _fit(cfg, samples, stage)
    _write_fit(w, fit, samples)
    rs = _resonances(cfg, spec, stage)
    _write_resonances(w, rs)
    rep = stage("match", lambda: match_resonances(fit, rs, float(p.get("match_tol", 0.05))))
    w.json("match.json", rep.to_json())
    m.checks["fit"] = fit.status in ("ok", "below_floor", "rapid_decay")
    m.checks["match"] = rep.all_matched
    _summarize_fit(m, fit)
    m.summary.update(n=spec.n, ell=int(p.get("ell", 0)), matched=len(rep.matched),
                     unmatched=len(rep.unmatched), unresolved=len(rep.unresolved),
                     vacuous=rep.vacuous,
                     eps=_profile_eps(cfg.metric))


def _profile_eps(metric):
    prof = (metric or {}).get("profile") or {}
    params = prof.get("params", {})
    for key in ("eps", "eps_areal", "eps_conformal"):
        if key in params:
            return float(params[key])
    return 0.0


def _task_scan(cfg, w, stage, m):
    from .geometry import minkowski_metric, perturbed_metric
    from .resonances import perturbation_scan
    p = cfg.params
    n = int(cfg.metric["n"])
    prof = cfg.metric.get("profile") or {"family": "conformal_areal", "params": {}}
    keys = p.get("eps_keys", ["eps_conformal", "eps_areal"])
    cls = cfg.metric.get("class", "normally_very_short_range")
    grid = [float(e) for e in p.get("eps_grid", [0.0, 0.005, 0.01, 0.02])]
    if not grid:
        raise ConfigError("scan needs a non-empty eps_grid")
    base = minkowski_metric(n)

    def family(e):
        if e == 0.0:
            return base
        pp = dict(prof.get("params", {}))
        for k in keys:
            pp[k] = e
        return perturbed_metric(base, {"family": prof.get("family", "conformal_areal"),
                                       "params": pp}, cls)

    res = stage("scan", lambda: perturbation_scan(
        family, grid, tuple(p.get("ells", (0, 1, 2))), int(p.get("N", 48)),
        tuple(p.get("strip", (-4.0, 0.0))), float(p.get("re_max", 3.0))))
    rows = []
    for b, br in enumerate(res.branches):
        for e, z in zip(br["eps"], br["sigma"]):
            rows.append([b, e, z.real, z.imag,
                         "" if br["emerged_near"] is None else br["emerged_near"]])
    w.csv("scan.csv", ["branch", "eps", "re", "im", "emerged_near"], rows)
    w.text("scan.gp", "# gnuplot script\nset datafile separator ','\nset xlabel 'eps'\n"
                      "set ylabel 'Im sigma'\nplot 'scan.csv' every ::1 using 2:4 with "
                      "linespoints title 'branches'\n")
    m.checks["unambiguous"] = not res.ambiguous
    m.summary.update(n=n, branches=len(res.branches), drift_constant=res.drift_constant,
                     eps_grid=grid)


_PIPELINES = {"flow": _task_flow, "solve": _task_solve, "resonances": _task_resonances,
              "tails": _task_tails, "verify": _task_verify, "scan": _task_scan}


# ---------------------------------------------------------------------------
# orchestration


def output_dir(cfg, override=None):
    if override:
        return Path(override)
    env = os.environ.get("SCATWAVE_OUT")
    if env:
        return Path(env)
    if cfg.out:
        return cfg.resolve(cfg.out)
    return Path(f"scatwave_{cfg.task}")


def _write_manifest(out, manifest):
    path = Path(out) / "manifest.json"
    tmp = path.with_suffix(".json.tmp")
    tmp.write_text(json.dumps(manifest.to_json(), indent=2, sort_keys=True,
                              default=_json_default) + "\n")
    os.replace(tmp, path)


def run(config, out=None):
    """Execute the task pipeline; the manifest is written last.

    A stage error is re-raised with ``details['stage']`` set after the
    manifest has been written with status 'error'.
    """
    out = output_dir(config, out)
    manifest = RunManifest(config.digest(), __version__, config.task, config.seed)
    manifest.summary["config"] = config.to_json()
    writer = _Writer(out, manifest)
    writer.json("config.json", config.to_json())
    np.random.seed(config.seed)

    def stage(name, fn):
        t0 = time.perf_counter()
        try:
            return fn()
        except ScatwaveError as e:
            e.details["stage"] = name
            raise
        except (FloatingPointError, np.linalg.LinAlgError, ValueError) as e:
            raise ScatwaveError(f"{type(e).__name__}: {e}", stage=name) from e
        finally:
            manifest.timings[name] = manifest.timings.get(name, 0.0) + time.perf_counter() - t0

    try:
        _PIPELINES[config.task](config, writer, stage, manifest)
    except ScatwaveError as e:
        manifest.status = "error"
        manifest.error = {"stage": e.details.get("stage"), "type": type(e).__name__,
                          "message": str(e), "exit_code": e.exit_code}
        _write_manifest(out, manifest)
        raise
    manifest.status = "pass" if all(manifest.checks.values()) else "fail"
    _write_manifest(out, manifest)
    return manifest


_REPORT_COLUMNS = ("task", "n", "ell", "eps", "status", "leading_exponent", "exponents",
                   "matched", "unmatched", "config_hash")


def emit_report(manifests, out=None):
    """One row per manifest; eps-sorted when eps is present, else by n.

    Writes ``report.csv`` and ``report.gp`` into ``out`` when given.
    """
    ms = [RunManifest.load(x) if isinstance(x, (str, Path)) else x for x in manifests]
    versions = {m.version for m in ms}
    if len(versions) > 1:
        warnings.warn(f"manifests come from different versions: {sorted(versions)}")
    rows = []
    for m in ms:
        s = m.summary
        lead = s.get("leading_exponent")
        rows.append({"task": m.task, "n": s.get("n"), "ell": s.get("ell"), "eps": s.get("eps"),
                     "status": m.status, "leading_exponent": lead,
                     "exponents": " ".join(f"{x:.6g}" for x in s.get("exponents", [])),
                     "matched": s.get("matched"), "unmatched": s.get("unmatched"),
                     "config_hash": m.config_hash})
    if any(r["eps"] for r in rows):
        rows.sort(key=lambda r: (r["eps"] or 0.0, r["n"] or 0))
    else:
        rows.sort(key=lambda r: (r["n"] or 0, r["ell"] or 0))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "report.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(_REPORT_COLUMNS)
            for r in rows:
                w.writerow([_fmt(r[c]) if r[c] is not None else "none" for c in _REPORT_COLUMNS])
        xcol = 4 if any(r["eps"] for r in rows) else 2
        (out / "report.gp").write_text(
            "# gnuplot script\nset datafile separator ','\nset datafile missing 'none'\n"
            f"set xlabel '{'eps' if xcol == 4 else 'n'}'\nset ylabel 'leading exponent'\n"
            f"plot 'report.csv' every ::1 using {xcol}:6 with linespoints title 'p'\n")
    return rows


# ---------------------------------------------------------------------------
# command line


def _parser():
    ap = argparse.ArgumentParser(prog="scatwave", description=__doc__.splitlines()[0])
    ap.add_argument("task", choices=TASKS)
    ap.add_argument("--config", help="JSON run configuration")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="seed for stochastic sampling")
    ap.add_argument("--metric", help="metric JSON file (overrides the config)")
    ap.add_argument("--n", type=int, help="spacetime dimension")
    ap.add_argument("--in", dest="input", help="radiation CSV for the tails task")
    ap.add_argument("--max-terms", type=int)
    ap.add_argument("--logs", choices=("auto", "on", "off"))
    ap.add_argument("--ell", help="angular index, or a range such as 0..4 for resonances")
    ap.add_argument("--strip", type=float, nargs=2, metavar=("LO", "HI"))
    ap.add_argument("--N", type=int, help="collocation size")
    ap.add_argument("--h", type=float, help="null grid step")
    ap.add_argument("--pmax", type=float, help="last p-level of the null grid")
    ap.add_argument("--smax", type=float, help="last front-face time s of a wave run")
    ap.add_argument("--samples", type=int, help="number of characteristic starts")
    ap.add_argument("--budget", type=float, help="flow parameter budget")
    return ap


def _ell_arg(text):
    if ".." in text:
        a, b = text.split("..")
        return list(range(int(a), int(b) + 1))
    return int(text)


def config_from_args(args):
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        try:
            doc = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from None
        base = path.parent
    else:
        doc, base = {}, Path(".")
    if doc.get("task", args.task) != args.task:
        raise ConfigError(f"config task {doc['task']!r} differs from command {args.task!r}")
    doc["task"] = args.task
    params = dict(doc.get("params", {}))
    if args.metric:
        mpath = Path(args.metric)
        if not mpath.is_file():
            raise ConfigError(f"metric file {mpath} does not exist")
        doc["metric"] = json.loads(mpath.read_text())
    if args.n is not None:
        params["n"] = args.n
        doc.setdefault("metric", {"n": args.n})
    if args.input:
        params["input"] = str(Path(args.input).resolve())
    if args.max_terms is not None:
        params["max_terms"] = args.max_terms
    if args.logs:
        params["logs"] = {"auto": "auto", "on": True, "off": False}[args.logs]
    if args.ell is not None:
        ell = _ell_arg(args.ell)
        if isinstance(ell, list):
            params["ells"] = ell
        elif args.task == "resonances":
            params["ells"] = [ell]
        else:
            params["ell"] = ell
    for key, val in (("strip", args.strip), ("N", args.N), ("h", args.h), ("p_max", args.pmax),
                     ("s_max", args.smax),
                     ("samples", args.samples), ("budget", args.budget)):
        if val is not None:
            params[key] = list(val) if key == "strip" else val
    if args.seed is not None:
        doc["seed"] = args.seed
    doc["params"] = params
    return RunConfig.from_json(doc, base)


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        manifest = run(cfg, args.out)
    except ScatwaveError as e:
        print(f"scatwave: {type(e).__name__}: {e}", file=sys.stderr)
        return e.exit_code
    print(json.dumps({"status": manifest.status, "checks": manifest.checks,
                      "outputs": manifest.outputs}, default=_json_default))
    return 0 if manifest.status == "pass" else 1


if __name__ == "__main__":
    sys.exit(main())
