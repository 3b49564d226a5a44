"""Experiment configuration, orchestration and report writing."""

from __future__ import annotations

import concurrent.futures as cf
import csv
import io
import json
import math
import multiprocessing as mp
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import CoefficientSet, TEMPLATES
from .concavity import boundary_audit, max_deficit, numerical_floor
from .envelope import hyers_ulam_witness
from .errors import AllCensored, BetaOneRejected, ConfigError, SolverError
from .fields import Grid, ScalarField, transform_log, transform_power, write_field
from .geometry import Disk, Square, domain_from_config
from .solver import EigenPerturbed, Phi, Power, ProblemSpec, solve
from .verifier import audit_instance, audit_propositions, audit_remark_noconc

CSV_MAGIC = "#SWEEP v1"
CSV_COLUMNS = ("eps", "eps_meas", "deficit", "floor", "censored", "envelope_distance",
               "envelope_ratio", "audit", "audit_margin", "iterations", "residual", "status")

# -- configuration ----------------------------------------------------------------


def _phi_from(cfg) -> Phi:
    if isinstance(cfg, str):
        return Phi(cfg)
    if isinstance(cfg, dict):
        return Phi(cfg.get("kind", "power"), float(cfg.get("gamma", 0.0)))
    raise ConfigError(f"cannot read phi from {cfg!r}")


@dataclass
class ExperimentConfig:
    """Validated experiment description; see the README for the JSON layout."""

    domain: dict
    h: float
    coefficients: dict
    nonlinearity: dict
    eps: float = 0.0
    sweep: list = field(default_factory=list)
    solver: dict = field(default_factory=dict)
    deficit: dict = field(default_factory=dict)
    audit: dict = field(default_factory=dict)
    seed: int = 0
    output: str = "out"
    field_path: str | None = None

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {"domain", "grid", "coefficients", "nonlinearity", "eps", "sweep", "solver",
                 "deficit", "audit", "seed", "output", "field"}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        for key in ("domain", "grid", "coefficients", "nonlinearity"):
            if key not in d:
                raise ConfigError(f"missing config key {key!r}")
        grid = d["grid"]
        if not isinstance(grid, dict) or "h" not in grid:
            raise ConfigError("grid must be an object with spacing 'h'")
        sweep = d.get("sweep", {})
        eps_list = sweep.get("eps", []) if isinstance(sweep, dict) else sweep
        cfg = cls(domain=d["domain"], h=float(grid["h"]), coefficients=d["coefficients"],
                  nonlinearity=d["nonlinearity"], eps=float(d.get("eps", 0.0)),
                  sweep=[float(e) for e in eps_list], solver=dict(d.get("solver", {})),
                  deficit=dict(d.get("deficit", {})), audit=dict(d.get("audit", {})),
                  seed=int(d.get("seed", 0)), output=str(d.get("output", "out")),
                  field_path=d.get("field"))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}, column {exc.colno}: "
                              f"{exc.msg}") from None
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        d = {"domain": self.domain, "grid": {"h": self.h}, "coefficients": self.coefficients,
             "nonlinearity": self.nonlinearity, "eps": self.eps, "sweep": {"eps": self.sweep},
             "solver": self.solver, "deficit": self.deficit, "audit": self.audit,
             "seed": self.seed, "output": self.output}
        if self.field_path is not None:
            d["field"] = self.field_path
        return d

    def validate(self) -> None:
        self.build_domain()
        if not self.h > 0:
            raise ConfigError("grid spacing h must be positive")
        probe = self.sweep[0] if self.sweep else self.eps
        self.build_coefficients(probe)
        self.build_nonlinearity(probe)
        if self.sweep:
            if any(e <= 0 for e in self.sweep):
                raise ConfigError("sweep eps values must be positive")
            if list(self.sweep) != sorted(set(self.sweep)):
                raise ConfigError("sweep eps values must be strictly ascending")

    def require_sweep(self) -> None:
        if len(self.sweep) < 4:
            raise ConfigError("a sweep needs at least 4 eps values")

    # -- builders
    def build_domain(self):
        try:
            return domain_from_config(self.domain)
        except (ValueError, TypeError, AttributeError) as exc:
            raise ConfigError(f"bad domain: {exc}") from None

    def build_coefficients(self, eps: float) -> CoefficientSet:
        c = self.coefficients
        if not isinstance(c, dict):
            raise ConfigError("coefficients must be an object")
        zeta = float(c.get("zeta", 0.5))
        if "template" in c:
            if c["template"] not in TEMPLATES:
                raise ConfigError(f"unknown coefficient template {c['template']!r}")
            return CoefficientSet.template(c["template"], eps, zeta)
        if "a" not in c or "alpha" not in c:
            raise ConfigError("coefficients need 'template' or both 'a' and 'alpha'")
        alpha = c["alpha"]
        if not (isinstance(alpha, list) and len(alpha) == 2 and all(len(r) == 2 for r in alpha)):
            raise ConfigError("alpha must be a 2x2 list of expressions")
        cs = CoefficientSet.from_strings(str(c["a"]), [[str(v) for v in r] for r in alpha],
                                         eps, zeta, c.get("name", "custom"))
        for e in (cs.a, cs.a11, cs.a12, cs.a22):
            _ = e.sym
        return cs

    def build_nonlinearity(self, eps: float):
        n = self.nonlinearity
        if not isinstance(n, dict):
            raise ConfigError("nonlinearity must be an object")
        kind = n.get("kind")
        try:
            if kind == "power":
                return Power(float(n.get("beta", 0.0)))
            if kind == "eigen":
                eps_phi = n.get("eps_phi", "eps")
                eps_phi = eps if eps_phi == "eps" else float(eps_phi)
                return EigenPerturbed(_phi_from(n.get("phi", "one")), eps_phi)
        except (BetaOneRejected, ValueError, TypeError) as exc:
            raise ConfigError(f"bad nonlinearity: {exc}") from None
        raise ConfigError(f"unknown nonlinearity kind {kind!r}")

    def problem(self, eps: float | None = None) -> ProblemSpec:
        eps = self.eps if eps is None else eps
        s = self.solver
        return ProblemSpec(self.build_domain(), self.h, self.build_coefficients(eps),
                           self.build_nonlinearity(eps), tol=float(s.get("tol", 1e-10)),
                           max_iter=int(s.get("max_iter", 50)))

    def deficit_rho(self, nonlinearity) -> float:
        rho = self.deficit.get("rho")
        if rho is not None:
            return float(rho)
        return 0.0 if isinstance(nonlinearity, Power) else 5.0 * self.h

    def deficit_kwargs(self) -> dict:
        d = self.deficit
        kw = {"lambda_grid": int(d.get("lambda_grid", 15)), "top_k": int(d.get("top_k", 16)),
              "max_pairs": int(d.get("max_pairs", 20_000_000))}
        if d.get("stride") is not None:
            kw["stride"] = int(d["stride"])
        return kw


# -- output helpers -----------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, float):
        return obj if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        return _clean(obj.item())
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    return obj


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def transform_of(u: ScalarField, nonlinearity) -> ScalarField:
    if isinstance(nonlinearity, Power):
        return transform_power(u, nonlinearity.beta)
    return transform_log(u)


def _outdir(path) -> Path:
    p = Path(path)
    p.mkdir(parents=True, exist_ok=True)
    return p


# -- single-instance commands --------------------------------------------------------


def _solution(cfg: ExperimentConfig, eps: float | None = None):
    spec = cfg.problem(eps)
    if cfg.field_path is not None:
        from .fields import read_field
        u = read_field(cfg.field_path, spec.domain, dirichlet=True)
        return spec, u, None
    u, rep = solve(spec)
    return spec, u, rep


def run_solve(cfg: ExperimentConfig, out) -> dict:
    """Solve once; write ``solution.field``, ``solve.json`` and ``timing.json``."""
    out = _outdir(out)
    spec, u, rep = _solution(cfg)
    write_field(u, out / "solution.field")
    d = rep.to_dict()
    wall = d.pop("wall_time")
    write_json(out / "solve.json", {"config": cfg.to_dict(), "report": d})
    write_json(out / "timing.json", {"solve_wall_time": wall})
    return {"field": str(out / "solution.field"), "report": str(out / "solve.json")}


def _deficit(cfg, spec, u):
    f = transform_of(u, spec.nonlinearity)
    rho = cfg.deficit_rho(spec.nonlinearity)
    rep = max_deficit(f, rho=rho, **cfg.deficit_kwargs())
    return f, rep


def run_deficit(cfg: ExperimentConfig, out) -> dict:
    out = _outdir(out)
    spec, u, _ = _solution(cfg)
    f, rep = _deficit(cfg, spec, u)
    floor = numerical_floor(f)
    res = {"config": cfg.to_dict(), "report": rep.to_json(), "floor": floor,
           "classification": boundary_audit(rep, f, floor)}
    write_json(out / "deficit.json", res)
    return res


def run_envelope(cfg: ExperimentConfig, out) -> dict:
    out = _outdir(out)
    spec, u, _ = _solution(cfg)
    f, rep = _deficit(cfg, spec, u)
    env = hyers_ulam_witness(f, rep.deficit, float(cfg.audit.get("K", 10.0)))
    write_field(env.envelope, out / "envelope.field")
    res = {"config": cfg.to_dict(), "envelope": env.to_json(), "deficit": rep.deficit}
    write_json(out / "envelope.json", res)
    return res


def run_check(cfg: ExperimentConfig, out, theorem: str = "auto") -> dict:
    """Audit one instance; ``theorem`` is ``1``, ``2``, ``props``, ``remark`` or ``auto``."""
    out = _outdir(out)
    if theorem == "remark":
        g0s = cfg.audit.get("g0", ["1 + x", "exp(x)", "2 + sin(x)", "1"])
        res = {"witnesses": [audit_remark_noconc(g).to_json() for g in g0s]}
        write_json(out / "remark.json", res)
        return res
    spec, u, _ = _solution(cfg)
    f, rep = _deficit(cfg, spec, u)
    res = {"config": cfg.to_dict(), "deficit": rep.to_json()}
    if theorem in ("props", "auto"):
        res["propositions"] = audit_propositions(spec.coefficients, spec.nonlinearity, u, rep)
    if theorem in ("1", "2", "auto"):
        nl = spec.nonlinearity
        want = "2" if isinstance(nl, Power) else "1"
        if theorem != "auto" and theorem != want:
            raise ConfigError(f"bound {theorem} does not apply to this nonlinearity (use {want})")
        res["audit"] = audit_instance(u, spec.coefficients, nl, rep,
                                      slack=float(cfg.audit.get("slack", 0.05))).to_json()
    write_json(out / "audit.json", res)
    return res


# -- sweeps --------------------------------------------------------------------------


def _sweep_row(cfg_dict: dict, eps: float) -> dict:
    cfg = ExperimentConfig.from_dict(cfg_dict)
    row = {"eps": eps}
    t0 = time.perf_counter()
    try:
        spec, u, srep = _solution(cfg, eps)
    except SolverError as exc:
        row.update(status=type(exc).__name__, reason=str(exc), wall_time=time.perf_counter() - t0)
        return row
    f, rep = _deficit(cfg, spec, u)
    props = audit_propositions(spec.coefficients, spec.nonlinearity, u, rep)
    row.update(eps_meas=props["eps_meas"], deficit=rep.deficit, floor=props["floor"],
               censored=props["censored"], x1=rep.x1, x3=rep.x3, lam=rep.lam, stride=rep.stride,
               classification=boundary_audit(rep, f, props["floor"]), status="ok",
               iterations=srep.iterations if srep else 0, residual=srep.residual if srep else 0.0,
               chain=props.get("chain"))
    if cfg.audit.get("envelope", True):
        env = hyers_ulam_witness(f, rep.deficit, float(cfg.audit.get("K", 10.0)))
        row.update(envelope_distance=env.distance, envelope_ratio=env.ratio,
                   envelope_consistent=env.consistent)
    if cfg.audit.get("theorems", True):
        a = audit_instance(u, spec.coefficients, spec.nonlinearity, rep,
                           slack=float(cfg.audit.get("slack", 0.05)))
        row["audit"] = a.status
        row["audit_margin"] = a.margin
        row["audit_detail"] = a.to_json()
    row["wall_time"] = time.perf_counter() - t0
    return row


def fit_loglog(rows) -> dict:
    """Least-squares fit of ``log deficit`` against ``log eps_meas`` over uncensored rows."""
    ok = [r for r in rows if r.get("status") == "ok"]
    use = [r for r in ok if not r["censored"] and r["deficit"] > 0 and r["eps_meas"] > 0]
    if ok and not use:
        raise AllCensored("every row is at or below the numerical floor")
    if len(use) < 3:
        raise AllCensored(f"only {len(use)} uncensored rows; at least 3 are needed")
    x = np.log([r["eps_meas"] for r in use])
    y = np.log([r["deficit"] for r in use])
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    return {"slope": float(coef[0]), "intercept": float(coef[1]),
            "residual": float(res[0]) if len(res) else 0.0, "rows": len(use)}


def _monotonicity(rows) -> list:
    flags = []
    use = [r for r in rows if r.get("status") == "ok" and not r["censored"]]
    for a, b in zip(use, use[1:]):
        if b["deficit"] < a["deficit"]:
            kind = "noise" if b["deficit"] >= 0.9 * a["deficit"] else "inversion"
            flags.append({"eps": [a["eps"], b["eps"]], "kind": kind})
    return flags


@dataclass
class SweepReport:
    rows: list
    fit: dict | None
    fit_error: str | None
    monotonicity: list
    config: dict

    def to_json(self) -> dict:
        rows = [{k: v for k, v in r.items() if k != "wall_time"} for r in self.rows]
        return {"rows": rows, "fit": self.fit, "fit_error": self.fit_error,
                "monotonicity": self.monotonicity, "config": self.config,
                "ratio_spread": self.ratio_spread}

    @property
    def ratio_spread(self) -> float | None:
        """``max/min - 1`` of ``deficit / eps_meas`` over uncensored rows."""
        ratios = [r["deficit"] / r["eps_meas"] for r in self.rows
                  if r.get("status") == "ok" and not r["censored"] and r["eps_meas"] > 0
                  and r["deficit"] > 0]
        if len(ratios) < 2:
            return None
        return max(ratios) / min(ratios) - 1.0

    @property
    def inequality_failures(self) -> int:
        return sum(1 for r in self.rows if r.get("audit") == "inequality-failure")


def _threads(threads: int | None) -> int:
    env = os.environ.get("CONCAVLAB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"CONCAVLAB_THREADS must be an integer, got {env!r}") from None
    return max(1, int(threads or 1))


def run_sweep(cfg: ExperimentConfig, out=None, threads: int | None = None) -> SweepReport:
    """Solve, measure and audit every eps of the sweep, then fit the log-log slope."""
    cfg.require_sweep()
    n = _threads(threads)
    d = cfg.to_dict()
    if n > 1 and len(cfg.sweep) > 1:
        ctx = mp.get_context("spawn")
        with cf.ProcessPoolExecutor(max_workers=n, mp_context=ctx) as pool:
            rows = list(pool.map(_sweep_row, [d] * len(cfg.sweep), cfg.sweep))
    else:
        rows = [_sweep_row(d, e) for e in cfg.sweep]
    try:
        fit, err = fit_loglog(rows), None
    except AllCensored as exc:
        fit, err = None, f"all-censored: {exc}"
    report = SweepReport(rows, fit, err, _monotonicity(rows), d)
    if out is not None:
        write_sweep(report, out)
    return report


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def sweep_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    buf.write(CSV_MAGIC + "\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in report.rows:
        w.writerow([_fmt(r.get(c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def write_sweep(report: SweepReport, out) -> None:
    out = _outdir(out)
    (out / "sweep.csv").write_text(sweep_csv(report))
    write_json(out / "sweep.json", report.to_json())
    lines = ["# eps_meas deficit censored"]
    for r in report.rows:
        if r.get("status") == "ok":
            lines.append(f"{r['eps_meas']!r} {r['deficit']!r} {int(r['censored'])}")
    (out / "sweep_plot.dat").write_text("\n".join(lines) + "\n")
    (out / "sweep.svg").write_text(loglog_svg(report))
    write_json(out / "timing.json", {"rows": [{"eps": r["eps"], "wall_time": r.get("wall_time")}
                                             for r in report.rows]})


def loglog_svg(report: SweepReport, width: int = 480, height: int = 360) -> str:
    """Static log-log chart of deficit against eps_meas; censored rows drawn at the floor."""
    pts = []
    for r in report.rows:
        if r.get("status") != "ok" or not r["eps_meas"] > 0:
            continue
        y = r["deficit"] if not r["censored"] else r["floor"]
        if y > 0:
            pts.append((math.log10(r["eps_meas"]), math.log10(y), r["censored"]))
    pad = 50
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
             f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
             f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>',
             f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>',
             f'<text x="{width // 2}" y="{height - 10}" text-anchor="middle" font-size="12">log10 eps_meas</text>',
             f'<text x="14" y="{height // 2}" font-size="12" transform="rotate(-90 14 {height // 2})" '
             f'text-anchor="middle">log10 deficit</text>']
    if pts:
        xs = [p[0] for p in pts]
        ys = [p[1] for p in pts]
        x0, x1 = min(xs) - 0.1, max(xs) + 0.1
        y0, y1 = min(ys) - 0.1, max(ys) + 0.1

        def sx(x):
            return pad + (x - x0) / (x1 - x0) * (width - 2 * pad)

        def sy(y):
            return height - pad - (y - y0) / (y1 - y0) * (height - 2 * pad)

        path = " ".join(f"{'M' if k == 0 else 'L'}{sx(x):.2f},{sy(y):.2f}" for k, (x, y, _) in enumerate(pts))
        parts.append(f'<path d="{path}" fill="none" stroke="steelblue"/>')
        for x, y, cens in pts:
            fill = "white" if cens else "steelblue"
            parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(y):.2f}" r="4" fill="{fill}" stroke="steelblue"/>')
        for v, label in ((x0, f"{x0:.2f}"), (x1, f"{x1:.2f}")):
            parts.append(f'<text x="{sx(v):.2f}" y="{height - pad + 15}" font-size="10" '
                         f'text-anchor="middle">{label}</text>')
        for v, label in ((y0, f"{y0:.2f}"), (y1, f"{y1:.2f}")):
            parts.append(f'<text x="{pad - 5}" y="{sy(v):.2f}" font-size="10" text-anchor="end">{label}</text>')
        if report.fit:
            parts.append(f'<text x="{width - pad}" y="{pad - 10}" font-size="12" text-anchor="end">'
                         f'slope {report.fit["slope"]:.3f}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


# -- baselines ------------------------------------------------------------------------

BASELINE_H = 1.0 / 64


def _eigenfunction_square(h: float) -> ScalarField:
    sq = Square(0.0, 0.0, math.pi)
    g = Grid.covering(sq, h)
    pts = g.points()
    vals = np.full((g.ny, g.nx), np.nan)
    p = pts[g.mask]
    vals[g.mask] = np.sin(p[:, 0]) * np.sin(p[:, 1])
    vals /= np.nanmax(vals)
    return ScalarField(g, vals, 0.0, dirichlet=True)


def run_baselines(out=None, h: float = BASELINE_H) -> list:
    """Classical concavity oracles; each entry carries a measured value and pass flag."""
    rows = []
    disk = Disk(0.0, 0.0, 1.0)
    ident = CoefficientSet.identity()

    u, rep = solve(ProblemSpec(disk, h, ident, Power(0.0)))
    pts = u.grid.interior_points()
    err = float(np.max(np.abs(u.interior() - (1 - (pts ** 2).sum(1)) / 4)))
    rows.append({"name": "torsion-closed-form", "value": err, "bound": 5e-3, "passed": err <= 5e-3})
    d = max_deficit(transform_power(u, 0.0)).deficit
    rows.append({"name": "torsion-sqrt-deficit", "value": d, "bound": 5e-3, "passed": d <= 5e-3})

    hs = math.pi * h
    e = _eigenfunction_square(hs)
    du = max_deficit(e).deficit
    rows.append({"name": "eigenfunction-deficit", "value": du, "bound": 0.05, "passed": du > 0.05,
                 "relation": ">"})
    dl = max_deficit(transform_log(e), rho=5 * hs).deficit
    rows.append({"name": "eigenfunction-log-deficit", "value": dl, "bound": 1e-2, "passed": dl <= 1e-2})

    u, rep = solve(ProblemSpec(disk, h, ident, Power(0.5)))
    f = transform_power(u, 0.5)
    dk = max_deficit(f).deficit
    floor = numerical_floor(f)
    rows.append({"name": "power-quarter-deficit", "value": dk, "bound": 1e-2, "floor": floor,
                 "passed": dk <= 1e-2 and dk <= floor})
    if out is not None:
        write_json(_outdir(out) / "baselines.json", {"h": h, "rows": rows})
    return rows


def format_table(rows) -> str:
    lines = [f"{'oracle':<28} {'value':>12} {'bound':>10}  result"]
    for r in rows:
        rel = r.get("relation", "<=")
        lines.append(f"{r['name']:<28} {r['value']:>12.4g} {rel:>2}{r['bound']:>8.3g}  "
                     f"{'PASS' if r['passed'] else 'FAIL'}")
    return "\n".join(lines)
