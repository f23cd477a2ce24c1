"""Experiment orchestration: config, sweeps over (H, m), CSV reports and caches."""
from __future__ import annotations

import csv
import gc
import json
import logging
import time
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np

from . import coeff
from .assembly import assemble_global, global_load
from .auxspace import AuxSpace, aux_digest, build_aux_space, spectral_statistics
from .cem import build_all, decay_study
from .errors import ConfigurationError, SignCemError
from .export import write_node_csv, write_vtk
from .grid import GridHierarchy, build_hierarchy
from .metrics import Norms, error_report
from .online import (assemble_online, column_quadratic, galerkin_residuals, interpolate_exact, solve_online,
                     solve_q1_coarse, solve_reference)

log = logging.getLogger(__name__)

MODELS = ("flat", "square", "cross", "random")
ERROR_COLUMNS = ("model", "fine_n", "H", "m", "l_star", "sigma_plus", "sigma_minus",
                 "rel_energy", "rel_l2", "status", "offline_ms", "online_ms")
TIMING_COLUMNS = ("offline_ms", "online_ms")

# element (ex, ey) marked for the basis-decay study on the 10x10 square model;
# m = 8 saturates there
DECAY_ELEMENT = (1, 1)


@dataclass
class ExperimentConfig:
    model: str = "square"
    fine_n: int = 400
    coarse_n: list = field(default_factory=lambda: [10, 20, 40, 80])
    layers: list = field(default_factory=lambda: [1, 2, 3, 4])
    eigs: int = 3
    sigma_plus: float = 1.0
    sigma_minus: float = 0.1
    gamma: float = 0.5
    n_cells: int = 10
    seed: int = 1
    count: int = 60
    side_range: list = field(default_factory=lambda: [8, 24])
    source: dict = field(default_factory=lambda: {"kind": "gaussian"})
    out: str = "out"
    cache: bool = True
    threads: int = 1
    baseline: bool = False
    spectra_eigs: int = 4
    decay: Optional[dict] = None
    dump_fields: bool = True

    def validate(self):
        if self.model not in MODELS:
            raise ConfigurationError(f"model must be one of {MODELS}, got {self.model!r}")
        if not self.coarse_n:
            raise ConfigurationError("coarse_n list is empty")
        if not self.layers:
            raise ConfigurationError("layers (m) list is empty")
        for n in self.coarse_n:
            if n < 1 or self.fine_n % n:
                raise ConfigurationError(f"coarse_n={n} does not divide fine_n={self.fine_n}")
        if any(m < 0 for m in self.layers):
            raise ConfigurationError("layer counts must be >= 0")
        if self.eigs < 1:
            raise ConfigurationError("eigs (l_star) must be >= 1")
        for n in self.coarse_n:
            if self.eigs > (self.fine_n // n + 1) ** 2:
                raise ConfigurationError(f"eigs={self.eigs} too large for coarse_n={n}")
        if self.sigma_plus <= 0 or self.sigma_minus <= 0:
            raise ConfigurationError("sigma_plus and sigma_minus are magnitudes and must be > 0")
        if self.threads < 1:
            raise ConfigurationError("threads must be >= 1")
        kind = self.source.get("kind", "gaussian")
        if kind not in ("gaussian", "exact"):
            raise ConfigurationError(f"unknown source kind {kind!r}")
        if kind == "exact" and self.model != "flat":
            raise ConfigurationError("the exact source exists only for the flat model")
        # coefficient parameters are checked by building the field once
        self.build_field(build_hierarchy(self.fine_n, self.coarse_n[0]))
        return self

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigurationError(f"unknown config fields: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.coarse_n = [int(x) for x in cfg.coarse_n]
        cfg.layers = [int(x) for x in cfg.layers]
        return cfg

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)

    def build_field(self, g: GridHierarchy):
        """(CoefficientField, ExactSolution or None)."""
        sp_, sm = self.sigma_plus, self.sigma_minus
        if self.model == "flat":
            return coeff.flat_interface(g, self.gamma, sp_, sm)
        if self.model == "square":
            return coeff.periodic_square(g, self.n_cells, sp_, sm), None
        if self.model == "cross":
            return coeff.periodic_cross(g, self.n_cells, sp_, sm), None
        return coeff.random_inclusions(g, self.seed, self.count, self.side_range, sp_, sm), None

    def build_source(self, g: GridHierarchy, exact):
        src = dict(self.source)
        kind = src.pop("kind", "gaussian")
        if kind == "exact":
            return coeff.exact_source(g, exact)
        centers = src.get("centers", coeff.DEFAULT_GAUSSIAN_CENTERS)
        return coeff.gaussian_source(g, centers, float(src.get("variance", 0.01)),
                                     float(src.get("amplitude", 1.0)))


@dataclass
class PointResult:
    H: float
    m: int
    rel_energy: float = float("nan")
    rel_l2: float = float("nan")
    status: str = "ok"
    offline_ms: float = 0.0
    online_ms: float = 0.0
    galerkin_ratio: float = float("nan")
    l_star: int = 0


class Problem:
    """Fine-level data shared across a sweep: field, source, reference solution, norms."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        g = build_hierarchy(cfg.fine_n, cfg.coarse_n[0])
        self.field, self.exact = cfg.build_field(g)
        self.source = cfg.build_source(g, self.exact)
        self.A = assemble_global(g, self.field, "signed-sigma", "stiffness")
        self.load = global_load(g, self.source)
        self.norms = Norms(g, self.field)
        self.u_h = solve_reference(g, self.field, self.source, A_signed=self.A).u
        # errors are measured against the exact interpolant when one exists
        self.u_ref = interpolate_exact(g, self.exact) if self.exact is not None else self.u_h

    def report(self, g, u, config=None):
        return error_report(g, self.field, self.u_ref, u, config, norms=self.norms)


def _cache_dir(cfg):
    return Path(cfg.out) / "cache" if cfg.cache else None


def load_or_build_aux(cfg, g, fld, l_star, n_eig=None):
    cache = _cache_dir(cfg)
    if cache is not None:
        path = cache / f"aux-{aux_digest(g, fld.digest, l_star)[:24]}-{n_eig or 0}.npz"
        if path.exists():
            return AuxSpace.load(path)
    aux = build_aux_space(g, fld, l_star, n_eig=n_eig, threads=cfg.threads)
    if cache is not None:
        cache.mkdir(parents=True, exist_ok=True)
        aux.save(path)
    return aux


def run_point(prob: Problem, g: GridHierarchy, aux, m: int, check_galerkin=True) -> PointResult:
    cfg = prob.cfg
    t0 = time.perf_counter()
    B = build_all(g, prob.field, aux, m, threads=cfg.threads, cache_dir=_cache_dir(cfg))
    t1 = time.perf_counter()
    cs = assemble_online(g, prob.field, B, prob.source, A_signed=prob.A, load=prob.load)
    sol = solve_online(cs)
    t2 = time.perf_counter()
    rep = prob.report(g, sol.u)
    res = PointResult(g.H, m, rep.rel_energy, rep.rel_l2, "ok", 0.0, (t2 - t1) * 1e3,
                      l_star=aux.l_star)
    res.offline_ms = (t1 - t0) * 1e3
    if check_galerkin:
        resid = galerkin_residuals(prob.A, B, prob.u_h, sol.u)
        phi_norm = np.sqrt(column_quadratic(prob.norms.A_abs, B.phi))
        uh_norm = prob.norms.energy(prob.u_h)
        res.galerkin_ratio = float(np.max(np.abs(resid) / (uh_norm * phi_norm)))
    res.u = sol.u
    return res


def _fmt(x):
    return repr(float(x)) if isinstance(x, (float, np.floating)) else str(x)


def _row(cfg, res: PointResult, l_star):
    return {"model": cfg.model, "fine_n": cfg.fine_n, "H": _fmt(res.H), "m": res.m,
            "l_star": l_star, "sigma_plus": _fmt(cfg.sigma_plus),
            "sigma_minus": _fmt(cfg.sigma_minus), "rel_energy": _fmt(res.rel_energy),
            "rel_l2": _fmt(res.rel_l2), "status": res.status,
            "offline_ms": f"{res.offline_ms:.1f}", "online_ms": f"{res.online_ms:.1f}"}


def _write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow(r)


def _error_tag(exc):
    return "error:" + type(exc).__name__ + ":" + str(exc).replace("\n", " ").replace(",", ";")[:200]


def qfem_baseline(cfg: ExperimentConfig, prob: Problem | None = None) -> list[dict]:
    """errors.csv-format rows for the coarse-mesh Q1 FEM (m = l_star = 0)."""
    prob = Problem(cfg) if prob is None else prob
    rows = []
    for nc in cfg.coarse_n:
        g = build_hierarchy(cfg.fine_n, nc)
        res = PointResult(g.H, 0)
        t0 = time.perf_counter()
        try:
            sol = solve_q1_coarse(g, prob.field, prob.source, A_signed=prob.A)
            rep = prob.report(g, sol.u)
            res.rel_energy, res.rel_l2 = rep.rel_energy, rep.rel_l2
        except SignCemError as exc:
            res.status = _error_tag(exc)
        res.online_ms = (time.perf_counter() - t0) * 1e3
        rows.append(_row(cfg, res, 0))
    return rows


def run(cfg: ExperimentConfig) -> int:
    """Execute a sweep and write the CSV reports. Returns the process exit status."""
    try:
        cfg.validate()
    except ConfigurationError as exc:
        log.error("invalid configuration: %s", exc)
        return 1
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    try:
        prob = Problem(cfg)
    except SignCemError as exc:
        log.error("reference problem failed: %s", exc)
        _write_csv(out / "errors.csv", ERROR_COLUMNS, [])
        return 2

    rows, spectra = [], []
    n_ok = n_total = 0
    for nc in cfg.coarse_n:
        g = build_hierarchy(cfg.fine_n, nc)
        t0 = time.perf_counter()
        try:
            aux = load_or_build_aux(cfg, g, prob.field, cfg.eigs, n_eig=cfg.spectra_eigs)
        except SignCemError as exc:
            for m in cfg.layers:
                n_total += 1
                res = PointResult(g.H, m, status=_error_tag(exc))
                rows.append(_row(cfg, res, cfg.eigs))
            continue
        aux_ms = (time.perf_counter() - t0) * 1e3
        rep = spectral_statistics(aux, cfg.spectra_eigs)
        spectra.append({"model": cfg.model, "n_elem": g.n_elem, **{k: _fmt(v) for k, v in rep.row().items()},
                        "epsilon": _fmt(aux.epsilon)})
        for m in cfg.layers:
            n_total += 1
            log.info("H=1/%d m=%d", nc, m)
            try:
                res = run_point(prob, g, aux, m, check_galerkin=False)
                res.offline_ms += aux_ms
                n_ok += 1
                if cfg.dump_fields:
                    _dump(out, g, prob, res)
            except SignCemError as exc:
                res = PointResult(g.H, m, status=_error_tag(exc))
            rows.append(_row(cfg, res, cfg.eigs))
            gc.collect()

    _write_csv(out / "errors.csv", ERROR_COLUMNS, rows)
    if spectra:
        _write_csv(out / "spectra.csv", list(spectra[0]), spectra)
    if cfg.baseline:
        _write_csv(out / "baseline.csv", ERROR_COLUMNS, qfem_baseline(cfg, prob))
    if cfg.decay:
        _write_csv(out / "decay.csv", ("element", "j", "m", "rel_energy", "rel_l2"),
                   run_decay(cfg, prob))
    return 0 if n_ok or n_total == 0 else 2


def run_decay(cfg: ExperimentConfig, prob: Problem) -> list[dict]:
    d = dict(cfg.decay)
    nc = int(d.get("coarse_n", cfg.coarse_n[0]))
    g = build_hierarchy(cfg.fine_n, nc)
    ex, ey = d.get("element", DECAY_ELEMENT)
    i = int(ey) * nc + int(ex)
    m_ref = int(d.get("m_ref", 8))
    m_list = [int(x) for x in d.get("m_list", range(1, m_ref))]
    aux = load_or_build_aux(cfg, g, prob.field, cfg.eigs, n_eig=cfg.spectra_eigs)
    rows = []
    for j in d.get("j", range(cfg.eigs)):
        for m, e, l2 in decay_study(g, prob.field, aux, i, int(j), m_list, m_ref):
            rows.append({"element": i, "j": int(j), "m": m, "rel_energy": _fmt(e), "rel_l2": _fmt(l2)})
    return rows


def _dump(out: Path, g: GridHierarchy, prob: Problem, res: PointResult):
    d = out / "fields"
    d.mkdir(exist_ok=True)
    stem = f"{prob.cfg.model}-H{g.coarse_n}-m{res.m}"
    cols = {"u_ref": prob.u_ref, "u_ms": res.u, "error": prob.u_ref - res.u}
    write_vtk(d / f"{stem}.vtk", g, cols, {"sigma": prob.field.flat})
    write_node_csv(d / f"{stem}.csv", g, cols)


def strip_timing(path) -> list[list[str]]:
    """CSV rows with the timing columns removed (for determinism checks)."""
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    drop = {k for k, name in enumerate(rows[0]) if name in TIMING_COLUMNS}
    return [[c for k, c in enumerate(r) if k not in drop] for r in rows]
