"""Convergence studies: mesh sequences, operators, EOC and bound effectivities."""
from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field as dc_field
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .errors import LowRegError
from .fields import get_field
from .interpolation import (
    NEDELEC,
    best_approximation_l2,
    canonical_interpolate,
    normalize_space,
    quasi_interpolate,
)
from .maxwell import (
    DEFAULT_ETA0,
    CoefficientPartition,
    assemble_nitsche,
    assemble_strong,
    export_vtk,
    manufactured_source,
    maxwell_errors,
    solve,
)
from .mesh import DOMAIN_BUILDERS, build_mesh, uniform_refine
from .norms import (
    CellErrorTable,
    bound_cell_terms,
    check_q,
    check_r,
    derivative_error_cells,
    global_bound_rhs,
    hcurl_norm,
    l2_error_cells,
)

OPERATORS = ("canonical", "quasi", "quasi_zero_boundary", "best_l2",
             "maxwell_strong", "maxwell_nitsche")
EXACT = "exact"
CSV_COLUMNS = ("level", "h_max", "ndof", "err_l2", "err_hcurl", "bound_rhs",
               "effectivity_global", "effectivity_cell_max", "eoc")


class StudyError(LowRegError):
    """A study level failed; ``level`` says which."""

    def __init__(self, message, level=None):
        super().__init__(message)
        self.level = level


@dataclass
class StudyConfig:
    domain: str = "cube"
    n0: int = 1
    levels: int = 4
    space: str = NEDELEC
    operator: str = "quasi"
    field: str = "smooth_trig"
    field_params: dict = dc_field(default_factory=dict)
    r: float = 1.0
    q: float = 2.0
    eta0: float = DEFAULT_ETA0
    zero_boundary: bool = False          # best_l2 only
    coefficients: Optional[dict] = None  # maxwell only
    pair_level: Optional[int] = None
    cell_degree: int = 6
    compute_bound: bool = True
    solver_tol: float = 1e-10
    output_dir: Optional[str] = None
    threads: int = 1
    vtk: bool = False
    seed: int = 0
    expect: dict = dc_field(default_factory=dict)

    def __post_init__(self):
        if self.domain not in DOMAIN_BUILDERS:
            raise ValueError(f"unknown domain {self.domain!r}")
        if self.operator not in OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}; choose from {OPERATORS}")
        self.space = normalize_space(self.space)
        if self.operator.startswith("maxwell") and self.space != NEDELEC:
            raise ValueError("curl-curl studies use the Nedelec space")
        if int(self.levels) < 2:
            raise ValueError("a study needs at least 2 levels")
        self.levels = int(self.levels)
        self.n0 = int(self.n0)
        check_r(self.r)
        dim = 2 if self.domain in ("square", "lshape") else 3
        check_q(self.q, dim)
        if self.eta0 <= 0:
            raise ValueError("eta0 must be positive")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        quad = data.pop("quadrature", None) or {}
        data.setdefault("pair_level", quad.get("pair_level"))
        if "cell_degree" in quad:
            data.setdefault("cell_degree", quad["cell_degree"])
        known = set(cls.__dataclass_fields__)
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return asdict(self)


@dataclass
class LevelResult:
    level: int
    n_cells: int
    h_max: float
    ndof: int
    err_l2: float
    err_hcurl: float = math.nan
    bound_rhs: float = math.nan
    effectivity_global: float = math.nan
    effectivity_cell_max: float = math.nan
    cg_iterations: Optional[int] = None
    wall_seconds: float = 0.0
    eoc: object = None


@dataclass
class StudyReport:
    config: StudyConfig
    levels: list = dc_field(default_factory=list)
    eoc_l2: object = None
    eoc_hcurl: object = None
    backend: str = kernels.BACKEND

    @property
    def rate(self):
        """The headline EOC: H(curl) for curl-curl runs, L2 otherwise."""
        return self.eoc_hcurl if self.config.operator.startswith("maxwell") else self.eoc_l2

    def column(self, name):
        return [getattr(lv, name) for lv in self.levels]

    def to_dict(self):
        return {"config": self.config.to_dict(), "backend": self.backend,
                "eoc_l2": self.eoc_l2, "eoc_hcurl": self.eoc_hcurl,
                "levels": [asdict(lv) for lv in self.levels]}

    def csv_text(self):
        lines = [",".join(CSV_COLUMNS)]
        for lv in self.levels:
            row = [str(lv.level), _fmt(lv.h_max), str(lv.ndof), _fmt(lv.err_l2),
                   _fmt(lv.err_hcurl), _fmt(lv.bound_rhs), _fmt(lv.effectivity_global),
                   _fmt(lv.effectivity_cell_max), _fmt(lv.eoc)]
            lines.append(",".join(row))
        return "\n".join(lines) + "\n"

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.csv").write_text(self.csv_text())
        with open(out / "report.json", "w") as fh:
            json.dump(_jsonable(self.to_dict()), fh, indent=2, sort_keys=True)
        return out

    def check(self):
        """List of violated expectations from ``config.expect``."""
        exp = self.config.expect or {}
        problems = []
        if "eoc" in exp:
            lo, hi = exp["eoc"]
            rate = self.rate
            if not isinstance(rate, float) or not (lo <= rate <= hi):
                problems.append(f"EOC {rate} outside [{lo}, {hi}]")
        for key, col in (("effectivity_variation", "effectivity_global"),
                         ("cell_effectivity_variation", "effectivity_cell_max")):
            if key in exp:
                v = max_relative_variation(self.column(col))
                if not v < exp[key]:
                    problems.append(f"{col} varies by {v:.3f} (limit {exp[key]})")
        return problems


def _fmt(v):
    if v is None:
        return "nan"
    if isinstance(v, str):
        return v
    return f"{float(v):.12e}"


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


# errors at or below this are rounding noise of an exactly reproduced field
EXACT_FLOOR = 1e-13


def compute_eoc(errors, hs, window=3, floor=EXACT_FLOOR):
    """Least-squares slope of ``log e`` against ``log h`` over the last ``window`` levels.

    Returns :data:`EXACT` when any used error is at most ``floor``.
    """
    errors = np.asarray(errors, dtype=float)
    hs = np.asarray(hs, dtype=float)
    if errors.shape != hs.shape or len(errors) < 2:
        raise ValueError("need at least two (error, h) pairs of equal length")
    k = min(window, len(errors))
    e, h = errors[-k:], hs[-k:]
    if np.any(e < 0) or np.any(h <= 0):
        raise ValueError("errors must be nonnegative and mesh sizes positive")
    if np.any(e <= floor):
        return EXACT
    slope = np.polyfit(np.log(h), np.log(e), 1)[0]
    return float(slope)


def max_relative_variation(values):
    """``max |v_{k+1} / v_k - 1|`` over consecutive finite entries."""
    v = np.asarray([x for x in values if x is not None], dtype=float)
    v = v[np.isfinite(v)]
    if len(v) < 2:
        return math.nan
    return float(np.max(np.abs(v[1:] / v[:-1] - 1.0)))


def _run_level(cfg, mesh, fld, level, out_dir):
    op = cfg.operator
    res = {"cg_iterations": None}
    if op.startswith("maxwell"):
        coeffs = CoefficientPartition.from_dict(cfg.coefficients)
        f = manufactured_source(fld, coeffs)
        if op == "maxwell_strong":
            system = assemble_strong(mesh, coeffs, f)
        else:
            system = assemble_nitsche(mesh, coeffs, f, cfg.eta0)
        uh = solve(system, cfg.solver_tol)
        l2, hc, _ = maxwell_errors(uh, fld, degree=cfg.cell_degree)
        res.update(err_l2=l2, err_hcurl=hc, cg_iterations=system.info.get("iterations"))
        ndof = int(system.ndof)
    else:
        if op == "canonical":
            uh = canonical_interpolate(mesh, cfg.space, fld)
        elif op == "quasi":
            uh = quasi_interpolate(mesh, cfg.space, fld)
        elif op == "quasi_zero_boundary":
            uh = quasi_interpolate(mesh, cfg.space, fld, zero_boundary=True)
        else:
            uh = best_approximation_l2(mesh, cfg.space, fld, zero_boundary=cfg.zero_boundary)
        ndof = int(len(uh.coeffs))
        cell_err = l2_error_cells(fld, uh, cfg.cell_degree)
        res["err_l2"] = float(math.sqrt(np.sum(cell_err ** 2)))
        try:
            curl_err = derivative_error_cells(fld, uh, cfg.cell_degree)
            if cfg.space == NEDELEC:
                res["err_hcurl"] = hcurl_norm(res["err_l2"], math.sqrt(np.sum(curl_err ** 2)),
                                              mesh.domain_diameter)
        except ValueError:
            pass
        if cfg.compute_bound:
            terms = bound_cell_terms(fld, mesh, cfg.r, cfg.q, cfg.space, cfg.pair_level,
                                     cfg.cell_degree)
            rhs = global_bound_rhs(fld, mesh, cfg.r, cfg.q, cfg.space, terms=terms)
            table = CellErrorTable.build(fld, uh, cfg.r, cfg.q, cfg.pair_level, terms,
                                         lhs=cell_err)
            res.update(bound_rhs=rhs,
                       effectivity_global=res["err_l2"] / rhs if rhs > 0 else math.nan,
                       effectivity_cell_max=table.max_effectivity)
    if out_dir is not None and cfg.vtk:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        export_vtk(uh, Path(out_dir) / f"level_{level}.vtk")
    return ndof, res


def run_study(config: StudyConfig, progress=None) -> StudyReport:
    """Run the configured operator on ``levels`` uniformly refined meshes."""
    cfg = config
    kernels.set_num_threads(cfg.threads)
    np.random.seed(cfg.seed)
    mesh = build_mesh(cfg.domain, cfg.n0)
    fld = get_field(cfg.field, cfg.field_params, dim=mesh.dim)
    report = StudyReport(cfg)
    errs, hcs, hs = [], [], []
    for level in range(cfg.levels):
        if level:
            mesh = uniform_refine(mesh)
        t0 = time.perf_counter()
        try:
            ndof, res = _run_level(cfg, mesh, fld, level, cfg.output_dir)
        except LowRegError as exc:
            raise StudyError(f"level {level}: {exc}", level) from exc
        lv = LevelResult(level=level, n_cells=mesh.n_cells, h_max=float(mesh.h), ndof=ndof,
                         wall_seconds=time.perf_counter() - t0, **res)
        errs.append(lv.err_l2)
        hcs.append(lv.err_hcurl)
        hs.append(lv.h_max)
        if level:
            series = hcs if cfg.operator.startswith("maxwell") else errs
            lv.eoc = compute_eoc(series, hs)
        report.levels.append(lv)
        if progress is not None:
            progress(lv)
    report.eoc_l2 = compute_eoc(errs, hs)
    if all(math.isfinite(v) for v in hcs):
        report.eoc_hcurl = compute_eoc(hcs, hs)
    return report
