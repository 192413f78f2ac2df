"""Closed-form target fields with regularity metadata.

Every field carries evaluators for its value and for ``curl`` (3D vector,
2D scalar rot) and/or ``div``, the Sobolev index ``r_star`` (sup of ``r``
with ``v`` in ``H^r``; ``inf`` for smooth fields), the integrability index
``q_ok`` of its curl/div, boundary trace flags and a description of the
singular locus.

Singular fields are built from the corner function
``S = rho^lam sin(2 theta / 3)`` around the re-entrant edge ``x = y = 0`` of
the L-prism (or the re-entrant corner of the L-shape), with
``theta = atan2(y, x) mod 2 pi`` in ``[0, 3 pi / 2]`` on the domain.  ``S``
vanishes on both faces meeting at the re-entrant edge, and a smooth envelope
removes it on the remaining boundary.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Optional

import numpy as np

from .quadrature import closest_point_on_simplex

PI = math.pi
INF = math.inf


@dataclass(frozen=True)
class Locus:
    kind: str = "empty"                      # empty | line | point
    point: tuple = ()
    direction: tuple = ()

    def meets(self, entity_vertices, tol=1e-12):
        """True when the closed simplex spanned by ``entity_vertices`` touches the locus."""
        if self.kind == "empty":
            return False
        p = np.atleast_2d(np.asarray(entity_vertices, dtype=float))
        origin = np.asarray(self.point, dtype=float)
        q = p - origin
        scale = max(1.0, float(np.abs(q).max()))
        if self.kind == "line":
            a = np.asarray(self.direction, dtype=float)
            a = a / np.linalg.norm(a)
            q = q - np.outer(q @ a, a)
        closest = closest_point_on_simplex(q, np.zeros((1, q.shape[1])))
        return bool(np.linalg.norm(closest) <= tol * scale)

    def on_locus(self, points, tol=1e-12):
        """Mask of the points that lie on the locus."""
        q = np.atleast_2d(np.asarray(points, dtype=float))
        if self.kind == "empty":
            return np.zeros(len(q), dtype=bool)
        q = q - np.asarray(self.point, dtype=float)
        scale = np.maximum(1.0, np.abs(q).max(axis=-1))
        if self.kind == "line":
            a = np.asarray(self.direction, dtype=float)
            a = a / np.linalg.norm(a)
            q = q - (q @ a)[..., None] * a
        return np.linalg.norm(q, axis=-1) <= tol * scale

    def meets_many(self, entities, tol=1e-12):
        """Vectorised :meth:`meets` for an array of simplices ``(n, k, d)``."""
        entities = np.asarray(entities, dtype=float)
        if self.kind == "empty":
            return np.zeros(len(entities), dtype=bool)
        q = entities - np.asarray(self.point, dtype=float)
        scale = np.maximum(1.0, np.abs(q).reshape(len(q), -1).max(axis=1))
        if self.kind == "line":
            a = np.asarray(self.direction, dtype=float)
            a = a / np.linalg.norm(a)
            q = q - (q @ a)[..., None] * a
        return distance_to_origin(q) <= tol * scale


def distance_to_origin(simplices):
    """Euclidean distance from the origin to each closed simplex ``(n, k, d)``."""
    n, k, _ = simplices.shape
    best = np.full(n, np.inf)
    for size in range(1, k + 1):
        for sub in combinations(range(k), size):
            sv = simplices[:, list(sub)]
            if size == 1:
                d = np.linalg.norm(sv[:, 0], axis=1)
                best = np.minimum(best, d)
                continue
            e = sv[:, 1:] - sv[:, :1]                      # (n, size-1, d)
            coef = np.einsum("nij,nj->ni", np.linalg.pinv(np.transpose(e, (0, 2, 1))), -sv[:, 0])
            ok = (coef >= -1e-14).all(axis=1) & (coef.sum(axis=1) <= 1 + 1e-14)
            d = np.linalg.norm(sv[:, 0] + np.einsum("ni,nid->nd", coef, e), axis=1)
            best = np.where(ok, np.minimum(best, d), best)
    return best


@dataclass(frozen=True)
class AnalyticField:
    name: str
    dim: int
    value: Callable
    curl: Optional[Callable] = None
    div: Optional[Callable] = None
    r_star: float = INF
    q_ok: float = 2.0
    tangential_trace_zero: bool = False
    normal_trace_zero: bool = False
    locus: Locus = Locus()
    curl_curl: Optional[Callable] = None
    potential: Optional[Callable] = None
    params: dict = field(default_factory=dict)
    trace_domains: tuple = ()

    def __call__(self, x):
        return self.value(x)

    def meets_locus(self, entity_vertices):
        return self.locus.meets(entity_vertices)

    @property
    def is_smooth(self):
        return math.isinf(self.r_star)

    def rot(self, x):
        """Curl (3D) or scalar rot (2D); raises if the field has none."""
        if self.curl is None:
            raise ValueError(f"field {self.name!r} has no curl evaluator")
        return self.curl(x)

    def jacobian(self, x, step=1e-6):
        """Central-difference Jacobian ``(n, d, d)`` with ``J[:, i, j] = d v_i / d x_j``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.empty((len(x), self.dim, self.dim))
        for j in range(self.dim):
            e = np.zeros(self.dim)
            e[j] = step
            out[:, :, j] = (self.value(x + e) - self.value(x - e)) / (2.0 * step)
        return out


# ----------------------------------------------------------------- helpers
def _pts(x, dim):
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != dim:
        raise ValueError(f"expected points of dimension {dim}, got {x.shape[1]}")
    return x


def _quintic_cutoff(rho, inner=0.25, outer=0.45):
    """C^2 radial cutoff: 1 for rho <= inner, 0 for rho >= outer; returns (chi, chi')."""
    t = np.clip((rho - inner) / (outer - inner), 0.0, 1.0)
    chi = 1.0 - t ** 3 * (10.0 - 15.0 * t + 6.0 * t * t)
    dchi = -30.0 * t * t * (1.0 - t) ** 2 / (outer - inner)
    return chi, dchi


def _corner_function(x, lam, sector):
    """S = rho^lam * sin(2 theta/3) (or rho^lam) and its gradient in the xy-plane."""
    X, Y = np.ascontiguousarray(x[:, 0]), np.ascontiguousarray(x[:, 1])
    rho = np.sqrt(X * X + Y * Y)
    safe = np.where(rho > 0, rho, 1.0)
    inv = 1.0 / safe
    c = np.where(rho > 0, X * inv, 1.0)
    s = Y * inv
    rl = rho ** lam
    rl1 = rl * inv                            # rho^(lam - 1)
    if sector:
        phi = np.arctan2(Y, X)
        phi[phi < 0] += 2.0 * PI
        phi *= 2.0 / 3.0
        ang, dang = np.sin(phi), (2.0 / 3.0) * np.cos(phi)
        d_rho = lam * rl1 * ang
        d_th = rl1 * dang                     # (1/rho) dS/dtheta
        S = rl * ang
        gx = d_rho * c - d_th * s
        gy = d_rho * s + d_th * c
    else:
        S = rl
        gx = lam * rl1 * c
        gy = lam * rl1 * s
    return S, gx, gy, rho


def _envelope(x, kind, dim):
    """Smooth envelope E and its gradient."""
    X, Y = np.ascontiguousarray(x[:, 0]), np.ascontiguousarray(x[:, 1])
    if kind == "box":
        ex, ey = 1.0 - X * X, 1.0 - Y * Y
        E = ex * ey
        grad = [-2.0 * X * ey, -2.0 * Y * ex]
    elif kind == "bump":
        rho = np.hypot(X, Y)
        chi, dchi = _quintic_cutoff(rho)
        with np.errstate(invalid="ignore", divide="ignore"):
            ux = np.where(rho > 0, X / np.where(rho > 0, rho, 1.0), 0.0)
            uy = np.where(rho > 0, Y / np.where(rho > 0, rho, 1.0), 0.0)
        E = chi
        grad = [dchi * ux, dchi * uy]
    else:
        raise ValueError(f"unknown envelope {kind!r}; use 'box' or 'bump'")
    out = np.empty((len(X), dim))
    if dim == 3:
        Z = PI * x[:, 2]
        sz = np.sin(Z)
        out[:, 0] = grad[0] * sz
        out[:, 1] = grad[1] * sz
        out[:, 2] = PI * E * np.cos(Z)
        return E * sz, out
    out[:, 0], out[:, 1] = grad
    return E, out


def _potential_grad(x, lam, envelope, sector, dim):
    S, gx, gy, rho = _corner_function(x, lam, sector)
    E, gE = _envelope(x, envelope, dim)
    out = S[:, None] * gE
    out[:, 0] += E * gx
    out[:, 1] += E * gy
    return out, S * E


def _check_lambda(lam):
    lam = float(lam)
    if not 0.0 < lam < 1.0:
        raise ValueError(f"exponent lam must lie in (0, 1), got {lam}")
    return lam


# ----------------------------------------------------------------- catalog
def _constant(dim=3, value=None):
    c = np.ones(dim) if value is None else np.asarray(value, dtype=float)
    if c.shape != (dim,):
        raise ValueError("constant value has wrong dimension")
    zero_curl = (lambda x: np.zeros((len(_pts(x, dim)), 3))) if dim == 3 else \
        (lambda x: np.zeros(len(_pts(x, dim))))
    return AnalyticField(
        "constant", dim, lambda x: np.broadcast_to(c, _pts(x, dim).shape).copy(),
        curl=zero_curl, div=lambda x: np.zeros(len(_pts(x, dim))),
        params={"value": c.tolist()})


def _linear(dim=3):
    zero_curl = (lambda x: np.zeros((len(_pts(x, dim)), 3))) if dim == 3 else \
        (lambda x: np.zeros(len(_pts(x, dim))))
    return AnalyticField(
        "linear_non_nedelec", dim, lambda x: _pts(x, dim).copy(), curl=zero_curl,
        div=lambda x: np.full(len(_pts(x, dim)), float(dim)))


def _smooth_trig(dim=3):
    if dim == 3:
        def value(x):
            x = _pts(x, 3)
            s = np.sin(PI * x)
            return np.stack([s[:, 1] * s[:, 2], s[:, 0] * s[:, 2], s[:, 0] * s[:, 1]], axis=1)

        def curl(x):
            x = _pts(x, 3)
            s, c = np.sin(PI * x), np.cos(PI * x)
            return PI * np.stack([s[:, 0] * (c[:, 1] - c[:, 2]),
                                  s[:, 1] * (c[:, 2] - c[:, 0]),
                                  s[:, 2] * (c[:, 0] - c[:, 1])], axis=1)

        return AnalyticField(
            "smooth_trig", 3, value, curl=curl, div=lambda x: np.zeros(len(_pts(x, 3))),
            tangential_trace_zero=True, curl_curl=lambda x: 2.0 * PI * PI * value(x),
            trace_domains=("cube", "lprism"))

    def value2(x):
        x = _pts(x, 2)
        return np.stack([np.sin(PI * x[:, 1]), np.sin(PI * x[:, 0])], axis=1)

    def rot2(x):
        x = _pts(x, 2)
        return PI * (np.cos(PI * x[:, 0]) - np.cos(PI * x[:, 1]))

    return AnalyticField("smooth_trig", 2, value2, curl=rot2,
                         div=lambda x: np.zeros(len(_pts(x, 2))),
                         curl_curl=lambda x: PI * PI * value2(x),
                         tangential_trace_zero=True, trace_domains=("square",))


def _smooth_trig_div(dim=2):
    """Normal-trace-free smooth field on the unit square/cube: v_i = sin(pi x_i)."""
    def value(x):
        return np.sin(PI * _pts(x, dim))

    def div(x):
        return PI * np.cos(PI * _pts(x, dim)).sum(axis=1)

    curl = (lambda x: np.zeros((len(_pts(x, 3)), 3))) if dim == 3 else \
        (lambda x: np.zeros(len(_pts(x, 2))))
    return AnalyticField("smooth_trig_div", dim, value, curl=curl, div=div,
                         normal_trace_zero=True, trace_domains=("square", "cube"))


def _interface_trig():
    """A = (0, 0, sin pi x sin pi y); (kappa curl A) x n vanishes on x = 1/2."""
    def value(x):
        x = _pts(x, 3)
        out = np.zeros_like(x)
        out[:, 2] = np.sin(PI * x[:, 0]) * np.sin(PI * x[:, 1])
        return out

    def curl(x):
        x = _pts(x, 3)
        out = np.zeros_like(x)
        out[:, 0] = PI * np.sin(PI * x[:, 0]) * np.cos(PI * x[:, 1])
        out[:, 1] = -PI * np.cos(PI * x[:, 0]) * np.sin(PI * x[:, 1])
        return out

    return AnalyticField("interface_trig", 3, value, curl=curl,
                         div=lambda x: np.zeros(len(_pts(x, 3))),
                         tangential_trace_zero=True, curl_curl=lambda x: 2.0 * PI * PI * value(x),
                         trace_domains=("cube",))


def _grad_power(name, dim, lam, envelope, sector, r_star):
    lam = _check_lambda(lam)
    locus = Locus("line", (0.0, 0.0, 0.0), (0.0, 0.0, 1.0)) if dim == 3 else Locus("point", (0.0, 0.0))

    def value(x):
        return _potential_grad(_pts(x, dim), lam, envelope, sector, dim)[0]

    def potential(x):
        return _potential_grad(_pts(x, dim), lam, envelope, sector, dim)[1]

    curl = (lambda x: np.zeros((len(_pts(x, 3)), 3))) if dim == 3 else \
        (lambda x: np.zeros(len(_pts(x, 2))))
    return AnalyticField(name, dim, value, curl=curl, r_star=r_star, q_ok=2.0,
                         tangential_trace_zero=sector, locus=locus, potential=potential,
                         params={"lam": lam, "envelope": envelope, "sector": sector},
                         trace_domains=("lprism",) if dim == 3 else ("lshape",))


def _grad_power_line(lam=0.3, envelope="box", sector=True):
    return _grad_power("grad_power_line", 3, lam, envelope, sector, float(lam))


def _lshape_grad(envelope="box", lam=2.0 / 3.0):
    return _grad_power("lshape_grad", 2, lam, envelope, True, float(lam))


def _rot_power_corner(lam=0.3, envelope="box"):
    """2D rot of E * rho^lam sin(2 theta/3): div-free with zero normal trace on the L-shape."""
    lam = _check_lambda(lam)

    def value(x):
        g = _potential_grad(_pts(x, 2), lam, envelope, True, 2)[0]
        return np.stack([g[:, 1], -g[:, 0]], axis=1)

    return AnalyticField("rot_power_corner", 2, value,
                         div=lambda x: np.zeros(len(_pts(x, 2))),
                         r_star=lam, q_ok=2.0, normal_trace_zero=True,
                         locus=Locus("point", (0.0, 0.0)),
                         params={"lam": lam, "envelope": envelope}, trace_domains=("lshape",))


def _mixed_singular(lam=0.3, beta=1.0, envelope="box"):
    g = _grad_power_line(lam, envelope, True)
    s = _smooth_trig(3)
    beta = float(beta)
    return AnalyticField(
        "mixed_singular", 3, lambda x: g.value(x) + beta * s.value(x),
        curl=lambda x: beta * s.curl(x), r_star=float(lam), q_ok=2.0,
        tangential_trace_zero=True, locus=g.locus,
        params={"lam": float(lam), "beta": beta, "envelope": envelope},
        trace_domains=("lprism",))


_CATALOG = {
    "constant": (_constant, "constant vector field (params: value, dim)"),
    "linear_non_nedelec": (_linear, "v = x, not in the lowest-order Nedelec space (params: dim)"),
    "smooth_trig": (_smooth_trig, "sin-product field with zero tangential trace on the unit cube/square"),
    "smooth_trig_div": (_smooth_trig_div, "v_i = sin(pi x_i), zero normal trace on the unit square/cube"),
    "interface_trig": (_interface_trig, "(0, 0, sin pi x sin pi y), compatible with a kappa jump at x = 1/2"),
    "grad_power_line": (_grad_power_line, "gradient of rho^lam sin(2 theta/3) times an envelope, singular on x = y = 0 (params: lam, envelope, sector)"),
    "lshape_grad": (_lshape_grad, "2D gradient of rho^(2/3) sin(2 theta/3) times an envelope"),
    "rot_power_corner": (_rot_power_corner, "2D rot of rho^lam sin(2 theta/3) times an envelope; div-free, zero normal trace (params: lam, envelope)"),
    "mixed_singular": (_mixed_singular, "grad_power_line + beta * smooth_trig (params: lam, beta, envelope)"),
}

_DIM_AWARE = {"constant", "linear_non_nedelec", "smooth_trig", "smooth_trig_div"}


def list_fields():
    return {name: desc for name, (_, desc) in _CATALOG.items()}


def get_field(name, params=None, dim=None) -> AnalyticField:
    """Construct a catalog field; ``dim`` applies to the dimension-agnostic entries."""
    if name not in _CATALOG:
        raise ValueError(f"unknown field {name!r}; choose from {sorted(_CATALOG)}")
    params = dict(params or {})
    factory = _CATALOG[name][0]
    if name in _DIM_AWARE:
        params.setdefault("dim", 3 if dim is None else dim)
    elif dim is not None:
        natural = 2 if name in ("lshape_grad", "rot_power_corner") else 3
        if dim != natural:
            raise ValueError(f"field {name!r} is defined in {natural}D only")
    return factory(**params)
