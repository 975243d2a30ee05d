"""Norms of the unanchored ANOVA space W_d and the Sobolev space H_d.

For f on R^d with mixed derivatives d^u f,

    ||f||_H^2 = sum_u (1/gamma_u) int |d^u f|^2  psi_u rho_{-u}
    ||f||_W^2 = sum_u (1/gamma_u) int |int d^u f rho_{-u} dx_{-u}|^2 psi_u dx_u

and the ANOVA terms are f_u = sum_{v subset u} (-1)^{|u|-|v|} P_{-v} f, where
P_{-v} integrates out the coordinates outside v against rho.

Everything here runs on tensor grids (d <= 4).  Coordinate j uses psi_j
nodes when it is differentiated and rho_j nodes otherwise; the projections
P use the very same rho nodes, so discrete ANOVA terms annihilate each other
exactly and orthogonality holds to rounding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Mapping, Sequence

import numpy as np

from .errors import DimensionMismatch, DimensionTooLarge, DivergenceDetected, DomainError, NonFiniteSample
from .kernel import KernelContext, _members, embed_constant_d, subsets
from .quadrature import composite_gauss_legendre, panel_edges
from .weights import GaussianDecay, GaussianStd

__all__ = [
    "SmoothTestFunction",
    "NormReport",
    "AuditResult",
    "AnovaTerm",
    "GridRules",
    "norm_w",
    "norm_h",
    "norms",
    "anova_term",
    "anova_terms",
    "anova_gram",
    "w_inner",
    "audit_equivalence",
    "reproducing_check",
    "truncated_profile",
    "random_fixture",
    "product_function",
    "l2_embed_constant",
    "lemma_constant_1d",
]

MAX_GRID_DIM = 4
DEFAULT_NODES = 40
PROFILE_RADII = (5.0, 10.0, 20.0, 40.0)

Fn = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# test functions
# ---------------------------------------------------------------------------


class SmoothTestFunction:
    """f: R^d -> R with caller-supplied mixed partial derivatives.

    ``derivs`` maps a subset bitmask u to a callable evaluating d^u f on
    arrays of shape (..., d).  Mask 0 is f itself and may be omitted when
    ``f`` is given.  With ``check=True`` every d^u f is compared with a
    central difference of d^{u minus j} f at a few probe points.
    """

    def __init__(self, d: int, f: Fn | None = None, derivs: Mapping[int, Fn] | None = None,
                 check: bool = True, name: str = "f"):
        if d < 1:
            raise DomainError("dimension must be at least 1")
        table = dict(derivs or {})
        if f is not None:
            table[0] = f
        missing = [m for m in range(1 << d) if m not in table]
        if missing:
            raise DomainError(f"missing derivatives for subsets {[_members(m) for m in missing]}")
        self.d = d
        self._derivs = table
        self.name = name
        if check:
            self.check_consistency()

    def __call__(self, x) -> np.ndarray:
        return self.derivative(0)(x)

    def derivative(self, mask: int) -> Fn:
        return self._derivs[mask]

    def check_consistency(self, rel_tol: float = 1e-5, points: np.ndarray | None = None) -> None:
        if points is None:
            points = np.random.default_rng(20240601).uniform(-1.5, 1.5, size=(4, self.d))
        for mask in range(1, 1 << self.d):
            exact = np.asarray(self._derivs[mask](points), dtype=float)
            for j in _members(mask):
                h = 1e-5
                step = np.zeros(self.d)
                step[j] = h
                lower = self._derivs[mask & ~(1 << j)]
                fd = (np.asarray(lower(points + step)) - np.asarray(lower(points - step))) / (2 * h)
                scale = np.maximum(np.abs(exact), 1.0)
                if np.any(np.abs(fd - exact) > rel_tol * scale):
                    raise DomainError(
                        f"{self.name}: derivative {_members(mask)} disagrees with finite differences in x{j}"
                    )


def product_function(factors: Sequence[tuple[Fn, Fn]], check: bool = True, name: str = "product") -> SmoothTestFunction:
    """f(x) = prod_j g_j(x_j) from per-coordinate (g_j, g_j') pairs."""
    d = len(factors)

    def make(mask):
        def fn(x):
            x = np.asarray(x, dtype=float)
            out = np.ones(x.shape[:-1])
            for j, (g, dg) in enumerate(factors):
                out = out * (dg if mask >> j & 1 else g)(x[..., j])
            return out
        return fn

    return SmoothTestFunction(d, derivs={m: make(m) for m in range(1 << d)}, check=check, name=name)


def _poly_derivative(terms: dict, j: int, beta_j: float) -> dict:
    # d/dx_j (q(x) exp(-x_j^2/beta_j)) = (d_j q - (2/beta_j) x_j q) exp(...)
    out: dict = {}
    for k, c in terms.items():
        if k[j] > 0:
            kk = list(k)
            kk[j] -= 1
            out[tuple(kk)] = out.get(tuple(kk), 0.0) + c * k[j]
        kk = list(k)
        kk[j] += 1
        out[tuple(kk)] = out.get(tuple(kk), 0.0) - 2.0 * c / beta_j
    return out


def _poly_eval(terms: dict, beta: np.ndarray) -> Fn:
    exps = np.array(list(terms.keys()), dtype=int).reshape(-1, len(beta))
    coefs = np.array(list(terms.values()), dtype=float)

    def fn(x):
        x = np.asarray(x, dtype=float)
        envelope = np.exp(-np.sum(x * x / beta, axis=-1))
        powers = np.ones(x.shape[:-1] + (len(coefs),))
        for j in range(len(beta)):
            top = int(exps[:, j].max())
            if top == 0:
                continue
            xj = x[..., j, None]
            table = np.concatenate([np.ones_like(xj)] + [xj] * top, axis=-1).cumprod(axis=-1)
            powers *= table[..., exps[:, j]]
        return (powers @ coefs) * envelope

    return fn


def random_fixture(d: int, rng: np.random.Generator, degree: int = 3,
                   beta_range: tuple[float, float] = (8.0, 16.0), name: str | None = None) -> SmoothTestFunction:
    """p(x) prod_j exp(-x_j^2 / beta_j), deg p <= ``degree``, beta_j >= 8.

    Such functions lie in both W_d and H_d for every shipped weight pair.
    """
    if beta_range[0] < 8.0:
        raise DomainError("beta must be at least 8")
    beta = rng.uniform(*beta_range, size=d)
    terms = {}
    for k in product(range(degree + 1), repeat=d):
        if sum(k) <= degree:
            terms[k] = float(rng.normal())
    derivs = {}
    for mask in range(1 << d):
        t = terms
        for j in _members(mask):
            t = _poly_derivative(t, j, beta[j])
        derivs[mask] = _poly_eval(t, beta)
    return SmoothTestFunction(d, derivs=derivs, check=True, name=name or "fixture")


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridRules:
    """Per-coordinate rho and psi rules (nodes, weights) plus truncation flags."""

    rho: tuple
    psi: tuple
    truncated_psi: tuple[bool, ...]
    truncated_rho: tuple[bool, ...]

    @classmethod
    def build(cls, ctx: KernelContext, n: int = DEFAULT_NODES) -> "GridRules":
        if ctx.d > MAX_GRID_DIM:
            raise DimensionTooLarge(f"tensor grids are limited to d <= {MAX_GRID_DIM}, got {ctx.d}")
        rho = tuple(p.rho_rule(n) for p in ctx.pairs)
        psi = tuple(p.psi_rule(n) for p in ctx.pairs)
        tp = tuple(not isinstance(p.psi, GaussianDecay) for p in ctx.pairs)
        tr = tuple(not isinstance(p.rho, GaussianStd) for p in ctx.pairs)
        return cls(rho, psi, tp, tr)

    def axes(self, active: int) -> list:
        return [self.psi[j] if active >> j & 1 else self.rho[j] for j in range(len(self.rho))]


def _grid(rules) -> np.ndarray:
    return np.stack(np.meshgrid(*[r[0] for r in rules], indexing="ij"), axis=-1)


def _checked(values) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteSample("derivative evaluator returned a non-finite value")
    return v


def _contract(values: np.ndarray, weights: Sequence[np.ndarray], axes: Sequence[int]) -> np.ndarray:
    """Integrate ``values`` over ``axes`` with the matching weights; keep dims."""
    out = values
    for ax in axes:
        out = np.tensordot(out, weights[ax], axes=([ax], [0]))
        out = np.expand_dims(out, ax)
    return out


def _edge_check(weighted: np.ndarray, rules, truncated: Sequence[bool], active: Sequence[int], total: float, what: str):
    """Raise if a truncated axis carries non-negligible mass at its cut."""
    for ax in active:
        if not truncated[ax]:
            continue
        x = rules[ax][0]
        edge = np.abs(x) > np.max(np.abs(x)) - 1.0
        moved = np.moveaxis(weighted, ax, 0)
        mass = float(np.sum(np.abs(moved[edge])))
        if mass > 1e-8 * max(abs(total), 1e-300) and mass > 1e-14:
            raise DivergenceDetected(f"{what}: integrand has not decayed at the truncation of axis {ax}")


class _DerivGrid:
    """d^w f evaluated on the grid for active set w (cached per w)."""

    def __init__(self, fn_like, rules: GridRules):
        self.fn = fn_like
        self.rules = rules
        self.cache: dict[int, np.ndarray] = {}

    def __call__(self, w: int) -> np.ndarray:
        if w not in self.cache:
            self.cache[w] = _checked(self.fn.derivative(w)(_grid(self.rules.axes(w))))
        return self.cache[w]


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormReport:
    """Squared norms with per-subset contributions ``{mask: (H term, W term)}``."""

    w_norm_sq: float | None
    h_norm_sq: float | None
    contributions: dict = field(default_factory=dict)
    sandwich_ok: bool | None = None


def _check_dim(f, ctx: KernelContext):
    if f.d != ctx.d:
        raise DimensionMismatch(f"function has d={f.d}, context has d={ctx.d}")
    if ctx.d > MAX_GRID_DIM:
        raise DimensionTooLarge(f"tensor grids are limited to d <= {MAX_GRID_DIM}, got {ctx.d}")


def _w_terms(grid: _DerivGrid, ctx: KernelContext, other: _DerivGrid | None = None) -> dict[int, float]:
    rules = grid.rules
    d = ctx.d
    out = {}
    for w in range(1 << d):
        axes = rules.axes(w)
        weights = [a[1] for a in axes]
        inactive = [j for j in range(d) if not w >> j & 1]
        active = [j for j in range(d) if w >> j & 1]
        g = _contract(grid(w), weights, inactive)
        h = g if other is None else _contract(other(w), weights, inactive)
        prod_ = g * h
        val = float(np.squeeze(_contract(prod_, weights, active)))
        if active:
            wt = prod_.copy()
            for ax in active:
                shape = [1] * d
                shape[ax] = -1
                wt = wt * np.reshape(weights[ax], shape)
            _edge_check(wt, axes, rules.truncated_psi, active, val, f"W term {_members(w)}")
        out[w] = val / ctx.weights.gamma(w)
    return out


def _h_terms(grid: _DerivGrid, ctx: KernelContext) -> dict[int, float]:
    rules = grid.rules
    d = ctx.d
    out = {}
    for u in range(1 << d):
        axes = rules.axes(u)
        weights = [a[1] for a in axes]
        sq = grid(u) ** 2
        val = float(np.squeeze(_contract(sq, weights, range(d))))
        wt = sq.copy()
        for ax in range(d):
            shape = [1] * d
            shape[ax] = -1
            wt = wt * np.reshape(weights[ax], shape)
        flags = tuple(rules.truncated_psi[j] if u >> j & 1 else rules.truncated_rho[j] for j in range(d))
        _edge_check(wt, axes, flags, range(d), val, f"H term {_members(u)}")
        out[u] = val / ctx.weights.gamma(u)
    return out


def norm_w(f, ctx: KernelContext, n: int = DEFAULT_NODES) -> NormReport:
    """||f||_W^2 with per-subset contributions."""
    _check_dim(f, ctx)
    terms = _w_terms(_DerivGrid(f, GridRules.build(ctx, n)), ctx)
    return NormReport(w_norm_sq=sum(terms.values()), h_norm_sq=None,
                      contributions={u: (None, t) for u, t in terms.items()})


def norm_h(f, ctx: KernelContext, n: int = DEFAULT_NODES) -> NormReport:
    """||f||_H^2 with per-subset contributions."""
    _check_dim(f, ctx)
    terms = _h_terms(_DerivGrid(f, GridRules.build(ctx, n)), ctx)
    return NormReport(w_norm_sq=None, h_norm_sq=sum(terms.values()),
                      contributions={u: (t, None) for u, t in terms.items()})


def norms(f, ctx: KernelContext, n: int = DEFAULT_NODES, slack: float = 1e-8) -> NormReport:
    """Both norms from one set of derivative evaluations."""
    _check_dim(f, ctx)
    grid = _DerivGrid(f, GridRules.build(ctx, n))
    wt = _w_terms(grid, ctx)
    ht = _h_terms(grid, ctx)
    w, h = sum(wt.values()), sum(ht.values())
    return NormReport(w, h, {u: (ht[u], wt[u]) for u in wt}, sandwich_ok=w <= h * (1.0 + slack))


def w_inner(f, g, ctx: KernelContext, n: int = DEFAULT_NODES) -> float:
    """<f, g>_W on the same tensor grid."""
    _check_dim(f, ctx)
    _check_dim(g, ctx)
    rules = GridRules.build(ctx, n)
    return sum(_w_terms(_DerivGrid(f, rules), ctx, _DerivGrid(g, rules)).values())


def l2_embed_constant(weights, c: Sequence[float]) -> float:
    """int K_d(y, y) rho(y) dy = sum_u gamma_u prod_{j in u} C_j."""
    if weights.is_product:
        return weights.gamma_empty * math.prod(1.0 + g * cj for g, cj in zip(weights.product, c))
    return sum(weights.gamma(u) * math.prod(c[j] for j in _members(u)) for u in range(1 << weights.d))


def lemma_constant_1d(gamma: float, c: float) -> float:
    """The cruder one-dimensional H-versus-W constant 2 + gamma C."""
    return 2.0 + gamma * c


# ---------------------------------------------------------------------------
# ANOVA decomposition
# ---------------------------------------------------------------------------


class AnovaTerm:
    """The ANOVA term f_u, viewed as a function on R^d depending on x_u only.

    Point evaluation integrates the complementary coordinates with the rho
    rules of ``rules``.  ``derivative(w)`` evaluates d^w f_u, which vanishes
    unless w is a subset of u.
    """

    def __init__(self, f, u: int, rules: GridRules):
        self.f = f
        self.u = u
        self.d = f.d
        self.rules = rules
        self.members = _members(u)

    def _projection(self, fn: Fn, v: int, x: np.ndarray) -> np.ndarray:
        # (P_{-v} fn)(x_v) for points x of shape (m, d)
        d = self.d
        outside = [j for j in range(d) if not v >> j & 1]
        if not outside:
            return np.asarray(fn(x), dtype=float)
        nodes = [self.rules.rho[j][0] for j in outside]
        weights = [self.rules.rho[j][1] for j in outside]
        mesh = np.stack(np.meshgrid(*nodes, indexing="ij"), axis=-1).reshape(-1, len(outside))
        pts = np.repeat(x[:, None, :], mesh.shape[0], axis=1)
        pts[:, :, outside] = mesh[None]
        vals = _checked(fn(pts))
        w = weights[0]
        for extra in weights[1:]:
            w = np.multiply.outer(w, extra)
        return vals @ w.reshape(-1)

    def derivative(self, w: int) -> Fn:
        if w & ~self.u:
            return lambda x: np.zeros(np.shape(x)[:-1])
        dfn = self.f.derivative(w)
        u = self.u
        free = u & ~w

        def fn(x):
            x = np.asarray(x, dtype=float)
            if x.shape[-1] != self.d:
                raise DimensionMismatch(f"expected points with {self.d} coordinates")
            lead = x.shape[:-1]
            flat = x.reshape(-1, self.d)
            total = np.zeros(flat.shape[0])
            for extra in subsets(free):
                v = w | extra
                sign = -1.0 if (bin(u).count("1") - bin(v).count("1")) % 2 else 1.0
                total += sign * self._projection(dfn, v, flat)
            return total.reshape(lead)

        return fn

    def __call__(self, x) -> np.ndarray:
        return self.derivative(0)(x)


def anova_term(f, ctx: KernelContext, u: int, n: int = DEFAULT_NODES) -> AnovaTerm:
    """f_u = sum_{v subset u} (-1)^{|u|-|v|} P_{-v} f."""
    _check_dim(f, ctx)
    if u < 0 or u >> ctx.d:
        raise DomainError(f"subset mask {u} outside d={ctx.d}")
    return AnovaTerm(f, u, GridRules.build(ctx, n))


def anova_terms(f, ctx: KernelContext, n: int = DEFAULT_NODES) -> dict[int, AnovaTerm]:
    _check_dim(f, ctx)
    rules = GridRules.build(ctx, n)
    return {u: AnovaTerm(f, u, rules) for u in range(1 << ctx.d)}


class _TermGrid(_DerivGrid):
    """d^w f_u on the active-w grid, built from projections of d^w f.

    On the active-w grid the projection nodes coincide with the inactive grid
    nodes, so P_{-v} is a contraction followed by broadcasting.
    """

    def __init__(self, base: _DerivGrid, u: int, d: int):
        self.base = base
        self.rules = base.rules
        self.u = u
        self.d = d
        self.cache = {}

    def __call__(self, w: int) -> np.ndarray:
        if w in self.cache:
            return self.cache[w]
        full = self.base(w)
        if w & ~self.u:
            out = np.zeros_like(full)
        else:
            weights = [a[1] for a in self.rules.axes(w)]
            out = np.zeros_like(full)
            for extra in subsets(self.u & ~w):
                v = w | extra
                sign = -1.0 if (bin(self.u).count("1") - bin(v).count("1")) % 2 else 1.0
                outside = [j for j in range(self.d) if not v >> j & 1]
                out = out + sign * _contract(full, weights, outside)
        self.cache[w] = out
        return out


def anova_gram(f, ctx: KernelContext, n: int = DEFAULT_NODES) -> tuple[np.ndarray, float]:
    """Matrix of <f_u, f_v>_W over all subsets, and ||f||_W^2."""
    _check_dim(f, ctx)
    d = ctx.d
    base = _DerivGrid(f, GridRules.build(ctx, n))
    averages = []
    for u in range(1 << d):
        grid = _TermGrid(base, u, d)
        row = {}
        for w in range(1 << d):
            if w & ~u:
                continue
            weights = [a[1] for a in base.rules.axes(w)]
            row[w] = _contract(grid(w), weights, [j for j in range(d) if not w >> j & 1])
        averages.append(row)
    m = 1 << d
    gram = np.zeros((m, m))
    for a in range(m):
        for b in range(a, m):
            val = 0.0
            for w in averages[a].keys() & averages[b].keys():
                weights = [r[1] for r in base.rules.axes(w)]
                prod_ = averages[a][w] * averages[b][w]
                val += float(np.squeeze(_contract(prod_, weights, _members(w)))) / ctx.weights.gamma(w)
            gram[a, b] = gram[b, a] = val
    return gram, sum(_w_terms(base, ctx).values())


# ---------------------------------------------------------------------------
# audits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AuditResult:
    lower_ok: bool
    upper_ok: bool
    ratio: float
    bound: float
    w_norm_sq: float
    h_norm_sq: float

    @property
    def ok(self) -> bool:
        return self.lower_ok and self.upper_ok


def audit_equivalence(f, ctx: KernelContext, n: int = DEFAULT_NODES, slack: float = 1e-8) -> AuditResult:
    """Check ||f||_W^2 <= ||f||_H^2 <= bound ||f||_W^2 with the d-dim constant."""
    bound = embed_constant_d(ctx.weights, ctx.c_constants())
    rep = norms(f, ctx, n)
    w, h = rep.w_norm_sq, rep.h_norm_sq
    return AuditResult(
        lower_ok=w <= h * (1.0 + slack),
        upper_ok=h <= bound * w * (1.0 + slack),
        ratio=h / w,
        bound=bound,
        w_norm_sq=w,
        h_norm_sq=h,
    )


def _split_lebesgue(cutoff: float, y: float, width: float, order: int):
    edges = panel_edges(-cutoff, cutoff, width, (y,) if -cutoff < y < cutoff else ())
    return composite_gauss_legendre(edges, order)


def reproducing_check(f, ctx: KernelContext, y, n: int = DEFAULT_NODES,
                      width: float = 0.5, order: int = 8) -> float:
    """|f(y) - <f, K_d(., y)>_W|.

    The kernel side of each W term needs int d^w K(x, y) rho_{-w} dx_{-w},
    which for K = sum_u gamma_u prod eta_j is

        prod_{j in w} d eta_j(x_j, y_j) * sum_{u >= w} gamma_u prod_{j in u-w} I_j(y_j)

    with I_j(y) = int eta_j(x, y) rho_j(x) dx evaluated numerically (it is
    zero in exact arithmetic).  d eta_j psi_j equals Phi_j - 1{x > y_j}, so
    the outer integral runs against Lebesgue measure on rules split at y_j.
    """
    _check_dim(f, ctx)
    d = ctx.d
    if d > 3:
        raise DimensionTooLarge("reproducing check is limited to d <= 3")
    y = np.asarray(y, dtype=float).reshape(d)
    rules = GridRules.build(ctx, n)
    I = []
    for j, p in enumerate(ctx.pairs):
        xs, ws = p.split_rule("rho", float(y[j]))
        I.append(float(np.dot(ws, ctx.table(j).eta(xs, y[j]))))
    total = 0.0
    for w in range(1 << d):
        active = _members(w)
        axes, slopes = [], []
        for j in range(d):
            if w >> j & 1:
                p = ctx.pairs[j]
                xs, ws = _split_lebesgue(p.cutoff, float(y[j]), width, order)
                axes.append((xs, ws))
                slopes.append(p.cdf(xs) - (xs > y[j]))
            else:
                axes.append(rules.rho[j])
        weights = [a[1] for a in axes]
        vals = _checked(f.derivative(w)(_grid(axes)))
        inactive = [j for j in range(d) if not w >> j & 1]
        g = _contract(vals, weights, inactive)
        for k, j in enumerate(active):
            shape = [1] * d
            shape[j] = -1
            g = g * np.reshape(slopes[k], shape)
        outer = float(np.squeeze(_contract(g, weights, active)))
        factor = sum(
            ctx.weights.gamma(u) * math.prod(I[j] for j in _members(u & ~w))
            for u in range(1 << d) if u & w == w
        )
        total += outer * factor / ctx.weights.gamma(w)
    return abs(float(f(y[None, :])[0]) - total)


# ---------------------------------------------------------------------------
# truncation profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TruncationProfile:
    """Norm terms over [-R, R]^d for increasing R.

    ``l2`` is int f^2 rho, ``h`` and ``w`` the full truncated squared norms.
    """

    radii: tuple[float, ...]
    l2: tuple[float, ...]
    h: tuple[float, ...]
    w: tuple[float, ...]

    def growth(self, which: str = "h") -> float:
        vals = getattr(self, which)
        return vals[-1] / vals[-2] if vals[-2] else math.inf


def truncated_profile(f, ctx: KernelContext, radii: Sequence[float] = PROFILE_RADII,
                      width: float = 0.5, order: int = 16) -> TruncationProfile:
    """Truncated H, W and L2 norms, for functions that may lie outside H.

    Integrands are formed as (d^u f * sqrt(weight))^2 so that a growing f
    against a decaying weight never overflows in the product.
    """
    _check_dim(f, ctx)
    d = ctx.d
    if d > 2:
        raise DimensionTooLarge("truncation profiles are limited to d <= 2")
    l2s, hs, ws = [], [], []
    for R in radii:
        x, wq = composite_gauss_legendre(panel_edges(-R, R, width), order)
        lr = [p.logpdf(x) for p in ctx.pairs]
        lp = [p.log_psi(x) for p in ctx.pairs]
        mesh = _grid([(x, wq)] * d)
        wt = wq
        for _ in range(d - 1):
            wt = np.multiply.outer(wt, wq)
        h_total = w_total = l2 = 0.0
        for u in range(1 << d):
            vals = _checked(f.derivative(u)(mesh))
            half = np.zeros(vals.shape)
            log_rho_out = np.zeros(vals.shape)
            for j in range(d):
                shape = [1] * d
                shape[j] = -1
                if u >> j & 1:
                    half = half + 0.5 * np.reshape(lp[j], shape)
                else:
                    half = half + 0.5 * np.reshape(lr[j], shape)
                    log_rho_out = log_rho_out + np.reshape(lr[j], shape)
            h_term = float(np.sum(wt * (vals * np.exp(half)) ** 2))
            if u == 0:
                l2 = h_term
            # W: average out inactive coordinates, then square against psi
            inner = vals * np.exp(log_rho_out)
            inactive = [j for j in range(d) if not u >> j & 1]
            g = _contract(inner, [wq] * d, inactive)
            act_half = np.zeros(g.shape)
            for j in _members(u):
                shape = [1] * d
                shape[j] = -1
                act_half = act_half + 0.5 * np.reshape(lp[j], shape)
            gw = g * np.exp(act_half)
            w_term = float(np.squeeze(_contract(gw * gw, [wq] * d, _members(u))))
            gam = ctx.weights.gamma(u)
            h_total += h_term / gam
            w_total += w_term / gam
        l2s.append(l2)
        hs.append(h_total)
        ws.append(w_total)
    return TruncationProfile(tuple(float(r) for r in radii), tuple(l2s), tuple(hs), tuple(ws))
