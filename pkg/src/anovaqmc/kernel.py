"""Reproducing kernels of the unanchored ANOVA space.

For one coordinate with weak pair (rho, psi) the kernel is

    eta(x, y) = integral (1{t > x} - Phi(t)) (1{t > y} - Phi(t)) / psi(t) dt
              = A(min) + B(max) - M(min, max)

with A(x) = int_{-inf}^x Phi^2/psi, B(x) = int_x^inf (1-Phi)^2/psi and
M(a, b) = int_a^b Phi (1-Phi)/psi.  In d dimensions

    K_d(x, y) = sum_u gamma_u prod_{j in u} eta_j(x_j, y_j).

The antiderivatives are tabulated once per coordinate as exact composite
Gauss-Legendre cumulative sums on a uniform panel grid; a query adds a
16-node Gauss-Legendre integral over the partial panel, so evaluation is
accurate to rounding rather than to an interpolation error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .errors import ConditionViolated, DimensionMismatch, DimensionTooLarge, DomainError, KinkUndefined
from .quadrature import composite_gauss_legendre, gauss_legendre, panel_edges
from .weights import ConditionReport, ExpDecay, GaussianDecay, GaussianStd, WeightPair, check_conditions

__all__ = [
    "WeightParams",
    "Antiderivatives",
    "KernelContext",
    "eta",
    "eta_dx",
    "kernel_d",
    "embed_constant_1d",
    "embed_constant_d",
    "subsets",
]

MAX_EXPLICIT_DIM = 20
_PANEL = 0.25
_ORDER = 16
# keep tabulated integrands below exp(_LOG_CAP) so cumulative sums stay finite
_LOG_CAP = 600.0


def subsets(mask: int):
    """All sub-bitmasks of ``mask`` (including 0 and ``mask``)."""
    sub = mask
    while True:
        yield sub
        if sub == 0:
            return
        sub = (sub - 1) & mask


def _members(mask: int) -> list[int]:
    return [j for j in range(mask.bit_length()) if mask >> j & 1]


# ---------------------------------------------------------------------------
# weight parameters
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightParams:
    """gamma_u for u subset of {0..d-1}, stored as product or explicit map.

    Subsets are bitmasks: bit j set means coordinate j belongs to u.
    """

    d: int
    product: tuple[float, ...] | None = None
    explicit: Mapping[int, float] | None = None
    gamma_empty: float = 1.0

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be at least 1")
        if (self.product is None) == (self.explicit is None):
            raise DomainError("give exactly one of product or explicit weights")
        if self.product is not None:
            object.__setattr__(self, "product", tuple(float(g) for g in self.product))
            if len(self.product) != self.d:
                raise DimensionMismatch(f"{len(self.product)} product weights for d={self.d}")
            if any(not g > 0 for g in self.product):
                raise DomainError("product weights must be positive")
        else:
            if self.d > MAX_EXPLICIT_DIM:
                raise DimensionTooLarge(f"explicit weights are limited to d <= {MAX_EXPLICIT_DIM}")
            table = {int(k): float(v) for k, v in self.explicit.items()}
            for k, v in table.items():
                if k < 0 or k >> self.d:
                    raise DomainError(f"subset mask {k} outside d={self.d}")
                if not v > 0:
                    raise DomainError("explicit weights must be positive")
            table.setdefault(0, self.gamma_empty)
            object.__setattr__(self, "explicit", table)
        if not self.gamma_empty > 0:
            raise DomainError("gamma_empty must be positive")

    @classmethod
    def from_product(cls, gammas: Sequence[float]) -> "WeightParams":
        return cls(d=len(gammas), product=tuple(gammas))

    @classmethod
    def from_explicit(cls, d: int, table: Mapping[int, float]) -> "WeightParams":
        return cls(d=d, explicit=dict(table))

    @property
    def is_product(self) -> bool:
        return self.product is not None

    def gamma(self, mask: int) -> float:
        if mask == 0:
            return self.gamma_empty if self.is_product else self.explicit[0]
        if self.is_product:
            return math.prod(self.product[j] for j in _members(mask))
        try:
            return self.explicit[mask]
        except KeyError:
            raise DomainError(f"no weight for subset {_members(mask)}") from None

    def to_explicit(self) -> "WeightParams":
        if not self.is_product:
            return self
        if self.d > MAX_EXPLICIT_DIM:
            raise DimensionTooLarge(f"explicit weights are limited to d <= {MAX_EXPLICIT_DIM}")
        return WeightParams.from_explicit(self.d, {m: self.gamma(m) for m in range(1 << self.d)})


# ---------------------------------------------------------------------------
# per-coordinate antiderivative tables
# ---------------------------------------------------------------------------


def _table_radius(pair: WeightPair) -> float:
    base = 40.0 if isinstance(pair.rho, GaussianStd) else 80.0
    psi = pair.psi
    if isinstance(psi, GaussianDecay):
        base = min(base, math.sqrt(2.0 * psi.alpha * _LOG_CAP))
    elif isinstance(psi, ExpDecay):
        base = min(base, psi.alpha * _LOG_CAP)
    # whole number of panels, so 0 is always a panel edge (the |x| kink of ExpDecay)
    return max(_PANEL, math.floor(base / _PANEL) * _PANEL)


def _segment(log_f, a: float, b: float) -> float:
    """int_a^b exp(log_f) by composite GL; sign follows the orientation."""
    if a == b:
        return 0.0
    lo, hi = min(a, b), max(a, b)
    x, w = composite_gauss_legendre(panel_edges(lo, hi, _PANEL, (0.0,) if lo < 0 < hi else ()), _ORDER)
    with np.errstate(over="ignore"):
        s = float(np.dot(w, np.exp(log_f(x))))
    return s if b > a else -s


def _tail(log_f, start: float, direction: int) -> float:
    """int from ``start`` to +inf (direction=1) or -inf (direction=-1).

    A fine composite rule covers [start, start + 3|start|]; the remainder uses
    t = s / u on (0, 1], which keeps algebraically decaying tails smooth.
    """
    s0 = abs(start)
    near = _segment(lambda t: log_f(direction * t), s0, 4.0 * s0)
    far_start = 4.0 * s0
    u, w = composite_gauss_legendre(np.linspace(0.0, 1.0, 17), _ORDER)
    t = far_start / u
    with np.errstate(over="ignore"):
        far = float(np.dot(w, np.exp(log_f(direction * t)) * far_start / (u * u)))
    return near + far


class Antiderivatives:
    """Tabulated A, B (and the strong analogues) for one weight pair.

    The tables cover [-L, L] on panels of width 1/4 with L chosen so that
    every tabulated integrand stays finite.  Queries outside are evaluated by
    direct composite quadrature.
    """

    def __init__(self, pair: WeightPair, report: ConditionReport):
        if not report.weak_holds:
            raise ConditionViolated(f"weak condition fails for {pair.describe()}")
        self.pair = pair
        self.strong = report.strong_holds
        self.c_constant = report.c_constant
        rho = pair.rho
        lc, ls, lp = rho.log_cdf, rho.log_sf, pair.log_psi
        self.log_f = {
            "A": lambda t: 2.0 * lc(t) - lp(t),
            "B": lambda t: 2.0 * ls(t) - lp(t),
            "P": lambda t: lc(t) - lp(t),
            "Q": lambda t: ls(t) - lp(t),
            "M": lambda t: lc(t) + ls(t) - lp(t),
        }
        L = _table_radius(pair)
        self.L = L
        self.edges = panel_edges(-L, L, _PANEL)
        self.n_panels = len(self.edges) - 1
        x, w = composite_gauss_legendre(self.edges, _ORDER)
        shape = (self.n_panels, _ORDER)
        self.left, self.right, self.origin = {}, {}, {}
        for key, lf in self.log_f.items():
            panel = (w * np.exp(lf(x))).reshape(shape).sum(axis=1)
            # left[i] = int_{-L}^{e_i}, right[i] = int_{e_i}^{L}
            self.left[key] = np.concatenate(([0.0], np.cumsum(panel)))
            self.right[key] = np.concatenate((np.cumsum(panel[::-1])[::-1], [0.0]))
            # int_0^{e_i}, accumulated outward from 0 so neither side cancels
            mid = self.n_panels // 2
            self.origin[key] = np.concatenate(
                (-np.cumsum(panel[:mid][::-1])[::-1], [0.0], np.cumsum(panel[mid:]))
            )
        self.tail_A = _tail(self.log_f["A"], -L, -1)
        self.tail_B = _tail(self.log_f["B"], L, 1)
        if self.strong:
            self.tail_P = _tail(self.log_f["P"], -L, -1)
            self.tail_Q = _tail(self.log_f["Q"], L, 1)

    # -- primitive evaluations ---------------------------------------------

    def _panel_index(self, x: np.ndarray) -> np.ndarray:
        i = np.floor((x + self.L) / _PANEL).astype(int)
        return np.clip(i, 0, self.n_panels - 1)

    def _partial(self, key: str, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        # int_a^b elementwise; |b - a| <= one panel
        t, w = gauss_legendre(_ORDER)
        half = 0.5 * (b - a)
        nodes = (0.5 * (a + b))[..., None] + half[..., None] * t
        with np.errstate(over="ignore"):
            return half * (np.exp(self.log_f[key](nodes)) @ w)

    def from_left(self, key: str, x) -> np.ndarray:
        """int_{-L}^x f_key (x may lie outside [-L, L])."""
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, -self.L, self.L)
        i = self._panel_index(xc)
        out = self.left[key][i] + self._partial(key, self.edges[i], xc)
        return self._beyond(key, x, xc, out, sign=1.0)

    def from_right(self, key: str, x) -> np.ndarray:
        """int_x^L f_key (x may lie outside [-L, L])."""
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, -self.L, self.L)
        i = self._panel_index(xc)
        out = self.right[key][i + 1] + self._partial(key, xc, self.edges[i + 1])
        return self._beyond(key, x, xc, out, sign=-1.0)

    def _beyond(self, key, x, xc, inside, sign):
        # add sign * int_{xc}^{x} for queries outside the table
        outside = x != xc
        if not np.any(outside):
            return inside
        res = np.array(inside, dtype=float).reshape(-1)
        xs, cs = x.reshape(-1), xc.reshape(-1)
        for k in np.flatnonzero(outside.reshape(-1)):
            res[k] += sign * _segment(self.log_f[key], cs[k], xs[k])
        return res.reshape(x.shape)

    # -- the named antiderivatives -------------------------------------------

    def _tail_side(self, key, x, tail, direction):
        # int from x outward to -inf (direction -1) or +inf (direction +1)
        x = np.asarray(x, dtype=float)
        if direction < 0:
            out = tail + self.from_left(key, x)
            far = x < -self.L
        else:
            out = tail + self.from_right(key, x)
            far = x > self.L
        if np.any(far):
            # adding tail and a negative segment would cancel; integrate afresh
            out = np.array(out, dtype=float).reshape(-1)
            xs = x.reshape(-1)
            for k in np.flatnonzero(far.reshape(-1)):
                out[k] = _tail(self.log_f[key], xs[k], direction)
            out = out.reshape(x.shape)
        return out

    def A(self, x):
        return self._tail_side("A", x, self.tail_A, -1)

    def B(self, x):
        return self._tail_side("B", x, self.tail_B, 1)

    def A_strong(self, x):
        self._need_strong()
        return self._tail_side("P", x, self.tail_P, -1)

    def B_strong(self, x):
        self._need_strong()
        return self._tail_side("Q", x, self.tail_Q, 1)

    def from_origin(self, key: str, x) -> np.ndarray:
        """int_0^x f_key."""
        x = np.asarray(x, dtype=float)
        xc = np.clip(x, -self.L, self.L)
        i = self._panel_index(xc)
        out = self.origin[key][i] + self._partial(key, self.edges[i], xc)
        return self._beyond(key, x, xc, out, sign=1.0)

    def between(self, key: str, a, b):
        """int_a^b f_key."""
        return self.from_origin(key, b) - self.from_origin(key, a)

    def _need_strong(self):
        if not self.strong:
            raise ConditionViolated(f"strong condition fails for {self.pair.describe()}")

    # -- kernel forms ----------------------------------------------------------

    def eta(self, x, y, form: str = "split"):
        lo, hi = np.minimum(x, y), np.maximum(x, y)
        if form == "split":
            out = self.A(lo) + self.B(hi) - self.between("M", lo, hi)
        elif form == "max":
            out = self.A(hi) + self.B(hi) - self.between("P", lo, hi)
        elif form == "min":
            out = self.A(lo) + self.B(lo) - self.between("Q", lo, hi)
        elif form == "strong":
            out = self.A_strong(lo) + self.B_strong(hi) - self.c_constant
        else:
            raise DomainError(f"unknown kernel form {form!r}")
        return out

    def eta_dx(self, x, y):
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        if np.any(x == y):
            raise KinkUndefined("d/dx eta(x, y) is undefined at x == y")
        rho, lp = self.pair.rho, self.pair.log_psi
        left = np.exp(rho.log_cdf(x) - lp(x))
        right = -np.exp(rho.log_sf(x) - lp(x))
        return np.where(x < y, left, right)


# ---------------------------------------------------------------------------
# context
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class KernelContext:
    """Weight pairs, weight parameters and antiderivative tables for K_d."""

    pairs: tuple[WeightPair, ...]
    weights: WeightParams
    reports: tuple[ConditionReport, ...] = field(init=False, repr=False)
    tables: tuple[Antiderivatives | None, ...] = field(init=False, repr=False)

    def __post_init__(self):
        pairs = tuple(self.pairs)
        object.__setattr__(self, "pairs", pairs)
        if len(pairs) != self.weights.d:
            raise DimensionMismatch(f"{len(pairs)} weight pairs for d={self.weights.d}")
        reports, tables, cache = [], [], {}
        for p in pairs:
            # identical pairs share one table
            if p not in cache:
                rep = check_conditions(p)
                cache[p] = (rep, Antiderivatives(p, rep) if rep.weak_holds else None)
            reports.append(cache[p][0])
            tables.append(cache[p][1])
        object.__setattr__(self, "reports", tuple(reports))
        object.__setattr__(self, "tables", tuple(tables))

    @classmethod
    def build(cls, pairs: WeightPair | Sequence[WeightPair], weights: WeightParams | Sequence[float] | float):
        """Convenience constructor; a single pair is replicated across coordinates."""
        if isinstance(weights, (int, float)):
            weights = WeightParams.from_product([float(weights)])
        elif not isinstance(weights, WeightParams):
            weights = WeightParams.from_product(list(weights))
        if isinstance(pairs, WeightPair):
            pairs = [pairs] * weights.d
        return cls(tuple(pairs), weights)

    @property
    def d(self) -> int:
        return self.weights.d

    def table(self, j: int) -> Antiderivatives:
        if not 0 <= j < self.d:
            raise DimensionMismatch(f"coordinate {j} outside 0..{self.d - 1}")
        t = self.tables[j]
        if t is None:
            raise ConditionViolated(f"weak condition fails for coordinate {j}: {self.pairs[j].describe()}")
        return t

    def c_constants(self) -> list[float | None]:
        return [r.c_constant for r in self.reports]

    def eta(self, j, x, y, form="split"):
        return eta(self, j, x, y, form)

    def kernel(self, x, y, method="auto"):
        return kernel_d(self, x, y, method)


def _scalar(a):
    a = np.asarray(a)
    return float(a) if a.ndim == 0 else a


def eta(ctx: KernelContext, j: int, x, y, form: str = "split"):
    """The 1-D kernel eta_j(x, y); vectorised in x and y.

    ``form`` selects an algebraically equivalent expression: ``"split"``
    (default), ``"max"``, ``"min"`` or, under the strong condition only,
    ``"strong"``, which is A~(min) + B~(max) - C.
    """
    return _scalar(ctx.table(j).eta(np.asarray(x, dtype=float), np.asarray(y, dtype=float), form))


def eta_dx(ctx: KernelContext, j: int, x, y):
    """Partial derivative of eta_j in x: Phi/psi left of y, -(1-Phi)/psi right of y."""
    return _scalar(ctx.table(j).eta_dx(x, y))


def _eta_matrix(ctx: KernelContext, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    if x.shape[-1] != ctx.d:
        raise DimensionMismatch(f"points have {x.shape[-1]} coordinates, context has d={ctx.d}")
    return np.stack([_eta_dedup(ctx.table(j), x[..., j], y[..., j]) for j in range(ctx.d)], axis=-1)


def _eta_dedup(table: Antiderivatives, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    # tensor grids repeat each coordinate many times; evaluate distinct pairs once
    if x.size < 4096:
        return table.eta(x, y)
    # axes along which both arguments are constant collapse to length 1
    keep = tuple(
        slice(0, 1) if n > 1 and all(a.strides[ax] == 0 or (a == a[(slice(None),) * ax + (slice(0, 1),)]).all()
                                     for a in (x, y)) else slice(None)
        for ax, n in enumerate(x.shape)
    )
    if any(k != slice(None) for k in keep):
        return np.broadcast_to(_eta_dedup(table, x[keep], y[keep]), x.shape)
    # complex keys sort lexicographically, which is much faster than row-wise unique
    uniq, inv = np.unique((x + 1j * y).ravel(), return_inverse=True)
    if len(uniq) > x.size // 2:
        return table.eta(x, y)
    return table.eta(uniq.real, uniq.imag)[inv.reshape(-1)].reshape(x.shape)


def _subset_sum(weights: WeightParams, e: np.ndarray) -> np.ndarray:
    """sum_u gamma_u prod_{j in u} e_j over all 2^d subsets (last axis of e)."""
    d = weights.d
    if d > MAX_EXPLICIT_DIM:
        raise DimensionTooLarge(f"subset expansion is limited to d <= {MAX_EXPLICIT_DIM}")
    prods = [np.ones(e.shape[:-1])]
    total = weights.gamma(0) * prods[0]
    for mask in range(1, 1 << d):
        low = (mask & -mask).bit_length() - 1
        prods.append(prods[mask & (mask - 1)] * e[..., low])
        total = total + weights.gamma(mask) * prods[mask]
    return total


def kernel_d(ctx: KernelContext, x, y, method: str = "auto"):
    """K_d(x, y) for points of shape (..., d).

    Product weights use prod_j (1 + gamma_j eta_j) unless ``method="subsets"``
    forces the explicit 2^d expansion.
    """
    if method not in ("auto", "product", "subsets"):
        raise DomainError(f"unknown method {method!r}")
    e = _eta_matrix(ctx, x, y)
    w = ctx.weights
    if w.is_product and method != "subsets":
        return _scalar(w.gamma_empty * np.prod(1.0 + np.asarray(w.product) * e, axis=-1))
    if method == "product":
        raise DomainError("product evaluation needs product weights")
    return _scalar(_subset_sum(w, e))


# ---------------------------------------------------------------------------
# equivalence constants
# ---------------------------------------------------------------------------


def embed_constant_1d(gamma: float, c: float) -> float:
    """Upper equivalence constant 1 + gamma C in one dimension."""
    if gamma < 0 or c < 0:
        raise DomainError("gamma and C must be nonnegative")
    return 1.0 + gamma * c


def _check_c(c: Sequence[float | None], d: int) -> list[float]:
    if len(c) != d:
        raise DimensionMismatch(f"{len(c)} constants for d={d}")
    out = []
    for j, cj in enumerate(c):
        if cj is None or not math.isfinite(cj):
            raise ConditionViolated(f"strong condition fails for coordinate {j}")
        if cj < 0:
            raise DomainError("C must be nonnegative")
        out.append(float(cj))
    return out


def embed_constant_d(weights: WeightParams, c: Sequence[float | None], method: str = "auto") -> float:
    """max_v sum_{w subset v} (gamma_v / gamma_{v minus w}) prod_{j in w} C_j.

    Writing u = v minus w, the inner sum is gamma_v C_v * sum_{u subset v}
    1 / (gamma_u C_u), a subset-sum transform computed for all v at once in
    O(d 2^d).  Product weights reduce to prod_j (1 + gamma_j C_j).
    """
    cs = _check_c(c, weights.d)
    if weights.is_product and method != "subsets":
        return math.prod(1.0 + g * cj for g, cj in zip(weights.product, cs))
    d = weights.d
    if d > MAX_EXPLICIT_DIM:
        raise DimensionTooLarge(f"subset maximisation is limited to d <= {MAX_EXPLICIT_DIM}")
    if method == "brute":
        return _embed_brute(weights, cs)
    n = 1 << d
    cprod = np.ones(n)
    for mask in range(1, n):
        low = (mask & -mask).bit_length() - 1
        cprod[mask] = cprod[mask & (mask - 1)] * cs[low]
    gam = np.array([weights.gamma(m) for m in range(n)])
    with np.errstate(divide="ignore"):
        inv = 1.0 / (gam * cprod)
    zeta = inv.copy()
    for j in range(d):
        bit = 1 << j
        idx = np.arange(n)
        has = (idx & bit) != 0
        zeta[has] += zeta[idx[has] ^ bit]
    with np.errstate(invalid="ignore"):
        vals = gam * cprod * zeta
    # C_j = 0 only happens with zero-weight coordinates; fall back per subset
    bad = ~np.isfinite(vals)
    if np.any(bad):
        for m in np.flatnonzero(bad):
            vals[m] = _embed_subset(weights, cs, int(m))
    return float(np.max(vals))


def _embed_subset(weights: WeightParams, cs: list[float], v: int) -> float:
    gv = weights.gamma(v)
    return sum(
        gv / weights.gamma(v & ~w) * math.prod(cs[j] for j in _members(w)) for w in subsets(v)
    )


def _embed_brute(weights: WeightParams, cs: list[float]) -> float:
    return max(_embed_subset(weights, cs, v) for v in range(1 << weights.d))
