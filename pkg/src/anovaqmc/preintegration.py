"""Smoothing by preintegration.

For f = max(phi, 0) with phi increasing in x_1, the first variable is
integrated out exactly up to quadrature error:

    P_1 f(x_rest) = int_{x_1*}^inf phi(x_1, x_rest) rho(x_1) dx_1,

where x_1* is the kink location phi(x_1*, x_rest) = 0.  The result is a
smooth function of the remaining d-1 variables.

The inner integral uses Gauss-Legendre on [max(x_1*, -X), X] with X = 14,
beyond which the standard normal weight is below 1e-42.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

import numpy as np

from .errors import DomainError, MonotonicityViolated, NoConvergence, NonFiniteSample
from .quadrature import gauss_legendre

__all__ = [
    "KinkKind",
    "KinkLocation",
    "KinkIntegrand",
    "PreintegratedFunction",
    "find_kink",
    "find_kinks",
    "preintegrate_eval",
    "preintegrated_integrand",
]

BRACKET_START = 8.0
BRACKET_CAP = 40.0
INNER_LIMIT = 14.0
MAX_ITER = 200
PROBES = 64
_CHUNK = 4096
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class KinkKind(Enum):
    ROOT = "root"
    ALL_POSITIVE = "all_positive"
    ALL_NEGATIVE = "all_negative"


@dataclass(frozen=True)
class KinkLocation:
    kind: KinkKind
    root: float | None = None


@dataclass(frozen=True)
class KinkIntegrand:
    """phi and its x_1 derivative, both acting on arrays of shape (..., d).

    ``certificate`` is ``"probed"`` (check d phi / d x_1 > 0 at stratified
    points before each batch) or ``"asserted"`` (trust the caller).
    """

    phi: Callable[[np.ndarray], np.ndarray]
    dphi_dx1: Callable[[np.ndarray], np.ndarray]
    d: int
    certificate: str = "probed"

    def __post_init__(self):
        if self.d < 1:
            raise DomainError("dimension must be positive")
        if self.certificate not in ("probed", "asserted"):
            raise DomainError(f"unknown certificate {self.certificate!r}")


@dataclass(frozen=True)
class PreintegratedFunction:
    integrand: KinkIntegrand
    inner_order: int = 64
    root_tol: float = 1e-12

    def __post_init__(self):
        if self.inner_order < 2:
            raise DomainError("inner order must be at least 2")
        if not self.root_tol > 0:
            raise DomainError("root tolerance must be positive")

    def __call__(self, x_rest) -> np.ndarray:
        return preintegrate_eval(self, x_rest)


def _rows(ki: KinkIntegrand, x_rest) -> np.ndarray:
    arr = np.asarray(x_rest, dtype=float)
    if ki.d == 1:
        # nothing is left after integrating out x_1
        return np.zeros((arr.shape[0] if arr.ndim == 2 else 1, 0))
    return arr.reshape(-1, ki.d - 1)


def _with_x1(x1: np.ndarray, x_rest: np.ndarray) -> np.ndarray:
    return np.concatenate([x1[..., None], np.broadcast_to(x_rest, x1.shape + x_rest.shape[-1:])], axis=-1)


def _probe(ki: KinkIntegrand, x_rest: np.ndarray) -> None:
    if ki.certificate == "asserted" or x_rest.shape[0] == 0:
        return
    # one x_1 per stratum of [-8, 8], paired with rows of the batch in turn
    x1 = -BRACKET_START + 2 * BRACKET_START * (np.arange(PROBES) + 0.5) / PROBES
    rows = x_rest[np.arange(PROBES) % x_rest.shape[0]]
    slope = np.asarray(ki.dphi_dx1(_with_x1(x1, rows)), dtype=float)
    if not np.all(slope > 0):
        raise MonotonicityViolated("d phi / d x_1 is not positive at every probe point")


def find_kinks(ki: KinkIntegrand, x_rest: np.ndarray, root_tol: float = 1e-12):
    """Vectorised kink search for rows of ``x_rest`` (shape (M, d-1)).

    Returns ``(kind, root)`` arrays; kind is 0 for a root, 1 when phi > 0
    on the whole bracket and -1 when phi < 0 on it.
    """
    x_rest = _rows(ki, x_rest)
    M = x_rest.shape[0]

    def phi(x1, rows):
        v = np.asarray(ki.phi(_with_x1(x1, rows)), dtype=float)
        if not np.all(np.isfinite(v)):
            raise NonFiniteSample("phi returned a non-finite value during the kink search")
        return v

    a = np.full(M, -BRACKET_START)
    b = np.full(M, BRACKET_START)
    fa, fb = phi(a, x_rest), phi(b, x_rest)
    if np.any((fa > 0) & (fb < 0)):
        raise MonotonicityViolated("phi decreases across the bracket")
    width = BRACKET_START
    while width < BRACKET_CAP:
        open_ = ~((fa <= 0) & (fb >= 0))
        if not np.any(open_):
            break
        width = min(2 * width, BRACKET_CAP)
        left = open_ & (fa > 0)
        right = open_ & (fb < 0)
        if np.any(left):
            a[left] = -width
            fa[left] = phi(a[left], x_rest[left])
        if np.any(right):
            b[right] = width
            fb[right] = phi(b[right], x_rest[right])
        if np.any((fa > 0) & (fb < 0)):
            raise MonotonicityViolated("phi decreases across the bracket")

    kind = np.zeros(M, dtype=int)
    kind[fa > 0] = 1
    kind[fb < 0] = -1
    root = np.full(M, np.nan)
    exact_a = (kind == 0) & (fa == 0)
    exact_b = (kind == 0) & (fb == 0) & ~exact_a
    root[exact_a] = a[exact_a]
    root[exact_b] = b[exact_b]
    active = np.flatnonzero((kind == 0) & ~exact_a & ~exact_b)
    if active.size:
        root[active] = _safeguarded_newton(ki, x_rest[active], a[active], b[active], root_tol)
    return kind, root


def _safeguarded_newton(ki, rows, a, b, tol):
    x = 0.5 * (a + b)
    out = np.full(x.shape, np.nan)
    live = np.arange(x.size)
    for _ in range(MAX_ITER):
        pts = _with_x1(x, rows)
        f = np.asarray(ki.phi(pts), dtype=float)
        df = np.asarray(ki.dphi_dx1(pts), dtype=float)
        done = (np.abs(f) <= tol) | (b - a <= 4 * np.finfo(float).eps * np.maximum(1.0, np.abs(x)))
        if np.any(done):
            out[live[done]] = x[done]
            keep = ~done
            live, x, a, b, f, df, rows = live[keep], x[keep], a[keep], b[keep], f[keep], df[keep], rows[keep]
            if live.size == 0:
                return out
        neg = f < 0
        a = np.where(neg, x, a)
        b = np.where(neg, b, x)
        with np.errstate(divide="ignore", invalid="ignore"):
            newton = x - f / df
        ok = np.isfinite(newton) & (newton > a) & (newton < b) & (df > 0)
        x = np.where(ok, newton, 0.5 * (a + b))
    raise NoConvergence(f"kink search did not converge for {live.size} points in {MAX_ITER} iterations")


def find_kink(ki: KinkIntegrand, x_rest, root_tol: float = 1e-12) -> KinkLocation:
    """Kink of phi(., x_rest) along x_1 for a single point."""
    x_rest = _rows(ki, np.asarray(x_rest, dtype=float).reshape(1, -1))
    _probe(ki, x_rest)
    kind, root = find_kinks(ki, x_rest, root_tol)
    if kind[0] == 1:
        return KinkLocation(KinkKind.ALL_POSITIVE)
    if kind[0] == -1:
        return KinkLocation(KinkKind.ALL_NEGATIVE)
    return KinkLocation(KinkKind.ROOT, float(root[0]))


def _inner(ki: KinkIntegrand, rows: np.ndarray, lower: np.ndarray, order: int) -> np.ndarray:
    t, w = gauss_legendre(order)
    half = 0.5 * (INNER_LIMIT - lower)
    x1 = (0.5 * (INNER_LIMIT + lower))[:, None] + half[:, None] * t
    pts = np.concatenate([x1[..., None], np.broadcast_to(rows[:, None, :], x1.shape + rows.shape[-1:])], axis=-1)
    vals = np.asarray(ki.phi(pts), dtype=float) * np.exp(-0.5 * x1 * x1 - _LOG_SQRT_2PI)
    if not np.all(np.isfinite(vals)):
        raise NonFiniteSample("phi returned a non-finite value inside the inner integral")
    return half * (vals @ w)


def preintegrate_eval(pf: PreintegratedFunction, x_rest) -> np.ndarray | float:
    """P_1 f at one point (shape (d-1,)) or a batch (shape (M, d-1))."""
    ki = pf.integrand
    arr = np.asarray(x_rest, dtype=float)
    single = arr.ndim <= 1
    rows = _rows(ki, arr)
    out = np.empty(rows.shape[0])
    for start in range(0, rows.shape[0], _CHUNK):
        chunk = rows[start:start + _CHUNK]
        _probe(ki, chunk)
        kind, root = find_kinks(ki, chunk, pf.root_tol)
        lower = np.where(kind == 1, -INNER_LIMIT, np.clip(np.nan_to_num(root), -INNER_LIMIT, INNER_LIMIT))
        vals = np.zeros(chunk.shape[0])
        need = (kind >= 0) & (lower < INNER_LIMIT)
        if np.any(need):
            vals[need] = _inner(ki, chunk[need], lower[need], pf.inner_order)
        out[start:start + _CHUNK] = vals
    return float(out[0]) if single else out


def preintegrated_integrand(pf: PreintegratedFunction) -> Callable[[np.ndarray], np.ndarray]:
    """The (d-1)-dimensional function x_rest -> P_1 f(x_rest) for batch use."""

    def g(x_rest):
        x_rest = np.asarray(x_rest, dtype=float)
        flat = x_rest.reshape(-1, x_rest.shape[-1])
        return preintegrate_eval(pf, flat).reshape(x_rest.shape[:-1])

    return g
