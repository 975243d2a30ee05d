"""Randomly shifted rank-1 lattice rules on R^d and a Monte Carlo baseline.

Points frac(k z / N + Delta), k = 0..N-1, are mapped to R^d by the inverse
standard normal cdf.  Each of the m shifts draws from its own substream of a
Philox-4x64 counter-based generator: substream k is ``Philox(key=seed)``
jumped k times (k * 2^128 draws), so results do not depend on how or in what
order the shifts are evaluated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import special

from .errors import DomainError, InvalidVector, NonFiniteSample, ParseError

__all__ = [
    "GeneratingVector",
    "ShiftedRuleRun",
    "lattice_points",
    "qmc_estimate",
    "mc_estimate",
    "korobov_vector",
    "load_vector",
    "parse_vector",
    "search_korobov",
    "default_vector",
    "substream",
]

KOROBOV_CANDIDATES = 128
SEARCH_SHIFTS = 8
SEARCH_SEED = 20240517


@dataclass(frozen=True)
class GeneratingVector:
    z: tuple[int, ...]
    n: int
    source: str = "explicit"

    def __post_init__(self):
        object.__setattr__(self, "z", tuple(int(v) for v in self.z))
        if self.n < 1:
            raise InvalidVector(f"point count must be positive, got {self.n}")
        if not self.z:
            raise InvalidVector("generating vector is empty")
        for j, zj in enumerate(self.z):
            if not 1 <= zj < max(self.n, 2):
                raise InvalidVector(f"z[{j}] = {zj} outside [1, {self.n})")
            if math.gcd(zj, self.n) != 1:
                raise InvalidVector(f"z[{j}] = {zj} shares a factor with N = {self.n}")

    @property
    def d(self) -> int:
        return len(self.z)

    def take(self, d: int) -> "GeneratingVector":
        """The first d components (vectors are extensible in dimension)."""
        if d > self.d:
            raise InvalidVector(f"vector has {self.d} components, {d} requested")
        return GeneratingVector(self.z[:d], self.n, self.source)


@dataclass(frozen=True)
class ShiftedRuleRun:
    """Per-shift means and their summary; rms_error = std(estimates) / sqrt(m)."""

    vector: GeneratingVector | None
    m: int
    seed: int
    estimates: tuple[float, ...] = field(repr=False)
    mean: float
    rms_error: float
    n: int


def substream(seed: int, k: int) -> np.random.Generator:
    """Independent generator for shift (or replicate) k."""
    if seed < 0:
        raise DomainError("seed must be nonnegative")
    bits = np.random.Philox(key=seed)
    return np.random.Generator(bits.jumped(k) if k else bits)


def lattice_points(vector: GeneratingVector, shift=None) -> np.ndarray:
    """The N x d array frac(k z / N + shift)."""
    d = vector.d
    shift = np.zeros(d) if shift is None else np.asarray(shift, dtype=float)
    if shift.shape != (d,):
        raise DomainError(f"shift must have shape ({d},)")
    if np.any((shift < 0) | (shift >= 1)):
        raise DomainError("shift components must lie in [0, 1)")
    k = np.arange(vector.n, dtype=np.int64)[:, None]
    base = (k * np.asarray(vector.z, dtype=np.int64)) % vector.n / vector.n
    return np.mod(base + shift, 1.0)


def _to_normal(u: np.ndarray, n: int) -> np.ndarray:
    # only degenerate values are moved; genuine points already lie in (0, 1)
    lo = 1.0 / (2 * n)
    u = np.where(u <= 0.0, lo, u)
    u = np.where(u >= 1.0, 1.0 - lo, u)
    return special.ndtri(u)


def _summarise(estimates: list[float], vector, m, seed, n) -> ShiftedRuleRun:
    est = np.asarray(estimates, dtype=float)
    mean = float(np.mean(est))
    rms = float(np.std(est, ddof=1) / math.sqrt(m)) if m > 1 else math.nan
    return ShiftedRuleRun(vector, m, seed, tuple(float(e) for e in est), mean, rms, n)


def _mean_checked(values) -> float:
    v = np.asarray(values, dtype=float)
    if not np.all(np.isfinite(v)):
        raise NonFiniteSample("integrand returned a non-finite value at a sample point")
    return float(np.mean(v))


def qmc_estimate(f: Callable[[np.ndarray], np.ndarray], vector: GeneratingVector, m: int = 16,
                 seed: int = 0) -> ShiftedRuleRun:
    """Average f over m independently shifted copies of the lattice.

    ``f`` receives an (N, d) array of standard normal coordinates.
    """
    if m < 1:
        raise DomainError("need at least one shift")
    estimates = []
    for k in range(m):
        shift = substream(seed, k).random(vector.d)
        x = _to_normal(lattice_points(vector, shift), vector.n)
        estimates.append(_mean_checked(f(x)))
    return _summarise(estimates, vector, m, seed, vector.n)


def mc_estimate(f: Callable[[np.ndarray], np.ndarray], d: int, n: int, m: int = 16, seed: int = 0) -> ShiftedRuleRun:
    """m independent plain Monte Carlo means of n standard normal points each."""
    if m < 1 or n < 1 or d < 1:
        raise DomainError("d, n and m must be positive")
    estimates = [_mean_checked(f(substream(seed, k).standard_normal((n, d)))) for k in range(m)]
    return _summarise(estimates, None, m, seed, n)


# ---------------------------------------------------------------------------
# vectors
# ---------------------------------------------------------------------------


def korobov_vector(a: int, n: int, d: int) -> GeneratingVector:
    """z = (1, a, a^2, ..., a^(d-1)) mod N."""
    if d < 1:
        raise DomainError("dimension must be positive")
    if math.gcd(a, n) != 1:
        raise InvalidVector(f"Korobov parameter {a} shares a factor with N = {n}")
    z = [pow(a, j, n) for j in range(d)]
    if n == 1:
        z = [1] * d
    return GeneratingVector(tuple(z), n, f"korobov:a={a}")


def parse_vector(text: str, source: str = "file") -> GeneratingVector:
    """Parse ``N=<int>`` and ``z=<comma separated ints>`` lines."""
    fields = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ("N", "z"):
            raise ParseError(f"unknown key {key!r}")
        if key in fields:
            raise ParseError(f"duplicate key {key!r}")
        fields[key] = value
    if set(fields) != {"N", "z"}:
        raise ParseError("vector file needs both N= and z= lines")
    try:
        n = int(fields["N"])
        z = tuple(int(v) for v in fields["z"].split(","))
    except ValueError as exc:
        raise ParseError(f"malformed integer in vector file: {exc}") from exc
    return GeneratingVector(z, n, source)


def load_vector(path: str | Path) -> GeneratingVector:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read vector file {path}: {exc}") from exc
    return parse_vector(text, source=f"file:{path.name}")


def _training_integrand(d: int):
    c = 0.5 / np.arange(1, d + 1)
    exact = math.exp(0.5 * float(np.sum(c * c)))

    def f(x):
        return np.exp(x @ c) / exact

    return f


def _candidates(n: int, count: int) -> list[int]:
    pool = [a for a in range(2, n) if math.gcd(a, n) == 1]
    if len(pool) <= count:
        return pool
    idx = np.linspace(0, len(pool) - 1, count).round().astype(int)
    return sorted({pool[i] for i in idx})


@lru_cache(maxsize=64)
def search_korobov(n: int, d: int, count: int = KOROBOV_CANDIDATES, m: int = SEARCH_SHIFTS,
                   seed: int = SEARCH_SEED) -> GeneratingVector:
    """Korobov parameter minimising the estimated RMS error on a training integrand.

    The integrand is exp(sum_j x_j / (2j)), normalised to mean 1, whose
    decaying coefficients mimic the importance ordering of a Brownian bridge
    or PCA path.  All candidates share the same m shifts, so the comparison
    is not swamped by shift noise.
    """
    if d == 1:
        return korobov_vector(1, n, 1)
    f = _training_integrand(d)
    shifts = [substream(seed, k).random(d) for k in range(m)]
    best, best_err = None, math.inf
    for a in _candidates(n, count):
        vec = korobov_vector(a, n, d)
        pts = lattice_points(vec)
        means = [float(np.mean(f(_to_normal(np.mod(pts + s, 1.0), n)))) for s in shifts]
        err = float(np.std(means, ddof=1))
        if err < best_err:
            best, best_err = vec, err
    return GeneratingVector(best.z, n, best.source)


def default_vector(n: int, d: int, path: str | Path | None = None) -> GeneratingVector:
    """Vector from ``path`` when given (truncated to d), else the Korobov search."""
    if path is not None:
        vec = load_vector(path)
        if vec.n != n:
            raise InvalidVector(f"vector file is for N = {vec.n}, not {n}")
        return vec.take(d)
    return search_korobov(n, d)
