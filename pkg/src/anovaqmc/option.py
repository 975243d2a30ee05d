"""Asian call options under geometric Brownian motion.

With grid times t_l = l T / d and a factorisation Sigma = A A^T of the
Brownian covariance Sigma_ij = min(t_i, t_j), a standard normal vector x
gives the path W = A x and

    phi(x) = (1/d) sum_l S0 exp((r - sigma^2/2) t_l + sigma (A x)_l) - K

for arithmetic averaging (the geometric mean replaces the sum for
geometric averaging).  The discounted price is e^{-rT} E[max(phi, 0)].
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path

import numpy as np
from scipy import special

from .errors import DomainError, EigenSolveFailure
from .lattice import GeneratingVector, default_vector, mc_estimate, qmc_estimate
from .preintegration import KinkIntegrand, PreintegratedFunction, preintegrate_eval, preintegrated_integrand

__all__ = [
    "AsianOptionSpec",
    "PathFactorization",
    "PriceReport",
    "covariance",
    "factorize",
    "jacobi_eigh",
    "brownian_bridge_matrix",
    "phi",
    "dphi_dx1",
    "payoff",
    "kink_integrand",
    "geometric_closed_form",
    "price_qmc_preint",
    "price_qmc",
    "price_mc",
    "price_reference",
    "REFERENCE_N",
    "REFERENCE_SHIFTS",
    "REFERENCE_SEED",
]

AVERAGING = ("arithmetic", "geometric")
FACTORIZATIONS = ("standard", "bb", "pca")
_ALIASES = {
    "arith": "arithmetic", "geom": "geometric",
    "std": "standard", "cholesky": "standard", "brownian_bridge": "bb", "bridge": "bb",
}
# exponents are capped here so exp never overflows
_LOG_CLAMP = 700.0

REFERENCE_N = 2 ** 16
REFERENCE_SHIFTS = 32
REFERENCE_SEED = 12345
_REFERENCE_FILE = "reference_prices.json"


@dataclass(frozen=True)
class AsianOptionSpec:
    s0: float = 100.0
    strike: float = 100.0
    r: float = 0.05
    sigma: float = 0.2
    t_final: float = 1.0
    d: int = 8
    averaging: str = "arithmetic"
    factorization: str = "bb"

    def __post_init__(self):
        object.__setattr__(self, "averaging", _ALIASES.get(self.averaging, self.averaging))
        object.__setattr__(self, "factorization", _ALIASES.get(self.factorization, self.factorization))
        if self.averaging not in AVERAGING:
            raise DomainError(f"averaging must be one of {AVERAGING}")
        if self.factorization not in FACTORIZATIONS:
            raise DomainError(f"factorization must be one of {FACTORIZATIONS}")
        if not (self.s0 > 0 and self.sigma > 0 and self.t_final > 0):
            raise DomainError("s0, sigma and t_final must be positive")
        if self.strike < 0:
            raise DomainError("strike must be nonnegative")
        if int(self.d) != self.d or self.d < 1:
            raise DomainError("d must be a positive integer")

    @property
    def times(self) -> np.ndarray:
        return self.t_final * np.arange(1, self.d + 1) / self.d

    @property
    def discount(self) -> float:
        return math.exp(-self.r * self.t_final)

    def key(self) -> str:
        """Identifier of the integral (independent of the factorisation)."""
        return (f"{self.averaging}:s0={self.s0!r}:k={self.strike!r}:r={self.r!r}:"
                f"sigma={self.sigma!r}:t={self.t_final!r}:d={self.d}")


@dataclass(frozen=True)
class PathFactorization:
    a_matrix: np.ndarray
    method: str

    def __post_init__(self):
        self.a_matrix.setflags(write=False)


@dataclass(frozen=True)
class PriceReport:
    price: float
    rms_error: float
    n: int
    m: int
    method: str


def covariance(spec: AsianOptionSpec) -> np.ndarray:
    t = spec.times
    return np.minimum.outer(t, t)


# ---------------------------------------------------------------------------
# factorisations
# ---------------------------------------------------------------------------


def jacobi_eigh(a: np.ndarray, tol: float = 1e-12, max_sweeps: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigen-solve of a symmetric matrix.

    Sweeps over all (p, q) pairs until the off-diagonal Frobenius norm is
    below ``tol`` times the full norm.  Returns eigenvalues in descending
    order with matching eigenvector columns.
    """
    a = np.array(a, dtype=float)
    n = a.shape[0]
    if a.shape != (n, n) or not np.allclose(a, a.T, rtol=0, atol=1e-14 * max(1.0, np.abs(a).max())):
        raise DomainError("Jacobi eigen-solve needs a square symmetric matrix")
    v = np.eye(n)
    scale = np.linalg.norm(a)
    converged = False
    for _ in range(max_sweeps):
        off = float(np.linalg.norm(a - np.diag(np.diag(a))))
        if converged:
            break
        # one extra sweep after reaching tol; convergence is quadratic
        converged = off <= tol * scale
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                ap, aq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * ap - s * aq
                a[:, q] = s * ap + c * aq
                ap, aq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * ap - s * aq
                a[q, :] = s * ap + c * aq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
    else:
        raise EigenSolveFailure(f"Jacobi did not converge in {max_sweeps} sweeps")
    lam = np.diag(a).copy()
    order = np.argsort(-lam, kind="stable")
    return lam[order], v[:, order]


def _bridge_order(d: int) -> list[tuple[int, int, int]]:
    """(left, mid, right) index triples in breadth-first bridge order.

    Indices run over 0..d with 0 the start (W = 0); mid = (left + right) // 2.
    The first variable is reserved for the terminal value W(t_d).
    """
    steps, queue = [], [(0, d)]
    while queue:
        nxt = []
        for left, right in queue:
            if right - left < 2:
                continue
            mid = (left + right) // 2
            steps.append((left, mid, right))
            nxt.extend([(left, mid), (mid, right)])
        queue = nxt
    return steps


def brownian_bridge_matrix(times: np.ndarray) -> np.ndarray:
    """Matrix A of the Brownian bridge construction: W = A x."""
    d = len(times)
    t = np.concatenate(([0.0], times))
    a = np.zeros((d + 1, d))
    a[d, 0] = math.sqrt(t[d])
    for k, (left, mid, right) in enumerate(_bridge_order(d), start=1):
        span = t[right] - t[left]
        wl = (t[right] - t[mid]) / span
        wr = (t[mid] - t[left]) / span
        a[mid] = wl * a[left] + wr * a[right]
        a[mid, k] = math.sqrt((t[mid] - t[left]) * (t[right] - t[mid]) / span)
    return a[1:]


def factorize(spec: AsianOptionSpec) -> PathFactorization:
    sigma = covariance(spec)
    if spec.factorization == "standard":
        a = np.linalg.cholesky(sigma)
    elif spec.factorization == "bb":
        a = brownian_bridge_matrix(spec.times)
    else:
        lam, vec = jacobi_eigh(sigma)
        if np.any(lam <= 0):
            raise EigenSolveFailure("covariance has a nonpositive eigenvalue")
        for j in range(vec.shape[1]):
            col = vec[:, j]
            pivot = col[np.argmax(np.abs(col) > 1e-12)]
            if (j == 0 and col.sum() < 0) or (j > 0 and pivot < 0):
                vec[:, j] = -col
        a = vec * np.sqrt(lam)
    return PathFactorization(np.ascontiguousarray(a), spec.factorization)


# ---------------------------------------------------------------------------
# payoff
# ---------------------------------------------------------------------------


def _log_prices(spec: AsianOptionSpec, fact: PathFactorization, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    drift = math.log(spec.s0) + (spec.r - 0.5 * spec.sigma ** 2) * spec.times
    return np.minimum(drift + spec.sigma * (x @ fact.a_matrix.T), _LOG_CLAMP)


def phi(spec: AsianOptionSpec, fact: PathFactorization, x) -> np.ndarray:
    """Average price minus strike, vectorised over the leading axes of x."""
    logs = _log_prices(spec, fact, x)
    if spec.averaging == "geometric":
        return np.exp(np.mean(logs, axis=-1)) - spec.strike
    return np.mean(np.exp(logs), axis=-1) - spec.strike


def dphi_dx1(spec: AsianOptionSpec, fact: PathFactorization, x) -> np.ndarray:
    logs = _log_prices(spec, fact, x)
    col = fact.a_matrix[:, 0]
    if spec.averaging == "geometric":
        return np.exp(np.mean(logs, axis=-1)) * spec.sigma * col.mean()
    return spec.sigma * np.mean(np.exp(logs) * col, axis=-1)


def payoff(spec: AsianOptionSpec, fact: PathFactorization, x) -> np.ndarray:
    return np.maximum(phi(spec, fact, x), 0.0)


def kink_integrand(spec: AsianOptionSpec, fact: PathFactorization | None = None) -> KinkIntegrand:
    """phi with its x_1 derivative; monotone because the first column of A is positive."""
    fact = fact or factorize(spec)
    col = fact.a_matrix[:, 0]
    # d phi / d x_1 > 0 whenever the first column is nonnegative and nonzero
    certificate = "asserted" if np.all(col >= 0) and np.any(col > 0) else "probed"
    return KinkIntegrand(lambda x: phi(spec, fact, x), lambda x: dphi_dx1(spec, fact, x), spec.d, certificate)


# ---------------------------------------------------------------------------
# prices
# ---------------------------------------------------------------------------


def geometric_closed_form(spec: AsianOptionSpec) -> float:
    """Exact price of the geometric-average Asian call.

    log G = (1/d) sum_l log S_l is normal with mean mu and variance v, so the
    price is a Black-Scholes-type expression in (mu, v).
    """
    t = spec.times
    mu = math.log(spec.s0) + (spec.r - 0.5 * spec.sigma ** 2) * float(np.mean(t))
    v = spec.sigma ** 2 * float(np.sum(np.minimum.outer(t, t))) / spec.d ** 2
    forward = math.exp(mu + 0.5 * v)
    if spec.strike == 0:
        return spec.discount * forward
    sd = math.sqrt(v)
    d2 = (mu - math.log(spec.strike)) / sd
    d1 = d2 + sd
    return spec.discount * (forward * special.ndtr(d1) - spec.strike * special.ndtr(d2))


def _vector(n: int, d: int, vector: GeneratingVector | None, vector_file) -> GeneratingVector:
    if vector is not None:
        if vector.n != n:
            raise DomainError(f"vector is for N = {vector.n}, not {n}")
        return vector.take(d)
    return default_vector(n, d, vector_file)


def price_qmc_preint(spec: AsianOptionSpec, n: int, m: int = 16, seed: int = 0,
                     vector: GeneratingVector | None = None, vector_file=None,
                     inner_order: int = 64, root_tol: float = 1e-12) -> PriceReport:
    """Shifted lattice rule in d-1 dimensions applied to the preintegrated payoff."""
    fact = factorize(spec)
    pf = PreintegratedFunction(kink_integrand(spec, fact), inner_order, root_tol)
    if spec.d == 1:
        # nothing left to sample
        return PriceReport(spec.discount * float(preintegrate_eval(pf, [])), 0.0, n, m, "qmc-preint")
    run = qmc_estimate(preintegrated_integrand(pf), _vector(n, spec.d - 1, vector, vector_file), m, seed)
    return PriceReport(spec.discount * run.mean, spec.discount * run.rms_error, n, m, "qmc-preint")


def price_qmc(spec: AsianOptionSpec, n: int, m: int = 16, seed: int = 0,
              vector: GeneratingVector | None = None, vector_file=None) -> PriceReport:
    """Shifted lattice rule applied directly to the kinked payoff."""
    fact = factorize(spec)
    run = qmc_estimate(lambda x: payoff(spec, fact, x), _vector(n, spec.d, vector, vector_file), m, seed)
    return PriceReport(spec.discount * run.mean, spec.discount * run.rms_error, n, m, "qmc")


def price_mc(spec: AsianOptionSpec, n: int, m: int = 16, seed: int = 0) -> PriceReport:
    fact = factorize(spec)
    run = mc_estimate(lambda x: payoff(spec, fact, x), spec.d, n, m, seed)
    return PriceReport(spec.discount * run.mean, spec.discount * run.rms_error, n, m, "mc")


def _load_fixtures() -> dict:
    try:
        text = resources.files("anovaqmc").joinpath("data", _REFERENCE_FILE).read_text(encoding="utf-8")
    except (FileNotFoundError, OSError):
        return {}
    return json.loads(text)


@lru_cache(maxsize=32)
def _reference(spec: AsianOptionSpec) -> tuple[float, float]:
    if spec.averaging == "geometric" or spec.d == 1:
        # a single time step makes both averages coincide
        return geometric_closed_form(AsianOptionSpec(**{**asdict(spec), "averaging": "geometric"})), 0.0
    entry = _load_fixtures().get(spec.key())
    if entry is not None:
        return float(entry["price"]), float(entry["rms_error"])
    rep = price_qmc_preint(AsianOptionSpec(**{**asdict(spec), "factorization": "bb"}),
                           REFERENCE_N, REFERENCE_SHIFTS, REFERENCE_SEED)
    return rep.price, rep.rms_error


def price_reference(spec: AsianOptionSpec, with_error: bool = False):
    """Closed form for geometric averaging; stored high-effort value for arithmetic.

    Arithmetic values come from ``data/reference_prices.json`` (QMC with
    preintegration, N = 2^16, m = 32, Brownian bridge) and are computed on
    the spot for specs not in the file.
    """
    price, err = _reference(spec)
    return (price, err) if with_error else price


def write_reference_fixtures(specs, path: str | Path) -> dict:
    """Compute arithmetic reference prices and store them as JSON."""
    table = {}
    for spec in specs:
        rep = price_qmc_preint(AsianOptionSpec(**{**asdict(spec), "factorization": "bb"}),
                               REFERENCE_N, REFERENCE_SHIFTS, REFERENCE_SEED)
        table[spec.key()] = {
            "price": rep.price,
            "rms_error": rep.rms_error,
            "n": REFERENCE_N,
            "shifts": REFERENCE_SHIFTS,
            "seed": REFERENCE_SEED,
            "factorization": "bb",
        }
    Path(path).write_text(json.dumps(table, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return table
