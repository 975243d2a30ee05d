"""Weight-function pairs (rho, psi) and their integrability conditions.

``rho`` is a strictly positive probability density with distribution
function ``Phi``; ``psi`` weights derivatives.  Two conditions matter:

* weak:   Phi^2 / psi integrable at -inf and (1 - Phi)^2 / psi at +inf.
  The unanchored ANOVA space then has a reproducing kernel.
* strong: Phi / psi integrable at -inf and (1 - Phi) / psi at +inf.
  The ANOVA space then coincides with the Sobolev space, and the constant
  ``C(rho, psi) = integral Phi (1 - Phi) / psi`` is finite.

Every density/psi family evaluates in log space so ratios like
``(1 - Phi) / psi`` stay finite far into the tails.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np
from scipy import special

from .errors import ClassificationInconclusive, DivergenceDetected, DomainError, ParseError
from .quadrature import composite_gauss_legendre, gauss_hermite_log_weights, panel_edges

__all__ = [
    "GaussianStd",
    "Logistic",
    "GaussianDecay",
    "ExpDecay",
    "Constant",
    "WeightPair",
    "ConditionReport",
    "cdf",
    "inv_cdf",
    "check_conditions",
    "classify_numerically",
    "compute_C",
    "parse_rho",
    "parse_psi",
]

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


# ---------------------------------------------------------------------------
# densities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianStd:
    """Standard normal density."""

    name = "gaussian"
    # |x| beyond which the density is below 1e-80; used to truncate rules
    cutoff = 20.0

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -0.5 * x * x - _LOG_SQRT_2PI

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return special.ndtr(x)

    def log_cdf(self, x):
        return special.log_ndtr(x)

    def log_sf(self, x):
        return special.log_ndtr(-np.asarray(x, dtype=float))

    def ppf(self, p):
        return special.ndtri(p)

    def describe(self) -> str:
        return "gaussian"


@dataclass(frozen=True)
class Logistic:
    """Standard logistic density, Phi(t) = 1 / (1 + exp(-t))."""

    name = "logistic"
    cutoff = 60.0

    def logpdf(self, x):
        x = np.asarray(x, dtype=float)
        return -np.abs(x) - 2.0 * np.log1p(np.exp(-np.abs(x)))

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return special.expit(x)

    def log_cdf(self, x):
        return -np.logaddexp(0.0, -np.asarray(x, dtype=float))

    def log_sf(self, x):
        return -np.logaddexp(0.0, np.asarray(x, dtype=float))

    def ppf(self, p):
        return special.logit(p)

    def describe(self) -> str:
        return "logistic"


# ---------------------------------------------------------------------------
# psi families
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianDecay:
    """psi(x) = exp(-x^2 / (2 alpha))."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    def log_value(self, x):
        x = np.asarray(x, dtype=float)
        return -x * x / (2.0 * self.alpha)

    def __call__(self, x):
        return np.exp(self.log_value(x))

    def total_mass(self) -> float:
        return math.sqrt(2.0 * math.pi * self.alpha)

    def describe(self) -> str:
        return f"gaussian_decay:alpha={self.alpha!r}"


@dataclass(frozen=True)
class ExpDecay:
    """psi(x) = exp(-|x| / alpha)."""

    alpha: float

    def __post_init__(self):
        if not self.alpha > 0:
            raise DomainError(f"alpha must be positive, got {self.alpha}")

    def log_value(self, x):
        return -np.abs(np.asarray(x, dtype=float)) / self.alpha

    def __call__(self, x):
        return np.exp(self.log_value(x))

    def total_mass(self) -> float:
        return 2.0 * self.alpha

    def describe(self) -> str:
        return f"exp_decay:alpha={self.alpha!r}"


@dataclass(frozen=True)
class Constant:
    """psi(x) = c."""

    c: float = 1.0

    def __post_init__(self):
        if not self.c > 0:
            raise DomainError(f"c must be positive, got {self.c}")

    def log_value(self, x):
        return np.full(np.shape(x), math.log(self.c))

    def __call__(self, x):
        return np.full(np.shape(x), float(self.c))

    def total_mass(self) -> float:
        return math.inf

    def describe(self) -> str:
        return f"constant:c={self.c!r}"


Density = Union[GaussianStd, Logistic]
Psi = Union[GaussianDecay, ExpDecay, Constant]


# ---------------------------------------------------------------------------
# the pair
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WeightPair:
    rho: Density = field(default_factory=GaussianStd)
    psi: Psi = field(default_factory=lambda: GaussianDecay(4.0))
    tol: float = 1e-10

    def __post_init__(self):
        if not isinstance(self.rho, (GaussianStd, Logistic)):
            raise DomainError(f"unsupported density {self.rho!r}")
        if not isinstance(self.psi, (GaussianDecay, ExpDecay, Constant)):
            raise DomainError(f"unsupported psi {self.psi!r}")
        if not self.tol > 0:
            raise DomainError("tolerance must be positive")

    # thin delegations, all vectorised
    def pdf(self, x):
        return self.rho.pdf(x)

    def logpdf(self, x):
        return self.rho.logpdf(x)

    def cdf(self, x):
        return self.rho.cdf(x)

    def inv_cdf(self, p):
        return inv_cdf(self, p)

    def psi_value(self, x):
        return self.psi(x)

    def log_psi(self, x):
        return self.psi.log_value(x)

    @property
    def cutoff(self) -> float:
        return self.rho.cutoff

    def describe(self) -> str:
        return f"rho={self.rho.describe()} psi={self.psi.describe()}"

    # -- quadrature rules for the weighted integrals ------------------------

    def rho_rule(self, n: int = 48) -> tuple[np.ndarray, np.ndarray]:
        """Nodes/weights for ``integral g(x) rho(x) dx`` with smooth g."""
        if isinstance(self.rho, GaussianStd):
            t, log_w = gauss_hermite_log_weights(n)
            return math.sqrt(2.0) * t, np.exp(log_w) / math.sqrt(math.pi)
        return self._truncated_rule(self.logpdf, n)

    def psi_rule(self, n: int = 48) -> tuple[np.ndarray, np.ndarray]:
        """Nodes/weights for ``integral g(x) psi(x) dx`` with smooth, decaying g."""
        if isinstance(self.psi, GaussianDecay):
            t, log_w = gauss_hermite_log_weights(n)
            s = math.sqrt(2.0 * self.psi.alpha)
            return s * t, s * np.exp(log_w)
        return self._truncated_rule(self.log_psi, n)

    @property
    def kinks(self) -> tuple[float, ...]:
        """Points where psi is not smooth (exp decay has |x|)."""
        return (0.0,) if isinstance(self.psi, ExpDecay) else ()

    def _truncated_rule(self, log_weight, n: int, breakpoints=()):
        # n is read as nodes per unit length; panels of width 1 with n nodes
        # would be excessive, so use 16-node panels of width 16/n
        width = max(16.0 / n, 0.25)
        edges = panel_edges(-self.cutoff, self.cutoff, width, (*breakpoints, *self.kinks))
        x, w = composite_gauss_legendre(edges, 16)
        return x, w * np.exp(log_weight(x))

    def split_rule(self, which: str, breakpoint: float, width: float = 0.5, order: int = 10):
        """Composite rule on [-cutoff, cutoff] with an edge at ``breakpoint``.

        Used where the integrand has a kink, e.g. the kernel eta(., y) at y.
        """
        log_weight = {"rho": self.logpdf, "psi": self.log_psi}[which]
        edges = panel_edges(-self.cutoff, self.cutoff, width, (breakpoint, *self.kinks))
        x, w = composite_gauss_legendre(edges, order)
        return x, w * np.exp(log_weight(x))


def cdf(pair: WeightPair, x):
    """Distribution function Phi of ``pair.rho`` (vectorised)."""
    x = np.asarray(x, dtype=float)
    out = pair.rho.cdf(x)
    return float(out) if out.ndim == 0 else out


def inv_cdf(pair: WeightPair, p):
    """Inverse distribution function; raises :class:`DomainError` outside (0, 1)."""
    p_arr = np.asarray(p, dtype=float)
    if np.any(~((p_arr > 0.0) & (p_arr < 1.0))):
        raise DomainError("inverse cdf needs probabilities strictly inside (0, 1)")
    out = pair.rho.ppf(p_arr)
    return float(out) if out.ndim == 0 else out


# ---------------------------------------------------------------------------
# condition classification
# ---------------------------------------------------------------------------

TRUNCATION_RADII = (10.0, 20.0, 40.0, 80.0)
GROWTH_RATIO = 1.5
_ANCHOR = 0.0


@dataclass(frozen=True)
class ConditionReport:
    """Outcome of :func:`check_conditions`.

    ``diagnostics`` maps each tail integral name to its truncation profile, a
    tuple of ``(R, partial integral)`` pairs.  ``undecided`` lists conditions
    the numeric classifier could not settle.
    """

    weak_holds: bool
    strong_holds: bool
    c_constant: float | None = None
    diagnostics: dict = field(default_factory=dict)
    method: str = "analytic"
    undecided: tuple[str, ...] = ()

    def __post_init__(self):
        if self.strong_holds and not self.weak_holds:
            raise ValueError("strong condition implies the weak one")
        if (self.c_constant is not None) != self.strong_holds:
            raise ValueError("C is reported exactly when the strong condition holds")


def analytic_classification(pair: WeightPair) -> tuple[bool, bool] | None:
    """Closed-form (weak, strong) for the shipped families, or None."""
    rho, psi = pair.rho, pair.psi
    if isinstance(psi, Constant):
        return True, True
    if isinstance(rho, GaussianStd):
        if isinstance(psi, GaussianDecay):
            return psi.alpha >= 0.5, psi.alpha > 1.0
        if isinstance(psi, ExpDecay):
            # Gaussian tails beat any exponential
            return True, True
    if isinstance(rho, Logistic):
        if isinstance(psi, ExpDecay):
            # (1 - Phi)^k / psi ~ exp(-k t + t / alpha)
            return psi.alpha > 0.5, psi.alpha > 1.0
        if isinstance(psi, GaussianDecay):
            return False, False
    return None


def _tail_log_integrands(pair: WeightPair):
    lc, ls, lp = pair.rho.log_cdf, pair.rho.log_sf, pair.log_psi
    return {
        "weak_left": (lambda t: 2.0 * lc(t) - lp(t), -1),
        "weak_right": (lambda t: 2.0 * ls(t) - lp(t), 1),
        "strong_left": (lambda t: lc(t) - lp(t), -1),
        "strong_right": (lambda t: ls(t) - lp(t), 1),
    }


def truncation_profile(log_integrand, direction: int, radii=TRUNCATION_RADII, width: float = 0.5):
    """Partial integrals from the anchor out to each radius (one side)."""
    edges = panel_edges(0.0, max(radii), width, radii)
    x, w = composite_gauss_legendre(edges, 16)
    with np.errstate(over="ignore"):
        vals = np.exp(log_integrand(direction * x + _ANCHOR))
    contrib = w * vals
    out = []
    for r in radii:
        s = float(np.sum(contrib[x <= r]))
        out.append((float(r), s if math.isfinite(s) else math.inf))
    return tuple(out)


def _verdict(profile) -> str:
    vals = [v for _, v in profile]
    if not all(math.isfinite(v) for v in vals):
        return "diverges"
    if vals[-2] > 0 and vals[-1] / vals[-2] > GROWTH_RATIO:
        return "diverges"
    d = np.diff(vals)
    if d[-1] <= 1e-10 * max(1.0, vals[-1]):
        return "converges"
    r = d[-1] / d[-2] if d[-2] > 0 else math.inf
    if r < 0.6:
        return "converges"
    if r > 1.1:
        return "diverges"
    return "inconclusive"


def classify_numerically(pair: WeightPair) -> ConditionReport:
    """Truncation-doubling classification; raises when undecided.

    Partial tail integrals are taken at R = 10, 20, 40, 80.  A tail diverges if
    it overflows, grows by more than 1.5x over the last doubling, or has
    growing increments; it converges if its increments die out faster than
    halving.  Anything else (e.g. logarithmic growth) is inconclusive.
    """
    diag, verdicts = {}, {}
    for name, (lg, direction) in _tail_log_integrands(pair).items():
        diag[name] = truncation_profile(lg, direction)
        verdicts[name] = _verdict(diag[name])

    def combine(prefix):
        v = (verdicts[prefix + "_left"], verdicts[prefix + "_right"])
        if "diverges" in v:
            return "fails"
        if "inconclusive" in v:
            return "inconclusive"
        return "holds"

    strong = combine("strong")
    weak = "holds" if strong == "holds" else combine("weak")
    undecided = tuple(n for n, s in (("weak", weak), ("strong", strong)) if s == "inconclusive")
    c_value = compute_C(pair) if strong == "holds" else None
    report = ConditionReport(
        weak_holds=weak == "holds",
        strong_holds=strong == "holds",
        c_constant=c_value,
        diagnostics=diag,
        method="numeric",
        undecided=undecided,
    )
    if undecided:
        raise ClassificationInconclusive(
            f"could not decide {', '.join(undecided)} condition for {pair.describe()}", report
        )
    return report


def check_conditions(pair: WeightPair, method: str = "auto") -> ConditionReport:
    """Classify the weak and strong conditions for ``pair``.

    ``method="auto"`` uses the closed-form rule when the family combination
    is known and falls back to :func:`classify_numerically` otherwise.
    """
    if method not in ("auto", "analytic", "numeric"):
        raise DomainError(f"unknown method {method!r}")
    known = analytic_classification(pair) if method != "numeric" else None
    if known is None:
        if method == "analytic":
            raise DomainError(f"no closed-form rule for {pair.describe()}")
        return classify_numerically(pair)
    weak, strong = known
    diag = {name: truncation_profile(lg, direction) for name, (lg, direction) in _tail_log_integrands(pair).items()}
    return ConditionReport(
        weak_holds=weak,
        strong_holds=strong,
        c_constant=compute_C(pair) if strong else None,
        diagnostics=diag,
        method="analytic",
    )


# ---------------------------------------------------------------------------
# the constant C(rho, psi)
# ---------------------------------------------------------------------------


def _shell(log_g, a: float, b: float, width: float = 0.25) -> float:
    # integral over [-b, -a] U [a, b]
    edges = panel_edges(a, b, width)
    x, w = composite_gauss_legendre(edges, 16)
    with np.errstate(over="ignore"):
        v = np.exp(log_g(x)) + np.exp(log_g(-x))
    return float(np.dot(w, v))


def compute_C(pair: WeightPair, rel_tol: float = 1e-10, r0: float = 10.0, r_max: float = 1280.0) -> float:
    """``integral Phi (1 - Phi) / psi`` over the real line.

    The domain [-R, R] doubles until the newest shell adds less than
    ``rel_tol`` of the running total.  Raises :class:`DivergenceDetected` if
    a shell overflows or the doubling reaches ``r_max`` without settling.
    """
    lc, ls, lp = pair.rho.log_cdf, pair.rho.log_sf, pair.log_psi

    def log_g(t):
        return lc(t) + ls(t) - lp(t)

    total = _shell(log_g, 0.0, r0)
    r = r0
    while True:
        if not math.isfinite(total):
            raise DivergenceDetected(f"C(rho, psi) overflows for {pair.describe()}")
        if r >= r_max:
            raise DivergenceDetected(
                f"C(rho, psi) did not settle by R={r_max:g} for {pair.describe()}"
            )
        shell = _shell(log_g, r, 2.0 * r)
        total += shell
        r *= 2.0
        if math.isfinite(shell) and shell <= rel_tol * abs(total):
            return total


# ---------------------------------------------------------------------------
# plain-text config
# ---------------------------------------------------------------------------


def _kv(parts: list[str], text: str) -> dict[str, float]:
    out = {}
    for item in parts:
        if "=" not in item:
            raise ParseError(f"expected key=value in {text!r}, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = float(v)
        except ValueError as exc:
            raise ParseError(f"not a number: {v!r} in {text!r}") from exc
    return out


def parse_rho(text: str) -> Density:
    """``gaussian`` or ``logistic``."""
    name = text.strip().lower()
    if name in ("gaussian", "gaussian_std", "normal"):
        return GaussianStd()
    if name == "logistic":
        return Logistic()
    raise ParseError(f"unknown density {text!r}")


def parse_psi(text: str) -> Psi:
    """``gaussian_decay:alpha=4.0``, ``exp_decay:alpha=2``, ``constant:c=1``."""
    head, *rest = text.strip().split(":")
    params = _kv(rest[0].split(",") if rest and rest[0] else [], text)
    head = head.lower()
    try:
        if head == "gaussian_decay":
            return GaussianDecay(params["alpha"])
        if head == "exp_decay":
            return ExpDecay(params["alpha"])
        if head == "constant":
            return Constant(params.get("c", 1.0))
    except KeyError as exc:
        raise ParseError(f"missing parameter {exc} in {text!r}") from exc
    except DomainError as exc:
        raise ParseError(str(exc)) from exc
    raise ParseError(f"unknown psi family {text!r}")
