"""Command-line front end.

Every subcommand writes CSV: ``#`` comment lines naming the version and all
resolved parameters, then a header row and data rows.  Output depends only
on the parameters, so the same invocation reproduces the same bytes.

Exit codes: 0 on success, 1 when a checked property fails (or the library
reports a violated condition), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import csv
import io
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .errors import AnovaQMCError, ClassificationInconclusive, DivergenceDetected, ParseError
from .kernel import KernelContext, _tail, _table_radius, embed_constant_1d
from .lattice import korobov_vector, substream
from .norms import (
    SmoothTestFunction,
    anova_gram,
    anova_terms,
    audit_equivalence,
    lemma_constant_1d,
    random_fixture,
    reproducing_check,
    truncated_profile,
)
from .option import AsianOptionSpec, geometric_closed_form, price_mc, price_qmc, price_qmc_preint
from .quadrature import composite_gauss_legendre, panel_edges
from .weights import WeightPair, check_conditions, classify_numerically, parse_psi, parse_rho

DEFAULT_NS = ",".join(str(2 ** k) for k in range(6, 14))
DEFAULT_ALPHAS = "0.4,0.5,0.9,1.0,1.1,4.0"


class UsageError(Exception):
    pass


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated numbers, got {text!r}") from exc


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma separated integers, got {text!r}") from exc


def _weight_args(p: argparse.ArgumentParser, psi: str = "gaussian_decay:alpha=4.0") -> None:
    p.add_argument("--rho", default="gaussian", help="gaussian or logistic")
    p.add_argument("--psi", default=psi, help="e.g. gaussian_decay:alpha=4.0, exp_decay:alpha=2, constant:c=1")
    p.add_argument("--gamma", type=_float_list, default="1.0",
                   help="product weight(s); one value is repeated across coordinates")


def _option_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--s0", type=float, default=100.0)
    p.add_argument("--strike", type=float, default=100.0)
    p.add_argument("--r", type=float, default=0.05)
    p.add_argument("--sigma", type=float, default=0.2)
    p.add_argument("--t", type=float, default=1.0)
    p.add_argument("--d", type=int, default=8)
    p.add_argument("--avg", choices=("arith", "geom"), default="arith")
    p.add_argument("--fact", choices=("std", "bb", "pca"), default="bb")
    p.add_argument("--method", choices=("mc", "qmc", "qmc-preint"), default="qmc-preint")
    p.add_argument("--shifts", type=int, default=16)
    p.add_argument("--vector-file", default=None)
    p.add_argument("--korobov-a", type=int, default=None)
    p.add_argument("--inner-order", type=int, default=64)
    p.add_argument("--root-tol", type=float, default=1e-12)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anovaqmc", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"anovaqmc {__version__}")
    globals_ = argparse.ArgumentParser(add_help=False)
    globals_.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="random seed (default 0)")
    globals_.add_argument("--out", default=argparse.SUPPRESS, help="write CSV here instead of stdout")
    globals_.add_argument("--config", default=argparse.SUPPRESS, help="key=value file; flags override it")
    for action in globals_._actions:
        if action.dest != "help":
            parser._add_action(action)
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("conditions", parents=[globals_], help="weak/strong condition sweep")
    p.add_argument("--rho", default="gaussian")
    p.add_argument("--family", default="gaussian_decay", help="psi family swept over --alphas")
    p.add_argument("--alphas", type=_float_list, default=DEFAULT_ALPHAS)
    p.add_argument("--psi", default=None, help="semicolon separated psi specs; replaces the sweep")

    p = sub.add_parser("constant", parents=[globals_], help="C(rho, psi) and the diagonal identity")
    _weight_args(p, "constant:c=1")
    p.add_argument("--tol", type=float, default=1e-8)

    p = sub.add_parser("kernel-check", parents=[globals_], help="kernel identities and reproducing property")
    _weight_args(p)
    p.add_argument("--d", type=int, default=2, help="largest dimension checked (1 or 2)")
    p.add_argument("--ys", type=int, default=20, help="number of y values")
    p.add_argument("--fixtures", type=int, default=3, help="smooth fixtures for the reproducing check")
    p.add_argument("--repro-ys", type=int, default=10)

    p = sub.add_parser("norm-equiv", parents=[globals_], help="norm-equivalence sandwich audit")
    _weight_args(p)
    p.add_argument("--d", type=int, default=1)
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--nodes", type=int, default=40)
    p.add_argument("--slack", type=float, default=1e-6)
    p.add_argument("--fixture", choices=("random", "counterexample"), default="random")

    p = sub.add_parser("anova", parents=[globals_], help="ANOVA decomposition audit")
    _weight_args(p)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--count", type=int, default=3)
    p.add_argument("--nodes", type=int, default=40)
    p.add_argument("--points", type=int, default=20)

    p = sub.add_parser("converge", parents=[globals_], help="RMS error against N and the fitted rate")
    _option_args(p)
    p.add_argument("--ns", type=_int_list, default=DEFAULT_NS, help="comma separated point counts")

    p = sub.add_parser("price", parents=[globals_], help="price one Asian option")
    _option_args(p)
    p.add_argument("--n", type=int, default=2 ** 13)
    p.add_argument("--format", choices=("csv", "text"), default="csv")
    return parser


def _read_config(path: str) -> dict[str, str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}") from exc
    out = {}
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"config line is not key=value: {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.lstrip("-").replace("-", "_")] = value
    return out


def parse_args(argv) -> argparse.Namespace:
    parser = build_parser()
    args = parser.parse_args(argv)
    cfg = _read_config(args.config) if getattr(args, "config", None) else {}
    if cfg:
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions} - {"help", "seed", "out", "config"}
        unknown = sorted(set(cfg) - known - {"seed", "out"})
        if unknown:
            sub.error(f"unknown config keys: {', '.join(unknown)}")
        # string defaults go through each option's type conversion
        sub.set_defaults(**{k: v for k, v in cfg.items() if k in known})
        given = args
        args = parser.parse_args(argv)
        # global flags are resolved by hand: flag, then file, then default
        for key in ("seed", "out", "config"):
            if hasattr(given, key):
                setattr(args, key, getattr(given, key))
            elif key in cfg:
                setattr(args, key, cfg[key])
    args.out = getattr(args, "out", None)
    args.config = getattr(args, "config", None)
    try:
        args.seed = int(getattr(args, "seed", 0))
    except ValueError:
        parser.error(f"seed must be an integer, got {args.seed!r}")
    if args.seed < 0:
        parser.error("seed must be nonnegative")
    return args


# ---------------------------------------------------------------------------
# output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (list, tuple)):
        return ",".join(_fmt(x) for x in v)
    return str(v)


class Report:
    def __init__(self, args: argparse.Namespace, columns: list[str]):
        self.args = args
        self.columns = columns
        self.rows: list[list] = []
        self.notes: list[str] = []
        self.failed = False
        self.summary: str | None = None
        self.trailer: list[str] = []
        self.text: str | None = None

    def add(self, *values, ok: bool = True) -> None:
        self.rows.append(list(values))
        if not ok:
            self.failed = True

    def render(self) -> str:
        buf = io.StringIO()
        buf.write(f"# anovaqmc {__version__}\n")
        buf.write(f"# command={self.args.command}\n")
        skip = {"command", "out", "config"}
        for key in sorted(vars(self.args)):
            if key not in skip:
                buf.write(f"# {key.replace('_', '-')}={_fmt(getattr(self.args, key))}\n")
        for note in self.notes:
            buf.write(f"# {note}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        writer.writerows([[_fmt(v) for v in row] for row in self.rows])
        return buf.getvalue()


def _pair(args) -> WeightPair:
    return WeightPair(parse_rho(args.rho), parse_psi(args.psi))


def _context(args, d: int) -> KernelContext:
    gammas = list(args.gamma)
    if len(gammas) == 1:
        gammas = gammas * d
    if len(gammas) != d:
        raise UsageError(f"--gamma has {len(gammas)} values for d={d}")
    if any(g <= 0 for g in gammas):
        raise UsageError("weights must be positive")
    return KernelContext.build(_pair(args), gammas)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_conditions(args) -> Report:
    rep = Report(args, ["rho", "psi", "method", "weak", "strong", "c_constant",
                        "numeric_status", "numeric_weak", "numeric_strong", "agree"])
    if args.psi:
        specs = [s for s in args.psi.split(";") if s.strip()]
    else:
        key = "c" if args.family == "constant" else "alpha"
        specs = [f"{args.family}:{key}={a!r}" for a in args.alphas]
    rho = parse_rho(args.rho)
    for spec in specs:
        pair = WeightPair(rho, parse_psi(spec))
        cond = check_conditions(pair)
        try:
            num = classify_numerically(pair)
            status = "decided"
        except ClassificationInconclusive as exc:
            num, status = exc.report, "inconclusive"
        except DivergenceDetected:
            num, status = None, "divergent"
        agree = True
        if num is not None:
            if "weak" not in num.undecided:
                agree &= num.weak_holds == cond.weak_holds
            if "strong" not in num.undecided:
                agree &= num.strong_holds == cond.strong_holds
        rep.add(pair.rho.describe(), pair.psi.describe(), cond.method, cond.weak_holds, cond.strong_holds,
                cond.c_constant, status,
                None if num is None or "weak" in num.undecided else num.weak_holds,
                None if num is None or "strong" in num.undecided else num.strong_holds,
                agree, ok=agree)
    return rep


def _diag_integral(ctx: KernelContext) -> float:
    pair, table = ctx.pairs[0], ctx.table(0)
    x, w = composite_gauss_legendre(panel_edges(-pair.cutoff, pair.cutoff, 0.25), 16)
    return float(np.dot(w, table.eta(x, x) * pair.pdf(x)))


def cmd_constant(args) -> Report:
    rep = Report(args, ["rho", "psi", "gamma", "c_constant", "diag_integral", "abs_error",
                        "embed_1d", "lemma_1d", "pass"])
    ctx = _context(args, 1)
    pair = ctx.pairs[0]
    c = ctx.reports[0].c_constant
    if c is None:
        rep.add(pair.rho.describe(), pair.psi.describe(), args.gamma[0], None, None, None, None, None, False, ok=False)
        rep.notes.append("strong condition fails: C is undefined")
        return rep
    diag = _diag_integral(ctx)
    err = abs(diag - c)
    g = args.gamma[0]
    rep.add(pair.rho.describe(), pair.psi.describe(), g, c, diag, err,
            embed_constant_1d(g, c), lemma_constant_1d(g, c), err <= args.tol, ok=err <= args.tol)
    return rep


def _ys(seed: int, count: int, stream: int) -> np.ndarray:
    return np.clip(1.5 * substream(seed, stream).standard_normal(count), -4.0, 4.0)


def _energy(pair: WeightPair, y: float) -> float:
    # int (d eta / dx)^2 psi, split at the kink y
    lc, ls, lp = pair.rho.log_cdf, pair.rho.log_sf, pair.log_psi
    left = lambda t: 2.0 * lc(t) - lp(t)
    right = lambda t: 2.0 * ls(t) - lp(t)
    L = _table_radius(pair)
    total = 0.0
    for lf, a, b in ((left, -L, y), (right, y, L)):
        x, w = composite_gauss_legendre(panel_edges(a, b, 0.25, (0.0,) if a < 0 < b else ()), 16)
        total += float(np.dot(w, np.exp(lf(x))))
    return total + _tail(left, -L, -1) + _tail(right, L, 1)


def _split_tensor(ctx: KernelContext, y: np.ndarray):
    axes = []
    for j in range(ctx.d):
        x, w = ctx.pairs[j].split_rule("rho", float(y[j]))
        # drop nodes whose whole contribution w (1 + |eta|) cannot move the sum
        size = w * (1.0 + np.abs(ctx.table(j).eta(x, float(y[j]))))
        keep = size > 1e-17 * size.sum()
        axes.append((x[keep], w[keep]))
    mesh = np.stack(np.meshgrid(*[a[0] for a in axes], indexing="ij"), axis=-1)
    wt = axes[0][1]
    for a in axes[1:]:
        wt = np.multiply.outer(wt, a[1])
    return mesh, wt


def _smooth_fixtures(d: int, count: int, seed: int):
    return [random_fixture(d, substream(seed, 1000 + k), name=f"fixture-{k}") for k in range(count)]


def cmd_kernel_check(args) -> Report:
    rep = Report(args, ["check", "d", "item", "y", "value", "target", "abs_error", "tol", "pass"])
    if args.d not in (1, 2):
        raise UsageError("--d must be 1 or 2")
    ctx1 = _context(args, 1)
    pair, table = ctx1.pairs[0], ctx1.table(0)
    for y in _ys(args.seed, args.ys, 0):
        xs, ws = pair.split_rule("rho", float(y))
        v = float(np.dot(ws, table.eta(xs, y)))
        rep.add("annihilation", 1, "", (float(y),), v, 0.0, abs(v), 1e-8, abs(v) <= 1e-8, ok=abs(v) <= 1e-8)
    for y in _ys(args.seed, args.ys, 0):
        v, target = _energy(pair, float(y)), float(table.eta(y, y))
        err = abs(v - target)
        tol = 1e-8 * max(1.0, abs(target))
        rep.add("derivative-energy", 1, "", (float(y),), v, target, err, tol, err <= tol, ok=err <= tol)
    for dd in range(1, args.d + 1):
        ctx = ctx1 if dd == 1 else _context(args, dd)
        ys = _ys(args.seed, args.ys * dd, dd).reshape(args.ys, dd)
        for y in ys:
            mesh, wt = _split_tensor(ctx, y)
            v = float(np.sum(wt * ctx.kernel(mesh, y)))
            target = ctx.weights.gamma(0)
            err = abs(v - target)
            rep.add("integral-K", dd, "", tuple(float(t) for t in y), v, target, err, 1e-7, err <= 1e-7,
                    ok=err <= 1e-7)
        for k, f in enumerate(_smooth_fixtures(dd, args.fixtures, args.seed)):
            for y in _ys(args.seed, args.repro_ys * dd, 100 + 10 * dd + k).reshape(args.repro_ys, dd):
                fy = float(f(y[None, :])[0])
                res = reproducing_check(f, ctx, y)
                tol = 1e-5 * max(1.0, abs(fy))
                rep.add("reproducing", dd, f.name, tuple(float(t) for t in y), res, 0.0, res, tol, res <= tol,
                        ok=res <= tol)
    return rep


def _counterexample() -> SmoothTestFunction:
    # f = 1/sqrt(rho) for the standard normal density
    scale = (2.0 * math.pi) ** 0.25

    def f(x):
        return scale * np.exp(0.25 * x[..., 0] ** 2)

    def df(x):
        return 0.5 * x[..., 0] * f(x)

    return SmoothTestFunction(1, derivs={0: f, 1: df}, name="inverse-sqrt-rho")


def cmd_norm_equiv(args) -> Report:
    if args.fixture == "counterexample":
        return _counterexample_report(args)
    rep = Report(args, ["function-id", "w_norm_sq", "h_norm_sq", "ratio", "bound", "pass"])
    if not 1 <= args.d <= 4:
        raise UsageError("--d must lie in 1..4")
    ctx = _context(args, args.d)
    for k in range(args.count):
        f = random_fixture(args.d, substream(args.seed, k), name=f"fixture-{k}")
        res = audit_equivalence(f, ctx, args.nodes, args.slack)
        rep.add(f.name, res.w_norm_sq, res.h_norm_sq, res.ratio, res.bound, res.ok, ok=res.ok)
    return rep


def _counterexample_report(args) -> Report:
    rep = Report(args, ["radius", "l2_norm_sq", "l2_target", "h_norm_sq", "w_norm_sq", "pass"])
    args.rho, args.psi = "gaussian", "gaussian_decay:alpha=0.6666666666666666"
    ctx = _context(args, 1)
    radii = (5.0, 10.0, 20.0, 40.0)
    prof = truncated_profile(_counterexample(), ctx, radii)
    w_conv = abs(prof.w[-1] - prof.w[-2]) <= 1e-8 * abs(prof.w[-1])
    rep.notes.append(f"w-converged={_fmt(w_conv)}")
    for R, l2, h, w in zip(prof.radii, prof.l2, prof.h, prof.w):
        ok = abs(l2 - 2 * R) <= 1e-8
        rep.add(R, l2, 2 * R, h, w, ok and w_conv, ok=ok and w_conv)
    return rep


def cmd_anova(args) -> Report:
    rep = Report(args, ["function-id", "reconstruction_error", "max_cross_inner", "parseval_rel_error", "pass"])
    if not 1 <= args.d <= 3:
        raise UsageError("--d must lie in 1..3")
    ctx = _context(args, args.d)
    for k, f in enumerate(_smooth_fixtures(args.d, args.count, args.seed)):
        pts = 1.5 * substream(args.seed, 2000 + k).standard_normal((args.points, args.d))
        terms = anova_terms(f, ctx, args.nodes)
        recon = sum(t(pts) for t in terms.values())
        rec_err = float(np.max(np.abs(recon - f(pts))))
        gram, wsq = anova_gram(f, ctx, args.nodes)
        cross = float(np.max(np.abs(gram - np.diag(np.diag(gram))))) if gram.shape[0] > 1 else 0.0
        pars = abs(float(np.trace(gram)) - wsq) / wsq
        ok = rec_err <= 1e-6 and cross <= 1e-7 and pars <= 1e-6
        rep.add(f.name, rec_err, cross, pars, ok, ok=ok)
    return rep


def _spec(args) -> AsianOptionSpec:
    return AsianOptionSpec(s0=args.s0, strike=args.strike, r=args.r, sigma=args.sigma, t_final=args.t,
                           d=args.d, averaging=args.avg, factorization=args.fact)


def _price(args, spec: AsianOptionSpec, n: int):
    if args.shifts < 1 or n < 1:
        raise UsageError("--n and --shifts must be positive")
    if args.method == "mc":
        return price_mc(spec, n, args.shifts, args.seed)
    dim = spec.d - 1 if args.method == "qmc-preint" else spec.d
    vector = korobov_vector(args.korobov_a, n, max(dim, 1)) if args.korobov_a is not None else None
    if args.method == "qmc":
        return price_qmc(spec, n, args.shifts, args.seed, vector=vector, vector_file=args.vector_file)
    return price_qmc_preint(spec, n, args.shifts, args.seed, vector=vector, vector_file=args.vector_file,
                            inner_order=args.inner_order, root_tol=args.root_tol)


def fit_slope(ns, errors) -> tuple[float, float]:
    """Least-squares slope of log2(error) against log2(N) and its standard error."""
    x = np.log2(np.asarray(ns, dtype=float))
    y = np.log2(np.asarray(errors, dtype=float))
    if len(set(ns)) < 4:
        raise UsageError("the rate fit needs at least 4 distinct N values")
    xc = x - x.mean()
    slope = float(np.dot(xc, y - y.mean()) / np.dot(xc, xc))
    resid = y - y.mean() - slope * xc
    stderr = float(math.sqrt(np.dot(resid, resid) / (len(x) - 2) / np.dot(xc, xc)))
    return slope, stderr


def cmd_converge(args) -> Report:
    rep = Report(args, ["n", "price", "rms_error", "in_fit"])
    ns = sorted(set(args.ns))
    if len(ns) < 5:
        raise UsageError("--ns needs at least 5 distinct values (the smallest is excluded from the fit)")
    spec = _spec(args)
    errors = []
    for n in ns:
        res = _price(args, spec, n)
        errors.append(res.rms_error)
        rep.add(n, res.price, res.rms_error, n != ns[0])
    slope, stderr = fit_slope(ns[1:], errors[1:])
    rep.notes.append(f"fit excludes smallest N={ns[0]}")
    rep.summary = f"slope = {slope:.4f} +/- {stderr:.4f} ({args.method}, N = {ns[1]}..{ns[-1]}, m = {args.shifts})"
    rep.trailer = [f"slope={_fmt(slope)}", f"slope-stderr={_fmt(stderr)}"]
    return rep


def cmd_price(args) -> Report:
    spec = _spec(args)
    res = _price(args, spec, args.n)
    closed = geometric_closed_form(spec) if spec.averaging == "geometric" else None
    rep = Report(args, ["method", "averaging", "factorization", "d", "n", "shifts", "price", "rms_error",
                        "closed_form"])
    rep.add(args.method, spec.averaging, spec.factorization, spec.d, res.n, res.m, res.price, res.rms_error, closed)
    if args.format == "text":
        lines = [f"{k:>14}: {_fmt(v)}" for k, v in zip(rep.columns, rep.rows[0])]
        rep.text = "\n".join(lines) + "\n"
    return rep


COMMANDS = {
    "conditions": cmd_conditions,
    "constant": cmd_constant,
    "kernel-check": cmd_kernel_check,
    "norm-equiv": cmd_norm_equiv,
    "anova": cmd_anova,
    "converge": cmd_converge,
    "price": cmd_price,
}


def main(argv=None) -> int:
    try:
        args = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as exc:
        print(f"anovaqmc: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        rep = COMMANDS[args.command](args)
    except (UsageError, ParseError) as exc:
        print(f"anovaqmc: error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        # invalid parameter values surface as ValueError subclasses
        print(f"anovaqmc: error: {exc}", file=sys.stderr)
        return 2
    except AnovaQMCError as exc:
        print(f"anovaqmc: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    text = rep.text or rep.render() + "".join(f"# {line}\n" for line in rep.trailer)
    if args.out:
        try:
            Path(args.out).write_text(text, encoding="utf-8")
        except OSError as exc:
            print(f"anovaqmc: error: cannot write {args.out}: {exc}", file=sys.stderr)
            return 2
    else:
        sys.stdout.write(text)
    if rep.summary:
        print(rep.summary, file=sys.stderr)
    return 1 if rep.failed else 0
