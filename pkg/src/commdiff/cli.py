"""Batch front door: field sampling, classification, the clean-approximation
pipeline, the estimate suites, rotation numbers, lattice bases, and paths.

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical non-convergence.  Identical configuration and precision produce
bit-identical CSV output (no time-dependent seeding; randomized suites take
an explicit seed, default 0).
"""

from __future__ import annotations

import argparse
import random
import sys
from fractions import Fraction
from pathlib import Path

import mpmath
from mpmath import mpf

from . import precision
from .analysis import cheb_grid, commutation_residual
from .estimates import (check_En_exponent, check_equivalence_lemma,
                        check_flat_norm_lemma, check_ratio_lemma,
                        check_series_phi, default_abscissae)
from .fixtures import fixture, fixture_from_config
from .flow import FlowError
from .maps import DomainError, parse_map
from .parser import ParseError
from .polynomials import alpha_beta, check_star_identity, recursion_polynomials
from .precision import R, nstr30
from .quadrature import QuadratureError
from .smoothing import EtaNotMetError, NiceX0NotFoundError, approximate_clean
from .szekeres import (InconsistentTauError, NonConvergedError,
                       PairPreconditionError, SzekeresField, classify_pair,
                       path_to_identity)

EXIT_OK = 0
EXIT_VERIFY = 1
EXIT_CONFIG = 2
EXIT_NONCONVERGED = 3


class ConfigError(ValueError):
    pass


def _load_config(path: str) -> dict:
    cfg = {}
    text = Path(path).read_text()
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"malformed config line: {line!r}")
        key, _, value = line.partition("=")
        cfg[key.strip().replace("-", "_")] = value.strip()
    return cfg


def _apply_config(args, cfg: dict):
    for key, value in cfg.items():
        if not hasattr(args, key) or getattr(args, key) is None:
            setattr(args, key, value)
    return args


def _setup(args) -> None:
    prec = int(args.prec) if args.prec is not None else precision.DEFAULT_PRECISION
    if prec < 64:
        raise ConfigError("precision must be at least 64 bits")
    precision.set_precision(prec)
    for name in ("tol", "eta", "eps", "delta", "rel_tol"):
        v = getattr(args, name, None)
        if v is not None and R(v) <= 0:
            raise ConfigError(f"--{name} must be positive")


def _outdir(args) -> Path:
    out = Path(args.out) if args.out else Path(".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _build_fixture(args):
    if getattr(args, "config", None):
        return fixture_from_config(Path(args.config).read_text())
    kwargs = {}
    if getattr(args, "times", None):
        kwargs["times"] = tuple(R(t) for t in str(args.times).split(","))
    if getattr(args, "flow_tol", None):
        kwargs["tol"] = R(args.flow_tol)
    name = args.fixture or "hyperbolic"
    return fixture(name, **kwargs)


def _grid_points(args, domain):
    n = int(args.grid) if args.grid else 33
    a, b = domain
    pad = (b - a) / mpf(1000)
    return cheb_grid(a + pad, b - pad, n)


def cmd_field(args) -> int:
    field_gen, maps = _build_fixture(args)
    f = maps[0]
    order = int(args.order) if args.order else 2
    rel_tol = R(args.rel_tol) if args.rel_tol else None
    mode = args.mode or "series"
    xi = SzekeresField(f, mode=mode, rel_tol=rel_tol)
    out = _outdir(args)
    rows = []
    logs = []
    worst = None
    for x in _grid_points(args, f.domain):
        if f.displacement(x) == 0:
            vals = [mpf(0)] * (order + 1)
            logs.append((x, 0))
        else:
            try:
                if mode == "series":
                    data = xi.series_data(x, max(order, 1))
                    vals = [xi.value_series(x)]
                    vals.append(data.mu[1][0])
                    for m in range(2, order + 1):
                        vals.append(data.mu[m][0] / vals[0] ** (m - 1))
                    logs.append((x, len(data.points)))
                else:
                    jet = xi.eval_jet(x, order)
                    vals = jet.derivatives()
                    logs.append((x, 0))
            except NonConvergedError as exc:
                print(f"non-convergence at x={mpmath.nstr(x, 12)}: {exc}",
                      file=sys.stderr)
                return EXIT_NONCONVERGED
        rows.append([x] + list(vals))
    header = ["x", "xi"] + [f"d{m}xi" for m in range(1, order + 1)]
    csv_path = out / "field_samples.csv"
    with open(csv_path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(nstr30(v) for v in row) + "\n")
    with open(out / "field_convergence.log", "w") as fh:
        for x, k in logs:
            fh.write(f"x={nstr30(x)} orbit_length={k}\n")
    print(f"wrote {csv_path}")
    return EXIT_OK


def cmd_classify(args) -> int:
    _field, maps = _build_fixture(args)
    if len(maps) < 2:
        raise ConfigError("classification needs a fixture with two maps")
    tol = R(args.tol) if args.tol else mpf("1e-15")
    c = classify_pair(maps[0], maps[1], tol)
    print(c.record_line())
    out = _outdir(args)
    (out / "classification.txt").write_text(c.record_line() + "\n")
    return EXIT_OK


def cmd_clean_approx(args) -> int:
    _field, maps = _build_fixture(args)
    f, g = maps[0], maps[1]
    eta = R(args.eta) if args.eta else mpf("1e-4")
    k = int(args.k) if args.k else 2
    out = _outdir(args)
    try:
        clf = classify_pair(f, g, R(args.tol) if args.tol else mpf("1e-15"))
        if clf.variant == "CYCLIC":
            print("pair is monogenerated (rational relative time): already clean; "
                  "use the 'path' command for the isotopy", file=sys.stderr)
            return EXIT_CONFIG
        fbar, gbar, report = approximate_clean(f, g, eta, k, classification=clf)
    except (PairPreconditionError, ValueError) as exc:
        print(f"precondition: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except EtaNotMetError as exc:
        (out / "clean_approx_report.txt").write_text(exc.report.as_text() + "\n")
        print("target closeness not met; report written", file=sys.stderr)
        return EXIT_VERIFY
    except (NonConvergedError, NiceX0NotFoundError) as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    (out / "clean_approx_report.txt").write_text(report.as_text() + "\n")
    n = int(args.grid) if args.grid else 65
    with open(out / "clean_approx_maps.csv", "w") as fh:
        fh.write("x,f,fbar,g,gbar\n")
        for x in cheb_grid(f.domain[0], f.domain[1], n):
            fh.write(",".join(nstr30(v) for v in
                              (x, f.eval(x), fbar.eval(x), g.eval(x), gbar.eval(x)))
                     + "\n")
    print((out / "clean_approx_report.txt").read_text())
    return EXIT_OK


def cmd_estimates(args) -> int:
    out = _outdir(args)
    suite = args.suite or "all"
    failures = []
    if suite in ("symbolic", "all"):
        n_hi = 8
        lines = []
        for n in range(1, n_hi + 1):
            res = check_star_identity(n)
            a, b = alpha_beta(n)
            P, _ = recursion_polynomials(n)
            lines.append(f"n={n} pass={res['pass']} alpha={a} beta={list(b)} P={P}")
            if not res["pass"]:
                failures.append(f"star identity n={n}")
        (out / "symbolic_suite.txt").write_text("\n".join(lines) + "\n")
        alphas = ",".join(str(alpha_beta(n)[0]) for n in range(1, 7))
        print(f"symbolic suite: alpha_n = {alphas}")
    if suite in ("numeric", "all"):
        field_gen, maps = _build_fixture(args)
        f = maps[0]
        rel_tol = R(args.rel_tol) if args.rel_tol else mpf(2) ** -80
        xi = SzekeresField(f, rel_tol=rel_tol)
        xs = default_abscissae(int(args.jmax) if args.jmax else 10)
        checks = []
        if "left" in f.declared_flat_at:
            checks.append(("ratio", lambda: check_ratio_lemma(f, xs=xs)))
            checks.append(("equivalence",
                           lambda: check_equivalence_lemma(f, xi, xs=xs)))
            for n in (1, 2, 3):
                checks.append((f"exponent-n{n}",
                               lambda n=n: check_En_exponent(f, xi, n)))
            checks.append(("flat-norm",
                           lambda: check_flat_norm_lemma(f, 2, variant="log-derivative",
                                                         xs=default_abscissae(8))))
        for name, run in checks:
            try:
                rep = run()
            except NonConvergedError as exc:
                print(f"{name}: non-convergence ({exc})", file=sys.stderr)
                return EXIT_NONCONVERGED
            (out / f"estimate_{name}.csv").write_text(rep.as_csv())
            print(rep.summary_line())
            if not rep.verdict:
                failures.append(name)
    if failures:
        print("failed checks: " + ", ".join(failures), file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_rotation(args) -> int:
    from .circle import parse_lift, rotation_number

    if args.expr:
        lift = parse_lift(args.expr)
    else:
        from .circle import conjugated_rotation_lift

        alpha = R(args.alpha) if args.alpha else mpmath.sqrt(2) - 1
        lift = conjugated_rotation_lift(alpha)
    iterations = int(args.iterations) if args.iterations else 100_000
    value, info = rotation_number(lift, iterations, detail=True)
    print(f"rotation_number={nstr30(value)} method={info['method']}")
    return EXIT_OK


def cmd_basis(args) -> int:
    from .circle import lattice_basis

    if not args.rho:
        raise ConfigError("--rho takes a comma-separated list of rationals")
    rhos = [Fraction(part) for part in str(args.rho).split(",")]
    basis = lattice_basis(rhos)
    out = _outdir(args)
    (out / "lattice_basis.csv").write_text(basis.as_csv())
    print(basis.as_csv().strip())
    return EXIT_OK


def cmd_path(args) -> int:
    _field, maps = _build_fixture(args)
    tol = R(args.tol) if args.tol else mpf("1e-15")
    c = classify_pair(maps[0], maps[1], tol)
    if c.variant == "DEGENERATE":
        print("degenerate pair: no canonical commuting path", file=sys.stderr)
        return EXIT_CONFIG
    out = _outdir(args)
    ts = [R(t) for t in str(args.t or "0,0.25,0.5,0.75,1").split(",")]
    n = int(args.grid) if args.grid else 17
    with open(out / "path_samples.csv", "w") as fh:
        fh.write("t,x,f_t,g_t\n")
        worst = mpf(0)
        for t in ts:
            pf, pg = path_to_identity(c, t)
            r = commutation_residual(pf, pg, 0, samples=max(n, 16))
            worst = max(worst, r)
            for x in cheb_grid(maps[0].domain[0], maps[0].domain[1], n):
                fh.write(",".join(nstr30(v) for v in (t, x, pf.eval(x), pg.eval(x)))
                         + "\n")
    print(f"max commutation residual along path: {nstr30(worst)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="commdiff",
        description="high-precision toolkit for commuting interval diffeomorphisms",
    )
    ap.add_argument("--config", help="flat key=value config file; flags override")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--fixture", help="hyperbolic|flat_boundary|oscillating|rotation_like")
        p.add_argument("--expr", help="expression source (where applicable)")
        p.add_argument("--domain", help="interval a,b (expressions)")
        p.add_argument("--times", help="comma-separated flow times for fixture maps")
        p.add_argument("--prec", help="working precision in bits (default 256)")
        p.add_argument("--order", help="jet/derivative order")
        p.add_argument("--tol", help="commutation tolerance")
        p.add_argument("--rel-tol", dest="rel_tol", help="series stopping tolerance")
        p.add_argument("--flow-tol", dest="flow_tol", help="flow integration tolerance")
        p.add_argument("--eta", help="target closeness for clean approximation")
        p.add_argument("--eps", help="smallness target for the interpolated field")
        p.add_argument("--delta", help="window exponent parameter in (0,1)")
        p.add_argument("--k", help="derivative count for the pipeline")
        p.add_argument("--grid", help="sample grid size")
        p.add_argument("--jmax", help="abscissa count for estimate suites")
        p.add_argument("--seed", default="0", help="seed for randomized suites")
        p.add_argument("--out", help="output directory (default .)")

    for name, fn in (
        ("field", cmd_field),
        ("classify", cmd_classify),
        ("clean-approx", cmd_clean_approx),
        ("estimates", cmd_estimates),
        ("rotation", cmd_rotation),
        ("basis", cmd_basis),
        ("path", cmd_path),
    ):
        p = sub.add_parser(name)
        common(p)
        if name == "estimates":
            p.add_argument("--suite", help="symbolic|numeric|all")
        if name == "rotation":
            p.add_argument("--alpha", help="rotation angle for the built-in lift")
            p.add_argument("--iterations", help="orbit budget (default 1e5)")
        if name == "basis":
            p.add_argument("--rho", help="comma-separated rationals, e.g. 1/3,0")
        if name == "path":
            p.add_argument("--t", help="comma-separated path parameters in [0,1]")
        if name == "classify" or name == "clean-approx":
            p.add_argument("--mode", help="field mode: auto|series|generator")
        if name == "field":
            p.add_argument("--mode", help="field mode: series|generator|auto")
        p.set_defaults(func=fn)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        if args.config:
            _apply_config(args, _load_config(args.config))
        _setup(args)
        random.seed(int(args.seed or 0))
        return args.func(args)
    except (ConfigError, ParseError, DomainError, ValueError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonConvergedError as exc:
        print(f"non-convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED
    except (QuadratureError, FlowError, InconsistentTauError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    raise SystemExit(main())
