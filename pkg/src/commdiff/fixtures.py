"""Model families: concrete fields and diffeomorphism pairs used throughout.

hyperbolic     c·x^p(1-x)^q; for p = q = 1 the flow has the closed logistic
               form x e^{ct}/(1 + x(e^{ct}-1)) and time-t maps are expression
               trees (exact, fast).
flat_boundary  flat(x)·(1-x)^2: infinitely flat at 0, quadratic zero at 1.
oscillating    flat(x)·(sin^2(pi/x) [+ flat(x)])·(1-x)^2: flat at 0 with
               wildly oscillating derivative growth toward it, order-2 zero
               at 1.  With the additive lift the field is strictly positive
               on (0,1); without it, double-order zeros at 1/n accumulate at
               the origin.
rotation_like  circle-lift pair conjugate to rigid rotations (degree one).
"""

from __future__ import annotations

import mpmath
from mpmath import mpf

from . import parser
from .flow import FlowDiffeo
from .maps import ExprDiffeo, ExprField, SmoothMap
from .precision import R


def _pi_num() -> parser.Num:
    return parser.num(+mpmath.pi)


def smooth_step_ast(t_ast: parser.Node) -> parser.Node:
    """flat(t)/(flat(t)+flat(1-t)): 0 for t<=0, 1 for t>=1, increasing."""
    ft = parser.fun("flat", t_ast)
    f1t = parser.fun("flat", parser.sub(parser.num(1), t_ast))
    return parser.div(ft, parser.add(ft, f1t))


def logistic_value(t, x) -> mpf:
    E = mpmath.exp(R(t))
    x = R(x)
    return x * E / (1 + x * (E - 1))


def logistic_time_map(t, check: bool = False) -> ExprDiffeo:
    """Closed-form time-t map of x(1-x) on [0,1], with exact inverse."""

    def build(tt):
        E = parser.num(mpmath.exp(R(tt)))
        xv = parser.var()
        expr = parser.div(parser.mul(xv, E),
                          parser.add(parser.num(1),
                                     parser.mul(xv, parser.sub(E, parser.num(1)))))
        disp = parser.div(
            parser.mul(parser.mul(xv, parser.sub(E, parser.num(1))),
                       parser.sub(parser.num(1), xv)),
            parser.add(parser.num(1), parser.mul(xv, parser.sub(E, parser.num(1)))))
        return SmoothMap(expr, (0, 1), flat_kind="identity", displacement_expr=disp)

    return ExprDiffeo(build(t), build(-R(t)), check=check)


def hyperbolic_field(p: int = 1, q: int = 1, c=1) -> ExprField:
    xv = parser.var()
    expr = parser.Pow(xv, p) if p != 1 else xv
    omx = parser.sub(parser.num(1), xv)
    expr = parser.mul(expr, parser.Pow(omx, q) if q != 1 else omx)
    if R(c) != 1:
        expr = parser.mul(parser.num(R(c)), expr)
    hints = ((mpf(0), p), (mpf(1), q))
    return ExprField(SmoothMap(expr, (0, 1)), zero_set_hint=hints)


def flat_boundary_field() -> ExprField:
    m = SmoothMap(parser.parse_expression("flat(x)*(1-x)^2"), (0, 1),
                  declared_flat_at={"left"})
    return ExprField(m, zero_set_hint=((mpf(0), "FLAT"), (mpf(1), 2)))


def oscillating_field(lift: bool = True) -> ExprField:
    # tapered by (1-x)^2 so the right end is an ordinary order-2 contact;
    # only the origin is infinitely flat (wild oscillation accumulates there)
    xv = parser.var()
    sin2 = parser.Pow(parser.fun("sin", parser.div(_pi_num(), xv)), 2)
    inner = parser.add(sin2, parser.fun("flat", xv)) if lift else sin2
    expr = parser.mul(parser.fun("flat", xv), inner)
    expr = parser.mul(expr, parser.Pow(parser.sub(parser.num(1), xv), 2))
    hints = ((mpf(1), 2),)
    if not lift:
        hints = tuple((mpf(1) / n, 2) for n in range(2, 40)) + hints
    m = SmoothMap(expr, (0, 1), declared_flat_at={"left"})
    return ExprField(m, zero_set_hint=hints)


def fixture(name: str, **params):
    """Return (field, [diffeos...]) for a named model family."""
    times = params.pop("times", None)
    tol = params.pop("tol", None)
    if name == "hyperbolic":
        p = int(params.pop("p", 1))
        q = int(params.pop("q", 1))
        c = R(params.pop("c", 1))
        _reject_extras(name, params)
        field = hyperbolic_field(p, q, c)
        if times is None:
            times = (1, mpmath.sqrt(2))
        if p == q == 1:
            maps = []
            for t in times:
                m = logistic_time_map(c * R(t))
                m.generator_field = field
                m.generator_time = R(t)
                maps.append(m)
        else:
            maps = [FlowDiffeo(field, R(t), tol=tol) for t in times]
        return field, maps
    if name == "flat_boundary":
        _reject_extras(name, params)
        field = flat_boundary_field()
        if times is None:
            times = (1, mpmath.sqrt(2) - 1)
        return field, [FlowDiffeo(field, R(t), tol=tol) for t in times]
    if name == "oscillating":
        lift = bool(params.pop("lift", True))
        _reject_extras(name, params)
        field = oscillating_field(lift)
        if times is None:
            times = (1, mpmath.sqrt(2) - 1)
        return field, [FlowDiffeo(field, R(t), tol=tol) for t in times]
    if name == "rotation_like":
        from .circle import conjugated_rotation_lift

        alpha = R(params.pop("alpha", mpmath.sqrt(2) - 1))
        beta = params.pop("beta", None)
        wobble = R(params.pop("wobble", 0.1))
        _reject_extras(name, params)
        lifts = [conjugated_rotation_lift(alpha, wobble)]
        if beta is not None:
            lifts.append(conjugated_rotation_lift(R(beta), wobble))
        return None, lifts
    raise ValueError(f"unknown fixture {name!r}")


def _reject_extras(name, params):
    if params:
        raise ValueError(f"invalid parameters for fixture {name!r}: {sorted(params)}")


def fixture_from_config(text: str):
    """Flat key=value fixture description: name, params, domain, flats."""
    cfg = {}
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"malformed config line: {line!r}")
        key, _, value = line.partition("=")
        cfg[key.strip()] = value.strip()
    name = cfg.pop("name", None)
    if name is None:
        raise ValueError("fixture config needs a name")
    kwargs = {}
    for key, value in cfg.items():
        if key == "times":
            kwargs["times"] = tuple(R(v) for v in value.split(","))
        elif key in ("p", "q"):
            kwargs[key] = int(value)
        elif key == "lift":
            kwargs[key] = value.lower() in ("1", "true", "yes")
        elif key == "cutoff":
            parts = value.split(",")
            kwargs[key] = (R(parts[0]), R(parts[1]))
        else:
            kwargs[key] = R(value)
    return fixture(name, **kwargs)
