"""Recursive-descent parser for the smooth-map expression language.

Grammar (exact):
    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := atom ("^" integer)?
    atom   := "x" | decimal | ident "(" expr ")" | "(" expr ")"
    ident  in {exp, log, sin, cos, flat}

Constants are decimal literals, held exactly as rationals.  flat(e) denotes
exp(-1/e) where e > 0 and 0 where e <= 0; it is smooth, with all derivatives
vanishing wherever e = 0, and its jet there is the exact zero jet.
"""

from __future__ import annotations

from fractions import Fraction

import mpmath
from mpmath import mpf

from .jets import Jet, JetDomainError
from .precision import R

FUNCTIONS = ("exp", "log", "sin", "cos", "flat")


class ParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} (at position {pos})")
        self.pos = pos


class EvalDomainError(ArithmeticError):
    """Evaluation left the function's domain (log <= 0, division by zero)."""


# ---------------------------------------------------------------------------
# AST


class Node:
    __slots__ = ()

    def eval(self, x: mpf) -> mpf:
        raise NotImplementedError

    def eval_jet(self, x: mpf, order: int) -> Jet:
        raise NotImplementedError

    def children(self):
        return ()


class Num(Node):
    __slots__ = ("value", "_cache_prec", "_cache")

    def __init__(self, value: Fraction):
        self.value = Fraction(value)
        self._cache_prec = -1
        self._cache = None

    def as_real(self) -> mpf:
        if self._cache_prec != mpmath.mp.prec:
            self._cache = mpf(self.value.numerator) / mpf(self.value.denominator)
            self._cache_prec = mpmath.mp.prec
        return self._cache

    def eval(self, x):
        return self.as_real()

    def eval_jet(self, x, order):
        return Jet.constant(self.as_real(), x, order)

    def __str__(self):
        if self.value.denominator == 1:
            return str(self.value.numerator)
        return mpmath.nstr(self.as_real(), 20)


class Var(Node):
    __slots__ = ()

    def eval(self, x):
        return x

    def eval_jet(self, x, order):
        return Jet.variable(x, order)

    def __str__(self):
        return "x"


class Bin(Node):
    __slots__ = ("op", "left", "right")

    def __init__(self, op: str, left: Node, right: Node):
        self.op = op
        self.left = left
        self.right = right

    def children(self):
        return (self.left, self.right)

    def eval(self, x):
        a = self.left.eval(x)
        b = self.right.eval(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if b == 0:
            raise EvalDomainError("division by zero")
        return a / b

    def eval_jet(self, x, order):
        a = self.left.eval_jet(x, order)
        b = self.right.eval_jet(x, order)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        try:
            return a / b
        except JetDomainError as exc:
            raise EvalDomainError(str(exc)) from exc

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


class Pow(Node):
    __slots__ = ("basenode", "exponent")

    def __init__(self, basenode: Node, exponent: int):
        self.basenode = basenode
        self.exponent = exponent

    def children(self):
        return (self.basenode,)

    def eval(self, x):
        return self.basenode.eval(x) ** self.exponent

    def eval_jet(self, x, order):
        return self.basenode.eval_jet(x, order).pow_int(self.exponent)

    def __str__(self):
        return f"{self.basenode}^{self.exponent}"


def flat_scalar(e: mpf) -> mpf:
    if e <= 0:
        return mpf(0)
    return mpmath.exp(-1 / e)


def flat_jet(e: Jet) -> Jet:
    # All derivatives of t -> exp(-1/t) (t>0), 0 (t<=0) vanish at t = 0, so
    # the composite jet is exactly zero whenever the argument value is <= 0.
    if e.value <= 0:
        return Jet.zero(e.base, e.order)
    return (-(1 / e)).exp()


class Fun(Node):
    __slots__ = ("name", "arg")

    def __init__(self, name: str, arg: Node):
        self.name = name
        self.arg = arg

    def children(self):
        return (self.arg,)

    def eval(self, x):
        v = self.arg.eval(x)
        if self.name == "exp":
            return mpmath.exp(v)
        if self.name == "log":
            if v <= 0:
                raise EvalDomainError("log of non-positive value")
            return mpmath.log(v)
        if self.name == "sin":
            return mpmath.sin(v)
        if self.name == "cos":
            return mpmath.cos(v)
        return flat_scalar(v)

    def eval_jet(self, x, order):
        a = self.arg.eval_jet(x, order)
        if self.name == "exp":
            return a.exp()
        if self.name == "log":
            try:
                return a.log()
            except JetDomainError as exc:
                raise EvalDomainError(str(exc)) from exc
        if self.name == "sin":
            return a.sin()
        if self.name == "cos":
            return a.cos()
        return flat_jet(a)

    def __str__(self):
        return f"{self.name}({self.arg})"


class FlatQ(Node):
    """Internal node flat(e)/e^q (0 where e <= 0); closes flat under d/dx."""

    __slots__ = ("arg", "q")

    def __init__(self, arg: Node, q: int):
        self.arg = arg
        self.q = q

    def children(self):
        return (self.arg,)

    def eval(self, x):
        v = self.arg.eval(x)
        if v <= 0:
            return mpf(0)
        return mpmath.exp(-1 / v) / v**self.q

    def eval_jet(self, x, order):
        a = self.arg.eval_jet(x, order)
        if a.value <= 0:
            return Jet.zero(a.base, a.order)
        return (-(1 / a)).exp() / a.pow_int(self.q)

    def __str__(self):
        return f"flat({self.arg})/({self.arg})^{self.q}"


def iter_nodes(root: Node):
    stack = [root]
    while stack:
        n = stack.pop()
        yield n
        stack.extend(n.children())


def flat_guards(root: Node) -> list[Node]:
    """Arguments of flat-type nodes: where their sign flips, smooth branches switch."""
    out = []
    for n in iter_nodes(root):
        if isinstance(n, Fun) and n.name == "flat":
            out.append(n.arg)
        elif isinstance(n, FlatQ):
            out.append(n.arg)
    return out


_ZERO = Num(Fraction(0))
_ONE = Num(Fraction(1))


def ast_derivative(node: Node) -> Node:
    """Symbolic d/dx of an expression tree (flat handled via FlatQ)."""
    if isinstance(node, Num):
        return _ZERO
    if isinstance(node, Var):
        return _ONE
    if isinstance(node, Bin):
        da, db = ast_derivative(node.left), ast_derivative(node.right)
        if node.op == "+":
            return Bin("+", da, db)
        if node.op == "-":
            return Bin("-", da, db)
        if node.op == "*":
            return Bin("+", Bin("*", da, node.right), Bin("*", node.left, db))
        num = Bin("-", Bin("*", da, node.right), Bin("*", node.left, db))
        return Bin("/", num, Bin("*", node.right, node.right))
    if isinstance(node, Pow):
        if node.exponent == 0:
            return _ZERO
        da = ast_derivative(node.basenode)
        inner = Pow(node.basenode, node.exponent - 1) if node.exponent > 1 else node.basenode
        if node.exponent == 1:
            return da
        return Bin("*", Bin("*", Num(Fraction(node.exponent)), inner), da)
    if isinstance(node, Fun):
        da = ast_derivative(node.arg)
        if node.name == "exp":
            return Bin("*", node, da)
        if node.name == "log":
            return Bin("/", da, node.arg)
        if node.name == "sin":
            return Bin("*", Fun("cos", node.arg), da)
        if node.name == "cos":
            return Bin("-", _ZERO, Bin("*", Fun("sin", node.arg), da))
        return Bin("*", FlatQ(node.arg, 2), da)
    if isinstance(node, FlatQ):
        da = ast_derivative(node.arg)
        lead = FlatQ(node.arg, node.q + 2)
        if node.q == 0:
            return Bin("*", lead, da)
        corr = Bin("*", Num(Fraction(node.q)), FlatQ(node.arg, node.q + 1))
        return Bin("*", Bin("-", lead, corr), da)
    raise TypeError(f"cannot differentiate node {node!r}")


# ---------------------------------------------------------------------------
# tokenizer / parser


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def error(self, msg: str) -> ParseError:
        return ParseError(msg, self.pos)

    def skip_ws(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def peek(self) -> str:
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def take(self, ch: str) -> bool:
        if self.peek() == ch:
            self.pos += 1
            return True
        return False

    def expect(self, ch: str):
        if not self.take(ch):
            raise self.error(f"expected '{ch}'")

    def parse(self) -> Node:
        node = self.parse_expr()
        self.skip_ws()
        if self.pos != len(self.text):
            raise self.error("unexpected trailing input")
        return node

    def parse_expr(self) -> Node:
        node = self.parse_term()
        while True:
            c = self.peek()
            if c and c in "+-":
                self.pos += 1
                node = Bin(c, node, self.parse_term())
            else:
                return node

    def parse_term(self) -> Node:
        node = self.parse_factor()
        while True:
            c = self.peek()
            if c and c in "*/":
                self.pos += 1
                node = Bin(c, node, self.parse_factor())
            else:
                return node

    def parse_factor(self) -> Node:
        node = self.parse_atom()
        if self.peek() == "^":
            self.pos += 1
            node = Pow(node, self.parse_integer())
        return node

    def parse_integer(self) -> int:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos == start:
            raise self.error("expected integer exponent")
        return int(self.text[start : self.pos])

    def parse_atom(self) -> Node:
        c = self.peek()
        if c == "(":
            self.pos += 1
            node = self.parse_expr()
            self.expect(")")
            return node
        if c.isdigit():
            return self.parse_decimal()
        if c.isalpha():
            return self.parse_ident()
        raise self.error("expected atom")

    def parse_decimal(self) -> Node:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isdigit():
            self.pos += 1
        if self.pos < len(self.text) and self.text[self.pos] == ".":
            self.pos += 1
            digits_start = self.pos
            while self.pos < len(self.text) and self.text[self.pos].isdigit():
                self.pos += 1
            if self.pos == digits_start:
                raise self.error("expected digits after decimal point")
        literal = self.text[start : self.pos]
        if "." in literal:
            intpart, fracpart = literal.split(".")
            value = Fraction(int(intpart + fracpart), 10 ** len(fracpart))
        else:
            value = Fraction(int(literal))
        return Num(value)

    def parse_ident(self) -> Node:
        self.skip_ws()
        start = self.pos
        while self.pos < len(self.text) and self.text[self.pos].isalpha():
            self.pos += 1
        name = self.text[start : self.pos]
        if name == "x":
            return Var()
        if name not in FUNCTIONS:
            raise self.error(f"unknown identifier '{name}'")
        self.expect("(")
        arg = self.parse_expr()
        self.expect(")")
        return Fun(name, arg)


def parse_expression(source: str) -> Node:
    return _Parser(source).parse()


# convenience constructors for programmatic expression building

def num(value) -> Num:
    if isinstance(value, mpf):
        from .precision import to_fraction

        return Num(to_fraction(value))
    return Num(Fraction(value))


def var() -> Var:
    return Var()


def add(a, b):
    return Bin("+", a, b)


def sub(a, b):
    return Bin("-", a, b)


def mul(a, b):
    return Bin("*", a, b)


def div(a, b):
    return Bin("/", a, b)


def fun(name, a):
    return Fun(name, a)
