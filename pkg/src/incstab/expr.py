"""Arithmetic expression trees over named state variables.

Provides parsing, evaluation (on scalars or numpy arrays), exact symbolic
differentiation, and printing. The accepted grammar, tightest-binding first:

    unary minus  >  ^ (non-negative integer power)  >  * /  >  + -

so ``-x^2`` parses as ``(-x)^2``; write ``-(x^2)`` for the negated square.
``abs(e)`` is accepted as a function form. ``sign(e)`` is also accepted: it
appears in derivatives of ``abs`` and evaluates with the convention
``sign(0) = 0``.
"""

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expr",
    "VectorExpr",
    "ExprError",
    "ParseError",
    "UnknownVariableError",
    "EvaluationError",
    "parse",
    "evaluate",
    "differentiate",
    "to_infix",
    "uses_abs_sign_convention",
]

Scalar = Union[float, np.ndarray]


class ExprError(ValueError):
    """Base class for expression errors."""


class ParseError(ExprError):
    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class UnknownVariableError(ExprError):
    def __init__(self, name: str, position: int = -1):
        where = f" (at position {position})" if position >= 0 else ""
        super().__init__(f"unknown identifier '{name}'{where}")
        self.name = name
        self.position = position


class EvaluationError(ExprError):
    """Raised on division by zero during evaluation."""


# node kinds: const, var, neg, abs, sign, add, sub, mul, div, pow
@dataclass(frozen=True)
class Expr:
    kind: str
    args: tuple = ()
    value: float = 0.0
    name: str = ""
    exponent: int = 0

    def __call__(self, env: Mapping[str, Scalar]) -> Scalar:
        return evaluate(self, env)


def const(v: float) -> Expr:
    return Expr("const", value=float(v))

def var(name: str) -> Expr:
    return Expr("var", name=name)

def neg(a: Expr) -> Expr:
    return Expr("neg", (a,))

def abs_(a: Expr) -> Expr:
    return Expr("abs", (a,))

def sign_(a: Expr) -> Expr:
    return Expr("sign", (a,))

def add(a: Expr, b: Expr) -> Expr:
    return Expr("add", (a, b))

def sub(a: Expr, b: Expr) -> Expr:
    return Expr("sub", (a, b))

def mul(a: Expr, b: Expr) -> Expr:
    return Expr("mul", (a, b))

def div(a: Expr, b: Expr) -> Expr:
    return Expr("div", (a, b))

def pow_(a: Expr, n: int) -> Expr:
    if n < 0 or n != int(n):
        raise ExprError(f"power exponent must be a non-negative integer, got {n}")
    return Expr("pow", (a,), exponent=int(n))


def _is_const(e: Expr, v: float | None = None) -> bool:
    return e.kind == "const" and (v is None or e.value == v)


# folding constructors: keep derivative trees small without a simplify pass
def fold_add(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return add(a, b)

def fold_sub(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return sub(a, b)

def fold_mul(a: Expr, b: Expr) -> Expr:
    if _is_const(a) and _is_const(b):
        return const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    return mul(a, b)

def fold_pow(a: Expr, n: int) -> Expr:
    if n == 0:
        return const(1.0)
    if n == 1:
        return a
    return pow_(a, n)


# ---------------------------------------------------------------------------
# evaluation

def evaluate(e: Expr, env: Mapping[str, Scalar]) -> Scalar:
    """Evaluate an expression at a point (or vectorized over arrays)."""
    k = e.kind
    if k == "const":
        return e.value
    if k == "var":
        try:
            return env[e.name]
        except KeyError:
            raise UnknownVariableError(e.name) from None
    if k == "neg":
        return -evaluate(e.args[0], env)
    if k == "abs":
        return np.abs(evaluate(e.args[0], env))
    if k == "sign":
        return np.sign(evaluate(e.args[0], env))
    if k == "pow":
        return evaluate(e.args[0], env) ** e.exponent
    a = evaluate(e.args[0], env)
    b = evaluate(e.args[1], env)
    if k == "add":
        return a + b
    if k == "sub":
        return a - b
    if k == "mul":
        return a * b
    if k == "div":
        if np.any(np.asarray(b) == 0):
            raise EvaluationError("division by zero")
        return a / b
    raise ExprError(f"unknown node kind '{k}'")


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr, variable: str) -> Expr:
    """Exact partial derivative with respect to one variable.

    abs nodes differentiate piecewise to sign(argument) * argument'; at the
    kink the convention sign(0) = 0 applies (see uses_abs_sign_convention).
    """
    k = e.kind
    if k == "const":
        return const(0.0)
    if k == "var":
        return const(1.0 if e.name == variable else 0.0)
    if k == "neg":
        d = differentiate(e.args[0], variable)
        return const(0.0) if _is_const(d, 0.0) else fold_sub(const(0.0), d)
    if k == "abs":
        u = e.args[0]
        return fold_mul(sign_(u), differentiate(u, variable))
    if k == "sign":
        return const(0.0)  # piecewise constant a.e.
    if k == "pow":
        u, n = e.args[0], e.exponent
        if n == 0:
            return const(0.0)
        return fold_mul(fold_mul(const(float(n)), fold_pow(u, n - 1)),
                        differentiate(u, variable))
    a, b = e.args
    da = differentiate(a, variable)
    db = differentiate(b, variable)
    if k == "add":
        return fold_add(da, db)
    if k == "sub":
        return fold_sub(da, db)
    if k == "mul":
        return fold_add(fold_mul(da, b), fold_mul(a, db))
    if k == "div":
        num = fold_sub(fold_mul(da, b), fold_mul(a, db))
        return div(num, pow_(b, 2))
    raise ExprError(f"unknown node kind '{k}'")


def uses_abs_sign_convention(e: Expr) -> bool:
    """True if evaluation of e invokes sign(), i.e. the abs-kink convention
    sign(0) = 0 can matter at points where an abs argument vanishes."""
    if e.kind == "sign":
        return True
    return any(uses_abs_sign_convention(a) for a in e.args)


# ---------------------------------------------------------------------------
# printing

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "pow": 3, "neg": 4,
         "const": 9, "var": 9, "abs": 9, "sign": 9}


def to_infix(e: Expr) -> str:
    """Render to a string that parse() maps back to an equivalent tree."""
    k = e.kind
    if k == "const":
        return repr(e.value) if e.value >= 0 else f"({e.value!r})"
    if k == "var":
        return e.name
    if k == "abs" or k == "sign":
        return f"{k}({to_infix(e.args[0])})"
    if k == "neg":
        return "-" + _wrap(e.args[0], 5)
    if k == "pow":
        return _wrap(e.args[0], 4) + f"^{e.exponent}"
    a, b = e.args
    op = {"add": " + ", "sub": " - ", "mul": "*", "div": "/"}[k]
    p = _PREC[k]
    # right operand of - and / needs parens at equal precedence
    return _wrap(a, p) + op + _wrap(b, p + 1)


def _wrap(e: Expr, min_prec: int) -> str:
    s = to_infix(e)
    return s if _PREC[e.kind] >= min_prec else f"({s})"


# ---------------------------------------------------------------------------
# parsing

_FUNCTIONS = {"abs": abs_, "sign": sign_}


class _Tokenizer:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def peek(self):
        t = self.text
        i = self.pos
        while i < len(t) and t[i].isspace():
            i += 1
        self.pos = i
        if i >= len(t):
            return ("end", "", i)
        c = t[i]
        if c.isdigit() or c == ".":
            j = i
            while j < len(t) and (t[j].isdigit() or t[j] == "."):
                j += 1
            if j < len(t) and t[j] in "eE":
                k = j + 1
                if k < len(t) and t[k] in "+-":
                    k += 1
                if k < len(t) and t[k].isdigit():
                    j = k
                    while j < len(t) and t[j].isdigit():
                        j += 1
            return ("number", t[i:j], i)
        if c.isalpha() or c == "_":
            j = i
            while j < len(t) and (t[j].isalnum() or t[j] == "_"):
                j += 1
            return ("ident", t[i:j], i)
        if c in "+-*/^()":
            return (c, c, i)
        raise ParseError(f"unexpected character '{c}'", i)

    def next(self):
        tok = self.peek()
        self.pos = tok[2] + len(tok[1])
        return tok


def parse(text: str, variables: Sequence[str]) -> Expr:
    """Parse an arithmetic expression over the declared variables."""
    if not text or not text.strip():
        raise ParseError("empty expression", 0)
    names = list(variables)
    if len(set(names)) != len(names):
        raise ExprError("variable names must be distinct")
    tz = _Tokenizer(text)
    e = _parse_sum(tz, set(names))
    kind, val, pos = tz.peek()
    if kind != "end":
        raise ParseError(f"unexpected token '{val}'", pos)
    return e


def _parse_sum(tz, names):
    e = _parse_term(tz, names)
    while True:
        kind, _, _ = tz.peek()
        if kind == "+":
            tz.next()
            e = add(e, _parse_term(tz, names))
        elif kind == "-":
            tz.next()
            e = sub(e, _parse_term(tz, names))
        else:
            return e


def _parse_term(tz, names):
    e = _parse_power(tz, names)
    while True:
        kind, _, _ = tz.peek()
        if kind == "*":
            tz.next()
            e = mul(e, _parse_power(tz, names))
        elif kind == "/":
            tz.next()
            e = div(e, _parse_power(tz, names))
        else:
            return e


def _parse_power(tz, names):
    base = _parse_unary(tz, names)
    kind, _, _ = tz.peek()
    if kind != "^":
        return base
    tz.next()
    k, val, pos = tz.next()
    if k != "number" or not val.isdigit():
        raise ParseError("power exponent must be a non-negative integer literal", pos)
    return pow_(base, int(val))


def _parse_unary(tz, names):
    kind, _, _ = tz.peek()
    if kind == "-":
        tz.next()
        return neg(_parse_unary(tz, names))
    return _parse_atom(tz, names)


def _parse_atom(tz, names):
    kind, val, pos = tz.next()
    if kind == "number":
        try:
            return const(float(val))
        except ValueError:
            raise ParseError(f"malformed number '{val}'", pos) from None
    if kind == "ident":
        nxt, _, _ = tz.peek()
        if nxt == "(":
            if val not in _FUNCTIONS:
                raise ParseError(f"unknown function '{val}'", pos)
            tz.next()
            inner = _parse_sum(tz, names)
            k, v, p = tz.next()
            if k != ")":
                raise ParseError("expected ')'", p)
            return _FUNCTIONS[val](inner)
        if val not in names:
            raise UnknownVariableError(val, pos)
        return var(val)
    if kind == "(":
        inner = _parse_sum(tz, names)
        k, v, p = tz.next()
        if k != ")":
            raise ParseError("expected ')'", p)
        return inner
    if kind == "end":
        raise ParseError("unexpected end of expression", pos)
    raise ParseError(f"unexpected token '{val}'", pos)


# ---------------------------------------------------------------------------
# compilation (fast path; semantics match evaluate() except that division by
# zero follows IEEE rules instead of raising)

def _to_source(e: Expr, arg_of: Mapping[str, str]) -> str:
    k = e.kind
    if k == "const":
        return repr(e.value)
    if k == "var":
        return arg_of[e.name]
    if k == "neg":
        return f"(-{_to_source(e.args[0], arg_of)})"
    if k == "abs":
        return f"np.abs({_to_source(e.args[0], arg_of)})"
    if k == "sign":
        return f"np.sign({_to_source(e.args[0], arg_of)})"
    if k == "pow":
        return f"({_to_source(e.args[0], arg_of)})**{e.exponent}"
    a = _to_source(e.args[0], arg_of)
    b = _to_source(e.args[1], arg_of)
    op = {"add": "+", "sub": "-", "mul": "*", "div": "/"}[k]
    return f"({a}{op}{b})"


def compile_components(components: Iterable[Expr],
                       variables: Sequence[str]) -> Callable:
    """Compile expressions to one function of the state components.

    Returns fn(v0, v1, ...) -> tuple of values; arguments follow the declared
    variable order and may be floats or numpy arrays.
    """
    arg_of = {name: f"v{i}" for i, name in enumerate(variables)}
    args = ", ".join(arg_of[n] for n in variables)
    body = ", ".join(_to_source(c, arg_of) for c in components)
    src = f"lambda {args}: ({body},)"
    return eval(src, {"np": np})  # noqa: S307 - generated from validated ASTs


# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VectorExpr:
    """Ordered expression components over a shared variable list."""

    variables: tuple
    components: tuple

    @classmethod
    def parse_components(cls, texts: Sequence[str],
                         variables: Sequence[str]) -> "VectorExpr":
        vs = tuple(variables)
        return cls(vs, tuple(parse(t, vs) for t in texts))

    @classmethod
    def zeros(cls, dim: int, variables: Sequence[str]) -> "VectorExpr":
        return cls(tuple(variables), tuple(const(0.0) for _ in range(dim)))

    @property
    def dim(self) -> int:
        return len(self.components)

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def jacobian_exprs(self) -> tuple:
        return tuple(
            tuple(differentiate(c, v) for v in self.variables)
            for c in self.components
        )

    @cached_property
    def compiled(self) -> Callable:
        return compile_components(self.components, self.variables)

    @cached_property
    def compiled_jacobian(self) -> Callable:
        flat = [d for row in self.jacobian_exprs() for d in row]
        return compile_components(flat, self.variables)

    def eval(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        env = {name: x[i] for i, name in enumerate(self.variables)}
        return np.array([evaluate(c, env) for c in self.components], dtype=float)

    def __str__(self) -> str:
        return "[" + ", ".join(to_infix(c) for c in self.components) + "]"
