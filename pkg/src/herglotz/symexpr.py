"""Expression trees for Lagrangians and constraints.

Text is parsed into small immutable trees (:class:`Const`, :class:`Var`,
:class:`Unary`, :class:`Binary`), differentiated structurally, simplified by
rewriting to a fixpoint and evaluated either by walking the tree or through
:func:`compile_exprs`, which emits one Python function for a batch of
expressions and is what the integrator calls at every stage.

Grammar::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := ("-")? power
    power  := atom ("^" factor)?
    atom   := number | ident | ident "(" expr ")" | "(" expr ")"

so ``-a^2`` is ``-(a^2)``, ``a-b-c`` is ``(a-b)-c`` and ``a^b^c`` is
``a^(b^c)``.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

__all__ = [
    "Expr", "Const", "Var", "Unary", "Binary",
    "ExprSyntaxError", "UndeclaredIdentifierError", "EvalDomainError",
    "UnboundVariableError",
    "FUNCTIONS", "parse_expr", "differentiate", "simplify", "evaluate",
    "free_vars", "to_text", "compile_exprs", "CompiledExprs",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "ln", "sqrt")
UNARY_OPS = ("neg",) + FUNCTIONS
BINARY_OPS = ("add", "sub", "mul", "div", "pow")


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} at offset {offset}")
        self.offset = offset


class UndeclaredIdentifierError(ValueError):
    def __init__(self, name: str, offset: int):
        super().__init__(f"undeclared identifier {name!r} at offset {offset}")
        self.name = name
        self.offset = offset


class EvalDomainError(ArithmeticError):
    """Evaluation left the real domain (ln of x <= 0, x/0, 0^-1, ...)."""

    def __init__(self, message: str, subexpr: "Expr"):
        super().__init__(f"{message}: {to_text(subexpr)}")
        self.subexpr = subexpr


class UnboundVariableError(LookupError):
    def __init__(self, name: str):
        super().__init__(f"variable {name!r} is not bound")
        self.name = name


# ---------------------------------------------------------------------------
# tree nodes


class Expr:
    """Base class of expression nodes. Nodes are frozen and compare structurally."""

    __slots__ = ()

    def __add__(self, other):
        return Binary("add", self, _lift(other))

    def __radd__(self, other):
        return Binary("add", _lift(other), self)

    def __sub__(self, other):
        return Binary("sub", self, _lift(other))

    def __rsub__(self, other):
        return Binary("sub", _lift(other), self)

    def __mul__(self, other):
        return Binary("mul", self, _lift(other))

    def __rmul__(self, other):
        return Binary("mul", _lift(other), self)

    def __truediv__(self, other):
        return Binary("div", self, _lift(other))

    def __rtruediv__(self, other):
        return Binary("div", _lift(other), self)

    def __pow__(self, other):
        return Binary("pow", self, _lift(other))

    def __neg__(self):
        return Unary("neg", self)

    def __str__(self):
        return to_text(self)


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return f"Const({self.value!r})"


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str

    def __repr__(self):
        return f"Var({self.name!r})"


@dataclass(frozen=True, repr=False)
class Unary(Expr):
    op: str
    arg: Expr

    def __post_init__(self):
        if self.op not in UNARY_OPS:
            raise ValueError(f"unknown unary op {self.op!r}")

    def __repr__(self):
        return f"Unary({self.op!r}, {self.arg!r})"


@dataclass(frozen=True, repr=False)
class Binary(Expr):
    op: str
    left: Expr
    right: Expr

    def __post_init__(self):
        if self.op not in BINARY_OPS:
            raise ValueError(f"unknown binary op {self.op!r}")

    def __repr__(self):
        return f"Binary({self.op!r}, {self.left!r}, {self.right!r})"


def _lift(x) -> Expr:
    if isinstance(x, Expr):
        return x
    if isinstance(x, str):
        return Var(x)
    return Const(float(x))


ZERO = Const(0.0)
ONE = Const(1.0)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^()])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), _byte_offset(text, pos)))
        pos = m.end()
    tokens.append(("eof", "", _byte_offset(text, len(text))))
    return tokens


def _byte_offset(text: str, index: int) -> int:
    return len(text[:index].encode("utf-8"))


class _Parser:
    def __init__(self, text: str, declared: frozenset | None):
        self.tokens = _tokenize(text)
        self.i = 0
        self.declared = declared

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind != "op":
            what = "end of input" if kind == "eof" else repr(text)
            raise ExprSyntaxError(f"expected {value!r}, found {what}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, off = self.peek()
        if kind != "eof":
            raise ExprSyntaxError(f"unexpected {text!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = "add" if self.take()[1] == "+" else "sub"
            e = Binary(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = "mul" if self.take()[1] == "*" else "div"
            e = Binary(op, e, self.factor())
        return e

    def factor(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return Unary("neg", self.power())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return Binary("pow", base, self.factor())
        return base

    def atom(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Const(float(text))
        if kind == "ident":
            if self.peek()[:2] == ("op", "("):
                if text not in FUNCTIONS:
                    raise ExprSyntaxError(f"unknown function {text!r}", off)
                self.take()
                arg = self.expr()
                self.expect(")")
                return Unary(text, arg)
            if text in FUNCTIONS:
                raise ExprSyntaxError(f"expected '(' after function {text!r}", self.peek()[2])
            if self.declared is not None and text not in self.declared:
                raise UndeclaredIdentifierError(text, off)
            return Var(text)
        if (kind, text) == ("op", "("):
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "eof" else repr(text)
        raise ExprSyntaxError(f"unexpected {what}", off)


def parse_expr(text: str, declared_vars: Iterable[str] | None = None) -> Expr:
    """Parse ``text`` into an expression tree.

    Parameters
    ----------
    text : str
        Expression source, see the module docstring for the grammar.
    declared_vars : iterable of str, optional
        Legal identifiers. Any other identifier raises
        :class:`UndeclaredIdentifierError`. ``None`` accepts every identifier.

    Raises
    ------
    ExprSyntaxError
        With the byte offset of the offending token.
    UndeclaredIdentifierError
        Naming the identifier.
    """
    declared = None if declared_vars is None else frozenset(declared_vars)
    return _Parser(text, declared).parse()


# ---------------------------------------------------------------------------
# rendering

_PREC = {"add": 1, "sub": 1, "mul": 2, "div": 2, "neg": 3, "pow": 4}
_SYM = {"add": " + ", "sub": " - ", "mul": "*", "div": "/", "pow": "^"}


def _prec(e: Expr) -> int:
    if isinstance(e, Binary):
        return _PREC[e.op]
    if isinstance(e, Unary) and e.op == "neg":
        return 3
    if isinstance(e, Const) and (e.value < 0 or math.copysign(1.0, e.value) < 0):
        return 3
    return 5


def _render(e: Expr, min_prec: int) -> str:
    if isinstance(e, Const):
        x = float(e.value)
        s = str(int(x)) if x.is_integer() and abs(x) < 1e15 and str(x) != "-0.0" else repr(x)
    elif isinstance(e, Var):
        s = e.name
    elif isinstance(e, Unary):
        if e.op == "neg":
            s = "-" + _render(e.arg, 4)
        else:
            return f"{e.op}({_render(e.arg, 0)})"
    else:
        p = _PREC[e.op]
        if e.op == "pow":
            s = _render(e.left, 5) + "^" + _render(e.right, 3)
        else:
            s = _render(e.left, p) + _SYM[e.op] + _render(e.right, p + 1)
    return f"({s})" if _prec(e) < min_prec else s


def to_text(e: Expr) -> str:
    """Render ``e`` so that ``parse_expr(to_text(e))`` rebuilds the same tree.

    Negative literal constants (only produced by :func:`simplify`) come back
    as a negated positive literal.
    """
    return _render(e, 0)


# ---------------------------------------------------------------------------
# evaluation


def _pow(a: float, b: float) -> float:
    return math.pow(a, b)


_FUNC_IMPL: dict[str, Callable[[float], float]] = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "ln": math.log,
    "sqrt": math.sqrt,
}


def _apply_unary(e: Unary, x: float) -> float:
    if e.op == "neg":
        return -x
    if e.op == "ln" and not x > 0:
        raise EvalDomainError("logarithm of non-positive value", e)
    if e.op == "sqrt" and x < 0:
        raise EvalDomainError("square root of negative value", e)
    try:
        return _FUNC_IMPL[e.op](x)
    except (ValueError, OverflowError) as exc:
        raise EvalDomainError(f"{e.op} failed ({exc})", e) from None


def _apply_binary(e: Binary, a: float, b: float) -> float:
    op = e.op
    if op == "add":
        return a + b
    if op == "sub":
        return a - b
    if op == "mul":
        return a * b
    if op == "div":
        if b == 0:
            raise EvalDomainError("division by zero", e)
        return a / b
    if a == 0 and b < 0:
        raise EvalDomainError("zero raised to a negative power", e)
    if a < 0 and b != math.floor(b):
        raise EvalDomainError("negative base with non-integer exponent", e)
    try:
        return _pow(a, b)
    except (ValueError, OverflowError) as exc:
        raise EvalDomainError(f"power failed ({exc})", e) from None


def evaluate(e: Expr, binding: Mapping[str, float]) -> float:
    """Evaluate ``e`` in IEEE double precision.

    Every free variable must be present in ``binding``; there are no defaults.
    Domain failures raise :class:`EvalDomainError` carrying the offending
    subexpression.
    """
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        try:
            return float(binding[e.name])
        except KeyError:
            raise UnboundVariableError(e.name) from None
    if isinstance(e, Unary):
        return _apply_unary(e, evaluate(e.arg, binding))
    return _apply_binary(e, evaluate(e.left, binding), evaluate(e.right, binding))


@lru_cache(maxsize=4096)
def free_vars(e: Expr) -> frozenset:
    if isinstance(e, Const):
        return frozenset()
    if isinstance(e, Var):
        return frozenset((e.name,))
    if isinstance(e, Unary):
        return free_vars(e.arg)
    return free_vars(e.left) | free_vars(e.right)


# ---------------------------------------------------------------------------
# simplification


def _is_const(e: Expr, value: float | None = None) -> bool:
    return isinstance(e, Const) and (value is None or e.value == value)


def _fold(e: Expr) -> Expr:
    try:
        if isinstance(e, Unary):
            v = _apply_unary(e, e.arg.value)
        else:
            v = _apply_binary(e, e.left.value, e.right.value)
    except EvalDomainError:
        return e
    if not math.isfinite(v):
        return e
    return Const(v)


def _rewrite(e: Expr) -> Expr:
    """One bottom-up pass of the rule set."""
    if isinstance(e, (Const, Var)):
        return e
    if isinstance(e, Unary):
        a = _rewrite(e.arg)
        if e.op == "neg":
            if isinstance(a, Unary) and a.op == "neg":
                return a.arg
            if isinstance(a, Const):
                return Const(-a.value)
        node = Unary(e.op, a)
        return _fold(node) if isinstance(a, Const) else node

    a, b, op = _rewrite(e.left), _rewrite(e.right), e.op
    if isinstance(a, Const) and isinstance(b, Const):
        return _fold(Binary(op, a, b))

    if op == "add":
        if _is_const(a, 0):
            return b
        if _is_const(b, 0):
            return a
        if isinstance(b, Unary) and b.op == "neg":
            return Binary("sub", a, b.arg)
        if isinstance(a, Unary) and a.op == "neg":
            return Binary("sub", b, a.arg)
    elif op == "sub":
        if _is_const(b, 0):
            return a
        if _is_const(a, 0):
            return Unary("neg", b)
        if a == b:
            return ZERO
        if isinstance(b, Unary) and b.op == "neg":
            return Binary("add", a, b.arg)
    elif op == "mul":
        if _is_const(a, 0) or _is_const(b, 0):
            return ZERO
        if _is_const(a, 1):
            return b
        if _is_const(b, 1):
            return a
        if _is_const(a, -1):
            return Unary("neg", b)
        if _is_const(b, -1):
            return Unary("neg", a)
        if isinstance(b, Const):
            a, b = b, a
        if isinstance(a, Const) and isinstance(b, Binary) and b.op == "mul" and isinstance(b.left, Const):
            return Binary("mul", Const(a.value * b.left.value), b.right)
        if isinstance(a, Unary) and a.op == "neg" and isinstance(b, Unary) and b.op == "neg":
            return Binary("mul", a.arg, b.arg)
        if isinstance(a, Unary) and a.op == "neg":
            return Unary("neg", Binary("mul", a.arg, b))
        if isinstance(b, Unary) and b.op == "neg":
            return Unary("neg", Binary("mul", a, b.arg))
    elif op == "div":
        if _is_const(a, 0) and not _is_const(b, 0):
            return ZERO
        if _is_const(b, 1):
            return a
        if isinstance(a, Unary) and a.op == "neg":
            return Unary("neg", Binary("div", a.arg, b))
    elif op == "pow":
        if _is_const(b, 1):
            return a
        if _is_const(b, 0) and not _is_const(a, 0):
            return ONE
        if _is_const(a, 1):
            return ONE
    return Binary(op, a, b)


def simplify(e: Expr) -> Expr:
    """Rewrite ``e`` to a fixpoint of constant folding and identity rules.

    Division by a literal zero is never folded; it surfaces at evaluation.
    The result is semantically, not syntactically, canonical.
    """
    while True:
        new = _rewrite(e)
        if new == e:
            return new
        e = new


# ---------------------------------------------------------------------------
# differentiation


def _d(e: Expr, x: str) -> Expr:
    if x not in free_vars(e):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Unary):
        a = e.arg
        da = _d(a, x)
        if e.op == "neg":
            return -da
        if e.op == "sin":
            return Unary("cos", a) * da
        if e.op == "cos":
            return -(Unary("sin", a) * da)
        if e.op == "tan":
            return da / Unary("cos", a) ** Const(2.0)
        if e.op == "exp":
            return e * da
        if e.op == "ln":
            return da / a
        if e.op == "sqrt":
            return da / (Const(2.0) * e)
        raise AssertionError(e.op)
    a, b, op = e.left, e.right, e.op
    if op in ("add", "sub"):
        return Binary(op, _d(a, x), _d(b, x))
    if op == "mul":
        return _d(a, x) * b + a * _d(b, x)
    if op == "div":
        return (_d(a, x) * b - a * _d(b, x)) / b ** Const(2.0)
    # pow
    if x not in free_vars(b):
        exponent = Const(b.value - 1.0) if isinstance(b, Const) else b - ONE
        return b * a ** exponent * _d(a, x)
    if x not in free_vars(a):
        return e * Unary("ln", a) * _d(b, x)
    return e * (_d(b, x) * Unary("ln", a) + b * _d(a, x) / a)


def differentiate(e: Expr, var: str) -> Expr:
    """Partial derivative of ``e`` with respect to the variable ``var``.

    Every other variable is held constant. Constant exponents use the power
    rule; an exponent depending on ``var`` uses ``a^b (b' ln a + b a'/a)``,
    which is only meaningful where ``a > 0``.
    """
    return simplify(_d(simplify(e), var))


# ---------------------------------------------------------------------------
# compilation


class CompiledExprs:
    """A batch of expressions compiled into one Python function.

    Calling the object with a sequence of argument values (ordered as
    ``argnames``) returns a tuple with one float per expression. Common
    subexpressions are computed once. When the fast path raises, the batch is
    re-evaluated by tree walking so the error names the failing subexpression.
    """

    def __init__(self, exprs: Sequence[Expr], argnames: Sequence[str]):
        self.exprs = tuple(exprs)
        self.argnames = tuple(argnames)
        missing = set().union(*(free_vars(e) for e in self.exprs)) - set(self.argnames)
        if missing:
            raise UnboundVariableError(sorted(missing)[0])
        self.source = _generate_source(self.exprs, self.argnames)
        namespace = {"_m": math, "_pow": _pow}
        exec(compile(self.source, "<compiled-exprs>", "exec"), namespace)
        self._fn = namespace["_compiled"]

    def __call__(self, values: Sequence[float]) -> tuple:
        try:
            return self._fn(*values)
        except (ArithmeticError, ValueError):
            binding = dict(zip(self.argnames, values))
            return tuple(evaluate(e, binding) for e in self.exprs)

    def __len__(self):
        return len(self.exprs)


_PY_FUNC = {"sin": "_m.sin", "cos": "_m.cos", "tan": "_m.tan",
            "exp": "_m.exp", "ln": "_m.log", "sqrt": "_m.sqrt"}
_PY_BIN = {"add": "+", "sub": "-", "mul": "*", "div": "/"}


def _generate_source(exprs: Sequence[Expr], argnames: Sequence[str]) -> str:
    args = {name: f"a{i}" for i, name in enumerate(argnames)}
    temps: dict[Expr, str] = {}
    lines: list[str] = []

    def emit(e: Expr) -> str:
        if isinstance(e, Const):
            return repr(float(e.value)) if math.isfinite(e.value) else f"float({str(e.value)!r})"
        if isinstance(e, Var):
            return args[e.name]
        if e in temps:
            return temps[e]
        if isinstance(e, Unary):
            x = emit(e.arg)
            code = f"-{x}" if e.op == "neg" else f"{_PY_FUNC[e.op]}({x})"
        elif e.op == "pow":
            code = f"_pow({emit(e.left)}, {emit(e.right)})"
        else:
            code = f"{emit(e.left)} {_PY_BIN[e.op]} {emit(e.right)}"
        name = f"t{len(temps)}"
        temps[e] = name
        lines.append(f"    {name} = {code}")
        return name

    outs = [emit(e) for e in exprs]
    head = f"def _compiled({', '.join(args[n] for n in argnames)}):"
    tail = f"    return ({''.join(o + ', ' for o in outs)})"
    return "\n".join([head, *lines, tail]) + "\n"


def compile_exprs(exprs: Sequence[Expr], argnames: Sequence[str]) -> CompiledExprs:
    return CompiledExprs(exprs, argnames)
