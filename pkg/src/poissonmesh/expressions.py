"""Scalar expression language used for all coefficient functions.

The language covers float literals, coordinates ``x1 .. xm``, free named
parameters, the operators ``+ - * / **`` with unary minus, and a fixed set
of elementary functions.  Expressions are immutable trees; construction,
differentiation and partial evaluation apply numeric constant folding plus
the 0/1 identities, and nothing else (no algebraic simplification), so the
printed form of a result stays predictable.

Singular evaluations never raise: they produce IEEE inf/-inf/nan.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence, Union

import numpy as np

__all__ = [
    "Expression",
    "Num",
    "Coord",
    "Param",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "Pow",
    "Call",
    "ExpressionError",
    "UnboundParameterError",
    "CompiledFunction",
    "parse",
    "differentiate",
    "compile_expression",
    "partial_eval",
    "to_source",
]

FUNCTION_NAMES = (
    "exp",
    "log",
    "sqrt",
    "abs",
    "sign",
    "sin",
    "cos",
    "tan",
    "sinh",
    "cosh",
    "tanh",
)


class ExpressionError(ValueError):
    """Invalid source text or an invalid operation on an expression."""

    def __init__(self, message: str, position: int | None = None):
        if position is not None:
            message = f"{message} (at position {position})"
        super().__init__(message)
        self.position = position


class UnboundParameterError(ExpressionError):
    """A compilation or evaluation was missing parameter bindings."""

    def __init__(self, names: Sequence[str]):
        self.names = tuple(sorted(names))
        super().__init__("unbound parameters: " + ", ".join(self.names))


# --- Scalar arithmetic ------------------------------------------------------
#
# Fast path is plain Python floats; anything the float type refuses
# (division by zero, overflow in **, complex results) falls back to numpy
# float64 with errors suppressed so the IEEE result comes through.


def _np_scalar(op: Callable, *args: float) -> float:
    with np.errstate(all="ignore"):
        return float(op(*[np.float64(a) for a in args]))


def _scalar_add(a: float, b: float) -> float:
    return a + b


def _scalar_sub(a: float, b: float) -> float:
    return a - b


def _scalar_mul(a: float, b: float) -> float:
    return a * b


def _scalar_div(a: float, b: float) -> float:
    try:
        return a / b
    except ZeroDivisionError:
        return _np_scalar(np.divide, a, b)


def _scalar_pow(a: float, b: float) -> float:
    try:
        r = a**b
    except (OverflowError, ZeroDivisionError, ValueError):
        return _np_scalar(np.power, a, b)
    if isinstance(r, complex):
        return _np_scalar(np.power, a, b)
    return float(r)


def _scalar_sign(v: float) -> float:
    if math.isnan(v):
        return math.nan
    if v == 0.0:
        return 0.0
    return math.copysign(1.0, v)


def _wrap_math(fn: Callable[[float], float], np_fn: Callable) -> Callable[[float], float]:
    def call(v: float) -> float:
        try:
            return fn(v)
        except (ValueError, OverflowError):
            return _np_scalar(np_fn, v)

    return call


_SCALAR_CALLS: dict[str, Callable[[float], float]] = {
    "exp": _wrap_math(math.exp, np.exp),
    "log": _wrap_math(math.log, np.log),
    "sqrt": _wrap_math(math.sqrt, np.sqrt),
    "abs": abs,
    "sign": _scalar_sign,
    "sin": _wrap_math(math.sin, np.sin),
    "cos": _wrap_math(math.cos, np.cos),
    "tan": _wrap_math(math.tan, np.tan),
    "sinh": _wrap_math(math.sinh, np.sinh),
    "cosh": _wrap_math(math.cosh, np.cosh),
    "tanh": _wrap_math(math.tanh, np.tanh),
}

_BLOCK_CALLS: dict[str, Callable] = {
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "sign": np.sign,
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "sinh": np.sinh,
    "cosh": np.cosh,
    "tanh": np.tanh,
}


# --- AST --------------------------------------------------------------------


@dataclass(frozen=True)
class Expression:
    """Base class for all expression nodes."""

    def free_parameters(self) -> frozenset[str]:
        names: set[str] = set()
        _collect_parameters(self, names)
        return frozenset(names)

    def max_coordinate(self) -> int:
        return _max_coordinate(self)

    def evaluate(
        self,
        point: Sequence[float],
        params: Mapping[str, float] | None = None,
    ) -> float:
        """Tree-walk evaluation at a single point."""
        return _tree_eval(self, point, params or {})

    def __str__(self) -> str:
        return to_source(self)


@dataclass(frozen=True)
class Num(Expression):
    value: float


@dataclass(frozen=True)
class Coord(Expression):
    index: int  # 1-based


@dataclass(frozen=True)
class Param(Expression):
    name: str


@dataclass(frozen=True)
class Neg(Expression):
    child: Expression


@dataclass(frozen=True)
class Add(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Sub(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Mul(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Div(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Pow(Expression):
    left: Expression
    right: Expression


@dataclass(frozen=True)
class Call(Expression):
    fn: str
    arg: Expression


def _collect_parameters(e: Expression, names: set[str]) -> None:
    if isinstance(e, Param):
        names.add(e.name)
    elif isinstance(e, Neg):
        _collect_parameters(e.child, names)
    elif isinstance(e, (Add, Sub, Mul, Div, Pow)):
        _collect_parameters(e.left, names)
        _collect_parameters(e.right, names)
    elif isinstance(e, Call):
        _collect_parameters(e.arg, names)


def _max_coordinate(e: Expression) -> int:
    if isinstance(e, Coord):
        return e.index
    if isinstance(e, Neg):
        return _max_coordinate(e.child)
    if isinstance(e, (Add, Sub, Mul, Div, Pow)):
        return max(_max_coordinate(e.left), _max_coordinate(e.right))
    if isinstance(e, Call):
        return _max_coordinate(e.arg)
    return 0


# --- Folding constructors ---------------------------------------------------
#
# Every code path that builds expressions goes through these, so folded
# forms are canonical: rendering and re-parsing reproduces the same tree.


def _is_num(e: Expression, value: float | None = None) -> bool:
    if not isinstance(e, Num):
        return False
    return value is None or e.value == value


def fold_neg(u: Expression) -> Expression:
    if isinstance(u, Num):
        return Num(-u.value)
    if isinstance(u, Neg):
        return u.child
    if isinstance(u, Mul) and isinstance(u.left, Num):
        return Mul(Num(-u.left.value), u.right)
    return Neg(u)


def fold_add(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(_scalar_add(a.value, b.value))
    if _is_num(a, 0.0):
        return b
    if _is_num(b, 0.0):
        return a
    return Add(a, b)


def fold_sub(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(_scalar_sub(a.value, b.value))
    if _is_num(b, 0.0):
        return a
    if _is_num(a, 0.0):
        return fold_neg(b)
    return Sub(a, b)


def fold_mul(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(_scalar_mul(a.value, b.value))
    if _is_num(a, 0.0) or _is_num(b, 0.0):
        return Num(0.0)
    if _is_num(a, 1.0):
        return b
    if _is_num(b, 1.0):
        return a
    return Mul(a, b)


def fold_div(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(_scalar_div(a.value, b.value))
    if _is_num(b, 1.0):
        return a
    if _is_num(a, 0.0):
        return Num(0.0)
    return Div(a, b)


def fold_pow(a: Expression, b: Expression) -> Expression:
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(_scalar_pow(a.value, b.value))
    if _is_num(b, 1.0):
        return a
    if _is_num(b, 0.0):
        return Num(1.0)
    if _is_num(a, 1.0):
        return Num(1.0)
    return Pow(a, b)


def fold_call(fn: str, arg: Expression) -> Expression:
    if isinstance(arg, Num):
        return Num(_SCALAR_CALLS[fn](arg.value))
    return Call(fn, arg)


# --- Tokenizer and parser ---------------------------------------------------

_NUM_RE = re.compile(r"(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z_0-9]*")
_COORD_RE = re.compile(r"^x(\d+)$")


@dataclass(frozen=True)
class _Token:
    kind: str  # 'num' | 'ident' | 'op' | 'end'
    text: str
    pos: int


def _tokenize(source: str) -> list[_Token]:
    tokens = []
    pos = 0
    n = len(source)
    while pos < n:
        ch = source[pos]
        if ch.isspace():
            pos += 1
            continue
        if source.startswith("**", pos):
            tokens.append(_Token("op", "**", pos))
            pos += 2
            continue
        if ch in "+-*/()":
            tokens.append(_Token("op", ch, pos))
            pos += 1
            continue
        match = _NUM_RE.match(source, pos)
        if match:
            tokens.append(_Token("num", match.group(0), pos))
            pos = match.end()
            continue
        match = _IDENT_RE.match(source, pos)
        if match:
            tokens.append(_Token("ident", match.group(0), pos))
            pos = match.end()
            continue
        raise ExpressionError(f"unexpected character {ch!r}", pos)
    tokens.append(_Token("end", "", n))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token], dim: int):
        self.tokens = tokens
        self.dim = dim
        self.index = 0

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect_op(self, text: str) -> None:
        token = self.peek()
        if token.kind != "op" or token.text != text:
            raise ExpressionError(f"expected {text!r}", token.pos)
        self.advance()

    def parse_sum(self) -> Expression:
        node = self.parse_term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance().text
            right = self.parse_term()
            node = fold_add(node, right) if op == "+" else fold_sub(node, right)
        return node

    def parse_term(self) -> Expression:
        node = self.parse_unary()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance().text
            right = self.parse_unary()
            node = fold_mul(node, right) if op == "*" else fold_div(node, right)
        return node

    def parse_unary(self) -> Expression:
        token = self.peek()
        if token.kind == "op" and token.text == "-":
            self.advance()
            return fold_neg(self.parse_unary())
        if token.kind == "op" and token.text == "+":
            self.advance()
            return self.parse_unary()
        return self.parse_power()

    def parse_power(self) -> Expression:
        base = self.parse_atom()
        token = self.peek()
        if token.kind == "op" and token.text == "**":
            self.advance()
            # Right associative; exponent may carry a unary sign.
            exponent = self.parse_unary()
            return fold_pow(base, exponent)
        return base

    def parse_atom(self) -> Expression:
        token = self.advance()
        if token.kind == "num":
            return Num(float(token.text))
        if token.kind == "ident":
            if self.peek().kind == "op" and self.peek().text == "(":
                if token.text not in _SCALAR_CALLS:
                    raise ExpressionError(f"unknown function {token.text!r}", token.pos)
                self.advance()
                arg = self.parse_sum()
                self.expect_op(")")
                return fold_call(token.text, arg)
            coord = _COORD_RE.match(token.text)
            if coord:
                index = int(coord.group(1))
                if index < 1 or index > self.dim:
                    raise ExpressionError(
                        f"coordinate {token.text} out of range for dimension {self.dim}",
                        token.pos,
                    )
                return Coord(index)
            return Param(token.text)
        if token.kind == "op" and token.text == "(":
            node = self.parse_sum()
            self.expect_op(")")
            return node
        if token.kind == "end":
            raise ExpressionError("unexpected end of input", token.pos)
        raise ExpressionError(f"unexpected token {token.text!r}", token.pos)


def parse(source: str, dim: int) -> Expression:
    """Parse ``source`` into an Expression valid in dimension ``dim``.

    Identifiers of the shape x<k> with 1 <= k <= dim are coordinates; any
    other identifier not followed by '(' is a free parameter.  A coordinate
    index outside 1..dim is an error, not a parameter.
    """
    if dim < 1:
        raise ExpressionError(f"dimension must be >= 1, got {dim}")
    if not isinstance(source, str):
        raise ExpressionError(f"expression source must be text, got {type(source).__name__}")
    parser = _Parser(_tokenize(source), dim)
    node = parser.parse_sum()
    trailing = parser.peek()
    if trailing.kind != "end":
        raise ExpressionError(f"unexpected token {trailing.text!r}", trailing.pos)
    return node


# --- Differentiation --------------------------------------------------------


def differentiate(e: Expression, index: int) -> Expression:
    """Symbolic partial derivative w.r.t. the 1-based coordinate ``index``."""
    if index < 1:
        raise ExpressionError(f"coordinate index must be >= 1, got {index}")
    if isinstance(e, (Num, Param)):
        return Num(0.0)
    if isinstance(e, Coord):
        return Num(1.0 if e.index == index else 0.0)
    if isinstance(e, Neg):
        return fold_neg(differentiate(e.child, index))
    if isinstance(e, Add):
        return fold_add(differentiate(e.left, index), differentiate(e.right, index))
    if isinstance(e, Sub):
        return fold_sub(differentiate(e.left, index), differentiate(e.right, index))
    if isinstance(e, Mul):
        du = differentiate(e.left, index)
        dv = differentiate(e.right, index)
        return fold_add(fold_mul(du, e.right), fold_mul(e.left, dv))
    if isinstance(e, Div):
        du = differentiate(e.left, index)
        dv = differentiate(e.right, index)
        numerator = fold_sub(fold_mul(du, e.right), fold_mul(e.left, dv))
        return fold_div(numerator, fold_mul(e.right, e.right))
    if isinstance(e, Pow):
        du = differentiate(e.left, index)
        if _max_coordinate(e.right) == 0:
            # Exponent is constant in the coordinates: plain power rule.
            lowered = fold_pow(e.left, fold_sub(e.right, Num(1.0)))
            return fold_mul(fold_mul(e.right, lowered), du)
        dv = differentiate(e.right, index)
        logs = fold_add(
            fold_mul(dv, fold_call("log", e.left)),
            fold_div(fold_mul(e.right, du), e.left),
        )
        return fold_mul(e, logs)
    if isinstance(e, Call):
        du = differentiate(e.arg, index)
        u = e.arg
        if e.fn == "exp":
            return fold_mul(e, du)
        if e.fn == "log":
            return fold_div(du, u)
        if e.fn == "sqrt":
            return fold_div(du, fold_mul(Num(2.0), e))
        if e.fn == "abs":
            # sign(0) = 0 exactly, so the derivative of |u| at u = 0 is 0.
            return fold_mul(fold_call("sign", u), du)
        if e.fn == "sign":
            return Num(0.0)
        if e.fn == "sin":
            return fold_mul(fold_call("cos", u), du)
        if e.fn == "cos":
            return fold_neg(fold_mul(fold_call("sin", u), du))
        if e.fn == "tan":
            return fold_div(du, fold_pow(fold_call("cos", u), Num(2.0)))
        if e.fn == "sinh":
            return fold_mul(fold_call("cosh", u), du)
        if e.fn == "cosh":
            return fold_mul(fold_call("sinh", u), du)
        if e.fn == "tanh":
            return fold_div(du, fold_pow(fold_call("cosh", u), Num(2.0)))
    raise ExpressionError(f"cannot differentiate node {type(e).__name__}")


# --- Rendering --------------------------------------------------------------
#
# Compact canonical text: no whitespace, shortest round-trip float literals,
# minimal parentheses.  Rendering then re-parsing returns a structurally
# identical tree.

_PREC_ADD = 10
_PREC_MUL = 20
_PREC_NEG = 25
_PREC_POW = 30
_PREC_ATOM = 40


def _format_number(value: float) -> str:
    if math.isinf(value):
        return "1e999" if value > 0 else "-1e999"
    if math.isnan(value):
        return "(0.0/0.0)"
    return repr(value)


def _prec(e: Expression) -> int:
    if isinstance(e, Num):
        # The sign-bit check catches -0.0, whose literal also starts with '-'.
        negative = math.isnan(e.value) or math.copysign(1.0, e.value) < 0
        return _PREC_NEG if negative else _PREC_ATOM
    if isinstance(e, (Coord, Param, Call)):
        return _PREC_ATOM
    if isinstance(e, Pow):
        return _PREC_POW
    if isinstance(e, Neg):
        return _PREC_NEG
    if isinstance(e, (Mul, Div)):
        return _PREC_MUL
    return _PREC_ADD


def _render(e: Expression, context: int) -> str:
    if isinstance(e, Num):
        text = _format_number(e.value)
    elif isinstance(e, Coord):
        text = f"x{e.index}"
    elif isinstance(e, Param):
        text = e.name
    elif isinstance(e, Call):
        text = f"{e.fn}({_render(e.arg, 0)})"
    elif isinstance(e, Neg):
        text = "-" + _render(e.child, _PREC_NEG + 1)
    elif isinstance(e, Add):
        text = _render(e.left, _PREC_ADD) + "+" + _render(e.right, _PREC_ADD + 1)
    elif isinstance(e, Sub):
        text = _render(e.left, _PREC_ADD) + "-" + _render(e.right, _PREC_ADD + 1)
    elif isinstance(e, Mul):
        text = _render(e.left, _PREC_MUL) + "*" + _render(e.right, _PREC_MUL + 1)
    elif isinstance(e, Div):
        text = _render(e.left, _PREC_MUL) + "/" + _render(e.right, _PREC_MUL + 1)
    elif isinstance(e, Pow):
        text = _render(e.left, _PREC_POW + 1) + "**" + _render(e.right, _PREC_NEG)
    else:
        raise ExpressionError(f"cannot render node {type(e).__name__}")
    if _prec(e) < context:
        return "(" + text + ")"
    return text


def to_source(e: Expression) -> str:
    """Canonical compact source text of ``e``."""
    return _render(e, 0)


# --- Tree-walk evaluation ---------------------------------------------------


def _tree_eval(e: Expression, point: Sequence[float], params: Mapping[str, float]) -> float:
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Coord):
        return float(point[e.index - 1])
    if isinstance(e, Param):
        if e.name not in params:
            raise UnboundParameterError([e.name])
        return float(params[e.name])
    if isinstance(e, Neg):
        return -_tree_eval(e.child, point, params)
    if isinstance(e, Add):
        return _scalar_add(_tree_eval(e.left, point, params), _tree_eval(e.right, point, params))
    if isinstance(e, Sub):
        return _scalar_sub(_tree_eval(e.left, point, params), _tree_eval(e.right, point, params))
    if isinstance(e, Mul):
        return _scalar_mul(_tree_eval(e.left, point, params), _tree_eval(e.right, point, params))
    if isinstance(e, Div):
        return _scalar_div(_tree_eval(e.left, point, params), _tree_eval(e.right, point, params))
    if isinstance(e, Pow):
        return _scalar_pow(_tree_eval(e.left, point, params), _tree_eval(e.right, point, params))
    if isinstance(e, Call):
        return _SCALAR_CALLS[e.fn](_tree_eval(e.arg, point, params))
    raise ExpressionError(f"cannot evaluate node {type(e).__name__}")


# --- Compilation ------------------------------------------------------------

_OP_CONST = 0
_OP_COORD = 1
_OP_ADD = 2
_OP_SUB = 3
_OP_MUL = 4
_OP_DIV = 5
_OP_POW = 6
_OP_NEG = 7
_OP_CALL = 8
_OP_TEE = 9  # copy the top of the stack into a value slot
_OP_LOAD = 10  # push a previously stored slot value

_SCALAR_BINARY = {
    _OP_ADD: _scalar_add,
    _OP_SUB: _scalar_sub,
    _OP_MUL: _scalar_mul,
    _OP_DIV: _scalar_div,
    _OP_POW: _scalar_pow,
}

_BLOCK_BINARY = {
    _OP_ADD: np.add,
    _OP_SUB: np.subtract,
    _OP_MUL: np.multiply,
    _OP_DIV: np.divide,
    _OP_POW: np.power,
}


class CompiledFunction:
    """A flat post-order instruction program over a value stack.

    Instances are pure functions of the evaluation point: all parameters
    were bound at compilation time.  ``__call__`` evaluates one point;
    ``evaluate_block`` evaluates a whole (k, m) array of points at once.
    A subexpression appearing more than once is computed at its first
    occurrence, stored in a value slot, and re-pushed afterwards, so both
    paths evaluate it exactly once per point (or per block).
    """

    __slots__ = ("program", "dim", "expression", "n_slots")

    def __init__(
        self, program: list, dim: int, expression: Expression, n_slots: int = 0
    ):
        self.program = program
        self.dim = dim
        self.expression = expression
        self.n_slots = n_slots

    def __call__(self, point: Sequence[float]) -> float:
        stack: list[float] = []
        push = stack.append
        slots = [0.0] * self.n_slots
        for op, arg in self.program:
            if op == _OP_CONST:
                push(arg)
            elif op == _OP_COORD:
                push(float(point[arg]))
            elif op == _OP_NEG:
                stack[-1] = -stack[-1]
            elif op == _OP_CALL:
                stack[-1] = arg[0](stack[-1])
            elif op == _OP_TEE:
                slots[arg] = stack[-1]
            elif op == _OP_LOAD:
                push(slots[arg])
            else:
                b = stack.pop()
                stack[-1] = _SCALAR_BINARY[op](stack[-1], b)
        return stack[0]

    def evaluate_block(self, points: np.ndarray) -> np.ndarray:
        """Evaluate at every row of ``points`` (shape (k, m)) -> shape (k,)."""
        points = np.asarray(points, dtype=float)
        k = points.shape[0]
        stack: list = []
        push = stack.append
        slots: list = [0.0] * self.n_slots
        with np.errstate(all="ignore"):
            for op, arg in self.program:
                if op == _OP_CONST:
                    push(arg)
                elif op == _OP_COORD:
                    push(points[:, arg])
                elif op == _OP_NEG:
                    stack[-1] = -stack[-1]
                elif op == _OP_CALL:
                    top = stack[-1]
                    if isinstance(top, float):
                        stack[-1] = float(arg[1](np.float64(top)))
                    else:
                        stack[-1] = arg[1](top)
                elif op == _OP_TEE:
                    slots[arg] = stack[-1]
                elif op == _OP_LOAD:
                    push(slots[arg])
                else:
                    b = stack.pop()
                    a = stack[-1]
                    if isinstance(a, float) and isinstance(b, float):
                        stack[-1] = _SCALAR_BINARY[op](a, b)
                    else:
                        stack[-1] = _BLOCK_BINARY[op](a, b)
        top = stack[0]
        if isinstance(top, float):
            return np.full(k, top)
        return np.array(top, dtype=float, copy=True)


_BINARY_OPS = {Add: _OP_ADD, Sub: _OP_SUB, Mul: _OP_MUL, Div: _OP_DIV, Pow: _OP_POW}


def _children(e: Expression) -> tuple:
    if isinstance(e, Neg):
        return (e.child,)
    if isinstance(e, Call):
        return (e.arg,)
    if type(e) in _BINARY_OPS:
        return (e.left, e.right)
    return ()


def _count_composites(e: Expression, counts: dict) -> None:
    """Count textual occurrences of composite subtrees, not descending into
    repeats: a subtree inside a shared parent is covered by the parent's slot
    unless it also occurs elsewhere on its own."""
    if isinstance(e, (Num, Coord, Param)):
        return
    seen = counts.get(e, 0)
    counts[e] = seen + 1
    if seen:
        return
    for child in _children(e):
        _count_composites(child, counts)


def _emit(
    e: Expression,
    params: Mapping[str, float],
    out: list,
    counts: Mapping,
    slot_of: dict,
) -> None:
    if isinstance(e, Num):
        out.append((_OP_CONST, float(e.value)))
        return
    if isinstance(e, Coord):
        out.append((_OP_COORD, e.index - 1))
        return
    if isinstance(e, Param):
        out.append((_OP_CONST, float(params[e.name])))
        return
    slot = slot_of.get(e)
    if slot is not None:
        out.append((_OP_LOAD, slot))
        return
    if isinstance(e, Neg):
        _emit(e.child, params, out, counts, slot_of)
        out.append((_OP_NEG, None))
    elif isinstance(e, Call):
        _emit(e.arg, params, out, counts, slot_of)
        out.append((_OP_CALL, e.fn))
    else:
        op = _BINARY_OPS.get(type(e))
        if op is None:
            raise ExpressionError(f"cannot compile node {type(e).__name__}")
        _emit(e.left, params, out, counts, slot_of)
        _emit(e.right, params, out, counts, slot_of)
        out.append((op, None))
    if counts.get(e, 0) > 1:
        slot = len(slot_of)
        slot_of[e] = slot
        out.append((_OP_TEE, slot))


def compile_expression(
    e: Expression, dim: int, params: Mapping[str, float] | None = None
) -> CompiledFunction:
    """Compile ``e`` for dimension ``dim`` with every free parameter bound.

    Raises UnboundParameterError listing the missing names if ``params``
    does not cover the expression's free parameters.
    """
    params = dict(params or {})
    missing = sorted(e.free_parameters() - set(params))
    if missing:
        raise UnboundParameterError(missing)
    top = e.max_coordinate()
    if top > dim:
        raise ExpressionError(f"expression uses x{top}, beyond dimension {dim}")
    counts: dict = {}
    _count_composites(e, counts)
    program: list = []
    slot_of: dict = {}
    _emit(e, params, program, counts, slot_of)
    # Call instructions carry a (scalar fn, block ufunc) pair so neither
    # evaluation path pays a name lookup per call.
    resolved = []
    for op, arg in program:
        if op == _OP_CALL:
            resolved.append((op, (_SCALAR_CALLS[arg], _BLOCK_CALLS[arg])))
        else:
            resolved.append((op, arg))
    return CompiledFunction(resolved, dim, e, n_slots=len(slot_of))


# Alias matching the op name used throughout the docs; kept out of __all__
# so star imports do not shadow the builtin.
compile = compile_expression


# --- Partial evaluation -----------------------------------------------------


def partial_eval(
    e: Expression,
    dim: int | None = None,
    params: Mapping[str, float] | None = None,
    coords: Mapping[int, float] | Sequence[float] | None = None,
) -> Union[float, Expression]:
    """Substitute bound parameters and coordinates, folding constants.

    Returns a plain float when everything folds to a number, otherwise the
    residual Expression (whose str() is the canonical rendering).
    """
    params = params or {}
    if coords is None:
        coord_map: Mapping[int, float] = {}
    elif isinstance(coords, Mapping):
        coord_map = {int(k): float(v) for k, v in coords.items()}
    else:
        coord_map = {i + 1: float(v) for i, v in enumerate(coords)}
    if dim is not None:
        top = e.max_coordinate()
        if top > dim:
            raise ExpressionError(f"expression uses x{top}, beyond dimension {dim}")
    result = _substitute(e, params, coord_map)
    if isinstance(result, Num):
        return float(result.value)
    return result


def _substitute(
    e: Expression, params: Mapping[str, float], coords: Mapping[int, float]
) -> Expression:
    if isinstance(e, Num):
        return e
    if isinstance(e, Coord):
        if e.index in coords:
            return Num(float(coords[e.index]))
        return e
    if isinstance(e, Param):
        if e.name in params:
            return Num(float(params[e.name]))
        return e
    if isinstance(e, Neg):
        return fold_neg(_substitute(e.child, params, coords))
    if isinstance(e, Add):
        return fold_add(_substitute(e.left, params, coords), _substitute(e.right, params, coords))
    if isinstance(e, Sub):
        return fold_sub(_substitute(e.left, params, coords), _substitute(e.right, params, coords))
    if isinstance(e, Mul):
        return fold_mul(_substitute(e.left, params, coords), _substitute(e.right, params, coords))
    if isinstance(e, Div):
        return fold_div(_substitute(e.left, params, coords), _substitute(e.right, params, coords))
    if isinstance(e, Pow):
        return fold_pow(_substitute(e.left, params, coords), _substitute(e.right, params, coords))
    if isinstance(e, Call):
        return fold_call(e.fn, _substitute(e.arg, params, coords))
    raise ExpressionError(f"cannot substitute into node {type(e).__name__}")
