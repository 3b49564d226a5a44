"""Coefficient expressions over ``(x, y)`` with an ``eps`` placeholder.

Expressions are written in a small grammar (numbers, ``x``, ``y``, ``eps``,
``pi``, ``+ - * / **``, ``sin``, ``cos``, ``exp``, ``sqrt``, ``log``) and compiled through sympy,
which also supplies the exact spatial gradients.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import sympy as sp

from .errors import ConfigError, EllipticityViolation

X, Y, EPS = sp.symbols("x y eps", real=True)
_NAMES = {"x": X, "y": Y, "eps": EPS, "pi": sp.pi}
_FUNCS = {"sin": sp.sin, "cos": sp.cos, "exp": sp.exp, "sqrt": sp.sqrt, "log": sp.log}
_BINOPS = {ast.Add: lambda a, b: a + b, ast.Sub: lambda a, b: a - b,
           ast.Mult: lambda a, b: a * b, ast.Div: lambda a, b: a / b,
           ast.Pow: lambda a, b: a ** b}


def parse_expression(text: str) -> sp.Expr:
    """Parse ``text`` in the restricted grammar into a sympy expression."""
    try:
        tree = ast.parse(str(text).strip(), mode="eval")
    except SyntaxError as exc:
        raise ConfigError(f"cannot parse expression {text!r}: {exc.msg}") from None

    def walk(node):
        if isinstance(node, ast.Expression):
            return walk(node.body)
        if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
                and not isinstance(node.value, bool):
            return sp.nsimplify(node.value) if isinstance(node.value, int) else sp.Float(node.value)
        if isinstance(node, ast.Name):
            if node.id not in _NAMES:
                raise ConfigError(f"unknown name {node.id!r} in {text!r}")
            return _NAMES[node.id]
        if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
            return _BINOPS[type(node.op)](walk(node.left), walk(node.right))
        if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            v = walk(node.operand)
            return -v if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
                and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
            return _FUNCS[node.func.id](walk(node.args[0]))
        raise ConfigError(f"construct not allowed in expression {text!r}: {ast.dump(node)[:40]}")

    return walk(tree)


def _vectorize(expr: sp.Expr):
    f = sp.lambdify((X, Y), expr, modules="numpy")

    def call(pts):
        pts = np.asarray(pts, dtype=float)
        out = f(pts[..., 0], pts[..., 1])
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1]).copy()

    return call


@dataclass(frozen=True)
class Expression:
    """An expression bound to a numeric ``eps``; callable on ``(..., 2)`` points."""

    source: str
    eps: float = 0.0

    @cached_property
    def sym(self) -> sp.Expr:
        return parse_expression(self.source).subs(EPS, self.eps)

    @cached_property
    def _f(self):
        return _vectorize(self.sym)

    @cached_property
    def _grad(self):
        return _vectorize(sp.diff(self.sym, X)), _vectorize(sp.diff(self.sym, Y))

    @cached_property
    def uses_eps(self) -> bool:
        return EPS in parse_expression(self.source).free_symbols

    def __call__(self, pts):
        return self._f(pts)

    def grad(self, pts):
        gx, gy = self._grad
        return np.stack([gx(pts), gy(pts)], axis=-1)


# Named coefficient families: (a, [[a11, a12], [a12, a22]]).
TEMPLATES = {
    "isotropic": ("1", [["1", "0"], ["0", "1"]]),
    "source-wave": ("1 + eps*sin(2*x + y)", [["1", "0"], ["0", "1"]]),
    "diag-wave": ("1 + eps*sin(2*x + y)", [["1 + eps*sin(x)", "0"], ["0", "1 + eps*cos(y)"]]),
    "diffusion-wave": ("1", [["1 + eps*sin(x)", "0"], ["0", "1 + eps*cos(y)"]]),
    "rotated-wave": ("1 + eps*cos(x - y)", [["1 + eps*sin(x)", "0.5*eps*sin(x + y)"],
                                          ["0.5*eps*sin(x + y)", "1 + eps*cos(y)"]]),
}


@dataclass(frozen=True)
class CoefficientSet:
    """Source weight ``a(x)`` and symmetric diffusion matrix ``alpha(x)``."""

    a: Expression
    a11: Expression
    a12: Expression
    a22: Expression
    zeta: float = 0.5
    eps: float = 0.0
    name: str = field(default="custom", compare=False)

    @classmethod
    def from_strings(cls, a: str, alpha, eps: float = 0.0, zeta: float = 0.5, name="custom"):
        if alpha[0][1] != alpha[1][0]:
            s01, s10 = parse_expression(alpha[0][1]), parse_expression(alpha[1][0])
            if sp.simplify(s01 - s10) != 0:
                raise ConfigError("alpha must be symmetric (alpha12 == alpha21)")
        return cls(Expression(a, eps), Expression(alpha[0][0], eps), Expression(alpha[0][1], eps),
                   Expression(alpha[1][1], eps), zeta, eps, name)

    @classmethod
    def template(cls, name: str, eps: float = 0.0, zeta: float = 0.5):
        if name not in TEMPLATES:
            raise ConfigError(f"unknown coefficient template {name!r}; known: {sorted(TEMPLATES)}")
        a, alpha = TEMPLATES[name]
        return cls.from_strings(a, alpha, eps, zeta, name)

    @classmethod
    def identity(cls):
        return cls.template("isotropic")

    def with_a(self, a: str) -> "CoefficientSet":
        return CoefficientSet(Expression(a, self.eps), self.a11, self.a12, self.a22,
                              self.zeta, self.eps, self.name)

    @property
    def entries(self):
        return {(0, 0): self.a11, (0, 1): self.a12, (1, 0): self.a12, (1, 1): self.a22}

    def alpha(self, pts) -> np.ndarray:
        a11, a12, a22 = self.a11(pts), self.a12(pts), self.a22(pts)
        return np.stack([np.stack([a11, a12], -1), np.stack([a12, a22], -1)], -2)

    def grad_alpha(self, pts) -> np.ndarray:
        """Shape ``(..., 2, 2, 2)``: ``[..., i, j, :]`` is the gradient of ``alpha^{ij}``."""
        g11, g12, g22 = self.a11.grad(pts), self.a12.grad(pts), self.a22.grad(pts)
        return np.stack([np.stack([g11, g12], -2), np.stack([g12, g22], -2)], -3)

    def min_eigenvalue(self, pts) -> np.ndarray:
        a11, a12, a22 = self.a11(pts), self.a12(pts), self.a22(pts)
        mean = 0.5 * (a11 + a22)
        rad = np.hypot(0.5 * (a11 - a22), a12)
        return mean - rad

    def check(self, pts) -> None:
        """Uniform ellipticity and positivity of ``a`` on the sampled points."""
        lam = self.min_eigenvalue(pts)
        if np.min(lam) < self.zeta:
            raise EllipticityViolation(
                f"smallest eigenvalue {np.min(lam):.6g} below ellipticity floor {self.zeta}")
        if np.min(self.a(pts)) <= 0:
            raise EllipticityViolation("source weight a(x) must be positive")

    @property
    def is_isotropic(self) -> bool:
        return not any(e.uses_eps for e in (self.a, self.a11, self.a12, self.a22)) or self.eps == 0

    def gradient_sup(self, domain, n: int = 1001) -> dict:
        """Sup norms of the coefficient gradients over ``domain`` by dense sampling."""
        xmin, xmax, ymin, ymax = domain.bbox()
        xs = np.linspace(xmin, xmax, n)
        ys = np.linspace(ymin, ymax, n)
        X_, Y_ = np.meshgrid(xs, ys)
        pts = np.stack([X_, Y_], -1)
        pts = pts[np.asarray(domain.contains_closed(pts))]
        out = {"a": float(np.max(np.linalg.norm(self.a.grad(pts), axis=-1)))}
        for key, e in (("a11", self.a11), ("a12", self.a12), ("a22", self.a22)):
            out[key] = float(np.max(np.linalg.norm(e.grad(pts), axis=-1)))
        return out

    def eps_meas(self, domain, n: int = 1001) -> float:
        """``sup|grad a| + max_ij sup|grad alpha^{ij}|`` over the domain."""
        s = self.gradient_sup(domain, n)
        return s["a"] + max(s["a11"], s["a12"], s["a22"])

    def to_config(self) -> dict:
        return {"a": self.a.source, "alpha": [[self.a11.source, self.a12.source],
                                              [self.a12.source, self.a22.source]],
                "zeta": self.zeta}
