"""Named scalar fields on the model surfaces.

Fields are described by short strings so that run configs never load user
code. A spec is a ``+``-separated sum of terms ``name[:args]``:

    zero                      f = 0
    constant:c                f = c
    coscos:a                  f = a cos(2 pi x) cos(2 pi y)          (torus)
    sinsin:c                  f = sin(2 pi x) + c sin(2 pi y)        (torus)
    height:a                  f = a z                                (sphere)
    tilted:ax,ay,az           f = <q, a/|a|>                         (sphere)

Every field evaluates on arrays of points with shape ``(..., d)`` and returns
its Euclidean gradient in the working coordinates (lift coordinates on the
torus, ambient coordinates on the sphere). Projection onto the sphere's
tangent plane is left to the caller.
"""

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

_TORUS_ONLY = {"coscos", "sinsin"}
_SPHERE_ONLY = {"height", "tilted"}


@dataclass(frozen=True)
class _Term:
    name: str
    args: tuple

    def value(self, q):
        q = np.asarray(q, dtype=float)
        if self.name == "zero":
            return np.zeros(q.shape[:-1])
        if self.name == "constant":
            return np.full(q.shape[:-1], self.args[0])
        if self.name == "coscos":
            return self.args[0] * np.cos(TWO_PI * q[..., 0]) * np.cos(TWO_PI * q[..., 1])
        if self.name == "sinsin":
            return np.sin(TWO_PI * q[..., 0]) + self.args[0] * np.sin(TWO_PI * q[..., 1])
        if self.name == "height":
            return self.args[0] * q[..., 2]
        if self.name == "tilted":
            return q @ np.asarray(self.args)
        raise AssertionError(self.name)

    def grad(self, q):
        q = np.asarray(q, dtype=float)
        out = np.zeros_like(q)
        if self.name in ("zero", "constant"):
            return out
        if self.name == "coscos":
            a = self.args[0]
            cx, cy = np.cos(TWO_PI * q[..., 0]), np.cos(TWO_PI * q[..., 1])
            sx, sy = np.sin(TWO_PI * q[..., 0]), np.sin(TWO_PI * q[..., 1])
            out[..., 0] = -a * TWO_PI * sx * cy
            out[..., 1] = -a * TWO_PI * cx * sy
            return out
        if self.name == "sinsin":
            out[..., 0] = TWO_PI * np.cos(TWO_PI * q[..., 0])
            out[..., 1] = self.args[0] * TWO_PI * np.cos(TWO_PI * q[..., 1])
            return out
        if self.name == "height":
            out[..., 2] = self.args[0]
            return out
        if self.name == "tilted":
            out[...] = np.asarray(self.args)
            return out
        raise AssertionError(self.name)


    def point(self, q):
        """(value, gradient) at a single point using plain floats."""
        n = self.name
        if n == "zero":
            return 0.0, (0.0,) * len(q)
        if n == "constant":
            return self.args[0], (0.0,) * len(q)
        if n == "coscos":
            a = self.args[0]
            cx, sx = math.cos(TWO_PI * q[0]), math.sin(TWO_PI * q[0])
            cy, sy = math.cos(TWO_PI * q[1]), math.sin(TWO_PI * q[1])
            return a * cx * cy, (-a * TWO_PI * sx * cy, -a * TWO_PI * cx * sy)
        if n == "sinsin":
            c = self.args[0]
            return (
                math.sin(TWO_PI * q[0]) + c * math.sin(TWO_PI * q[1]),
                (TWO_PI * math.cos(TWO_PI * q[0]), c * TWO_PI * math.cos(TWO_PI * q[1])),
            )
        if n == "height":
            return self.args[0] * q[2], (0.0, 0.0, self.args[0])
        if n == "tilted":
            a = self.args
            return a[0] * q[0] + a[1] * q[1] + a[2] * q[2], a
        raise AssertionError(n)


def _parse_term(text):
    name, _, rest = text.strip().partition(":")
    name = name.strip()
    try:
        args = tuple(float(a) for a in rest.split(",")) if rest.strip() else ()
    except ValueError as exc:
        raise ValueError(f"bad numeric argument in field term {text!r}") from exc
    expected = {"zero": 0, "constant": 1, "coscos": 1, "sinsin": 1, "height": 1, "tilted": 3}
    if name not in expected:
        raise ValueError(f"unknown field {name!r}; known: {sorted(expected)}")
    if len(args) != expected[name]:
        raise ValueError(f"field {name!r} takes {expected[name]} argument(s), got {len(args)}")
    if not all(np.isfinite(args)):
        raise ValueError(f"non-finite argument in field term {text!r}")
    if name == "tilted":
        a = np.asarray(args)
        norm = np.linalg.norm(a)
        if norm == 0.0:
            raise ValueError("tilted direction must be nonzero")
        args = tuple(a / norm)
    return _Term(name, args)


@dataclass(frozen=True)
class ScalarField:
    """A sum of named built-in terms; immutable and hashable."""

    spec: str
    terms: tuple

    @classmethod
    def parse(cls, spec):
        if isinstance(spec, ScalarField):
            return spec
        if isinstance(spec, (int, float)):
            spec = f"constant:{float(spec)!r}"
        spec = str(spec).strip()
        if not spec:
            raise ValueError("empty field spec")
        terms = tuple(_parse_term(t) for t in spec.split("+"))
        return cls(spec, terms)

    def check_surface(self, kind):
        names = {t.name for t in self.terms}
        if kind == "sphere" and names & _TORUS_ONLY:
            raise ValueError(f"field {self.spec!r} is only defined on the torus")
        if kind != "sphere" and names & _SPHERE_ONLY:
            raise ValueError(f"field {self.spec!r} is only defined on the sphere")

    @property
    def is_constant(self):
        return all(t.name in ("zero", "constant") for t in self.terms)

    @property
    def constant_value(self):
        return float(sum(t.args[0] for t in self.terms if t.name == "constant"))

    def value(self, q):
        q = np.asarray(q, dtype=float)
        total = self.terms[0].value(q)
        for t in self.terms[1:]:
            total = total + t.value(q)
        return total

    def grad(self, q):
        q = np.asarray(q, dtype=float)
        total = self.terms[0].grad(q)
        for t in self.terms[1:]:
            total = total + t.grad(q)
        return total

    def point(self, q):
        """Value and gradient at one point as floats; fast path for integrators."""
        val, grad = self.terms[0].point(q)
        if len(self.terms) == 1:
            return val, grad
        grad = list(grad)
        for t in self.terms[1:]:
            v, g = t.point(q)
            val += v
            grad = [a + b for a, b in zip(grad, g)]
        return val, tuple(grad)

    def __str__(self):
        return self.spec
