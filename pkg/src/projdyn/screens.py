"""Screen functions and the dictionary between projective and screen states.

A screen function is positive and homogeneous of degree one on a cone of V;
the screen itself is the level set h = 1.  Every ray of the cone meets the
screen once, at ``q / h(q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InconsistentStateError, InvalidArgumentError
from .exterior import (
    AlternatingForm,
    Multivector,
    _check_dim,
    as_array,
    contract_arrays,
    wedge_arrays,
)

CYLINDER_KERNEL_CUTOFF = 1e-12
RAY_ANGLE_TOL = 1e-9
STATE_TOL = 1e-8


class Screen:
    """Base class.  Subclasses implement ``value``, ``gradient``, ``hessian``."""

    kind = "abstract"
    dim: int

    def in_domain(self, q: np.ndarray) -> bool:
        raise NotImplementedError

    def _require(self, q) -> np.ndarray:
        x = as_array(q, self.dim)
        if not self.in_domain(x):
            raise DomainError(f"{self.kind} screen: point {x} outside domain")
        return x

    def value(self, q) -> float:
        raise NotImplementedError

    def gradient(self, q) -> np.ndarray:
        raise NotImplementedError

    def hessian(self, q) -> np.ndarray:
        raise NotImplementedError

    def describe(self) -> dict:
        raise NotImplementedError


class FlatScreen(Screen):
    """h(q) = <form, q>, defined on the open half-space where it is positive."""

    kind = "flat"

    def __init__(self, form):
        self.form = as_array(form)
        self.dim = self.form.size
        _check_dim(self.dim)
        if not np.any(self.form):
            raise InvalidArgumentError("flat screen form must be non-zero")

    def in_domain(self, q) -> bool:
        return float(self.form @ q) > 0.0

    def value(self, q) -> float:
        return float(self.form @ self._require(q))

    def gradient(self, q) -> np.ndarray:
        self._require(q)
        return self.form.copy()

    def hessian(self, q) -> np.ndarray:
        self._require(q)
        return np.zeros((self.dim, self.dim))

    def describe(self) -> dict:
        return {"type": "flat", "form": self.form.tolist()}

    def __repr__(self):
        return f"FlatScreen(form={self.form.tolist()})"


class QuadraticScreen(Screen):
    """h(q) = sqrt(B(q, q)) on the cone B(q, q) > 0."""

    kind = "quadratic"

    def __init__(self, B):
        B = np.array(B, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise InvalidArgumentError("B must be a square matrix")
        if not np.allclose(B, B.T, atol=1e-14 * max(1.0, np.abs(B).max())):
            raise InvalidArgumentError("B must be symmetric")
        self.B = 0.5 * (B + B.T)
        self.dim = B.shape[0]
        _check_dim(self.dim)
        self._check_signature()

    def _check_signature(self) -> None:
        pass

    def quad(self, q: np.ndarray) -> float:
        return float(q @ self.B @ q)

    def in_domain(self, q) -> bool:
        return self.quad(q) > 0.0

    def value(self, q) -> float:
        return math.sqrt(self.quad(self._require(q)))

    def gradient(self, q) -> np.ndarray:
        x = self._require(q)
        return self.B @ x / math.sqrt(self.quad(x))

    def hessian(self, q) -> np.ndarray:
        x = self._require(q)
        h = math.sqrt(self.quad(x))
        bq = self.B @ x
        return self.B / h - np.outer(bq, bq) / h**3

    def describe(self) -> dict:
        return {"type": self.kind, "B": self.B.tolist()}

    def __repr__(self):
        return f"{type(self).__name__}(B={self.B.tolist()})"


class SphereScreen(QuadraticScreen):
    """Unit sphere of a positive-definite form; Euclidean by default."""

    kind = "sphere"

    def __init__(self, B=None, dim: int | None = None):
        if B is None:
            if dim is None:
                raise InvalidArgumentError("give B or dim")
            B = np.eye(dim)
        super().__init__(B)

    def _check_signature(self) -> None:
        if np.linalg.eigvalsh(self.B).min() <= 0:
            raise InvalidArgumentError("sphere screen needs a positive-definite form")


class CylinderScreen(QuadraticScreen):
    """Unit cylinder of a semi-definite form with a one-dimensional kernel [c].

    Points whose B-norm is tiny relative to their Euclidean norm are treated as
    lying on the kernel line and rejected.
    """

    kind = "cylinder"

    def _check_signature(self) -> None:
        w, v = np.linalg.eigh(self.B)
        scale = max(1.0, abs(w).max())
        if w.min() < -1e-12 * scale:
            raise InvalidArgumentError("cylinder screen needs a positive semi-definite form")
        null = np.abs(w) <= 1e-12 * scale
        if null.sum() != 1:
            raise InvalidArgumentError(f"cylinder form must have a 1-dim kernel, found {null.sum()}")
        self.kernel = v[:, np.argmax(null)]

    def in_domain(self, q) -> bool:
        return self.quad(q) > CYLINDER_KERNEL_CUTOFF * float(q @ q)


class GeneralQuadraticScreen(QuadraticScreen):
    """Any symmetric form, restricted to the cone where B(q, q) > 0."""

    kind = "quadratic"


# --------------------------------------------------------------------------
# states


def ray_angle(a, b) -> float:
    """Angle in radians between two representatives, robust near zero."""
    x, y = as_array(a), as_array(b)
    cross = np.linalg.norm(wedge_arrays(x.size, 1, 1, x, y))
    return math.atan2(cross, float(x @ y))


def same_ray(a, b, tol: float = RAY_ANGLE_TOL) -> bool:
    return ray_angle(a, b) < tol


def decomposability_residual(q, pi) -> float:
    """|q ∧ pi| relative to |q||pi| (0 when pi vanishes)."""
    x, p = as_array(q), as_array(pi)
    scale = np.linalg.norm(x) * np.linalg.norm(p)
    if scale == 0.0:
        return 0.0
    return float(np.linalg.norm(wedge_arrays(x.size, 1, 2, x, p)) / scale)


@dataclass(frozen=True)
class ScreenState:
    q: Multivector
    qdot: Multivector
    screen: Screen

    def __post_init__(self):
        for name in ("q", "qdot"):
            val = getattr(self, name)
            if not isinstance(val, Multivector):
                object.__setattr__(self, name, Multivector.vector(val))
        q, v = self.q.coeffs, self.qdot.coeffs
        if abs(self.screen.value(q) - 1.0) > 1e-10:
            raise InconsistentStateError(f"h(q) = {self.screen.value(q)!r}, expected 1")
        if abs(self.screen.gradient(q) @ v) > 1e-10 * max(1.0, np.linalg.norm(v)):
            raise InconsistentStateError("velocity is not tangent to the screen")

    @property
    def pi(self) -> Multivector:
        return velocity_to_impulsion(self.q, self.qdot)


@dataclass(frozen=True)
class ProjectiveState:
    ray: Multivector
    pi: Multivector

    def __post_init__(self):
        if not isinstance(self.ray, Multivector):
            object.__setattr__(self, "ray", Multivector.vector(self.ray))
        if not isinstance(self.pi, Multivector):
            dim = self.ray.dim
            object.__setattr__(self, "pi", Multivector(dim, 2, self.pi))
        if not np.any(self.ray.coeffs):
            raise InconsistentStateError("ray representative must be non-zero")
        if decomposability_residual(self.ray, self.pi) > 1e-10:
            raise InconsistentStateError("ray ∧ pi must vanish")


# --------------------------------------------------------------------------
# operations


def screen_eval(s: Screen, q):
    """(h, dh, Hessian) of the screen function at ``q``."""
    x = as_array(q, s.dim)
    return s.value(x), AlternatingForm(s.dim, 1, s.gradient(x)), s.hessian(x)


def project_to_screen(s: Screen, v) -> Multivector:
    x = as_array(v, s.dim)
    if not np.any(x):
        raise DomainError("cannot project the zero vector")
    return Multivector.vector(x / s.value(x))


def _check_on_screen(s: Screen, q: np.ndarray, tol: float = STATE_TOL) -> None:
    hq = s.value(q)
    if abs(hq - 1.0) > tol:
        raise InconsistentStateError(f"h(q) = {hq!r} is not 1")


def impulsion_to_velocity(s: Screen, q, pi) -> Multivector:
    """Screen velocity dh(q) ⌟ pi of a projective impulsion at a screen point."""
    x = as_array(q, s.dim)
    p = as_array(pi)
    _check_on_screen(s, x)
    if decomposability_residual(x, p) > STATE_TOL:
        raise InconsistentStateError("q ∧ pi does not vanish")
    return Multivector.vector(contract_arrays(s.dim, 2, s.gradient(x), p))


def velocity_to_impulsion(q, v) -> Multivector:
    x, y = as_array(q), as_array(v)
    if x.size != y.size:
        raise InvalidArgumentError("q and v must share a dimension")
    return Multivector(x.size, 2, wedge_arrays(x.size, 1, 1, x, y))


def reaction_lambda(s: Screen, q, qdot) -> float:
    """Coefficient of the radial reaction keeping the motion on h = 1."""
    x, v = as_array(q, s.dim), as_array(qdot, s.dim)
    _check_on_screen(s, x)
    if abs(s.gradient(x) @ v) > STATE_TOL * max(1.0, np.linalg.norm(v)):
        raise InconsistentStateError("velocity is not tangent to the screen")
    return -float(v @ s.hessian(x) @ v)


def screen_state_from_projective(s: Screen, state: ProjectiveState) -> ScreenState:
    q = project_to_screen(s, state.ray)
    v = contract_arrays(s.dim, 2, s.gradient(q.coeffs), state.pi.coeffs)
    return ScreenState(q, Multivector.vector(v), s)
